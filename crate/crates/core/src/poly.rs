//! Multivariate polynomials with exact derivatives.
//!
//! Profiles, trace data, and variable coefficients are all declared as
//! polynomials so that every derivative the ansatz needs is exact.

use crate::jet::{Jet, MAX_DIM};

#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub exps: [u32; MAX_DIM],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    pub terms: Vec<Monomial>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { terms: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            return Poly::zero();
        }
        Poly {
            terms: vec![Monomial {
                coef: c,
                exps: [0; MAX_DIM],
            }],
        }
    }

    pub fn monomial(coef: f64, exps: &[u32]) -> Self {
        let mut e = [0; MAX_DIM];
        e[..exps.len()].copy_from_slice(exps);
        Poly {
            terms: vec![Monomial { coef, exps: e }],
        }
    }

    /// Builds a polynomial from `(coef, exponents)` pairs.
    pub fn from_terms(terms: &[(f64, Vec<u32>)]) -> Self {
        let mut p = Poly::zero();
        for (c, e) in terms {
            p = p.add(&Poly::monomial(*c, e));
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coef == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.exps.iter().all(|&e| e == 0) || t.coef == 0.0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut terms = self.terms.clone();
        for t in &other.terms {
            match terms.iter_mut().find(|s| s.exps == t.exps) {
                Some(s) => s.coef += t.coef,
                None => terms.push(t.clone()),
            }
        }
        terms.retain(|t| t.coef != 0.0);
        Poly { terms }
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut p = self.clone();
        for t in &mut p.terms {
            t.coef *= s;
        }
        p.terms.retain(|t| t.coef != 0.0);
        p
    }

    pub fn derivative(&self, axis: usize) -> Poly {
        let mut terms = Vec::new();
        for t in &self.terms {
            let e = t.exps[axis];
            if e == 0 {
                continue;
            }
            let mut exps = t.exps;
            exps[axis] -= 1;
            terms.push(Monomial {
                coef: t.coef * e as f64,
                exps,
            });
        }
        Poly { terms }.add(&Poly::zero())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let mut v = t.coef;
                for (k, &e) in t.exps.iter().enumerate() {
                    if e > 0 {
                        v *= x[k].powi(e as i32);
                    }
                }
                v
            })
            .sum()
    }

    /// Evaluates with jet-valued arguments, composing derivatives exactly.
    pub fn eval_jet(&self, x: &[Jet]) -> Jet {
        let mut acc = Jet::constant(0.0);
        for t in &self.terms {
            let mut v = Jet::constant(t.coef);
            for (k, &e) in t.exps.iter().enumerate() {
                if e > 0 {
                    v = v * x[k].powi(e as i32);
                }
            }
            acc += v;
        }
        acc
    }

    /// Value, gradient and Hessian at a real point, as a jet in the
    /// coordinates of `x`.
    pub fn jet_at(&self, x: &[f64]) -> Jet {
        self.eval_jet(&Jet::seed(x))
    }

    /// Highest total degree among the terms.
    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|t| t.exps.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }
}
