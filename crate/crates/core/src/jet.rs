//! Second-order forward-mode jets.
//!
//! A [`Jet`] carries a value together with its gradient and Hessian with
//! respect to up to [`MAX_DIM`] independent variables. Arithmetic on jets
//! applies the chain rule exactly, so every field assembled from jets
//! (profiles, traces, coefficients, the ansatz) has exact first and second
//! derivatives up to round-off.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; MAX_DIM],
    pub hess: [[f64; MAX_DIM]; MAX_DIM],
}

impl Default for Jet {
    fn default() -> Self {
        Jet::constant(0.0)
    }
}

impl Jet {
    pub const fn constant(value: f64) -> Self {
        Jet {
            value,
            grad: [0.0; MAX_DIM],
            hess: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    /// The independent variable `x_axis` evaluated at `value`.
    pub fn variable(value: f64, axis: usize) -> Self {
        let mut j = Jet::constant(value);
        j.grad[axis] = 1.0;
        j
    }

    /// Seeds one variable per coordinate of `x`.
    pub fn seed(x: &[f64]) -> Vec<Jet> {
        x.iter().enumerate().map(|(k, &v)| Jet::variable(v, k)).collect()
    }

    pub fn from_parts(value: f64, grad: [f64; MAX_DIM], hess: [[f64; MAX_DIM]; MAX_DIM]) -> Self {
        Jet { value, grad, hess }
    }

    /// Applies a univariate function given its value and first two derivatives
    /// at `self.value`.
    pub fn chain(self, f0: f64, f1: f64, f2: f64) -> Jet {
        let mut out = Jet::constant(f0);
        for a in 0..MAX_DIM {
            out.grad[a] = f1 * self.grad[a];
            for b in 0..MAX_DIM {
                out.hess[a][b] = f1 * self.hess[a][b] + f2 * self.grad[a] * self.grad[b];
            }
        }
        out
    }

    /// Composes a multivariate function, given by its value, gradient and
    /// Hessian in its own arguments, with the jets of those arguments.
    pub fn compose(
        value: f64,
        grad: &[f64],
        hess: &[Vec<f64>],
        inputs: &[Jet],
    ) -> Jet {
        let mut out = Jet::constant(value);
        for (p, input) in inputs.iter().enumerate() {
            for a in 0..MAX_DIM {
                out.grad[a] += grad[p] * input.grad[a];
                for b in 0..MAX_DIM {
                    out.hess[a][b] += grad[p] * input.hess[a][b];
                }
            }
            for (q, other) in inputs.iter().enumerate() {
                let c = hess[p][q];
                if c == 0.0 {
                    continue;
                }
                for a in 0..MAX_DIM {
                    for b in 0..MAX_DIM {
                        out.hess[a][b] += c * input.grad[a] * other.grad[b];
                    }
                }
            }
        }
        out
    }

    pub fn recip(self) -> Jet {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    pub fn powi(self, k: i32) -> Jet {
        match k {
            0 => Jet::constant(1.0),
            1 => self,
            _ => {
                let v = self.value;
                let kf = k as f64;
                self.chain(
                    v.powi(k),
                    kf * v.powi(k - 1),
                    kf * (kf - 1.0) * v.powi(k - 2),
                )
            }
        }
    }

    pub fn sqrt(self) -> Jet {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * s * s))
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Jet {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    /// Trace of the Hessian over the first `dim` coordinates.
    pub fn laplacian(&self, dim: usize) -> f64 {
        (0..dim).map(|a| self.hess[a][a]).sum()
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self += rhs;
        self
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, rhs: Jet) {
        self.value += rhs.value;
        for a in 0..MAX_DIM {
            self.grad[a] += rhs.grad[a];
            for b in 0..MAX_DIM {
                self.hess[a][b] += rhs.hess[a][b];
            }
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self -= rhs;
        self
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, rhs: Jet) {
        self.value -= rhs.value;
        for a in 0..MAX_DIM {
            self.grad[a] -= rhs.grad[a];
            for b in 0..MAX_DIM {
                self.hess[a][b] -= rhs.hess[a][b];
            }
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut out = Jet::constant(self.value * rhs.value);
        for a in 0..MAX_DIM {
            out.grad[a] = self.value * rhs.grad[a] + rhs.value * self.grad[a];
            for b in 0..MAX_DIM {
                out.hess[a][b] = self.value * rhs.hess[a][b]
                    + rhs.value * self.hess[a][b]
                    + self.grad[a] * rhs.grad[b]
                    + rhs.grad[a] * self.grad[b];
            }
        }
        out
    }
}

impl MulAssign<f64> for Jet {
    fn mul_assign(&mut self, rhs: f64) {
        self.value *= rhs;
        for a in 0..MAX_DIM {
            self.grad[a] *= rhs;
            for b in 0..MAX_DIM {
                self.hess[a][b] *= rhs;
            }
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        self *= rhs;
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.value += rhs;
        self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        rhs + self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.value -= rhs;
        self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, rhs: f64) -> Jet {
        self * (1.0 / rhs)
    }
}

impl std::iter::Sum for Jet {
    fn sum<I: Iterator<Item = Jet>>(iter: I) -> Jet {
        iter.fold(Jet::constant(0.0), |acc, j| acc + j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&[Jet]) -> Jet, x: &[f64]) {
        let j = f(&Jet::seed(x));
        let h = 1e-5;
        for a in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[a] += h;
            xm[a] -= h;
            let fp = f(&Jet::seed(&xp));
            let fm = f(&Jet::seed(&xm));
            let d = (fp.value - fm.value) / (2.0 * h);
            assert!((d - j.grad[a]).abs() < 1e-7 * (1.0 + d.abs()), "grad {a}");
            for b in 0..x.len() {
                let d2 = (fp.grad[b] - fm.grad[b]) / (2.0 * h);
                assert!(
                    (d2 - j.hess[a][b]).abs() < 1e-6 * (1.0 + d2.abs()),
                    "hess {a}{b}: {d2} vs {}",
                    j.hess[a][b]
                );
            }
        }
    }

    #[test]
    fn arithmetic_matches_finite_differences() {
        fd_check(|x| x[0] * x[1].sin() / (x[0] * x[0] + 1.0) - x[1].exp() * 2.0, &[0.3, -0.7]);
        fd_check(|x| (x[0] * x[1] + 3.0).sqrt() * x[2].cos() + x[2].powi(3), &[0.5, 1.2, -0.4]);
    }

    #[test]
    fn composition_matches_direct_evaluation() {
        let x = Jet::seed(&[0.4, -0.2]);
        // f(p, q) = p^2 q with inputs p = x0 + x1, q = x0 x1
        let p = x[0] + x[1];
        let q = x[0] * x[1];
        let direct = p * p * q;
        let composed = Jet::compose(
            p.value * p.value * q.value,
            &[2.0 * p.value * q.value, p.value * p.value],
            &[vec![2.0 * q.value, 2.0 * p.value], vec![2.0 * p.value, 0.0]],
            &[p, q],
        );
        for a in 0..2 {
            assert!((direct.grad[a] - composed.grad[a]).abs() < 1e-14);
            for b in 0..2 {
                assert!((direct.hess[a][b] - composed.hess[a][b]).abs() < 1e-14);
            }
        }
    }
}
