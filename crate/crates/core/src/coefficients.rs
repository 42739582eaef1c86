//! Coefficient fields `A, B, C, D` of the divergence-form system
//!
//! ```text
//! ∂_α(A^{αβ}_{ij} ∂_β u^j + B^α_{ij} u^j) + C^β_{ij} ∂_β u^j + D_{ij} u^j = 0
//! ```
//!
//! with ellipticity checks and the isotropic (Lamé) specialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_DIM};
use crate::linalg::symmetric_eigenvalues;
use crate::poly::Poly;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LameParameters {
    pub lam: f64,
    pub mu: f64,
}

impl LameParameters {
    pub fn new(lam: f64, mu: f64, n: usize) -> Result<Self> {
        let p = LameParameters { lam, mu };
        p.validate(n)?;
        Ok(p)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::Configuration(format!("Lamé μ must be positive, got {}", self.mu)));
        }
        if !(n as f64 * self.lam + 2.0 * self.mu > 0.0) {
            return Err(Error::Configuration(format!(
                "Lamé constants violate nλ + 2μ > 0 (λ = {}, μ = {}, n = {n})",
                self.lam, self.mu
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorKind {
    Laplace,
    Lame(LameParameters),
    /// Lamé tensor plus `scale · p(x) · δ_ij δ_αβ`.
    LamePerturbed { params: LameParameters, scale: f64 },
    Custom,
}

/// Declared structural constants of a tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipticityBounds {
    /// Upper bound of `|A^{αβ}_{ij}|`.
    pub big_lambda: f64,
    /// Coercivity constant, tested through the pointwise Legendre condition.
    pub lambda: f64,
    /// Lower and upper ellipticity bounds of `A^{nn}`.
    pub lambda1: f64,
    pub lambda2: f64,
    /// Bound of the C² norms of all coefficient fields.
    pub tau0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTensor {
    pub n: usize,
    /// Number of unknown components `N`.
    pub ncomp: usize,
    a: Vec<Poly>,
    b: Vec<Poly>,
    c: Vec<Poly>,
    d: Vec<Poly>,
    pub kind: TensorKind,
    pub bounds: EllipticityBounds,
    constant: bool,
    lower_order: bool,
}

impl CoefficientTensor {
    /// Builds a tensor from polynomial entries. `a` is indexed as
    /// `[i][j][α][β]`, `b` and `c` as `[i][j][α]`, `d` as `[i][j]` (flattened,
    /// row-major). Empty `b`, `c` or `d` mean zero fields.
    pub fn from_entries(
        n: usize,
        ncomp: usize,
        a: Vec<Poly>,
        b: Vec<Poly>,
        c: Vec<Poly>,
        d: Vec<Poly>,
        kind: TensorKind,
        bounds: EllipticityBounds,
    ) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&n) || ncomp == 0 {
            return Err(Error::Configuration(format!("unsupported sizes n = {n}, N = {ncomp}")));
        }
        let fill = |v: Vec<Poly>, len: usize, name: &str| -> Result<Vec<Poly>> {
            if v.is_empty() {
                Ok(vec![Poly::zero(); len])
            } else if v.len() == len {
                Ok(v)
            } else {
                Err(Error::Configuration(format!("{name} needs {len} entries, got {}", v.len())))
            }
        };
        let nn = ncomp * ncomp;
        let a = fill(a, nn * n * n, "A")?;
        let b = fill(b, nn * n, "B")?;
        let c = fill(c, nn * n, "C")?;
        let d = fill(d, nn, "D")?;
        let constant = a.iter().chain(&b).chain(&c).chain(&d).all(Poly::is_constant);
        let lower_order = !(b.iter().chain(&c).chain(&d).all(Poly::is_zero));
        Ok(CoefficientTensor {
            n,
            ncomp,
            a,
            b,
            c,
            d,
            kind,
            bounds,
            constant,
            lower_order,
        })
    }

    /// Scalar Laplacian (`N = 1`, `A = δ_αβ`).
    pub fn laplace(n: usize) -> Result<Self> {
        let mut a = Vec::with_capacity(n * n);
        for al in 0..n {
            for be in 0..n {
                a.push(Poly::constant(if al == be { 1.0 } else { 0.0 }));
            }
        }
        let bounds = EllipticityBounds {
            big_lambda: 1.0,
            lambda: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            tau0: 1.0,
        };
        CoefficientTensor::from_entries(n, 1, a, vec![], vec![], vec![], TensorKind::Laplace, bounds)
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn has_lower_order(&self) -> bool {
        self.lower_order
    }

    pub fn lame_parameters(&self) -> Option<LameParameters> {
        match self.kind {
            TensorKind::Lame(p) => Some(p),
            _ => None,
        }
    }

    #[inline]
    fn ai(&self, i: usize, j: usize, al: usize, be: usize) -> usize {
        ((i * self.ncomp + j) * self.n + al) * self.n + be
    }

    #[inline]
    fn bi(&self, i: usize, j: usize, al: usize) -> usize {
        (i * self.ncomp + j) * self.n + al
    }

    pub fn a_poly(&self, i: usize, j: usize, al: usize, be: usize) -> &Poly {
        &self.a[self.ai(i, j, al, be)]
    }

    pub fn a(&self, x: &[f64], i: usize, j: usize, al: usize, be: usize) -> f64 {
        self.a[self.ai(i, j, al, be)].eval(x)
    }

    pub fn b(&self, x: &[f64], i: usize, j: usize, al: usize) -> f64 {
        self.b[self.bi(i, j, al)].eval(x)
    }

    pub fn c(&self, x: &[f64], i: usize, j: usize, be: usize) -> f64 {
        self.c[self.bi(i, j, be)].eval(x)
    }

    pub fn d(&self, x: &[f64], i: usize, j: usize) -> f64 {
        self.d[i * self.ncomp + j].eval(x)
    }

    pub fn a_jet(&self, x: &[Jet], i: usize, j: usize, al: usize, be: usize) -> Jet {
        self.a[self.ai(i, j, al, be)].eval_jet(x)
    }

    /// Every entry of `A` at `x`, flattened as `[i][j][α][β]`.
    pub fn a_values(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|p| p.eval(x)).collect()
    }

    pub fn b_values(&self, x: &[f64]) -> Vec<f64> {
        self.b.iter().map(|p| p.eval(x)).collect()
    }

    pub fn c_values(&self, x: &[f64]) -> Vec<f64> {
        self.c.iter().map(|p| p.eval(x)).collect()
    }

    pub fn d_values(&self, x: &[f64]) -> Vec<f64> {
        self.d.iter().map(|p| p.eval(x)).collect()
    }

    /// The `N × N` block `A^{nn}` at `x`.
    pub fn ann(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.n - 1;
        (0..self.ncomp)
            .map(|i| (0..self.ncomp).map(|j| self.a(x, i, j, last, last)).collect())
            .collect()
    }

    /// Applies the full operator to a field given by one jet per component:
    ///
    /// `L[u]^i = A ∂²u + (∂_α A^{αβ} + B^β + C^β) ∂_β u + (∂_α B^α + D) u`.
    pub fn apply(&self, x: &[f64], u: &[Jet]) -> Vec<f64> {
        let n = self.n;
        let nc = self.ncomp;
        let seeds = Jet::seed(x);
        let mut out = vec![0.0; nc];
        for i in 0..nc {
            let mut acc = 0.0;
            for j in 0..nc {
                for al in 0..n {
                    for be in 0..n {
                        let idx = self.ai(i, j, al, be);
                        let p = &self.a[idx];
                        if p.is_zero() {
                            continue;
                        }
                        if self.constant {
                            acc += p.eval(x) * u[j].hess[al][be];
                        } else {
                            let aj = p.eval_jet(&seeds);
                            acc += aj.value * u[j].hess[al][be] + aj.grad[al] * u[j].grad[be];
                        }
                    }
                }
                if self.lower_order {
                    for al in 0..n {
                        let bj = self.b[self.bi(i, j, al)].eval_jet(&seeds);
                        let cv = self.c[self.bi(i, j, al)].eval(x);
                        acc += (bj.value + cv) * u[j].grad[al] + bj.grad[al] * u[j].value;
                    }
                    acc += self.d[i * nc + j].eval(x) * u[j].value;
                }
            }
            out[i] = acc;
        }
        out
    }

    /// Replaces the declared bounds by values sampled at `points`.
    pub fn estimate_bounds(&self, points: &[Vec<f64>]) -> Result<EllipticityBounds> {
        let ann = check_ann(self, points)?;
        let ell = check_pointwise_ellipticity(self, points, EllipticityMode::for_tensor(self), 0, 0);
        let big_lambda = points
            .iter()
            .flat_map(|x| self.a_values(x))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(EllipticityBounds {
            big_lambda,
            lambda: ell.exact_min,
            lambda1: ann.lambda1,
            lambda2: ann.lambda2,
            tau0: tensor_c2_norm(self, points),
        })
    }
}

/// Isotropic elasticity tensor
/// `A^{αβ}_{ij} = λ δ_{iα} δ_{jβ} + μ (δ_{iβ} δ_{αj} + δ_{ij} δ_{αβ})`, `B = C = D = 0`.
pub fn make_lame(p: LameParameters, n: usize) -> Result<CoefficientTensor> {
    p.validate(n)?;
    let kd = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut a = Vec::with_capacity(n.pow(4));
    let mut big = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for al in 0..n {
                for be in 0..n {
                    let v = p.lam * kd(i, al) * kd(j, be) + p.mu * (kd(i, be) * kd(al, j) + kd(i, j) * kd(al, be));
                    big = big.max(v.abs());
                    a.push(Poly::constant(v));
                }
            }
        }
    }
    let nf = n as f64;
    let bounds = EllipticityBounds {
        big_lambda: big,
        lambda: (2.0 * p.mu).min(nf * p.lam + 2.0 * p.mu),
        lambda1: p.mu,
        lambda2: p.lam + 2.0 * p.mu,
        tau0: big,
    };
    CoefficientTensor::from_entries(n, n, a, vec![], vec![], vec![], TensorKind::Lame(p), bounds)
}

/// Lamé tensor plus `scale · p(x) δ_ij δ_αβ`; bounds are sampled at `points`.
pub fn make_lame_perturbed(
    params: LameParameters,
    n: usize,
    perturbation: &Poly,
    scale: f64,
    points: &[Vec<f64>],
) -> Result<CoefficientTensor> {
    let base = make_lame(params, n)?;
    let mut a = base.a.clone();
    for i in 0..n {
        for al in 0..n {
            let idx = base.ai(i, i, al, al);
            a[idx] = a[idx].add(&perturbation.scale(scale));
        }
    }
    let mut t = CoefficientTensor::from_entries(
        n,
        n,
        a,
        vec![],
        vec![],
        vec![],
        TensorKind::LamePerturbed { params, scale },
        base.bounds,
    )?;
    if !points.is_empty() {
        t.bounds = t.estimate_bounds(points)?;
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EllipticityMode {
    /// All `N × n` matrices `ξ`.
    Full,
    /// Symmetric `n × n` matrices only (elasticity tensors, `N = n`).
    Symmetric,
}

impl EllipticityMode {
    pub fn for_tensor(t: &CoefficientTensor) -> Self {
        match t.kind {
            TensorKind::Lame(_) | TensorKind::LamePerturbed { .. } => EllipticityMode::Symmetric,
            _ => EllipticityMode::Full,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EllipticityReport {
    pub mode: EllipticityMode,
    /// Minimum Rayleigh quotient over the sampled points (exact eigenvalue).
    pub exact_min: f64,
    pub exact_max: f64,
    /// Minimum quotient over randomly drawn `ξ`; never below `exact_min`.
    pub sampled_min: f64,
    pub declared: f64,
    pub pass: bool,
    /// The integral coercivity condition is tested through this pointwise
    /// Legendre surrogate.
    pub surrogate: bool,
}

fn legendre_form(t: &CoefficientTensor, x: &[f64], mode: EllipticityMode) -> Vec<Vec<f64>> {
    let n = t.n;
    let nc = t.ncomp;
    let av = t.a_values(x);
    let entry = |i: usize, j: usize, al: usize, be: usize| av[((i * nc + j) * n + al) * n + be];
    match mode {
        EllipticityMode::Full => {
            let dim = nc * n;
            let mut k = vec![vec![0.0; dim]; dim];
            for i in 0..nc {
                for al in 0..n {
                    for j in 0..nc {
                        for be in 0..n {
                            k[i * n + al][j * n + be] = entry(i, j, al, be);
                        }
                    }
                }
            }
            k
        }
        EllipticityMode::Symmetric => {
            let basis = symmetric_basis(n);
            let dim = basis.len();
            let mut q = vec![vec![0.0; dim]; dim];
            for (p, bp) in basis.iter().enumerate() {
                for (r, br) in basis.iter().enumerate() {
                    let mut s = 0.0;
                    for i in 0..n {
                        for al in 0..n {
                            if bp[i][al] == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                for be in 0..n {
                                    s += entry(i, j, al, be) * bp[i][al] * br[j][be];
                                }
                            }
                        }
                    }
                    q[p][r] = s;
                }
            }
            q
        }
    }
}

/// Orthonormal basis of symmetric `n × n` matrices under the Frobenius product.
fn symmetric_basis(n: usize) -> Vec<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a..n {
            let mut m = vec![vec![0.0; n]; n];
            if a == b {
                m[a][a] = 1.0;
            } else {
                m[a][b] = std::f64::consts::FRAC_1_SQRT_2;
                m[b][a] = std::f64::consts::FRAC_1_SQRT_2;
            }
            out.push(m);
        }
    }
    out
}

/// Pointwise Legendre condition `A ξ ξ ≥ λ |ξ|²` over `points`, with
/// `random_xi` additional random directions per point drawn from `seed`.
pub fn check_pointwise_ellipticity(
    t: &CoefficientTensor,
    points: &[Vec<f64>],
    mode: EllipticityMode,
    random_xi: usize,
    seed: u64,
) -> EllipticityReport {
    let n = t.n;
    let nc = t.ncomp;
    let mode = if mode == EllipticityMode::Symmetric && nc != n {
        EllipticityMode::Full
    } else {
        mode
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exact_min = f64::INFINITY;
    let mut exact_max = f64::NEG_INFINITY;
    let mut sampled_min = f64::INFINITY;
    for x in points {
        let form = legendre_form(t, x, mode);
        let ev = symmetric_eigenvalues(&form);
        exact_min = exact_min.min(ev[0]);
        exact_max = exact_max.max(*ev.last().unwrap());
        let av = t.a_values(x);
        for _ in 0..random_xi {
            let mut xi = vec![vec![0.0; n]; nc];
            for i in 0..nc {
                for al in 0..n {
                    xi[i][al] = rng.gen_range(-1.0..1.0);
                }
            }
            if mode == EllipticityMode::Symmetric {
                for i in 0..n {
                    for al in 0..i {
                        let s = 0.5 * (xi[i][al] + xi[al][i]);
                        xi[i][al] = s;
                        xi[al][i] = s;
                    }
                }
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..nc {
                for al in 0..n {
                    den += xi[i][al] * xi[i][al];
                    for j in 0..nc {
                        for be in 0..n {
                            num += av[((i * nc + j) * n + al) * n + be] * xi[i][al] * xi[j][be];
                        }
                    }
                }
            }
            if den > 0.0 {
                sampled_min = sampled_min.min(num / den);
            }
        }
    }
    let declared = t.bounds.lambda;
    EllipticityReport {
        mode,
        exact_min,
        exact_max,
        sampled_min,
        declared,
        pass: exact_min >= declared * (1.0 - 1e-9),
        surrogate: true,
    }
}

#[derive(Clone, Debug)]
pub struct AnnReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub pass: bool,
}

/// Extreme eigenvalues of the symmetric part of `A^{nn}` over `points`.
pub fn check_ann(t: &CoefficientTensor, points: &[Vec<f64>]) -> Result<AnnReport> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for x in points {
        let ev = symmetric_eigenvalues(&t.ann(x));
        if ev[0] <= 0.0 {
            return Err(Error::Hypothesis(format!(
                "A^nn not positive definite at {x:?} (smallest eigenvalue {:e})",
                ev[0]
            )));
        }
        lo = lo.min(ev[0]);
        hi = hi.max(*ev.last().unwrap());
    }
    let b = t.bounds;
    Ok(AnnReport {
        lambda1: lo,
        lambda2: hi,
        pass: lo >= b.lambda1 * (1.0 - 1e-9) && hi <= b.lambda2 * (1.0 + 1e-9),
    })
}

/// A scalar field that can be sampled, optionally with exact derivatives.
pub trait ScalarField {
    fn value(&self, x: &[f64]) -> f64;
    fn exact_jet(&self, _x: &[f64]) -> Option<Jet> {
        None
    }
}

impl ScalarField for Poly {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn exact_jet(&self, x: &[f64]) -> Option<Jet> {
        Some(self.jet_at(x))
    }
}

impl<F: Fn(&[f64]) -> f64> ScalarField for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Axis-aligned sampling box.
#[derive(Clone, Debug)]
pub struct Patch {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub per_axis: usize,
}

impl Patch {
    pub fn points(&self) -> Vec<Vec<f64>> {
        let d = self.lo.len();
        let k = self.per_axis.max(2);
        let total = k.pow(d as u32);
        (0..total)
            .map(|idx| {
                let mut rem = idx;
                (0..d)
                    .map(|a| {
                        let c = rem % k;
                        rem /= k;
                        self.lo[a] + (self.hi[a] - self.lo[a]) * c as f64 / (k - 1) as f64
                    })
                    .collect()
            })
            .collect()
    }
}

fn fd_jet(f: &dyn ScalarField, x: &[f64]) -> Jet {
    let h = 1e-5;
    let d = x.len();
    let mut j = Jet::constant(f.value(x));
    let at = |dx: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(a, s) in dx {
            y[a] += s;
        }
        f.value(&y)
    };
    for a in 0..d {
        j.grad[a] = (at(&[(a, h)]) - at(&[(a, -h)])) / (2.0 * h);
        for b in 0..d {
            j.hess[a][b] = if a == b {
                (at(&[(a, h)]) - 2.0 * j.value + at(&[(a, -h)])) / (h * h)
            } else {
                (at(&[(a, h), (b, h)]) - at(&[(a, h), (b, -h)]) - at(&[(a, -h), (b, h)]) + at(&[(a, -h), (b, -h)]))
                    / (4.0 * h * h)
            };
        }
    }
    j
}

fn c2_of_jets<'a>(jets: impl Iterator<Item = &'a Jet>, d: usize) -> f64 {
    let (mut s0, mut s1, mut s2) = (0.0f64, 0.0f64, 0.0f64);
    for j in jets {
        s0 = s0.max(j.value.abs());
        s1 = s1.max(j.grad[..d].iter().map(|v| v * v).sum::<f64>().sqrt());
        s2 = s2.max(
            (0..d)
                .flat_map(|a| (0..d).map(move |b| (a, b)))
                .map(|(a, b)| j.hess[a][b] * j.hess[a][b])
                .sum::<f64>()
                .sqrt(),
        );
    }
    s0 + s1 + s2
}

/// `sup|f| + sup|∇f| + sup|∇²f|` over the patch samples.
pub fn estimate_c2_norm(field: &dyn ScalarField, patch: &Patch) -> f64 {
    let d = patch.lo.len();
    let jets: Vec<Jet> = patch
        .points()
        .iter()
        .map(|x| field.exact_jet(x).unwrap_or_else(|| fd_jet(field, x)))
        .collect();
    c2_of_jets(jets.iter(), d)
}

/// Sum over the four coefficient groups of the largest entry C² norm, sampled
/// at `points`.
pub fn tensor_c2_norm(t: &CoefficientTensor, points: &[Vec<f64>]) -> f64 {
    let d = t.n;
    let group = |g: &[Poly]| {
        g.iter()
            .map(|p| {
                let jets: Vec<Jet> = points.iter().map(|x| p.jet_at(x)).collect();
                c2_of_jets(jets.iter(), d)
            })
            .fold(0.0f64, f64::max)
    };
    group(&t.a) + group(&t.b) + group(&t.c) + group(&t.d)
}
