//! Narrow regions between two graphs, the gap function, the normalized
//! vertical coordinate, and the map that straightens the region into a box.

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_DIM};
use crate::poly::Poly;

/// Exclusion radius around `x' = 0` for ratio checks that divide by `|x'|^k`.
pub const ORIGIN_GUARD: f64 = 1e-8;

/// Default number of validation samples per tangential axis.
pub const DEFAULT_SAMPLES: usize = 201;

/// Derivatives up to third order of a function of the tangential variables.
#[derive(Clone, Debug)]
pub struct Taylor3 {
    pub value: f64,
    pub grad: [f64; MAX_DIM],
    pub hess: [[f64; MAX_DIM]; MAX_DIM],
    pub third: [[[f64; MAX_DIM]; MAX_DIM]; MAX_DIM],
}

impl Taylor3 {
    fn zero() -> Self {
        Taylor3 {
            value: 0.0,
            grad: [0.0; MAX_DIM],
            hess: [[0.0; MAX_DIM]; MAX_DIM],
            third: [[[0.0; MAX_DIM]; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn jet(&self) -> Jet {
        Jet::from_parts(self.value, self.grad, self.hess)
    }

    /// Jet of the partial derivative along `axis`.
    pub fn partial_jet(&self, axis: usize) -> Jet {
        Jet::from_parts(self.grad[axis], self.hess[axis], self.third[axis])
    }
}

/// One boundary graph `x_n = h(x')`.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile {
    /// `coef · |x'|^m`
    Power { coef: f64, m: u32 },
    /// A polynomial in the tangential coordinates.
    Poly(Poly),
}

fn scaled_pow(c: f64, q: f64, e: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * q.powf(e)
    }
}

impl Profile {
    pub fn taylor3(&self, xp: &[f64]) -> Taylor3 {
        match self {
            Profile::Poly(p) => {
                let d = xp.len();
                let mut t = Taylor3::zero();
                t.value = p.eval(xp);
                for a in 0..d {
                    let pa = p.derivative(a);
                    t.grad[a] = pa.eval(xp);
                    for b in 0..d {
                        let pab = pa.derivative(b);
                        t.hess[a][b] = pab.eval(xp);
                        for c in 0..d {
                            t.third[a][b][c] = pab.derivative(c).eval(xp);
                        }
                    }
                }
                t
            }
            Profile::Power { coef, m } => power_taylor3(*coef, *m, xp),
        }
    }

    pub fn value(&self, xp: &[f64]) -> f64 {
        match self {
            Profile::Poly(p) => p.eval(xp),
            Profile::Power { coef, m } => {
                let q: f64 = xp.iter().map(|v| v * v).sum();
                coef * q.powf(*m as f64 / 2.0)
            }
        }
    }
}

fn power_taylor3(coef: f64, m: u32, xp: &[f64]) -> Taylor3 {
    let d = xp.len();
    let mut t = Taylor3::zero();
    let q: f64 = xp.iter().map(|v| v * v).sum();
    let h = m as f64 / 2.0;
    if q == 0.0 {
        if m == 2 {
            for a in 0..d {
                t.hess[a][a] = 2.0 * coef;
            }
        }
        if m == 0 {
            t.value = coef;
        }
        return t;
    }
    let c1 = coef * h;
    let c2 = c1 * (h - 1.0);
    let c3 = c2 * (h - 2.0);
    let f0 = coef * q.powf(h);
    let f1 = scaled_pow(c1, q, h - 1.0);
    let f2 = scaled_pow(c2, q, h - 2.0);
    let f3 = scaled_pow(c3, q, h - 3.0);
    let kd = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    t.value = f0;
    for a in 0..d {
        t.grad[a] = 2.0 * f1 * xp[a];
        for b in 0..d {
            t.hess[a][b] = 4.0 * f2 * xp[a] * xp[b] + 2.0 * f1 * kd(a, b);
            for c in 0..d {
                t.third[a][b][c] = 8.0 * f3 * xp[a] * xp[b] * xp[c]
                    + 4.0 * f2 * (kd(a, b) * xp[c] + kd(a, c) * xp[b] + kd(b, c) * xp[a]);
            }
        }
    }
    t
}

/// The two profiles bounding the gap together with the constants of the
/// convexity hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfilePair {
    /// Upper profile (the top boundary is `ε + h1`).
    pub h1: Profile,
    /// Lower profile.
    pub h2: Profile,
    pub m: u32,
    /// `[κ1, κ2, κ3, κ4]`
    pub kappa: [f64; 4],
    /// Half-width of the validated patch; the full patch is `|x'| ≤ 2 r0`.
    pub r0: f64,
    /// Number of tangential variables, `n - 1`.
    pub tangential_dim: usize,
}

impl ProfilePair {
    /// `h1 = a|x'|^m`, `h2 = -b|x'|^m`.
    pub fn power(a: f64, b: f64, m: u32, kappa: [f64; 4], r0: f64, tangential_dim: usize) -> Self {
        ProfilePair {
            h1: Profile::Power { coef: a, m },
            h2: Profile::Power { coef: -b, m },
            m,
            kappa,
            r0,
            tangential_dim,
        }
    }

    /// `h1 = h2 = 0`; violates the convexity lower bound but is useful for
    /// exactness checks of the solver.
    pub fn flat(r0: f64, tangential_dim: usize) -> Self {
        ProfilePair {
            h1: Profile::Poly(Poly::zero()),
            h2: Profile::Poly(Poly::zero()),
            m: 2,
            kappa: [1.0; 4],
            r0,
            tangential_dim,
        }
    }
}

/// Outcome of one hypothesis inequality on the sample grid.
#[derive(Clone, Debug)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    /// Tightest observed ratio (minimum for lower bounds, maximum for upper bounds).
    pub worst: f64,
    pub bound: f64,
    pub at: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ProfileReport {
    pub checks: Vec<HypothesisCheck>,
}

impl ProfileReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Uniform grid on the tangential ball `|x'| ≤ radius`.
pub fn tangential_samples(dim: usize, radius: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let per_axis = per_axis.max(2);
    let coord = |k: usize| -radius + 2.0 * radius * k as f64 / (per_axis - 1) as f64;
    let mut out = Vec::new();
    match dim {
        0 => out.push(Vec::new()),
        1 => (0..per_axis).for_each(|k| out.push(vec![coord(k)])),
        _ => {
            let total = per_axis.pow(dim as u32);
            for idx in 0..total {
                let mut rem = idx;
                let mut p = Vec::with_capacity(dim);
                for _ in 0..dim {
                    p.push(coord(rem % per_axis));
                    rem /= per_axis;
                }
                if norm(&p) <= radius * (1.0 + 1e-12) {
                    out.push(p);
                }
            }
        }
    }
    out
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectral norm of a symmetric matrix of size at most 2, or the Frobenius
/// norm beyond that.
fn sym_norm(h: &[[f64; MAX_DIM]; MAX_DIM], d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => h[0][0].abs(),
        2 => {
            let tr = 0.5 * (h[0][0] + h[1][1]);
            let disc = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[1][0]).max(0.0).sqrt();
            (tr + disc).abs().max((tr - disc).abs())
        }
        _ => (0..d)
            .flat_map(|a| (0..d).map(move |b| (a, b)))
            .map(|(a, b)| h[a][b] * h[a][b])
            .sum::<f64>()
            .sqrt(),
    }
}

fn c2_sup(t: &[Taylor3], d: usize) -> f64 {
    let s0 = t.iter().map(|v| v.value.abs()).fold(0.0, f64::max);
    let s1 = t.iter().map(|v| norm(&v.grad[..d])).fold(0.0, f64::max);
    let s2 = t.iter().map(|v| sym_norm(&v.hess, d)).fold(0.0, f64::max);
    s0 + s1 + s2
}

/// Checks the convexity hypotheses on a uniform sample grid with `samples`
/// points per axis over `|x'| ≤ 2 r0`.
pub fn validate_profiles(p: &ProfilePair, samples: usize) -> Result<ProfileReport> {
    if samples < 2 {
        return Err(Error::Configuration("validation needs at least 2 samples per axis".into()));
    }
    let d = p.tangential_dim;
    let m = p.m as f64;
    let [k1, k2, k3, k4] = p.kappa;
    let mut pts = tangential_samples(d, 2.0 * p.r0, samples);
    // points just outside the origin guard stand in for the limit at x' = 0
    for a in 0..d {
        for s in [-1.0, 1.0] {
            let mut q = vec![0.0; d];
            q[a] = s * 1e-4 * p.r0.max(1e-300);
            pts.push(q);
        }
    }

    let mut t1 = Vec::with_capacity(pts.len());
    let mut t2 = Vec::with_capacity(pts.len());
    for x in &pts {
        let a = p.h1.taylor3(x);
        let b = p.h2.taylor3(x);
        for (t, which) in [(&a, "h1"), (&b, "h2")] {
            let finite = t.value.is_finite()
                && t.grad[..d].iter().all(|v| v.is_finite())
                && (0..d).all(|i| t.hess[i][..d].iter().all(|v| v.is_finite()));
            if !finite {
                return Err(Error::Evaluation {
                    point: x.clone(),
                    what: format!("profile {which}"),
                });
            }
        }
        t1.push(a);
        t2.push(b);
    }

    let mut a1_lo = HypothesisCheck {
        name: "gap_lower".into(),
        pass: true,
        worst: f64::INFINITY,
        bound: k1,
        at: vec![],
    };
    let mut a1_hi = HypothesisCheck {
        name: "gap_upper".into(),
        pass: true,
        worst: f64::NEG_INFINITY,
        bound: k2,
        at: vec![],
    };
    let mut a2 = HypothesisCheck {
        name: "derivative_decay".into(),
        pass: true,
        worst: 0.0,
        bound: k3,
        at: vec![],
    };
    for (idx, x) in pts.iter().enumerate() {
        let r = norm(x);
        let gap = t1[idx].value - t2[idx].value;
        if r < ORIGIN_GUARD {
            // at the origin both sides of the gap bound vanish
            if gap.abs() > 1e-14 {
                a1_hi.pass = false;
                a1_hi.at = x.clone();
                a1_hi.worst = f64::INFINITY;
            }
            continue;
        }
        let ratio = gap / r.powf(m);
        if ratio < a1_lo.worst {
            a1_lo.worst = ratio;
            a1_lo.at = x.clone();
        }
        if ratio > a1_hi.worst {
            a1_hi.worst = ratio;
            a1_hi.at = x.clone();
        }
        for t in [&t1[idx], &t2[idx]] {
            let g = norm(&t.grad[..d]) / r.powf(m - 1.0);
            let h = sym_norm(&t.hess, d) / r.powf(m - 2.0);
            let worst = g.max(h);
            if worst > a2.worst {
                a2.worst = worst;
                a2.at = x.clone();
            }
        }
    }
    a1_lo.pass &= a1_lo.worst >= k1 * (1.0 - 1e-12);
    a1_hi.pass &= a1_hi.worst <= k2 * (1.0 + 1e-12);
    a2.pass = a2.worst <= k3 * (1.0 + 1e-12);

    let c2 = c2_sup(&t1, d) + c2_sup(&t2, d);
    let a3 = HypothesisCheck {
        name: "c2_bound".into(),
        pass: c2 <= k4 * (1.0 + 1e-12),
        worst: c2,
        bound: k4,
        at: vec![],
    };
    Ok(ProfileReport {
        checks: vec![a1_lo, a1_hi, a2, a3],
    })
}

/// A point of the straightened box: tangential coordinates and the
/// normalized height `t ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MappedPoint {
    pub xprime: Vec<f64>,
    pub t: f64,
}

/// The region `h2(x') < x_n < ε + h1(x')`, `|x'| < 2 r0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NarrowRegion {
    pub profiles: ProfilePair,
    pub epsilon: f64,
    pub n: usize,
}

impl NarrowRegion {
    pub fn new(profiles: ProfilePair, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Configuration(format!("gap epsilon must be positive, got {epsilon}")));
        }
        let n = profiles.tangential_dim + 1;
        if !(2..=MAX_DIM).contains(&n) {
            return Err(Error::Configuration(format!("dimension {n} not in 2..={MAX_DIM}")));
        }
        Ok(NarrowRegion { profiles, epsilon, n })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        NarrowRegion::new(self.profiles.clone(), epsilon)
    }

    pub fn r0(&self) -> f64 {
        self.profiles.r0
    }

    /// Half-width of the tangential patch.
    pub fn patch_radius(&self) -> f64 {
        2.0 * self.profiles.r0
    }

    fn check_patch(&self, xp: &[f64]) -> Result<()> {
        let lim = self.patch_radius() * (1.0 + 1e-12);
        if xp.len() != self.n - 1 {
            return Err(Error::domain(xp, "wrong number of tangential coordinates"));
        }
        if xp.iter().any(|v| !v.is_finite() || v.abs() > lim) {
            return Err(Error::domain(xp, "outside the tangential patch"));
        }
        Ok(())
    }

    pub fn lower(&self, xp: &[f64]) -> f64 {
        self.profiles.h2.value(xp)
    }

    pub fn upper(&self, xp: &[f64]) -> f64 {
        self.epsilon + self.profiles.h1.value(xp)
    }

    /// Unchecked gap `ε + h1 − h2`.
    pub fn gap(&self, xp: &[f64]) -> f64 {
        self.epsilon + self.profiles.h1.value(xp) - self.profiles.h2.value(xp)
    }

    pub fn delta(&self, xp: &[f64]) -> Result<f64> {
        self.check_patch(xp)?;
        let d = self.gap(xp);
        if !d.is_finite() {
            return Err(Error::Evaluation {
                point: xp.to_vec(),
                what: "gap".into(),
            });
        }
        if d <= 0.0 {
            return Err(Error::Hypothesis(format!("non-positive gap {d} at {xp:?}")));
        }
        Ok(d)
    }

    /// Jets (in the full coordinates `x`) of `h2` and `δ`, and jets of the
    /// tangential partials `∂_α δ`.
    pub fn profile_jets(&self, xp: &[f64]) -> ProfileJets {
        let d = self.n - 1;
        let a = self.profiles.h1.taylor3(xp);
        let b = self.profiles.h2.taylor3(xp);
        let h2 = b.jet();
        let delta = a.jet() - h2 + self.epsilon;
        let mut ddelta = [Jet::constant(0.0); MAX_DIM];
        let mut dh2 = [Jet::constant(0.0); MAX_DIM];
        for k in 0..d {
            ddelta[k] = a.partial_jet(k) - b.partial_jet(k);
            dh2[k] = b.partial_jet(k);
        }
        ProfileJets {
            h2,
            delta,
            ddelta,
            dh2,
        }
    }

    /// Jet of `v̄` at `x` (no membership check).
    pub fn vbar_jet(&self, x: &[f64]) -> Jet {
        let pj = self.profile_jets(&x[..self.n - 1]);
        (Jet::variable(x[self.n - 1], self.n - 1) - pj.h2) / pj.delta
    }

    fn check_closure(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::domain(x, "wrong dimension"));
        }
        let xp = &x[..self.n - 1];
        let d = self.delta(xp)?;
        let lo = self.lower(xp);
        let tol = 1e-12 * d;
        let xn = x[self.n - 1];
        if xn < lo - tol || xn > lo + d + tol {
            return Err(Error::domain(x, "outside the closed region"));
        }
        Ok(d)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.n {
            return false;
        }
        let xp = &x[..self.n - 1];
        if norm(xp) >= self.patch_radius() {
            return false;
        }
        let xn = x[self.n - 1];
        self.lower(xp) < xn && xn < self.upper(xp)
    }

    pub fn vbar(&self, x: &[f64]) -> Result<f64> {
        let d = self.check_closure(x)?;
        Ok((x[self.n - 1] - self.lower(&x[..self.n - 1])) / d)
    }

    pub fn grad_vbar(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_closure(x)?;
        let j = self.vbar_jet(x);
        Ok(j.grad[..self.n].to_vec())
    }

    pub fn to_box(&self, x: &[f64]) -> Result<MappedPoint> {
        let t = self.vbar(x)?;
        Ok(MappedPoint {
            xprime: x[..self.n - 1].to_vec(),
            t: t.clamp(0.0, 1.0),
        })
    }

    pub fn from_box(&self, mp: &MappedPoint) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&mp.t) {
            return Err(Error::domain(&[mp.t], "mapped height outside [0, 1]"));
        }
        let d = self.delta(&mp.xprime)?;
        let mut x = mp.xprime.clone();
        x.push(self.lower(&mp.xprime) + mp.t * d);
        Ok(x)
    }
}

/// Jets of the geometric quantities at a tangential point.
#[derive(Clone, Copy, Debug)]
pub struct ProfileJets {
    pub h2: Jet,
    pub delta: Jet,
    pub ddelta: [Jet; MAX_DIM],
    pub dh2: [Jet; MAX_DIM],
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadratic_region(eps: f64) -> NarrowRegion {
        let p = ProfilePair::power(1.0, 0.0, 2, [1.0, 1.0, 2.0, 10.0], 0.5, 1);
        NarrowRegion::new(p, eps).unwrap()
    }

    #[test]
    fn equality_case_of_convexity_passes() {
        let p = ProfilePair::power(1.0, 0.0, 2, [1.0, 1.0, 2.0, 10.0], 0.5, 1);
        let r = validate_profiles(&p, DEFAULT_SAMPLES).unwrap();
        assert!(r.pass(), "{r:?}");
        assert!((r.get("gap_lower").unwrap().worst - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gap_profile_fails_lower_bound() {
        let p = ProfilePair {
            h1: Profile::Poly(Poly::zero()),
            h2: Profile::Poly(Poly::zero()),
            m: 2,
            kappa: [1.0, 1.0, 2.0, 10.0],
            r0: 0.5,
            tangential_dim: 1,
        };
        let r = validate_profiles(&p, DEFAULT_SAMPLES).unwrap();
        let lo = r.get("gap_lower").unwrap();
        assert!(!lo.pass);
        assert_eq!(lo.worst, 0.0);
        assert!(norm(&lo.at) > 0.0);
    }

    #[test]
    fn quartic_pair_passes() {
        let p = ProfilePair::power(1.0, 1.0, 4, [2.0, 2.0, 12.0, 40.0], 0.5, 1);
        let r = validate_profiles(&p, DEFAULT_SAMPLES).unwrap();
        assert!(r.pass(), "{r:?}");
        // direct evaluation: h1 - h2 = 2|x'|^4 so both ratios equal 2
        assert!((r.get("gap_upper").unwrap().worst - 2.0).abs() < 1e-12);
        // |h''| / |x'|^2 = 12 is the tightest derivative-decay ratio
        assert!((r.get("derivative_decay").unwrap().worst - 12.0).abs() < 1e-9);
    }

    #[test]
    fn quartic_pair_in_two_tangential_dims() {
        let p = ProfilePair::power(1.0, 1.0, 4, [2.0, 2.0, 12.0, 80.0], 0.5, 2);
        let r = validate_profiles(&p, 41).unwrap();
        assert!(r.pass(), "{r:?}");
    }

    #[test]
    fn non_finite_profile_is_reported() {
        let p = ProfilePair::power(f64::NAN, 0.0, 2, [1.0; 4], 0.5, 1);
        assert!(matches!(validate_profiles(&p, 11), Err(Error::Evaluation { .. })));
    }

    #[test]
    fn delta_values() {
        let r = quadratic_region(0.01);
        assert_eq!(r.delta(&[0.0]).unwrap(), 0.01);
        assert!((r.delta(&[0.1]).unwrap() - 0.02).abs() < 1e-15);
        assert!(matches!(r.delta(&[1.5]), Err(Error::Domain { .. })));
    }

    #[test]
    fn delta_matches_raw_profiles() {
        let p = ProfilePair {
            h1: Profile::Poly(Poly::from_terms(&[(0.7, vec![2]), (0.3, vec![3]), (0.2, vec![4])])),
            h2: Profile::Poly(Poly::from_terms(&[(-0.4, vec![2]), (0.1, vec![3])])),
            m: 2,
            kappa: [0.5, 2.0, 4.0, 20.0],
            r0: 0.4,
            tangential_dim: 1,
        };
        let r = NarrowRegion::new(p.clone(), 0.03).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = rng.gen_range(-0.8..0.8);
            let direct = 0.03 + p.h1.value(&[x]) - p.h2.value(&[x]);
            assert!((r.delta(&[x]).unwrap() - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_invariant_under_common_shift() {
        let base = ProfilePair::power(1.0, 0.5, 2, [1.5, 1.5, 2.0, 10.0], 0.5, 1);
        let shift = |p: &Profile| match p {
            Profile::Power { coef, m } => Profile::Poly(Poly::monomial(*coef, &[*m]).add(&Poly::constant(0.37))),
            Profile::Poly(q) => Profile::Poly(q.add(&Poly::constant(0.37))),
        };
        let shifted = ProfilePair {
            h1: shift(&base.h1),
            h2: shift(&base.h2),
            ..base.clone()
        };
        let a = NarrowRegion::new(base, 0.02).unwrap();
        let b = NarrowRegion::new(shifted, 0.02).unwrap();
        for k in 0..21 {
            let x = -1.0 + 0.1 * k as f64;
            assert!((a.delta(&[x]).unwrap() - b.delta(&[x]).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn vbar_on_boundaries_and_normal_derivative() {
        let r = quadratic_region(0.01);
        let xp = 0.1;
        assert_eq!(r.vbar(&[xp, r.lower(&[xp])]).unwrap(), 0.0);
        assert!((r.vbar(&[xp, r.upper(&[xp])]).unwrap() - 1.0).abs() < 1e-15);
        // δ(0.1) = 0.02
        let g = r.grad_vbar(&[xp, 0.01]).unwrap();
        assert!((g[1] - 50.0).abs() < 1e-12);
        assert!(r.vbar(&[xp, 1.0]).is_err());
    }

    #[test]
    fn grad_vbar_matches_finite_differences() {
        let p = ProfilePair::power(1.3, 0.6, 2, [1.9, 1.9, 3.0, 10.0], 0.5, 1);
        let r = NarrowRegion::new(p, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let xp = rng.gen_range(-0.9..0.9);
            let t = rng.gen_range(0.05..0.95);
            let x = r.from_box(&MappedPoint { xprime: vec![xp], t }).unwrap();
            let g = r.grad_vbar(&x).unwrap();
            let h = 1e-6 * r.delta(&[xp]).unwrap();
            let v = |y: &[f64]| (y[1] - r.lower(&y[..1])) / r.gap(&y[..1]);
            let fd0 = (v(&[x[0] + h, x[1]]) - v(&[x[0] - h, x[1]])) / (2.0 * h);
            let fd1 = (v(&[x[0], x[1] + h]) - v(&[x[0], x[1] - h])) / (2.0 * h);
            let scale = g[0].abs().max(g[1].abs());
            assert!((fd0 - g[0]).abs() <= 1e-6 * scale, "{fd0} {}", g[0]);
            assert!((fd1 - g[1]).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn box_map_round_trip() {
        let r = quadratic_region(0.01);
        let lo = r.from_box(&MappedPoint { xprime: vec![0.3], t: 0.0 }).unwrap();
        assert_eq!(r.to_box(&lo).unwrap().t, 0.0);
        let hi = r.from_box(&MappedPoint { xprime: vec![0.3], t: 1.0 }).unwrap();
        assert!((r.to_box(&hi).unwrap().t - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let xp = rng.gen_range(-1.0..1.0);
            let x = [xp, r.lower(&[xp]) + rng.gen_range(0.0..1.0) * r.gap(&[xp])];
            let back = r.from_box(&r.to_box(&x).unwrap()).unwrap();
            worst = worst.max((back[0] - x[0]).abs()).max((back[1] - x[1]).abs());
        }
        assert!(worst <= 1e-13, "{worst}");
        assert!(r.from_box(&MappedPoint { xprime: vec![0.0], t: 1.5 }).is_err());
    }

    #[test]
    fn vbar_of_mapped_point_is_t() {
        let p = ProfilePair::power(2.0, 1.0, 4, [3.0, 3.0, 24.0, 100.0], 0.5, 1);
        let r = NarrowRegion::new(p, 0.001).unwrap();
        for i in 0..=20 {
            for j in 0..=10 {
                let t = j as f64 / 10.0;
                let xp = -1.0 + 0.1 * i as f64;
                let x = r.from_box(&MappedPoint { xprime: vec![xp], t }).unwrap();
                assert!((r.vbar(&x).unwrap() - t).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn power_profile_third_derivatives() {
        for m in [2u32, 3, 4] {
            let prof = Profile::Power { coef: 1.7, m };
            for x in [-0.6, -0.05, 0.2, 0.9] {
                let t = prof.taylor3(&[x]);
                let mf = m as f64;
                let s = x.signum();
                let ax: f64 = x.abs();
                assert!((t.value - 1.7 * ax.powf(mf)).abs() < 1e-14);
                assert!((t.grad[0] - 1.7 * mf * ax.powf(mf - 1.0) * s).abs() < 1e-12);
                assert!((t.hess[0][0] - 1.7 * mf * (mf - 1.0) * ax.powf(mf - 2.0)).abs() < 1e-12);
                let third = 1.7 * mf * (mf - 1.0) * (mf - 2.0) * ax.powf((mf - 3.0).max(0.0)) * s;
                let third = if m == 2 { 0.0 } else { third };
                assert!((t.third[0][0][0] - third).abs() < 1e-10, "m={m} x={x}");
            }
        }
    }
}
