//! The corrected leading term
//!
//! ```text
//! ū = φ v̄ + ψ (1 − v̄) + 𝔯(v̄) Σ_l G_l(x'),    𝔯(t) = ½(t − ½)² − ⅛
//! ```
//!
//! where each `G_l` solves `A^{nn} G_l = (A^{αn}_{·l} + A^{nα}_{·l}) ∂_α δ (φ^l − ψ^l)`
//! with `A` taken at the gap midpoint. All derivatives are carried exactly
//! through second-order jets.

use crate::coefficients::{estimate_c2_norm, CoefficientTensor, LameParameters, Patch, TensorKind};
use crate::error::{Error, Result};
use crate::geometry::NarrowRegion;
use crate::jet::{Jet, MAX_DIM};
use crate::linalg::SmallLu;
use crate::poly::Poly;

pub fn smoother(t: f64) -> f64 {
    0.5 * (t - 0.5) * (t - 0.5) - 0.125
}

pub fn smoother_prime(t: f64) -> f64 {
    t - 0.5
}

fn smoother_jet(v: Jet) -> Jet {
    v.chain(smoother(v.value), smoother_prime(v.value), 1.0)
}

/// Dirichlet data as functions of the tangential variables: `phi` on the top
/// boundary and `psi` on the bottom one.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTraces {
    pub phi: Vec<Poly>,
    pub psi: Vec<Poly>,
    pub tangential_dim: usize,
    phi_c2: Vec<f64>,
    psi_c2: Vec<f64>,
}

impl BoundaryTraces {
    /// `patch_radius` is the half-width of the box on which the C² norms are
    /// sampled.
    pub fn new(phi: Vec<Poly>, psi: Vec<Poly>, tangential_dim: usize, patch_radius: f64) -> Result<Self> {
        if phi.len() != psi.len() || phi.is_empty() {
            return Err(Error::Configuration(format!(
                "trace component counts differ or vanish ({} vs {})",
                phi.len(),
                psi.len()
            )));
        }
        let patch = Patch {
            lo: vec![-patch_radius; tangential_dim],
            hi: vec![patch_radius; tangential_dim],
            per_axis: if tangential_dim == 1 { 201 } else { 41 },
        };
        let phi_c2 = phi.iter().map(|p| estimate_c2_norm(p, &patch)).collect();
        let psi_c2 = psi.iter().map(|p| estimate_c2_norm(p, &patch)).collect();
        Ok(BoundaryTraces {
            phi,
            psi,
            tangential_dim,
            phi_c2,
            psi_c2,
        })
    }

    /// Constant vectors on each boundary.
    pub fn constant(phi: &[f64], psi: &[f64], tangential_dim: usize, patch_radius: f64) -> Result<Self> {
        BoundaryTraces::new(
            phi.iter().map(|&c| Poly::constant(c)).collect(),
            psi.iter().map(|&c| Poly::constant(c)).collect(),
            tangential_dim,
            patch_radius,
        )
    }

    pub fn ncomp(&self) -> usize {
        self.phi.len()
    }

    pub fn phi_at(&self, xp: &[f64]) -> Vec<f64> {
        self.phi.iter().map(|p| p.eval(xp)).collect()
    }

    pub fn psi_at(&self, xp: &[f64]) -> Vec<f64> {
        self.psi.iter().map(|p| p.eval(xp)).collect()
    }

    /// `φ^l − ψ^l` and its tangential gradient.
    pub fn difference(&self, xp: &[f64], l: usize) -> (f64, Vec<f64>) {
        let j = self.phi[l].add(&self.psi[l].scale(-1.0)).jet_at(xp);
        (j.value, j.grad[..self.tangential_dim].to_vec())
    }

    pub fn phi_c2(&self) -> &[f64] {
        &self.phi_c2
    }

    pub fn psi_c2(&self) -> &[f64] {
        &self.psi_c2
    }

    /// `Σ_l (‖φ^l‖_{C²} + ‖ψ^l‖_{C²})`.
    pub fn c2_total(&self) -> f64 {
        self.phi_c2.iter().chain(&self.psi_c2).sum()
    }

    /// The traces `(aφ₁ + bφ₂, aψ₁ + bψ₂)`.
    pub fn combine(&self, a: f64, other: &BoundaryTraces, b: f64, patch_radius: f64) -> Result<Self> {
        let mix = |p: &[Poly], q: &[Poly]| -> Vec<Poly> {
            p.iter().zip(q).map(|(x, y)| x.scale(a).add(&y.scale(b))).collect()
        };
        BoundaryTraces::new(mix(&self.phi, &other.phi), mix(&self.psi, &other.psi), self.tangential_dim, patch_radius)
    }
}

/// `|φ − ψ| + |∇_{x'}(φ − ψ)|`.
pub fn theta(traces: &BoundaryTraces, xp: &[f64]) -> f64 {
    let (v, g) = difference_norms(traces, xp, None);
    v + g
}

/// `|φ^l − ψ^l| + |∇_{x'}(φ^l − ψ^l)|` for one component.
pub fn theta_component(traces: &BoundaryTraces, xp: &[f64], l: usize) -> f64 {
    let (v, g) = difference_norms(traces, xp, Some(l));
    v + g
}

/// `|φ − ψ| δ^{1−2/m} + |∇_{x'}(φ − ψ)|`.
pub fn theta_bar_delta(traces: &BoundaryTraces, region: &NarrowRegion, xp: &[f64]) -> Result<f64> {
    let d = region.delta(xp)?;
    let m = region.profiles.m as f64;
    let (v, g) = difference_norms(traces, xp, None);
    Ok(v * d.powf(1.0 - 2.0 / m) + g)
}

fn difference_norms(traces: &BoundaryTraces, xp: &[f64], only: Option<usize>) -> (f64, f64) {
    let mut v2 = 0.0;
    let mut g2 = 0.0;
    for l in 0..traces.ncomp() {
        if only.is_some_and(|k| k != l) {
            continue;
        }
        let (v, g) = traces.difference(xp, l);
        v2 += v * v;
        g2 += g.iter().map(|x| x * x).sum::<f64>();
    }
    (v2.sqrt(), g2.sqrt())
}

/// Jets in `x` of the trace data and geometry at one tangential point.
struct Local {
    vbar: Jet,
    phi: Vec<Jet>,
    psi: Vec<Jet>,
    /// `G[l][i]`
    g: Vec<Vec<Jet>>,
}

fn trace_jets(traces: &BoundaryTraces, seeds: &[Jet]) -> (Vec<Jet>, Vec<Jet>) {
    let phi = traces.phi.iter().map(|p| p.eval_jet(seeds)).collect();
    let psi = traces.psi.iter().map(|p| p.eval_jet(seeds)).collect();
    (phi, psi)
}

/// Solves `M g = r` where `M` and `r` are jets, reusing one factorization of
/// the value of `M` for the derivatives.
fn solve_jets(m: &[Vec<Jet>], r: &[Jet], n: usize, at: &[f64]) -> Result<Vec<Jet>> {
    let nc = r.len();
    let mv: Vec<Vec<f64>> = m.iter().map(|row| row.iter().map(|j| j.value).collect()).collect();
    let lu = SmallLu::new(&mv).map_err(|e| {
        Error::Hypothesis(format!("A^nn singular at {at:?}: {e}"))
    })?;
    let value = lu.solve(&r.iter().map(|j| j.value).collect::<Vec<_>>());
    let mut grad = vec![[0.0; MAX_DIM]; nc];
    for a in 0..n {
        let rhs: Vec<f64> = (0..nc)
            .map(|i| r[i].grad[a] - (0..nc).map(|k| m[i][k].grad[a] * value[k]).sum::<f64>())
            .collect();
        for (i, v) in lu.solve(&rhs).into_iter().enumerate() {
            grad[i][a] = v;
        }
    }
    let mut hess = vec![[[0.0; MAX_DIM]; MAX_DIM]; nc];
    for a in 0..n {
        for b in a..n {
            let rhs: Vec<f64> = (0..nc)
                .map(|i| {
                    r[i].hess[a][b]
                        - (0..nc)
                            .map(|k| {
                                m[i][k].grad[a] * grad[k][b]
                                    + m[i][k].grad[b] * grad[k][a]
                                    + m[i][k].hess[a][b] * value[k]
                            })
                            .sum::<f64>()
                })
                .collect();
            for (i, v) in lu.solve(&rhs).into_iter().enumerate() {
                hess[i][a][b] = v;
                hess[i][b][a] = v;
            }
        }
    }
    Ok((0..nc).map(|i| Jet::from_parts(value[i], grad[i], hess[i])).collect())
}

fn generic_correction_jets(
    tensor: &CoefficientTensor,
    region: &NarrowRegion,
    phi: &[Jet],
    psi: &[Jet],
    xp: &[f64],
) -> Result<Vec<Vec<Jet>>> {
    let n = region.n;
    let nc = tensor.ncomp;
    let last = n - 1;
    let pj = region.profile_jets(xp);
    let mut args = Jet::seed(xp);
    args.push(pj.h2 + pj.delta * 0.5);
    let a = |i: usize, j: usize, al: usize, be: usize| -> Jet {
        if tensor.is_constant() {
            Jet::constant(tensor.a_poly(i, j, al, be).eval(&[0.0; MAX_DIM]))
        } else {
            tensor.a_jet(&args, i, j, al, be)
        }
    };
    let m: Vec<Vec<Jet>> = (0..nc).map(|i| (0..nc).map(|j| a(i, j, last, last)).collect()).collect();
    let at: Vec<f64> = args.iter().map(|j| j.value).collect();
    let mut out = Vec::with_capacity(nc);
    for l in 0..nc {
        let diff = phi[l] - psi[l];
        let r: Vec<Jet> = (0..nc)
            .map(|i| {
                let mut s = Jet::constant(0.0);
                for al in 0..last {
                    let coef = a(i, l, al, last) + a(i, l, last, al);
                    if coef.value != 0.0 || coef.grad.iter().any(|v| *v != 0.0) {
                        s += coef * pj.ddelta[al];
                    }
                }
                s * diff
            })
            .collect();
        out.push(solve_jets(&m, &r, n, &at)?);
    }
    Ok(out)
}

fn lame_correction_jets(p: LameParameters, region: &NarrowRegion, phi: &[Jet], psi: &[Jet], xp: &[f64]) -> Vec<Vec<Jet>> {
    let n = region.n;
    let last = n - 1;
    let pj = region.profile_jets(xp);
    let c1 = (p.lam + p.mu) / (p.lam + 2.0 * p.mu);
    let c2 = (p.lam + p.mu) / p.mu;
    let mut g = vec![vec![Jet::constant(0.0); n]; n];
    for l in 0..last {
        g[l][last] = (phi[l] - psi[l]) * pj.ddelta[l] * c1;
    }
    let dn = (phi[last] - psi[last]) * c2;
    for l in 0..last {
        g[last][l] = dn * pj.ddelta[l];
    }
    g
}

/// Correction vectors `G_1..G_N` at a tangential point, with `G[l][i]` the
/// `i`-th entry of `G_l`.
pub fn correction_coeffs(
    tensor: &CoefficientTensor,
    region: &NarrowRegion,
    traces: &BoundaryTraces,
    xp: &[f64],
) -> Result<Vec<Vec<f64>>> {
    region.delta(xp)?;
    let seeds = Jet::seed(xp);
    let (phi, psi) = trace_jets(traces, &seeds);
    let g = generic_correction_jets(tensor, region, &phi, &psi, xp)?;
    Ok(g.iter().map(|v| v.iter().map(|j| j.value).collect()).collect())
}

/// Closed-form correction vectors for the isotropic elasticity tensor.
pub fn lame_correction(
    params: LameParameters,
    region: &NarrowRegion,
    traces: &BoundaryTraces,
    xp: &[f64],
) -> Result<Vec<Vec<f64>>> {
    params.validate(region.n)?;
    region.delta(xp)?;
    let seeds = Jet::seed(xp);
    let (phi, psi) = trace_jets(traces, &seeds);
    let g = lame_correction_jets(params, region, &phi, &psi, xp);
    Ok(g.iter().map(|v| v.iter().map(|j| j.value).collect()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnsatzMode {
    Generic,
    LameClosedForm,
}

#[derive(Clone, Debug)]
pub struct AnsatzField {
    pub region: NarrowRegion,
    pub tensor: CoefficientTensor,
    pub traces: BoundaryTraces,
    pub mode: AnsatzMode,
    /// When false the correction term is dropped and `ū` is the linear interpolant.
    pub corrected: bool,
}

pub fn build_ansatz(
    tensor: &CoefficientTensor,
    region: &NarrowRegion,
    traces: &BoundaryTraces,
    mode: AnsatzMode,
) -> Result<AnsatzField> {
    if tensor.ncomp != traces.ncomp() {
        return Err(Error::Configuration(format!(
            "tensor has {} components but traces have {}",
            tensor.ncomp,
            traces.ncomp()
        )));
    }
    if tensor.n != region.n || traces.tangential_dim + 1 != region.n {
        return Err(Error::Configuration("tensor, region and traces disagree on the dimension".into()));
    }
    if mode == AnsatzMode::LameClosedForm && !matches!(tensor.kind, TensorKind::Lame(_)) {
        return Err(Error::Configuration("closed-form ansatz requires a Lamé tensor".into()));
    }
    Ok(AnsatzField {
        region: region.clone(),
        tensor: tensor.clone(),
        traces: traces.clone(),
        mode,
        corrected: true,
    })
}

impl AnsatzField {
    pub fn uncorrected(&self) -> AnsatzField {
        AnsatzField {
            corrected: false,
            ..self.clone()
        }
    }

    pub fn with_region(&self, region: NarrowRegion) -> AnsatzField {
        AnsatzField {
            region,
            ..self.clone()
        }
    }

    fn local(&self, x: &[f64]) -> Result<Local> {
        self.region.vbar(x)?;
        let n = self.region.n;
        let xp = &x[..n - 1];
        let seeds = Jet::seed(x);
        let (phi, psi) = trace_jets(&self.traces, &seeds[..n - 1]);
        let g = if !self.corrected {
            Vec::new()
        } else {
            match (self.mode, &self.tensor.kind) {
                (AnsatzMode::LameClosedForm, TensorKind::Lame(p)) => lame_correction_jets(*p, &self.region, &phi, &psi, xp),
                _ => generic_correction_jets(&self.tensor, &self.region, &phi, &psi, xp)?,
            }
        };
        Ok(Local {
            vbar: self.region.vbar_jet(x),
            phi,
            psi,
            g,
        })
    }

    /// One jet per component of `ū` at `x`.
    pub fn jets(&self, x: &[f64]) -> Result<Vec<Jet>> {
        let loc = self.local(x)?;
        let nc = self.traces.ncomp();
        let r = smoother_jet(loc.vbar);
        let one_minus = Jet::constant(1.0) - loc.vbar;
        Ok((0..nc)
            .map(|i| {
                let mut u = loc.phi[i] * loc.vbar + loc.psi[i] * one_minus;
                if !loc.g.is_empty() {
                    let s: Jet = loc.g.iter().map(|gl| gl[i]).sum();
                    u += r * s;
                }
                u
            })
            .collect())
    }

    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jets(x)?.iter().map(|j| j.value).collect())
    }

    /// `N × n` gradient matrix.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let n = self.region.n;
        Ok(self.jets(x)?.iter().map(|j| j.grad[..n].to_vec()).collect())
    }

    /// The per-component leading terms `ū_l = (φ^l v̄ + ψ^l (1 − v̄)) e_l + 𝔯(v̄) G_l`.
    pub fn components(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let loc = self.local(x)?;
        let nc = self.traces.ncomp();
        let v = loc.vbar.value;
        let r = smoother(v);
        Ok((0..nc)
            .map(|l| {
                (0..nc)
                    .map(|i| {
                        let lin = if i == l { loc.phi[l].value * v + loc.psi[l].value * (1.0 - v) } else { 0.0 };
                        let corr = if loc.g.is_empty() { 0.0 } else { r * loc.g[l][i].value };
                        lin + corr
                    })
                    .collect()
            })
            .collect())
    }

    /// Right side `f = −L[ū]` of the equation satisfied by `u − ū`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let jets = self.jets(x)?;
        Ok(self.tensor.apply(x, &jets).into_iter().map(|v| -v).collect())
    }
}

pub fn grad_ansatz(af: &AnsatzField, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    af.gradient(x)
}

pub fn residual(af: &AnsatzField, x: &[f64]) -> Result<Vec<f64>> {
    af.residual(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::make_lame;
    use crate::geometry::{MappedPoint, ProfilePair};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lame(lam: f64, mu: f64) -> CoefficientTensor {
        make_lame(LameParameters::new(lam, mu, 2).unwrap(), 2).unwrap()
    }

    fn region(eps: f64) -> NarrowRegion {
        NarrowRegion::new(ProfilePair::power(1.0, 0.0, 2, [1.0, 1.0, 2.0, 10.0], 0.5, 1), eps).unwrap()
    }

    #[test]
    fn smoother_values() {
        assert_eq!(smoother(0.0), 0.0);
        assert_eq!(smoother(1.0), 0.0);
        assert_eq!(smoother(0.5), -0.125);
        for k in 0..100 {
            let t = k as f64 / 99.0;
            let h = 1e-6;
            let fd = (smoother(t + h) - smoother(t - h)) / (2.0 * h);
            assert!((fd - smoother_prime(t)).abs() < 1e-10);
        }
    }

    #[test]
    fn laplace_has_no_correction() {
        let t = CoefficientTensor::laplace(2).unwrap();
        let r = region(0.01);
        let tr = BoundaryTraces::new(vec![Poly::monomial(1.0, &[1])], vec![Poly::constant(0.3)], 1, 1.0).unwrap();
        let g = correction_coeffs(&t, &r, &tr, &[0.3]).unwrap();
        assert_eq!(g, vec![vec![0.0]]);
    }

    #[test]
    fn lame_corrections_match_closed_form_values() {
        // h1 = x², so ∂₁δ = 0.2 at x' = 0.1
        let r = region(0.01);
        let tr = BoundaryTraces::constant(&[1.0, 1.0], &[0.0, 0.0], 1, 1.0).unwrap();
        let p = LameParameters::new(1.0, 1.0, 2).unwrap();
        let g = lame_correction(p, &r, &tr, &[0.1]).unwrap();
        assert!(g[0][0].abs() < 1e-15 && (g[0][1] - 0.2 * 2.0 / 3.0).abs() < 1e-14);
        assert!((g[1][0] - 0.4).abs() < 1e-14 && g[1][1].abs() < 1e-15);
        let gen = correction_coeffs(&lame(1.0, 1.0), &r, &tr, &[0.1]).unwrap();
        for l in 0..2 {
            for i in 0..2 {
                assert!((gen[l][i] - g[l][i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn correction_vanishes_near_minus_mu() {
        let r = region(0.01);
        let tr = BoundaryTraces::constant(&[1.0, 1.0], &[0.0, 0.0], 1, 1.0).unwrap();
        let p = LameParameters { lam: -1.0 + 1e-12, mu: 1.0 };
        let g = lame_correction(LameParameters { lam: p.lam.max(-0.99), ..p }, &r, &tr, &[0.3]).unwrap();
        assert!(g.iter().flatten().all(|v| v.abs() < 0.1));
        // the closed form is linear in λ + μ
        let near = lame_correction_jets(p, &r, &[Jet::constant(1.0); 2], &[Jet::constant(0.0); 2], &[0.3]);
        assert!(near.iter().flatten().all(|j| j.value.abs() < 1e-10));
    }

    #[test]
    fn theta_examples() {
        let tr = BoundaryTraces::constant(&[1.0, 2.0], &[1.0, 2.0], 1, 1.0).unwrap();
        assert_eq!(theta(&tr, &[0.2]), 0.0);
        let tr = BoundaryTraces::constant(&[3.0, 0.0], &[0.0, 4.0], 1, 1.0).unwrap();
        assert_eq!(theta(&tr, &[0.2]), 5.0);
        let r = region(0.01);
        assert!((theta_bar_delta(&tr, &r, &[0.2]).unwrap() - 5.0).abs() < 1e-14);
        let tr = BoundaryTraces::new(vec![Poly::monomial(1.0, &[1]), Poly::zero()], vec![Poly::zero(); 2], 1, 1.0).unwrap();
        assert_eq!(theta(&tr, &[0.0]), 1.0);
        assert_eq!(theta_component(&tr, &[0.0], 1), 0.0);
    }

    #[test]
    fn boundary_match_and_decomposition() {
        let r = NarrowRegion::new(ProfilePair::power(1.3, 0.7, 2, [2.0, 2.0, 3.0, 20.0], 0.5, 1), 0.02).unwrap();
        let tr = BoundaryTraces::new(
            vec![Poly::from_terms(&[(1.0, vec![1]), (0.5, vec![0])]), Poly::monomial(-0.4, &[2])],
            vec![Poly::constant(0.2), Poly::monomial(0.9, &[1])],
            1,
            1.0,
        )
        .unwrap();
        let af = build_ansatz(&lame(1.0, 2.0), &r, &tr, AnsatzMode::Generic).unwrap();
        for k in 0..=40 {
            let xp = -1.0 + 0.05 * k as f64;
            for (t, want) in [(0.0, tr.psi_at(&[xp])), (1.0, tr.phi_at(&[xp]))] {
                let x = r.from_box(&MappedPoint { xprime: vec![xp], t }).unwrap();
                let u = af.value(&x).unwrap();
                for i in 0..2 {
                    assert!((u[i] - want[i]).abs() <= 1e-14);
                }
            }
            let x = r.from_box(&MappedPoint { xprime: vec![xp], t: 0.3 }).unwrap();
            let u = af.value(&x).unwrap();
            let parts = af.components(&x).unwrap();
            for i in 0..2 {
                let s: f64 = parts.iter().map(|p| p[i]).sum();
                assert!((s - u[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn closed_form_and_generic_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mu = rng.gen_range(0.2..3.0);
            let lam = rng.gen_range(-0.9 * mu..3.0);
            let t = lame(lam, mu);
            let r = region(rng.gen_range(0.001..0.1));
            let tr = BoundaryTraces::new(
                vec![Poly::monomial(rng.gen_range(-1.0..1.0), &[1]), Poly::constant(1.0)],
                vec![Poly::zero(), Poly::monomial(rng.gen_range(-1.0..1.0), &[2])],
                1,
                1.0,
            )
            .unwrap();
            let a = build_ansatz(&t, &r, &tr, AnsatzMode::Generic).unwrap();
            let b = build_ansatz(&t, &r, &tr, AnsatzMode::LameClosedForm).unwrap();
            for _ in 0..50 {
                let xp = rng.gen_range(-1.0..1.0);
                let x = r.from_box(&MappedPoint { xprime: vec![xp], t: rng.gen_range(0.0..1.0) }).unwrap();
                let ja = a.jets(&x).unwrap();
                let jb = b.jets(&x).unwrap();
                for i in 0..2 {
                    assert!((ja[i].value - jb[i].value).abs() < 1e-12);
                    for p in 0..2 {
                        assert!((ja[i].grad[p] - jb[i].grad[p]).abs() <= 1e-12 * (1.0 + jb[i].grad[p].abs()));
                        for q in 0..2 {
                            assert!((ja[i].hess[p][q] - jb[i].hess[p][q]).abs() <= 1e-10 * (1.0 + jb[i].hess[p][q].abs()));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let r = NarrowRegion::new(ProfilePair::power(1.0, 1.0, 4, [2.0, 2.0, 12.0, 40.0], 0.5, 1), 0.05).unwrap();
        let tr = BoundaryTraces::new(
            vec![Poly::monomial(1.0, &[1]), Poly::constant(0.5)],
            vec![Poly::constant(-0.2), Poly::monomial(0.3, &[2])],
            1,
            1.0,
        )
        .unwrap();
        let af = build_ansatz(&lame(0.5, 1.0), &r, &tr, AnsatzMode::Generic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let xp = rng.gen_range(-0.9..0.9);
            let x = r.from_box(&MappedPoint { xprime: vec![xp], t: rng.gen_range(0.05..0.95) }).unwrap();
            let h = 1e-6 * r.delta(&[xp]).unwrap();
            let g = af.gradient(&x).unwrap();
            let scale = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for a in 0..2 {
                let mut p = x.clone();
                let mut q = x.clone();
                p[a] += h;
                q[a] -= h;
                let (up, uq) = (af.value(&p).unwrap(), af.value(&q).unwrap());
                for i in 0..2 {
                    let fd = (up[i] - uq[i]) / (2.0 * h);
                    assert!((fd - g[i][a]).abs() <= 1e-6 * scale, "{fd} {}", g[i][a]);
                }
            }
        }
    }

    #[test]
    fn constant_difference_normal_derivative() {
        let t = CoefficientTensor::laplace(2).unwrap();
        let r = region(0.01);
        let tr = BoundaryTraces::constant(&[2.5], &[0.5], 1, 1.0).unwrap();
        let af = build_ansatz(&t, &r, &tr, AnsatzMode::Generic).unwrap();
        let x = [0.1, 0.005];
        assert!((af.gradient(&x).unwrap()[0][1] - 2.0 / 0.02).abs() < 1e-10);
    }

    #[test]
    fn flat_linear_data_is_exact() {
        let t = CoefficientTensor::laplace(2).unwrap();
        let r = NarrowRegion::new(ProfilePair::flat(0.5, 1), 0.1).unwrap();
        let tr = BoundaryTraces::constant(&[1.0], &[0.0], 1, 1.0).unwrap();
        let af = build_ansatz(&t, &r, &tr, AnsatzMode::Generic).unwrap();
        assert!(af.residual(&[0.3, 0.05]).unwrap()[0].abs() < 1e-10);
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let t = CoefficientTensor::laplace(2).unwrap();
        let tr = BoundaryTraces::constant(&[1.0], &[0.0], 1, 1.0).unwrap();
        assert!(matches!(
            build_ansatz(&t, &region(0.1), &tr, AnsatzMode::LameClosedForm),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn equal_traces_reproduce_the_trace() {
        let t = lame(1.0, 1.0);
        let r = region(0.01);
        let p = vec![Poly::monomial(1.0, &[2]), Poly::monomial(1.0, &[1])];
        let tr = BoundaryTraces::new(p.clone(), p.clone(), 1, 1.0).unwrap();
        let af = build_ansatz(&t, &r, &tr, AnsatzMode::Generic).unwrap();
        let x = r.from_box(&MappedPoint { xprime: vec![0.4], t: 0.37 }).unwrap();
        let u = af.value(&x).unwrap();
        assert!((u[0] - 0.16).abs() < 1e-14 && (u[1] - 0.4).abs() < 1e-14);
    }
}
