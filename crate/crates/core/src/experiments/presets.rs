//! The reference configurations the checks are run on.

use crate::ansatz::BoundaryTraces;
use crate::coefficients::{make_lame, CoefficientTensor, LameParameters};
use crate::discretize::LateralClosure;
use crate::error::Result;
use crate::geometry::ProfilePair;
use crate::poly::Poly;

use super::{Formulation, Setup};

/// ε values for the decay sweep. The statistic falls like `exp(−c/√ε)`, so
/// the default grid leaves the double-precision range after a few points.
pub const DECAY_EPSILONS: [f64; 8] = [1e-1, 7e-2, 5e-2, 3.5e-2, 2.5e-2, 1.8e-2, 1.25e-2, 9e-3];

pub fn lame_unit(n: usize) -> Result<CoefficientTensor> {
    make_lame(LameParameters::new(1.0, 1.0, n)?, n)
}

/// `h1 = |x'|^m / 2`, `h2 = −|x'|^m / 2` on a patch of half-width `r0`.
pub fn symmetric_profiles(m: u32, r0: f64) -> ProfilePair {
    let mf = m as f64;
    let k3 = (0.5 * mf * (mf - 1.0)).max(0.5 * mf);
    // Generous: value, gradient and Hessian bounds of both profiles summed.
    let k4 = 4.0 * mf * mf * (2.0 * r0).powi(m as i32) + 4.0;
    ProfilePair::power(0.5, 0.5, m, [1.0, 1.0, k3, k4], r0, 1)
}

fn traces(phi: Vec<Poly>, psi: Vec<Poly>, r0: f64) -> Result<BoundaryTraces> {
    BoundaryTraces::new(phi, psi, 1, 2.0 * r0)
}

/// Lamé (λ = μ = 1) with `φ − ψ = e₁` between symmetric `m`-convex profiles.
/// For `m > 2` the patch shrinks so that `δ < 1` on `Ω_{R0}`, the range where
/// `δ^{1−2/m} ≤ 1`.
pub fn rate_setup(m: u32) -> Result<Setup> {
    let r0 = if m > 2 { 0.8 } else { 1.0 };
    let t = traces(vec![Poly::constant(1.0), Poly::zero()], vec![Poly::zero(); 2], r0)?;
    Ok(Setup::new(lame_unit(2)?, symmetric_profiles(m, r0), t))
}

/// Equal non-constant traces `φ = ψ = (x₁², x₁)`.
pub fn equal_traces_setup() -> Result<Setup> {
    let r0 = 1.0;
    let f = vec![Poly::monomial(1.0, &[2]), Poly::monomial(1.0, &[1])];
    let t = traces(f.clone(), f, r0)?;
    Ok(Setup::new(lame_unit(2)?, symmetric_profiles(2, r0), t))
}

/// `φ − ψ = e₂`, constant.
pub fn constant_gap_setup() -> Result<Setup> {
    let r0 = 1.0;
    let t = traces(vec![Poly::zero(), Poly::constant(1.0)], vec![Poly::zero(); 2], r0)?;
    Ok(Setup::new(lame_unit(2)?, symmetric_profiles(2, r0), t))
}

/// `φ − ψ = x₁^k e₂`, vanishing to order `k` at the origin.
pub fn vanishing_gap_setup(k: u32, m: u32) -> Result<Setup> {
    let r0 = 1.0;
    let t = traces(vec![Poly::zero(), Poly::monomial(1.0, &[k])], vec![Poly::zero(); 2], r0)?;
    Ok(Setup::new(lame_unit(2)?, symmetric_profiles(m, r0), t))
}

/// Zero data on both boundaries, unit data on the lateral side.
pub fn decay_setup(tensor: CoefficientTensor) -> Result<Setup> {
    let r0 = 0.125;
    let nc = tensor.ncomp;
    let t = traces(vec![Poly::zero(); nc], vec![Poly::zero(); nc], r0)?;
    let profiles = ProfilePair::power(2.0, 2.0, 2, [4.0, 4.0, 4.0, 12.0], r0, 1);
    let mut s = Setup::new(tensor, profiles, t);
    s.lateral = LateralClosure::Constant(vec![1.0; nc]);
    s.formulation = Formulation::Direct;
    s.epsilons = DECAY_EPSILONS.to_vec();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::validate_profiles;

    #[test]
    fn reference_profiles_satisfy_the_hypotheses() {
        for m in [2, 3, 4] {
            let r = validate_profiles(&symmetric_profiles(m, 1.0), 401).unwrap();
            assert!(r.pass(), "m = {m}: {r:?}");
        }
        let d = decay_setup(crate::CoefficientTensor::laplace(2).unwrap()).unwrap();
        let r = validate_profiles(&d.profiles, 401).unwrap();
        assert!(r.pass(), "{r:?}");
    }
}
