//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! line per criterion and exits non-zero if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use narrowgap::ansatz::{correction_coeffs, lame_correction};
use narrowgap::discretize::{
    jet_field_values, manufactured_source, solve_dirichlet, BoxGrid, JetFieldFn, SolverOptions,
};
use narrowgap::experiments::*;
use narrowgap::jet::Jet;
use narrowgap::{
    build_ansatz, make_lame, AnsatzMode, BoundaryTraces, CoefficientTensor, LameParameters, MappedPoint, NarrowRegion,
    Poly, ProfilePair,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn from_check(c: &CheckOutcome) -> Outcome {
    let detail = c
        .criteria
        .iter()
        .map(|k| format!("{} {:.4} [{}]", k.label, k.value, k.target))
        .collect::<Vec<_>>()
        .join("; ");
    let notes = if c.passed() { String::new() } else { format!(" | {}", c.notes.join("; ")) };
    outcome(c.passed(), format!("{} {}: {detail}{notes}", c.name, c.verdict.label()))
}

fn random_poly(rng: &mut ChaCha8Rng, dim: usize) -> Poly {
    let mut terms = vec![(rng.gen_range(-1.0..1.0), vec![0; dim])];
    for a in 0..dim {
        let mut e = vec![0; dim];
        e[a] = 1;
        terms.push((rng.gen_range(-1.0..1.0), e.clone()));
        e[a] = 2;
        terms.push((rng.gen_range(-1.0..1.0), e));
    }
    Poly::from_terms(&terms)
}

fn random_traces(rng: &mut ChaCha8Rng, n: usize, r0: f64) -> BoundaryTraces {
    let phi = (0..n).map(|_| random_poly(rng, n - 1)).collect();
    let psi = (0..n).map(|_| random_poly(rng, n - 1)).collect();
    BoundaryTraces::new(phi, psi, n - 1, 2.0 * r0).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, r: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-r..r)).collect()
}

/// Closed-form correction for λ, μ computed from scratch: with
/// `c1 = (λ+μ)/(λ+2μ)` and `c2 = (λ+μ)/μ`, `G_l = c1 (φ^l − ψ^l) ∂_l δ e_n`
/// for tangential `l` and `G_n = c2 (φ^n − ψ^n) Σ_l ∂_l δ e_l`.
fn cramer_oracle(lam: f64, mu: f64, coef: f64, m: u32, traces: &BoundaryTraces, xp: &[f64]) -> Vec<Vec<f64>> {
    let n = xp.len() + 1;
    let r2: f64 = xp.iter().map(|v| v * v).sum();
    let ddelta: Vec<f64> = xp.iter().map(|v| coef * m as f64 * r2.powf(m as f64 / 2.0 - 1.0) * v).collect();
    let (phi, psi) = (traces.phi_at(xp), traces.psi_at(xp));
    let c1 = (lam + mu) / (lam + 2.0 * mu);
    let c2 = (lam + mu) / mu;
    let mut g = vec![vec![0.0; n]; n];
    for l in 0..n - 1 {
        g[l][n - 1] = c1 * (phi[l] - psi[l]) * ddelta[l];
        g[n - 1][l] = c2 * (phi[n - 1] - psi[n - 1]) * ddelta[l];
    }
    g
}

fn closed_form_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n: usize = rng.gen_range(2..=3);
        let mu: f64 = rng.gen_range(0.1..5.0);
        // μ > 0, λ + μ > 0 and nλ + 2μ > 0
        let lam = rng.gen_range((-mu).max(-2.0 * mu / n as f64) + 0.05..5.0);
        let m = rng.gen_range(2..=4u32);
        let (a, b) = (rng.gen_range(0.2..2.0), rng.gen_range(0.0..2.0));
        let r0 = 0.5;
        let profiles = ProfilePair::power(a, b, m, [a + b, a + b, 10.0, 100.0], r0, n - 1);
        let region = NarrowRegion::new(profiles, rng.gen_range(1e-3..1e-1)).unwrap();
        let p = LameParameters::new(lam, mu, n).unwrap();
        let tensor = make_lame(p, n).unwrap();
        let traces = random_traces(&mut rng, n, r0);
        for _ in 0..5 {
            let xp = random_point(&mut rng, n - 1, 2.0 * r0);
            let oracle = cramer_oracle(lam, mu, a + b, m, &traces, &xp);
            let scale = oracle.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
            for got in [
                correction_coeffs(&tensor, &region, &traces, &xp).unwrap(),
                lame_correction(p, &region, &traces, &xp).unwrap(),
            ] {
                let err = got
                    .iter()
                    .flatten()
                    .zip(oracle.iter().flatten())
                    .fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
                worst = worst.max(err / scale);
            }
        }
    }
    outcome(worst <= 1e-12, format!("max relative deviation {worst:.3e} [≤ 1e-12]"))
}

fn ansatz_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let r0 = 0.5;
    let profiles = ProfilePair::power(1.0, 0.5, 2, [1.5, 1.5, 2.0, 10.0], r0, 1);
    let region = NarrowRegion::new(profiles, 1e-2).unwrap();
    let tensor = make_lame(LameParameters::new(1.0, 1.0, 2).unwrap(), 2).unwrap();
    let traces = random_traces(&mut rng, 2, r0);
    let af = build_ansatz(&tensor, &region, &traces, AnsatzMode::Generic).unwrap();

    let mut bnd = 0.0f64;
    for k in 0..10_000 {
        let xp = random_point(&mut rng, 1, 2.0 * r0);
        let t = (k % 2) as f64;
        let x = region.from_box(&MappedPoint { xprime: xp.clone(), t }).unwrap();
        let want = if t == 1.0 { traces.phi_at(&xp) } else { traces.psi_at(&xp) };
        let got = af.value(&x).unwrap();
        bnd = got.iter().zip(&want).fold(bnd, |s, (a, b)| s.max((a - b).abs()));
    }

    let mut fd = 0.0f64;
    for _ in 0..1000 {
        let xp = random_point(&mut rng, 1, 2.0 * r0);
        let t = rng.gen_range(0.02..0.98);
        let x = region.from_box(&MappedPoint { xprime: xp.clone(), t }).unwrap();
        let h = 1e-4 * region.delta(&xp).unwrap();
        let g = af.gradient(&x).unwrap();
        let mut num = vec![vec![0.0; 2]; 2];
        for a in 0..2 {
            let (mut xa, mut xb) = (x.clone(), x.clone());
            xa[a] += h;
            xb[a] -= h;
            let (ua, ub) = (af.value(&xa).unwrap(), af.value(&xb).unwrap());
            for i in 0..2 {
                num[i][a] = (ua[i] - ub[i]) / (2.0 * h);
            }
        }
        let diff: f64 = g.iter().flatten().zip(num.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let size: f64 = g.iter().flatten().map(|a| a * a).sum::<f64>().sqrt();
        fd = fd.max(diff / size.max(1e-300));
    }

    let lap = CoefficientTensor::laplace(2).unwrap();
    let scalar = BoundaryTraces::new(vec![random_poly(&mut rng, 1)], vec![random_poly(&mut rng, 1)], 1, 2.0 * r0).unwrap();
    let la = build_ansatz(&lap, &region, &scalar, AnsatzMode::Generic).unwrap();
    let mut degenerate = true;
    for _ in 0..1000 {
        let xp = random_point(&mut rng, 1, 2.0 * r0);
        degenerate &= correction_coeffs(&lap, &region, &scalar, &xp).unwrap().iter().flatten().all(|v| *v == 0.0);
        let x = region.from_box(&MappedPoint { xprime: xp, t: rng.gen_range(0.0..1.0) }).unwrap();
        degenerate &= la.value(&x).unwrap() == la.uncorrected().value(&x).unwrap();
    }
    outcome(
        bnd <= 1e-14 && fd <= 1e-6 && degenerate,
        format!("boundary {bnd:.3e} [≤ 1e-14]; FD relative {fd:.3e} [≤ 1e-6]; Laplace correction identically zero: {degenerate}"),
    )
}

fn solver_order() -> Outcome {
    let region = NarrowRegion::new(ProfilePair::power(1.0, 0.5, 2, [1.5, 1.5, 2.0, 10.0], 0.5, 1), 0.1).unwrap();
    let tensor = make_lame(LameParameters::new(1.0, 1.0, 2).unwrap(), 2).unwrap();
    let u: Arc<JetFieldFn> = Arc::new(|x: &[Jet]| vec![(x[0] * 2.0).sin() * x[1].exp(), (x[0] * 3.0).cos() * x[1]]);
    let exact = jet_field_values(u.clone());
    let src = manufactured_source(&tensor, u.clone());
    let mut pts_u = Vec::new();
    let mut pts_g = Vec::new();
    for (k, v) in [(33, 17), (65, 33), (129, 65), (257, 129)] {
        let grid = BoxGrid::new(2, vec![k, v], 0.0, 1.0).unwrap();
        let ex = exact.clone();
        let bnd = move |_: usize, x: &[f64]| ex(x);
        let (df, _) = solve_dirichlet(&tensor, &region, &grid, &bnd, Some(src.as_ref()), &SolverOptions::default()).unwrap();
        let (mut eu, mut eg) = (0.0f64, 0.0f64);
        for p in 0..grid.nodes() {
            let x = grid.node_x(&region, p).unwrap();
            let jets = u(&Jet::seed(&x));
            let val = df.node_value(p);
            let gr = df.node_gradient(p).unwrap();
            for i in 0..2 {
                eu = eu.max((val[i] - jets[i].value).abs());
                for a in 0..2 {
                    eg = eg.max((gr[i][a] - jets[i].grad[a]).abs());
                }
            }
        }
        let h = grid.spacing(0);
        pts_u.push((h, eu));
        pts_g.push((h, eg));
    }
    let order = |pts: &[(f64, f64)]| -> f64 {
        let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        least_squares(&x, &y).0
    };
    let (ou, og) = (order(&pts_u), order(&pts_g));
    outcome(
        (ou - 2.0).abs() <= 0.2 && og >= 1.8,
        format!("value order {ou:.3} [2 ± 0.2]; gradient order {og:.3} [≥ 1.8]"),
    )
}

fn corrected_rate() -> Outcome {
    from_check(&check_corrected_rate(&rate_setup(2).unwrap()).unwrap())
}

fn blowup_cases() -> Outcome {
    let runs = [
        check_blowup(&constant_gap_setup().unwrap(), BlowupCase::ConstantGap).unwrap(),
        check_blowup(&equal_traces_setup().unwrap(), BlowupCase::EqualTraces).unwrap(),
        check_blowup(&vanishing_gap_setup(1, 2).unwrap(), BlowupCase::VanishingGap { k: 1 }).unwrap(),
    ];
    combine(&runs)
}

fn combine(runs: &[CheckOutcome]) -> Outcome {
    let parts: Vec<Outcome> = runs.iter().map(from_check).collect();
    outcome(
        parts.iter().all(|p| p.pass),
        parts.iter().map(|p| p.detail.clone()).collect::<Vec<_>>().join(" || "),
    )
}

fn decay() -> Outcome {
    let runs = [
        check_decay(&decay_setup(CoefficientTensor::laplace(2).unwrap()).unwrap(), 1e-10).unwrap(),
        check_decay(&decay_setup(lame_unit(2).unwrap()).unwrap(), 1e-10).unwrap(),
    ];
    let mut o = combine(&runs);
    for r in &runs {
        if let Some(n) = r.notes.iter().find(|n| n.starts_with("fitted decay constant")) {
            o.detail.push_str(&format!(" || {}: {n}", r.name));
        }
    }
    o
}

fn residual() -> Outcome {
    from_check(&check_residual_cancellation(&rate_setup(2).unwrap()).unwrap())
}

fn sharper_gauge() -> Outcome {
    from_check(&check_sharper_gauge(&rate_setup(4).unwrap()).unwrap())
}

fn energy() -> Outcome {
    from_check(&check_local_energy(&rate_setup(2).unwrap()).unwrap())
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--list`; there is nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("1 closed-form correction", closed_form_oracle, Duration::from_secs(1)),
        ("2 ansatz correctness", ansatz_correctness, Duration::from_secs(5)),
        ("3 solver order", solver_order, Duration::from_secs(120)),
        ("4 corrected rate", corrected_rate, Duration::from_secs(600)),
        ("5 blow-up cases", blowup_cases, Duration::from_secs(900)),
        ("6 decay", decay, Duration::from_secs(600)),
        ("7 residual cancellation", residual, Duration::from_secs(120)),
        ("8 sharper gauge", sharper_gauge, Duration::from_secs(600)),
        ("9 local energy", energy, Duration::from_secs(180)),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let t0 = Instant::now();
        let o = run();
        let dt = t0.elapsed();
        let pass = o.pass && dt <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {name}: {} ({:.1} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            dt.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
