//! ε sweeps comparing the numerical gradient with the leading term, rate
//! fits, and the verdicts built on them.

mod checks;
mod fit;
mod presets;

use std::sync::Arc;

use rayon::prelude::*;

use crate::ansatz::{build_ansatz, theta, theta_bar_delta, AnsatzField, AnsatzMode, BoundaryTraces};
use crate::coefficients::CoefficientTensor;
use crate::discretize::{
    solve_bvp, solve_dirichlet, BoxGrid, DiscreteField, FieldFn, GridSpec, LateralClosure, SolveReport, SolverOptions,
};
use crate::error::{Error, Result};
use crate::geometry::{norm, NarrowRegion, ProfilePair};
use crate::jet::MAX_DIM;

pub use checks::*;
pub use fit::{fit_rate, least_squares, RateFit, RateModel};
pub use presets::*;

pub const DEFAULT_EPSILONS: [f64; 7] = [1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3];

/// How the discrete solution is represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    /// Solve for `u` with the Dirichlet data.
    Direct,
    /// Solve for `w = u − ū` with source `−L[ū]`, then `u = ū + w`.
    Lifted,
}

impl Formulation {
    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Direct => "direct",
            Formulation::Lifted => "lifted",
        }
    }
}

/// Everything an ε sweep needs except ε itself.
#[derive(Clone, Debug)]
pub struct Setup {
    pub tensor: CoefficientTensor,
    pub profiles: ProfilePair,
    pub traces: BoundaryTraces,
    pub lateral: LateralClosure,
    pub grid: GridSpec,
    pub solver: SolverOptions,
    pub mode: AnsatzMode,
    pub formulation: Formulation,
    pub epsilons: Vec<f64>,
    /// Relative change under one refinement above which a row is flagged.
    pub richardson_tol: f64,
    pub refine_check: bool,
}

impl Setup {
    pub fn new(tensor: CoefficientTensor, profiles: ProfilePair, traces: BoundaryTraces) -> Self {
        Setup {
            tensor,
            profiles,
            traces,
            lateral: LateralClosure::Ansatz,
            grid: GridSpec::default(),
            solver: SolverOptions::default(),
            mode: AnsatzMode::Generic,
            formulation: Formulation::Lifted,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            richardson_tol: 0.1,
            refine_check: true,
        }
    }

    pub fn region(&self, eps: f64) -> Result<NarrowRegion> {
        NarrowRegion::new(self.profiles.clone(), eps)
    }

    pub fn dim(&self) -> usize {
        self.profiles.tangential_dim + 1
    }
}

/// One solved instance at a fixed ε.
#[derive(Clone, Debug)]
pub struct Case {
    pub region: NarrowRegion,
    pub ansatz: AnsatzField,
    /// `u`, or `w = u − ū` when lifted.
    pub field: DiscreteField,
    pub formulation: Formulation,
    pub report: SolveReport,
}

pub fn solve_case(setup: &Setup, eps: f64, grid: Option<&BoxGrid>) -> Result<Case> {
    let region = setup.region(eps)?;
    let grid = match grid {
        Some(g) => g.clone(),
        None => BoxGrid::from_spec(&setup.grid, &region)?,
    };
    let ansatz = build_ansatz(&setup.tensor, &region, &setup.traces, setup.mode)?;
    let (field, report) = match setup.formulation {
        Formulation::Direct => solve_bvp(
            &setup.tensor,
            &region,
            &setup.traces,
            &setup.lateral,
            &grid,
            None,
            &setup.solver,
        )?,
        Formulation::Lifted => {
            let nc = setup.tensor.ncomp;
            let last = grid.n - 1;
            let top = grid.counts[last] - 1;
            let interp = ansatz.uncorrected();
            let closure = |x: &[f64]| -> Result<Vec<f64>> {
                Ok(match &setup.lateral {
                    LateralClosure::Ansatz => ansatz.value(x)?,
                    LateralClosure::Interpolant => interp.value(x)?,
                    LateralClosure::Constant(v) => v.clone(),
                    LateralClosure::Exact(f) => f(x),
                })
            };
            let boundary = |p: usize, x: &[f64]| -> Vec<f64> {
                let m = grid.multi(p);
                if m[last] == 0 || m[last] == top {
                    return vec![0.0; nc];
                }
                match (closure(x), ansatz.value(x)) {
                    (Ok(c), Ok(u)) => c.iter().zip(&u).map(|(a, b)| a - b).collect(),
                    _ => vec![f64::NAN; nc],
                }
            };
            let af = ansatz.clone();
            let source: Arc<FieldFn> = Arc::new(move |x: &[f64]| af.residual(x).unwrap_or_else(|_| vec![f64::NAN; nc]));
            solve_dirichlet(&setup.tensor, &region, &grid, &boundary, Some(source.as_ref()), &setup.solver)?
        }
    };
    Ok(Case {
        region,
        ansatz,
        field,
        formulation: setup.formulation,
        report,
    })
}

fn frob(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn frob_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Remainder statistics over the nodes of `Ω_{R0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Remainder {
    /// `max |∇u − ∇ū|`
    pub corrected: f64,
    /// `max |∇u − ∇(φ v̄ + ψ (1 − v̄))|`
    pub uncorrected: f64,
    /// `max |∇u − ∇ū| / (Θ(x') + δ(x') c2)`
    pub normalized: f64,
    /// `max |∇u − ∇ū| / (Θ̄_δ(x') + δ(x') c2)`
    pub normalized_bar: f64,
    /// `max Θ̄_δ(x') − Θ(x')` over the sampled tangential points.
    pub gauge_excess: f64,
}

impl Case {
    pub fn n(&self) -> usize {
        self.region.n
    }

    pub fn ncomp(&self) -> usize {
        self.field.ncomp
    }

    /// Physical gradient of `u` at a node.
    pub fn gradient_at_node(&self, p: usize) -> Result<Vec<Vec<f64>>> {
        let g = self.field.node_gradient(p)?;
        match self.formulation {
            Formulation::Direct => Ok(g),
            Formulation::Lifted => {
                let x = self.field.grid.node_x(&self.region, p)?;
                Ok(add(&self.ansatz.gradient(&x)?, &g))
            }
        }
    }

    /// Gradient of `u − ū` at a node.
    pub fn remainder_at_node(&self, p: usize, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let g = self.field.node_gradient(p)?;
        match self.formulation {
            Formulation::Lifted => Ok(g),
            Formulation::Direct => Ok(sub(&g, &self.ansatz.gradient(x)?)),
        }
    }

    pub fn gradient_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let g = self.field.recover_gradient(x)?;
        match self.formulation {
            Formulation::Direct => Ok(g),
            Formulation::Lifted => Ok(add(&self.ansatz.gradient(x)?, &g)),
        }
    }

    pub fn value_at_node(&self, p: usize) -> Result<Vec<f64>> {
        let v = self.field.node_value(p);
        match self.formulation {
            Formulation::Direct => Ok(v),
            Formulation::Lifted => {
                let x = self.field.grid.node_x(&self.region, p)?;
                Ok(self.ansatz.value(&x)?.iter().zip(&v).map(|(a, b)| a + b).collect())
            }
        }
    }

    /// Nodes with `|x'| < radius` and `0 < t < 1`.
    pub fn inner_nodes(&self, radius: f64) -> Result<Vec<usize>> {
        let g = &self.field.grid;
        let last = g.n - 1;
        let mut out = Vec::new();
        for p in 0..g.nodes() {
            let m = g.multi(p);
            if m[last] == 0 || m[last] + 1 == g.counts[last] {
                continue;
            }
            let x = g.node_x(&self.region, p)?;
            if norm(&x[..last]) < radius * (1.0 + 1e-12) {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// Nodes of the vertical column closest to `x'`.
    pub fn column(&self, xp: &[f64]) -> Vec<usize> {
        let g = &self.field.grid;
        let last = g.n - 1;
        let mut idx = [0usize; MAX_DIM];
        for a in 0..last {
            let xi = g.inverse_xi(xp[a]);
            idx[a] = (((xi + 1.0) / g.spacing(a)).round() as usize).min(g.counts[a] - 1);
        }
        (0..g.counts[last])
            .map(|k| {
                idx[last] = k;
                g.index(&idx[..g.n])
            })
            .collect()
    }

    pub fn remainder(&self) -> Result<Remainder> {
        let r0 = self.region.r0();
        let nodes = self.inner_nodes(r0)?;
        let c2 = self.ansatz.traces.c2_total();
        let last = self.n() - 1;
        let rows: Vec<[f64; 5]> = nodes
            .par_iter()
            .map(|&p| {
                let x = self.field.grid.node_x(&self.region, p)?;
                let xp = &x[..last];
                let rem = self.remainder_at_node(p, &x)?;
                let corr = frob(&rem);
                let g_bar = self.ansatz.gradient(&x)?;
                let g_lin = self.ansatz.uncorrected().gradient(&x)?;
                let full = add(&rem, &g_bar);
                let unc = frob_diff(&full, &g_lin);
                let d = self.region.delta(xp)?;
                let th = theta(&self.ansatz.traces, xp);
                let thb = theta_bar_delta(&self.ansatz.traces, &self.region, xp)?;
                let norm_theta = ratio(corr, th + d * c2);
                let norm_bar = ratio(corr, thb + d * c2);
                Ok([corr, unc, norm_theta, norm_bar, thb - th])
            })
            .collect::<Result<_>>()?;
        let max = |k: usize| rows.iter().map(|r| r[k]).fold(f64::NEG_INFINITY, f64::max);
        Ok(Remainder {
            corrected: max(0),
            uncorrected: max(1),
            normalized: max(2),
            normalized_bar: max(3),
            gauge_excess: max(4),
        })
    }

    /// `max |∇u|` over the nodes of `Ω_radius`.
    pub fn gradient_max(&self, radius: f64) -> Result<f64> {
        let nodes = self.inner_nodes(radius)?;
        let vals: Vec<f64> = nodes.par_iter().map(|&p| self.gradient_at_node(p).map(|g| frob(&g))).collect::<Result<_>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    }

    /// `max |∇u|` over the vertical column at `x' = 0`.
    pub fn shortest_segment_max(&self) -> Result<f64> {
        let col = self.column(&vec![0.0; self.n() - 1]);
        let vals: Vec<f64> = col.iter().map(|&p| self.gradient_at_node(p).map(|g| frob(&g))).collect::<Result<_>>()?;
        Ok(vals.into_iter().fold(0.0, f64::max))
    }

    /// `max_t |∇u(x', t)|` with `x'` off the grid, through gradient recovery.
    pub fn column_max_at(&self, xp: &[f64]) -> Result<f64> {
        let k = self.field.grid.counts[self.n() - 1];
        let mut best = 0.0f64;
        for j in 0..k {
            let t = j as f64 / (k - 1) as f64;
            let x = self.region.from_box(&crate::geometry::MappedPoint { xprime: xp.to_vec(), t })?;
            best = best.max(frob(&self.gradient_at(&x)?));
        }
        Ok(best)
    }

    /// `L²` norm of `u` over the whole grid.
    pub fn l2_norm(&self) -> Result<f64> {
        match self.formulation {
            Formulation::Direct => self.field.l2_norm(),
            Formulation::Lifted => {
                let nodes = self.field.grid.nodes();
                let mut df = self.field.clone();
                for p in 0..nodes {
                    let v = self.value_at_node(p)?;
                    for (i, vi) in v.iter().enumerate() {
                        df.values[i * nodes + p] = *vi;
                    }
                }
                df.l2_norm()
            }
        }
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

fn sub(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect()).collect()
}

/// Discrete `∫ |∇(u − ū)|²` over `|x' − z'| < radius` by midpoint quadrature in
/// box coordinates.
pub fn local_energy(df: &DiscreteField, ansatz: &AnsatzField, zprime: &[f64], radius: f64) -> Result<f64> {
    local_energy_of(df, ansatz, zprime, radius, Formulation::Direct)
}

/// As [`local_energy`], where `df` holds `u − ū` when `formulation` is lifted.
pub fn local_energy_of(
    df: &DiscreteField,
    ansatz: &AnsatzField,
    zprime: &[f64],
    radius: f64,
    formulation: Formulation,
) -> Result<f64> {
    let g = &df.grid;
    let n = g.n;
    let last = n - 1;
    for a in 0..last {
        if (zprime[a].abs() + radius) > g.half_width * (1.0 + 1e-12) {
            return Err(Error::domain(zprime, "energy window outside the grid"));
        }
        let lo = g.inverse_xi(zprime[a] - radius);
        let hi = g.inverse_xi(zprime[a] + radius);
        if (hi - lo) < 4.0 * g.spacing(a) * (1.0 - 1e-9) {
            return Err(Error::domain(zprime, "energy window narrower than two cells"));
        }
    }
    let vol: f64 = (0..n).map(|a| g.spacing(a)).product();
    let cells = df.cells();
    let parts: Vec<f64> = cells
        .par_iter()
        .map(|(m, y)| {
            let frame = g.frame(&df.region, y)?;
            let dist = norm(&frame.x[..last].iter().zip(zprime).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dist >= radius {
                return Ok(0.0);
            }
            let (_, gy) = df.cell_center(&m[..n]);
            let gh = crate::discretize::to_physical(&gy, &frame, n);
            let e = match formulation {
                Formulation::Lifted => frob(&gh),
                Formulation::Direct => frob_diff(&gh, &ansatz.gradient(&frame.x)?),
            };
            Ok(e * e * frame.jac * vol)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub statistic: f64,
    /// The statistic on the once-refined grid.
    pub refined: Option<f64>,
    pub grid: String,
    /// Set when the refined statistic differs by more than the tolerance.
    pub flagged: bool,
    pub error: Option<String>,
}

impl SweepRow {
    /// The most accurate available value.
    pub fn best(&self) -> f64 {
        self.refined.unwrap_or(self.statistic)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub name: String,
    pub rows: Vec<SweepRow>,
    pub metadata: Vec<(String, String)>,
}

impl SweepResult {
    /// Unflagged `(ε, value)` pairs used by the fits.
    pub fn fit_points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| !r.flagged && r.error.is_none())
            .map(|r| (r.epsilon, r.best()))
            .collect()
    }

    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,statistic,refined,grid,flag\n");
        for r in &self.rows {
            let flag = match (&r.error, r.flagged) {
                (Some(_), _) => "error",
                (None, true) => "grid-limited",
                (None, false) => "ok",
            };
            let refined = r.refined.map(|v| format!("{v:e}")).unwrap_or_default();
            s.push_str(&format!("{:e},{:e},{},{},{}\n", r.epsilon, r.statistic, refined, r.grid, flag));
        }
        s
    }

    /// Two-column `ε value` data for plotting.
    pub fn to_dat(&self) -> String {
        let mut s = format!("# {}\n# epsilon value\n", self.name);
        for (e, v) in self.fit_points() {
            s.push_str(&format!("{e:e} {v:e}\n"));
        }
        s
    }
}

fn grid_label(g: &BoxGrid) -> String {
    let counts: Vec<String> = g.counts.iter().map(|c| c.to_string()).collect();
    format!("{}@beta={:.4}", counts.join("x"), g.beta)
}

/// Runs `eval` on every ε of the setup (and on the refined grid when enabled)
/// and returns one sweep per statistic name.
pub fn sweep<F>(setup: &Setup, epsilons: &[f64], names: &[&str], eval: F) -> Result<Vec<SweepResult>>
where
    F: Fn(&Case) -> Result<Vec<f64>> + Sync,
{
    for w in epsilons.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Configuration("epsilon values must be strictly decreasing".into()));
        }
    }
    let k = names.len();
    let per_eps: Vec<(f64, String, std::result::Result<(Vec<f64>, Option<Vec<f64>>), String>)> = epsilons
        .par_iter()
        .map(|&eps| {
            let run = || -> Result<(String, Vec<f64>, Option<Vec<f64>>)> {
                let region = setup.region(eps)?;
                let grid = BoxGrid::from_spec(&setup.grid, &region)?;
                let coarse = eval(&solve_case(setup, eps, Some(&grid))?)?;
                let fine = if setup.refine_check {
                    Some(eval(&solve_case(setup, eps, Some(&grid.refined()))?)?)
                } else {
                    None
                };
                Ok((grid_label(&grid), coarse, fine))
            };
            match run() {
                Ok((label, c, f)) => (eps, label, Ok((c, f))),
                Err(e) => (eps, String::new(), Err(e.to_string())),
            }
        })
        .collect();
    let mut out: Vec<SweepResult> = names
        .iter()
        .map(|n| SweepResult {
            name: n.to_string(),
            rows: Vec::new(),
            metadata: metadata(setup),
        })
        .collect();
    for (eps, label, res) in per_eps {
        for s in 0..k {
            let row = match &res {
                Ok((c, f)) => {
                    let refined = f.as_ref().map(|v| v[s]);
                    let flagged = refined.is_some_and(|r| {
                        let scale = r.abs().max(c[s].abs());
                        !(scale == 0.0 || (r - c[s]).abs() <= setup.richardson_tol * scale)
                    });
                    SweepRow {
                        epsilon: eps,
                        statistic: c[s],
                        refined,
                        grid: label.clone(),
                        flagged,
                        error: None,
                    }
                }
                Err(e) => SweepRow {
                    epsilon: eps,
                    statistic: f64::NAN,
                    refined: None,
                    grid: label.clone(),
                    flagged: true,
                    error: Some(e.clone()),
                },
            };
            out[s].rows.push(row);
        }
    }
    Ok(out)
}

fn metadata(setup: &Setup) -> Vec<(String, String)> {
    vec![
        ("tensor".into(), format!("{:?}", setup.tensor.kind)),
        ("m".into(), setup.profiles.m.to_string()),
        ("closure".into(), setup.lateral.name().into()),
        ("formulation".into(), setup.formulation.name().into()),
        (
            "grid".into(),
            format!("{}x{} {:?}", setup.grid.tangential, setup.grid.vertical, setup.grid.grading),
        ),
    ]
}
