//! Run configuration: a strict TOML schema with every block optional and
//! documented defaults.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use narrowgap::discretize::{Grading, GridSpec, LateralClosure, SolverOptions};
use narrowgap::experiments::{symmetric_profiles, BlowupCase, Formulation, Setup, DEFAULT_EPSILONS};
use narrowgap::{
    make_lame, AnsatzMode, BoundaryTraces, CoefficientTensor, LameParameters, Poly, Profile, ProfilePair,
};

/// Every problem found while loading a config, not just the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// A monomial `coef · x₁^{exp[0]} · x₂^{exp[1]} ⋯`.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coef: f64,
    #[serde(default)]
    pub exp: Vec<u32>,
}

fn poly(terms: &[Term]) -> Poly {
    Poly::from_terms(&terms.iter().map(|t| (t.coef, t.exp.clone())).collect::<Vec<_>>())
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProfileFamily {
    /// `h1 = a|x'|^m`, `h2 = −b|x'|^m`
    Power,
    /// `h1`, `h2` given as term lists.
    Poly,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub family: ProfileFamily,
    pub m: u32,
    pub a: f64,
    pub b: f64,
    pub h1: Vec<Term>,
    pub h2: Vec<Term>,
    /// `[κ1, κ2, κ3, κ4]`
    pub kappa: [f64; 4],
    pub r0: f64,
    pub tangential_dim: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            family: ProfileFamily::Power,
            m: 2,
            a: 0.5,
            b: 0.5,
            h1: Vec::new(),
            h2: Vec::new(),
            kappa: symmetric_profiles(2, 1.0).kappa,
            r0: 1.0,
            tangential_dim: 1,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TensorName {
    Laplace,
    Lame,
    LamePerturbed,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TensorConfig {
    pub kind: TensorName,
    pub lambda: f64,
    pub mu: f64,
    /// `p(x)` of the perturbation `scale · p(x) δ_ij δ_αβ`.
    pub perturbation: Vec<Term>,
    pub scale: f64,
}

impl Default for TensorConfig {
    fn default() -> Self {
        TensorConfig {
            kind: TensorName::Lame,
            lambda: 1.0,
            mu: 1.0,
            perturbation: Vec::new(),
            scale: 0.0,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TraceFamily {
    Constant,
    Poly,
}

/// Boundary data. Empty constant vectors are filled with `φ = e₁`, `ψ = 0`.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TracesConfig {
    pub family: TraceFamily,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi_poly: Vec<Vec<Term>>,
    pub psi_poly: Vec<Vec<Term>>,
}

impl Default for TracesConfig {
    fn default() -> Self {
        TracesConfig {
            family: TraceFamily::Constant,
            phi: Vec::new(),
            psi: Vec::new(),
            phi_poly: Vec::new(),
            psi_poly: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GradingName {
    Auto,
    Uniform,
    Sinh,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ClosureName {
    Ansatz,
    Interpolant,
    Constant,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FormulationName {
    Lifted,
    Direct,
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Generic,
    LameClosedForm,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tangential: usize,
    pub vertical: usize,
    pub grading: GradingName,
    /// Used when `grading = "sinh"`.
    pub beta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub direct_threshold: usize,
    pub closure: ClosureName,
    /// Lateral values when `closure = "constant"`.
    pub closure_value: Vec<f64>,
    pub formulation: FormulationName,
    pub mode: ModeName,
    pub richardson_tol: f64,
    pub refine_check: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        let s = SolverOptions::default();
        SolverConfig {
            tangential: g.tangential,
            vertical: g.vertical,
            grading: GradingName::Auto,
            beta: 0.0,
            tol: s.tol,
            max_iter: s.max_iter,
            direct_threshold: s.direct_threshold,
            closure: ClosureName::Ansatz,
            closure_value: Vec::new(),
            formulation: FormulationName::Lifted,
            mode: ModeName::Generic,
            richardson_tol: 0.1,
            refine_check: true,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    Validate,
    Ansatz,
    Solve,
    Thm11,
    Remark13,
    Decay,
    Cor41,
    Residual,
    Energy,
}

impl CheckName {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckName::Validate => "validate",
            CheckName::Ansatz => "ansatz",
            CheckName::Solve => "solve",
            CheckName::Thm11 => "thm11",
            CheckName::Remark13 => "remark13",
            CheckName::Decay => "decay",
            CheckName::Cor41 => "cor41",
            CheckName::Residual => "residual",
            CheckName::Energy => "energy",
        }
    }
}

/// What the blow-up sweep measures.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StatisticName {
    ConstantGap,
    EqualTraces,
    VanishingGap,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Checks run by `all`, in order.
    pub checks: Vec<CheckName>,
    pub epsilons: Vec<f64>,
    pub statistic: StatisticName,
    /// Vanishing order of `φ − ψ` for `statistic = "vanishing_gap"`.
    pub k: u32,
    /// Decay rows below this value are dropped.
    pub floor: f64,
    /// Points per axis for `ansatz` samples.
    pub samples: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            checks: vec![CheckName::Validate, CheckName::Thm11],
            epsilons: DEFAULT_EPSILONS.to_vec(),
            statistic: StatisticName::ConstantGap,
            k: 1,
            floor: 1e-10,
            samples: 21,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Output directory; `--out` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub geometry: GeometryConfig,
    pub tensor: TensorConfig,
    pub traces: TracesConfig,
    pub solver: SolverConfig,
    pub experiment: ExperimentConfig,
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("geometry", &["family", "m", "a", "b", "h1", "h2", "kappa", "r0", "tangential_dim"]),
    ("tensor", &["kind", "lambda", "mu", "perturbation", "scale"]),
    ("traces", &["family", "phi", "psi", "phi_poly", "psi_poly"]),
    (
        "solver",
        &[
            "tangential",
            "vertical",
            "grading",
            "beta",
            "tol",
            "max_iter",
            "direct_threshold",
            "closure",
            "closure_value",
            "formulation",
            "mode",
            "richardson_tol",
            "refine_check",
        ],
    ),
    ("experiment", &["checks", "epsilons", "statistic", "k", "floor", "samples"]),
];

/// Unknown tables and keys, all of them.
fn unknown_keys(value: &toml::Value) -> Vec<String> {
    let mut out = Vec::new();
    let Some(root) = value.as_table() else {
        return vec!["the document is not a table".into()];
    };
    for (k, v) in root {
        if k == "output" {
            continue;
        }
        match SCHEMA.iter().find(|(name, _)| name == k) {
            None => out.push(format!("unknown key `{k}`")),
            Some((name, keys)) => match v.as_table() {
                None => out.push(format!("`{name}` must be a table")),
                Some(t) => {
                    for key in t.keys() {
                        if !keys.contains(&key.as_str()) {
                            out.push(format!("unknown key `{name}.{key}`"));
                        }
                    }
                }
            },
        }
    }
    out
}

/// Parses and validates a TOML document.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigErrors> {
    let value: toml::Value = text.parse().map_err(|e: toml::de::Error| ConfigErrors(vec![e.message().to_string()]))?;
    let mut errors = unknown_keys(&value);
    // Type errors are reported one at a time by serde; strip the unknown keys so
    // that they do not mask a type error.
    let mut pruned = value.clone();
    if let Some(root) = pruned.as_table_mut() {
        root.retain(|k, _| k == "output" || SCHEMA.iter().any(|(n, _)| *n == k));
        for (name, keys) in SCHEMA {
            if let Some(t) = root.get_mut(*name).and_then(|v| v.as_table_mut()) {
                t.retain(|k, _| keys.contains(&k));
            }
        }
    }
    match pruned.try_into::<RunConfig>() {
        Ok(mut cfg) => {
            cfg.fill_defaults();
            errors.extend(cfg.violations());
            if errors.is_empty() {
                Ok(cfg)
            } else {
                Err(ConfigErrors(errors))
            }
        }
        Err(e) => {
            errors.push(e.message().to_string());
            Err(ConfigErrors(errors))
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors(vec![format!("{}: {e}", path.display())]))?;
    parse_config_str(&text)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n(&self) -> usize {
        self.geometry.tangential_dim + 1
    }

    /// Number of solution components.
    pub fn ncomp(&self) -> usize {
        match self.tensor.kind {
            TensorName::Laplace => 1,
            _ => self.n(),
        }
    }

    fn fill_defaults(&mut self) {
        let nc = self.ncomp();
        let t = &mut self.traces;
        if t.family == TraceFamily::Constant {
            if t.phi.is_empty() {
                t.phi = (0..nc).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
            }
            if t.psi.is_empty() {
                t.psi = vec![0.0; nc];
            }
        }
    }

    /// All constraint violations.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let g = &self.geometry;
        let nc = self.ncomp();
        if g.m < 2 {
            v.push(format!("geometry.m must be at least 2, got {}", g.m));
        }
        if !(1..=2).contains(&g.tangential_dim) {
            v.push(format!("geometry.tangential_dim must be 1 or 2, got {}", g.tangential_dim));
        }
        if !(g.r0 > 0.0) {
            v.push(format!("geometry.r0 must be positive, got {}", g.r0));
        }
        if g.kappa.iter().any(|k| !(*k > 0.0)) {
            v.push("geometry.kappa entries must be positive".into());
        }
        match g.family {
            ProfileFamily::Power => {
                if !(g.a + g.b > 0.0) {
                    v.push("geometry: power profiles need a + b > 0".into());
                }
                if !g.h1.is_empty() || !g.h2.is_empty() {
                    v.push("geometry.h1/h2 only apply to family = \"poly\"".into());
                }
            }
            ProfileFamily::Poly => {
                for (name, terms) in [("h1", &g.h1), ("h2", &g.h2)] {
                    if terms.iter().any(|t| t.exp.len() > g.tangential_dim) {
                        v.push(format!("geometry.{name}: exponent lists longer than tangential_dim"));
                    }
                }
            }
        }
        let t = &self.tensor;
        if t.kind != TensorName::Laplace {
            if let Err(e) = LameParameters::new(t.lambda, t.mu, self.n()) {
                v.push(format!("tensor: {e}"));
            }
        }
        if t.kind != TensorName::LamePerturbed && (!t.perturbation.is_empty() || t.scale != 0.0) {
            v.push("tensor.perturbation/scale only apply to kind = \"lame_perturbed\"".into());
        }
        let tr = &self.traces;
        match tr.family {
            TraceFamily::Constant => {
                if tr.phi.len() != nc || tr.psi.len() != nc {
                    v.push(format!(
                        "traces.phi/psi need {nc} components for this tensor, got {} and {}",
                        tr.phi.len(),
                        tr.psi.len()
                    ));
                }
            }
            TraceFamily::Poly => {
                if tr.phi_poly.len() != nc || tr.psi_poly.len() != nc {
                    v.push(format!(
                        "traces.phi_poly/psi_poly need {nc} components for this tensor, got {} and {}",
                        tr.phi_poly.len(),
                        tr.psi_poly.len()
                    ));
                }
            }
        }
        let s = &self.solver;
        if s.tangential < 5 || s.vertical < 5 {
            v.push(format!("solver grid needs at least 5 nodes per axis, got {}x{}", s.tangential, s.vertical));
        }
        if s.grading == GradingName::Sinh && !(s.beta >= 0.0) {
            v.push("solver.beta must be non-negative".into());
        }
        if !(s.tol > 0.0) {
            v.push("solver.tol must be positive".into());
        }
        if !(s.richardson_tol > 0.0) {
            v.push("solver.richardson_tol must be positive".into());
        }
        if s.closure == ClosureName::Constant && s.closure_value.len() != nc {
            v.push(format!("solver.closure_value needs {nc} components when closure = \"constant\""));
        }
        if s.mode == ModeName::LameClosedForm && t.kind != TensorName::Lame {
            v.push("solver.mode = \"lame_closed_form\" requires tensor.kind = \"lame\"".into());
        }
        let e = &self.experiment;
        if e.epsilons.len() < 4 {
            v.push(format!("experiment.epsilons needs at least 4 values for a rate fit, got {}", e.epsilons.len()));
        }
        if e.epsilons.iter().any(|x| !(*x > 0.0)) {
            v.push("experiment.epsilons must be positive".into());
        }
        if e.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            v.push("experiment.epsilons must be strictly decreasing".into());
        }
        if e.statistic == StatisticName::VanishingGap && g.m <= e.k {
            v.push(format!(
                "experiment.statistic = \"vanishing_gap\" requires m > k (m = {}, k = {})",
                g.m, e.k
            ));
        }
        if !(e.floor >= 0.0) {
            v.push("experiment.floor must be non-negative".into());
        }
        if e.samples < 2 {
            v.push("experiment.samples must be at least 2".into());
        }
        v
    }

    pub fn profiles(&self) -> ProfilePair {
        let g = &self.geometry;
        match g.family {
            ProfileFamily::Power => ProfilePair::power(g.a, g.b, g.m, g.kappa, g.r0, g.tangential_dim),
            ProfileFamily::Poly => ProfilePair {
                h1: Profile::Poly(poly(&g.h1)),
                h2: Profile::Poly(poly(&g.h2)),
                m: g.m,
                kappa: g.kappa,
                r0: g.r0,
                tangential_dim: g.tangential_dim,
            },
        }
    }

    pub fn tensor(&self) -> narrowgap::Result<CoefficientTensor> {
        let n = self.n();
        let t = &self.tensor;
        match t.kind {
            TensorName::Laplace => CoefficientTensor::laplace(n),
            TensorName::Lame => make_lame(LameParameters::new(t.lambda, t.mu, n)?, n),
            TensorName::LamePerturbed => {
                let pts = narrowgap::geometry::tangential_samples(n - 1, 2.0 * self.geometry.r0, 9)
                    .into_iter()
                    .flat_map(|xp| {
                        [-0.5, 0.0, 0.5].map(|xn| {
                            let mut x = xp.clone();
                            x.push(xn);
                            x
                        })
                    })
                    .collect::<Vec<_>>();
                narrowgap::coefficients::make_lame_perturbed(
                    LameParameters::new(t.lambda, t.mu, n)?,
                    n,
                    &poly(&t.perturbation),
                    t.scale,
                    &pts,
                )
            }
        }
    }

    pub fn traces(&self) -> narrowgap::Result<BoundaryTraces> {
        let d = self.geometry.tangential_dim;
        let r = 2.0 * self.geometry.r0;
        let t = &self.traces;
        match t.family {
            TraceFamily::Constant => BoundaryTraces::constant(&t.phi, &t.psi, d, r),
            TraceFamily::Poly => BoundaryTraces::new(
                t.phi_poly.iter().map(|p| poly(p)).collect(),
                t.psi_poly.iter().map(|p| poly(p)).collect(),
                d,
                r,
            ),
        }
    }

    /// The experiment setup, with the grid scaled by `grid_scale`.
    pub fn setup(&self, grid_scale: f64) -> narrowgap::Result<Setup> {
        let mut s = Setup::new(self.tensor()?, self.profiles(), self.traces()?);
        let c = &self.solver;
        s.grid = GridSpec {
            tangential: c.tangential,
            vertical: c.vertical,
            grading: match c.grading {
                GradingName::Auto => Grading::Auto,
                GradingName::Uniform => Grading::Uniform,
                GradingName::Sinh => Grading::Sinh(c.beta),
            },
        };
        if grid_scale != 1.0 {
            s.grid = s.grid.scaled(grid_scale);
        }
        s.solver = SolverOptions {
            tol: c.tol,
            max_iter: c.max_iter,
            direct_threshold: c.direct_threshold,
            ..SolverOptions::default()
        };
        s.lateral = match c.closure {
            ClosureName::Ansatz => LateralClosure::Ansatz,
            ClosureName::Interpolant => LateralClosure::Interpolant,
            ClosureName::Constant => LateralClosure::Constant(c.closure_value.clone()),
        };
        s.formulation = match c.formulation {
            FormulationName::Lifted => Formulation::Lifted,
            FormulationName::Direct => Formulation::Direct,
        };
        s.mode = match c.mode {
            ModeName::Generic => AnsatzMode::Generic,
            ModeName::LameClosedForm => AnsatzMode::LameClosedForm,
        };
        s.richardson_tol = c.richardson_tol;
        s.refine_check = c.refine_check;
        s.epsilons = self.experiment.epsilons.clone();
        Ok(s)
    }

    pub fn blowup_case(&self) -> BlowupCase {
        match self.experiment.statistic {
            StatisticName::ConstantGap => BlowupCase::ConstantGap,
            StatisticName::EqualTraces => BlowupCase::EqualTraces,
            StatisticName::VanishingGap => BlowupCase::VanishingGap { k: self.experiment.k },
        }
    }
}
