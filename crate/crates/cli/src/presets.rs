//! Reference configurations used when no `--config` is given. They match the
//! setups of the acceptance suite.

use narrowgap::experiments::{symmetric_profiles, DECAY_EPSILONS};

use crate::config::*;

/// One check on one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunItem {
    pub label: String,
    pub check: CheckName,
    pub config: RunConfig,
}

impl RunItem {
    pub fn new(check: CheckName, config: RunConfig) -> Self {
        RunItem {
            label: check.as_str().to_string(),
            check,
            config,
        }
    }

    fn labeled(mut self, suffix: &str) -> Self {
        self.label = format!("{}-{suffix}", self.label);
        self
    }
}

fn term(coef: f64, e: u32) -> Term {
    Term { coef, exp: vec![e] }
}

pub fn rate(m: u32) -> RunConfig {
    let mut c = RunConfig::default();
    let r0 = if m > 2 { 0.8 } else { 1.0 };
    c.geometry.m = m;
    c.geometry.r0 = r0;
    c.geometry.kappa = symmetric_profiles(m, r0).kappa;
    c.traces.phi = vec![1.0, 0.0];
    c.traces.psi = vec![0.0, 0.0];
    c
}

pub fn constant_gap() -> RunConfig {
    let mut c = rate(2);
    c.traces.phi = vec![0.0, 1.0];
    c.experiment.statistic = StatisticName::ConstantGap;
    c
}

pub fn equal_traces() -> RunConfig {
    let mut c = rate(2);
    let f = vec![vec![term(1.0, 2)], vec![term(1.0, 1)]];
    c.traces = TracesConfig {
        family: TraceFamily::Poly,
        phi: Vec::new(),
        psi: Vec::new(),
        phi_poly: f.clone(),
        psi_poly: f,
    };
    c.experiment.statistic = StatisticName::EqualTraces;
    c
}

pub fn vanishing_gap(k: u32) -> RunConfig {
    let mut c = rate(2);
    c.traces = TracesConfig {
        family: TraceFamily::Poly,
        phi: Vec::new(),
        psi: Vec::new(),
        phi_poly: vec![vec![], vec![term(1.0, k)]],
        psi_poly: vec![vec![], vec![]],
    };
    c.experiment.statistic = StatisticName::VanishingGap;
    c.experiment.k = k;
    c
}

pub fn decay(kind: TensorName) -> RunConfig {
    let mut c = RunConfig::default();
    c.tensor.kind = kind;
    let nc = c.ncomp();
    c.geometry.a = 2.0;
    c.geometry.b = 2.0;
    c.geometry.kappa = [4.0, 4.0, 4.0, 12.0];
    c.geometry.r0 = 0.125;
    c.traces.phi = vec![0.0; nc];
    c.traces.psi = vec![0.0; nc];
    c.solver.closure = ClosureName::Constant;
    c.solver.closure_value = vec![1.0; nc];
    c.solver.formulation = FormulationName::Direct;
    c.experiment.epsilons = DECAY_EPSILONS.to_vec();
    c
}

/// The reference runs for a subcommand.
pub fn items(check: CheckName) -> Vec<RunItem> {
    match check {
        CheckName::Remark13 => vec![
            RunItem::new(check, constant_gap()).labeled("constant-gap"),
            RunItem::new(check, equal_traces()).labeled("equal-traces"),
            RunItem::new(check, vanishing_gap(1)).labeled("vanishing-gap"),
        ],
        CheckName::Decay => vec![
            RunItem::new(check, decay(TensorName::Laplace)).labeled("laplace"),
            RunItem::new(check, decay(TensorName::Lame)).labeled("lame"),
        ],
        CheckName::Cor41 => vec![RunItem::new(check, rate(4))],
        _ => vec![RunItem::new(check, rate(2))],
    }
}

/// Everything `all` runs without a config, in order.
pub fn all_items() -> Vec<RunItem> {
    [
        CheckName::Validate,
        CheckName::Thm11,
        CheckName::Remark13,
        CheckName::Decay,
        CheckName::Cor41,
        CheckName::Residual,
        CheckName::Energy,
    ]
    .into_iter()
    .flat_map(items)
    .collect()
}
