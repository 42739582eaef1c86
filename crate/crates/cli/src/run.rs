//! Orchestration: runs checks, writes artifacts, builds the report.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;
use sha2::{Digest, Sha256};

use narrowgap::coefficients::{check_ann, check_pointwise_ellipticity, EllipticityMode};
use narrowgap::experiments::*;
use narrowgap::geometry::tangential_samples;
use narrowgap::{build_ansatz, validate_profiles, MappedPoint};

use crate::config::{CheckName, RunConfig};
use crate::presets::RunItem;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub grid_scale: f64,
}

#[derive(Clone, Debug)]
pub struct ItemResult {
    pub label: String,
    pub check: CheckName,
    /// `PASS`, `FAIL`, `GRID-LIMITED`, `SKIPPED` or `ERROR`.
    pub verdict: String,
    pub config: String,
    pub hypotheses: String,
    pub summary: String,
}

impl ItemResult {
    pub fn passed(&self) -> bool {
        self.verdict == "PASS"
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub items: Vec<ItemResult>,
    /// `(relative path, sha256)` of every emitted artifact, sorted.
    pub manifest: Vec<(String, String)>,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        !self.items.is_empty() && self.items.iter().all(|i| i.passed())
    }

    /// The plain-text report. Contains no timings so it is reproducible.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "narrowgap {} run report", env!("CARGO_PKG_VERSION"));
        let passed = self.items.iter().filter(|i| i.passed()).count();
        let _ = writeln!(s, "runs: {}, passed: {passed}, overall: {}", self.items.len(), if self.all_passed() { "PASS" } else { "FAIL" });
        for i in &self.items {
            let _ = writeln!(s, "\n== {} ({}) : {} ==", i.label, i.check.as_str(), i.verdict);
            let _ = writeln!(s, "-- config");
            for l in i.config.lines() {
                let _ = writeln!(s, "  {l}");
            }
            let _ = writeln!(s, "-- hypotheses");
            s.push_str(&i.hypotheses);
            let _ = writeln!(s, "-- result");
            s.push_str(&i.summary);
        }
        let _ = writeln!(s, "\n== manifest (sha256) ==");
        for (p, h) in &self.manifest {
            let _ = writeln!(s, "{h}  {p}");
        }
        s
    }
}

struct Writer {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, rel: &Path, content: &str) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, content)?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }
}

struct Log {
    file: fs::File,
}

impl Log {
    fn event(&mut self, v: serde_json::Value) -> io::Result<()> {
        writeln!(self.file, "{v}")
    }
}

fn hypotheses(cfg: &RunConfig, seed: u64) -> (String, bool) {
    let mut s = String::new();
    let mut ok = true;
    match validate_profiles(&cfg.profiles(), 201) {
        Ok(r) => {
            for c in &r.checks {
                let _ = writeln!(s, "  {}: {} (worst {:.6e}, bound {:.6e})", c.name, if c.pass { "pass" } else { "fail" }, c.worst, c.bound);
            }
            ok &= r.pass();
        }
        Err(e) => {
            let _ = writeln!(s, "  profiles: error: {e}");
            ok = false;
        }
    }
    match cfg.tensor() {
        Ok(t) => {
            let n = cfg.n();
            let pts: Vec<Vec<f64>> = tangential_samples(n - 1, 2.0 * cfg.geometry.r0, 9)
                .into_iter()
                .flat_map(|xp| {
                    [-0.1, 0.0, 0.1].map(|xn| {
                        let mut x = xp.clone();
                        x.push(xn);
                        x
                    })
                })
                .collect();
            let e = check_pointwise_ellipticity(&t, &pts, EllipticityMode::for_tensor(&t), 16, seed);
            let _ = writeln!(
                s,
                "  ellipticity ({:?}): {} (min {:.6e}, max {:.6e}, sampled min {:.6e}, declared {:.6e})",
                e.mode,
                if e.pass { "pass" } else { "fail" },
                e.exact_min,
                e.exact_max,
                e.sampled_min,
                e.declared
            );
            ok &= e.pass;
            match check_ann(&t, &pts) {
                Ok(a) => {
                    let _ = writeln!(s, "  A^nn: {} (λ1 {:.6e}, λ2 {:.6e})", if a.pass { "pass" } else { "fail" }, a.lambda1, a.lambda2);
                    ok &= a.pass;
                }
                Err(e) => {
                    let _ = writeln!(s, "  A^nn: error: {e}");
                    ok = false;
                }
            }
        }
        Err(e) => {
            let _ = writeln!(s, "  tensor: error: {e}");
            ok = false;
        }
    }
    (s, ok)
}

fn write_outcome(w: &mut Writer, log: &mut Log, label: &str, o: &CheckOutcome) -> io::Result<()> {
    let dir = PathBuf::from(label);
    for s in &o.sweeps {
        w.put(&dir.join(format!("{}.csv", s.name)), &s.to_csv())?;
        w.put(&dir.join(format!("{}.dat", s.name)), &s.to_dat())?;
        for r in &s.rows {
            log.event(json!({
                "event": "row", "run": label, "sweep": s.name, "epsilon": r.epsilon,
                "statistic": r.statistic, "refined": r.refined, "grid": r.grid,
                "flagged": r.flagged, "error": r.error,
            }))?;
        }
    }
    let fits: Vec<_> = o
        .fits
        .iter()
        .map(|(name, f)| {
            json!({
                "sweep": name, "model": f.model.name(), "slope": f.slope, "intercept": f.intercept,
                "r2": f.r2, "residuals": f.residuals, "points": f.points,
            })
        })
        .collect();
    let criteria: Vec<_> = o
        .criteria
        .iter()
        .map(|c| json!({"label": c.label, "value": c.value, "target": c.target, "pass": c.pass}))
        .collect();
    let record = json!({
        "check": o.name, "verdict": o.verdict.label(), "fits": fits, "criteria": criteria, "notes": o.notes,
    });
    w.put(&dir.join("fits.json"), &serde_json::to_string_pretty(&record).expect("json"))?;
    Ok(())
}

fn run_check(item: &RunItem, opts: &RunOptions) -> narrowgap::Result<CheckOutcome> {
    let setup = item.config.setup(opts.grid_scale)?;
    let e = &item.config.experiment;
    match item.check {
        CheckName::Thm11 => check_corrected_rate(&setup),
        CheckName::Remark13 => check_blowup(&setup, item.config.blowup_case()),
        CheckName::Decay => check_decay(&setup, e.floor),
        CheckName::Cor41 => check_sharper_gauge(&setup),
        CheckName::Residual => check_residual_cancellation(&setup),
        CheckName::Energy => check_local_energy(&setup),
        _ => unreachable!("not a sweep check"),
    }
}

fn fmt_row(vals: &[f64]) -> String {
    vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
}

/// `ū` and `∇ū` on a lattice of the straightened box at the first ε.
fn ansatz_samples(item: &RunItem, w: &mut Writer) -> narrowgap::Result<String> {
    let cfg = &item.config;
    let eps = cfg.experiment.epsilons[0];
    let setup = cfg.setup(1.0)?;
    let region = setup.region(eps)?;
    let af = build_ansatz(&setup.tensor, &region, &setup.traces, setup.mode)?;
    let n = region.n;
    let k = cfg.experiment.samples;
    let mut csv = String::new();
    let mut head: Vec<String> = (0..n).map(|a| format!("x{}", a + 1)).collect();
    head.push("t".into());
    for i in 0..af.traces.ncomp() {
        head.push(format!("u{}", i + 1));
    }
    for i in 0..af.traces.ncomp() {
        for a in 0..n {
            head.push(format!("du{}_dx{}", i + 1, a + 1));
        }
    }
    csv.push_str(&head.join(","));
    csv.push('\n');
    let mut count = 0;
    let mut finite = true;
    for xp in tangential_samples(n - 1, 2.0 * cfg.geometry.r0, k) {
        for j in 0..k {
            let t = j as f64 / (k - 1) as f64;
            let x = region.from_box(&MappedPoint { xprime: xp.clone(), t })?;
            let mut row = x.clone();
            row.push(t);
            row.extend(af.value(&x)?);
            row.extend(af.gradient(&x)?.into_iter().flatten());
            finite &= row.iter().all(|v| v.is_finite());
            csv.push_str(&fmt_row(&row));
            csv.push('\n');
            count += 1;
        }
    }
    w.put(&PathBuf::from(&item.label).join("ansatz.csv"), &csv).map_err(|e| narrowgap::Error::Data(e.to_string()))?;
    if !finite {
        return Err(narrowgap::Error::Data("non-finite ansatz sample".into()));
    }
    Ok(format!("  {count} samples at ε = {eps:e}\n"))
}

/// One boundary value problem at the first ε.
fn single_solve(item: &RunItem, opts: &RunOptions, w: &mut Writer) -> narrowgap::Result<(String, bool)> {
    let cfg = &item.config;
    let eps = cfg.experiment.epsilons[0];
    let setup = cfg.setup(opts.grid_scale)?;
    let case = solve_case(&setup, eps, None)?;
    let grid = &case.field.grid;
    let n = case.n();
    let nc = case.ncomp();
    let mut head: Vec<String> = (0..n).map(|a| format!("x{}", a + 1)).collect();
    head.extend((0..nc).map(|i| format!("u{}", i + 1)));
    for i in 0..nc {
        for a in 0..n {
            head.push(format!("du{}_dx{}", i + 1, a + 1));
        }
    }
    let mut csv = head.join(",") + "\n";
    for p in 0..grid.nodes() {
        let mut row = grid.node_x(&case.region, p)?;
        row.extend(case.value_at_node(p)?);
        row.extend(case.gradient_at_node(p)?.into_iter().flatten());
        csv.push_str(&fmt_row(&row));
        csv.push('\n');
    }
    w.put(&PathBuf::from(&item.label).join("solution.csv"), &csv).map_err(|e| narrowgap::Error::Data(e.to_string()))?;
    let r = &case.report;
    let rem = case.remainder()?;
    let ok = r.relative_residual <= setup.solver.tol;
    let s = format!(
        "  ε = {eps:e}, grid {}x{} (β = {:.6}), formulation {}\n  solver {:?}: {} unknowns, {} nonzeros, relative residual {:.3e} (tol {:.1e})\n  max |∇u − ∇ū| = {:.6e}, max |∇u − ∇(interpolant)| = {:.6e}, normalized {:.6e}\n",
        grid.counts[0],
        grid.counts[n - 1],
        grid.beta,
        setup.formulation.name(),
        r.method,
        r.unknowns,
        r.nnz,
        r.relative_residual,
        setup.solver.tol,
        rem.corrected,
        rem.uncorrected,
        rem.normalized
    );
    Ok((s, ok))
}

/// Runs `items` in order, writing everything under `opts.out`.
pub fn execute(items: &[RunItem], opts: &RunOptions) -> io::Result<RunReport> {
    fs::create_dir_all(&opts.out)?;
    let mut w = Writer {
        root: opts.out.clone(),
        files: Vec::new(),
    };
    let mut log = Log {
        file: fs::File::create(opts.out.join("run.log"))?,
    };
    log.event(json!({"event": "start", "version": env!("CARGO_PKG_VERSION"), "runs": items.len(),
        "seed": opts.seed, "grid_scale": opts.grid_scale, "threads": rayon::current_num_threads()}))?;
    let mut results = Vec::new();
    for item in items {
        let t0 = Instant::now();
        log.event(json!({"event": "begin", "run": item.label, "check": item.check.as_str()}))?;
        let config = item.config.to_toml();
        w.put(&PathBuf::from(&item.label).join("config.toml"), &config)?;
        let (hyp, hyp_ok) = hypotheses(&item.config, opts.seed);
        let (verdict, summary) = match item.check {
            CheckName::Validate => (
                if hyp_ok { "PASS" } else { "FAIL" }.to_string(),
                "  hypothesis validation only, no solves\n".to_string(),
            ),
            CheckName::Ansatz => match ansatz_samples(item, &mut w) {
                Ok(s) => ("PASS".into(), s),
                Err(e) => ("ERROR".into(), format!("  error: {e}\n")),
            },
            CheckName::Solve => match single_solve(item, opts, &mut w) {
                Ok((s, ok)) => (if ok { "PASS" } else { "FAIL" }.into(), s),
                Err(e) => ("ERROR".into(), format!("  error: {e}\n")),
            },
            _ => match run_check(item, opts) {
                Ok(o) => {
                    write_outcome(&mut w, &mut log, &item.label, &o)?;
                    let body: String = o.summary().lines().skip(1).map(|l| format!("{l}\n")).collect();
                    (o.verdict.label().to_string(), body)
                }
                Err(e) => ("ERROR".into(), format!("  error: {e}\n")),
            },
        };
        log.event(json!({"event": "end", "run": item.label, "verdict": verdict,
            "seconds": t0.elapsed().as_secs_f64()}))?;
        results.push(ItemResult {
            label: item.label.clone(),
            check: item.check,
            verdict,
            config,
            hypotheses: hyp,
            summary,
        });
    }
    let mut manifest = Vec::new();
    for rel in &w.files {
        let bytes = fs::read(opts.out.join(rel))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        manifest.push((rel.to_string_lossy().replace('\\', "/"), hex));
    }
    manifest.sort();
    let report = RunReport {
        items: results,
        manifest,
    };
    fs::write(opts.out.join("report.txt"), report.render())?;
    log.event(json!({"event": "finish", "all_passed": report.all_passed()}))?;
    Ok(report)
}
