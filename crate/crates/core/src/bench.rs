//! Monte-Carlo experiment runner: simulate a scenario, track it with every
//! configured solver on identical data, and aggregate metrics and timings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fit::{LambdaPolicy, Solver, SolverTag};
use crate::l0::tau_upper_bound;
use crate::measurement::{convert_range_bearing, MeasurementKind};
use crate::metrics::{ospa, star_id, ta_star_id, MetricTable, Trajectory};
use crate::multitarget::{chi2_gate, step_tracks_with_cov, Track, TrackSet};
use crate::orls::lambda_bounds;
use crate::poly_model::Polynomial;
use crate::scenario::{generate_scans, simulate_truth, RunStreams, Scan, ScenarioConfig, TruthTrajectory};
use crate::wls::{smoothness_constants, FitWindow, Variance};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    /// Scenario file contents, hashed into the manifest.
    pub scenario_text: String,
    pub solvers: Vec<Solver>,
    pub runs: usize,
    /// Run `i` uses seed `seed_base + i`.
    pub seed_base: u64,
    pub out_dir: Option<PathBuf>,
    pub strict: bool,
    /// Worker threads; 0 lets rayon decide.
    pub workers: usize,
}

impl ExperimentSpec {
    /// Spec for a scenario with its own run count and seed and the reference
    /// solver set.
    pub fn new(scenario_text: &str) -> Result<Self> {
        let scenario = ScenarioConfig::from_toml(scenario_text)?;
        Ok(Self {
            runs: scenario.runs,
            seed_base: scenario.seed,
            scenario,
            scenario_text: scenario_text.to_string(),
            solvers: Solver::reference_set(),
            out_dir: None,
            strict: false,
            workers: 0,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(&fs::read_to_string(path)?)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| self.seed_base.wrapping_add(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn warn(message: String) -> Self {
        Self { severity: Severity::Warning, message }
    }
    fn error(message: String) -> Self {
        Self { severity: Severity::Error, message }
    }
}

/// Window of one target's own measurements over the `T_w` steps ending at
/// `end_step`, from the run seeded with `seed`. Clutter is left out.
pub fn scenario_window(cfg: &ScenarioConfig, seed: u64, target: usize, end_step: usize) -> Result<FitWindow> {
    if target >= cfg.targets.len() || end_step == 0 || end_step > cfg.steps {
        return Err(Error::InvalidParameter(format!("no target {target} at step {end_step}")));
    }
    let mut streams = RunStreams::new(seed);
    let truth = simulate_truth(cfg, &mut streams)?;
    let scans = generate_scans(cfg, &truth, &mut streams)?;
    let model = cfg.measurement_model()?;
    let first = end_step.saturating_sub(cfg.window - 1).max(1);
    let mut times = Vec::new();
    let mut rows = Vec::new();
    let mut covs = Vec::new();
    for scan in &scans[first - 1..end_step] {
        if let Some(j) = scan.origins.iter().position(|o| *o == Some(target)) {
            let (y, cov) = to_position(&model.kind, &scan.measurements[j], &model.noise_cov, &model.sensor_origin)?;
            times.push(scan.time);
            rows.push(y);
            covs.push(cov);
        }
    }
    if times.is_empty() {
        return Err(Error::WindowTooShort { got: 0, need: 1 });
    }
    let meas = DMatrix::from_fn(rows.len(), rows[0].len(), |k, j| rows[k][j]);
    FitWindow::new(times, meas, Variance::Blocks(covs), cfg.dt)
}

fn probe_window(spec: &ExperimentSpec) -> Result<FitWindow> {
    let w = scenario_window(&spec.scenario, spec.seed_base, 0, spec.scenario.window.min(spec.scenario.steps))?;
    if w.len() < 3 {
        return Err(Error::WindowTooShort { got: w.len(), need: 3 });
    }
    Ok(w)
}

fn to_position(
    kind: &MeasurementKind,
    y: &DVector<f64>,
    cov: &DMatrix<f64>,
    origin: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match kind {
        MeasurementKind::LinearPosition => Ok((y.clone(), cov.clone())),
        MeasurementKind::RangeBearing => convert_range_bearing(y, cov, origin),
    }
}

/// Checks solver settings against the theory: weights against the ORLS
/// interval, l0 step parameters against their bound, and maximum orders
/// against the window length. Bounds that depend on data are estimated on
/// the first window of the first run.
///
/// Returns `Err` only in strict mode when an error-level diagnostic exists.
pub fn validate_spec(spec: &ExperimentSpec) -> Result<Vec<Diagnostic>> {
    let mut out = Vec::new();
    if spec.solvers.is_empty() {
        return Err(Error::InvalidParameter("at least one solver required".into()));
    }
    if spec.runs == 0 {
        return Err(Error::InvalidParameter("runs must be at least 1".into()));
    }
    let tw = spec.scenario.window;
    let probe = probe_window(spec);
    if let Err(e) = &probe {
        out.push(Diagnostic::warn(format!("could not estimate data-dependent bounds: {e}")));
    }
    let bounds = probe.as_ref().ok().and_then(|w| lambda_bounds(w).ok());
    for solver in &spec.solvers {
        let label = solver.label();
        let (max_order, lambda) = match solver {
            Solver::FixedOrder(g) => (*g, None),
            Solver::Orls(l) => (tw.saturating_sub(2), Some(*l)),
            Solver::L0Newton { max_order, lambda, .. } | Solver::L1Admm { max_order, lambda, .. } => {
                (*max_order, Some(*lambda))
            }
        };
        if tw >= 2 && max_order + 2 > tw {
            out.push(Diagnostic::warn(format!(
                "{label}: maximum order {max_order} exceeds T_w - 2 = {}; fits may interpolate the noise",
                tw.saturating_sub(2)
            )));
        }
        if let (Some(LambdaPolicy::Fixed(l)), Some((lo, hi))) = (lambda, bounds) {
            if !(l > lo && l <= hi) {
                out.push(Diagnostic::warn(format!(
                    "{label}: lambda {l} outside the order-selection interval ({lo:.4}, {hi:.4}] estimated from the first window"
                )));
            }
        }
        if let (Solver::L0Newton { max_order, params, .. }, Ok(w)) = (solver, &probe) {
            let order = (*max_order).min(w.max_identifiable_order());
            if let Ok(sys) = w.whitened_system(order) {
                let (l_big, l_small) = smoothness_constants(&sys);
                let bound =
                    tau_upper_bound(l_big, params.delta.min(l_small / 2.0), params.sigma, params.beta, sys.n_coeffs());
                if params.tau > bound {
                    let msg = format!(
                        "{label}: tau {} exceeds the convergence bound {bound:.3e} (L = {l_big:.3e})",
                        params.tau
                    );
                    out.push(if spec.strict { Diagnostic::error(msg) } else { Diagnostic::warn(msg) });
                }
                if params.delta > l_small / 2.0 {
                    let msg = format!(
                        "{label}: delta {} exceeds half the strong convexity constant {:.3e}",
                        params.delta,
                        l_small / 2.0
                    );
                    out.push(if spec.strict { Diagnostic::error(msg) } else { Diagnostic::warn(msg) });
                }
            }
        }
    }
    if spec.strict {
        if let Some(d) = out.iter().find(|d| d.severity == Severity::Error) {
            return Err(Error::InvalidParameter(d.message.clone()));
        }
    }
    Ok(out)
}

/// A theory check that failed in some window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub solver: String,
    pub run: usize,
    pub step: usize,
    pub track: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub solver: String,
    pub run: usize,
    pub step: usize,
    pub track: usize,
    pub message: String,
}

/// One stored track estimate: the fitted polynomial after step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow {
    pub run: usize,
    pub step: usize,
    pub target: usize,
    pub order: usize,
    pub poly: Polynomial,
}

/// Per-step metrics of one run.
#[derive(Debug, Clone, Default)]
struct RunMetrics {
    /// Squared position error summed over targets.
    sq_err: Vec<f64>,
    ospa: Vec<f64>,
    /// `None` where the window has zero length.
    star: Vec<Option<f64>>,
    ta: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default)]
struct RunOutcome {
    metrics: RunMetrics,
    orders: Vec<f64>,
    time: Duration,
    fits: usize,
    nonconverged: usize,
    failures: Vec<Failure>,
    violations: Vec<Violation>,
    rows: Vec<TrackRow>,
}

/// Metrics of one step from the estimated trajectories after that step.
fn step_metrics(
    cfg: &ScenarioConfig,
    step: usize,
    estimates: &[Polynomial],
    truth: &[TruthTrajectory],
) -> Result<(f64, f64, Option<f64>, Option<f64>)> {
    let t = cfg.time(step);
    let est: Vec<_> = estimates.iter().map(|p| p.evaluate(t)).collect();
    let tru: Vec<_> = truth.iter().map(|g| g.position(t)).collect();
    let sq: f64 = est.iter().zip(&tru).map(|(e, g)| (e - g).norm_squared()).sum();
    let o = ospa(&est, &tru, cfg.metrics.ospa_cutoff, cfg.metrics.ospa_order)?;
    let first = step.saturating_sub(cfg.window - 1).max(1);
    let (t0, t1) = (cfg.time(first), t);
    if t1 > t0 {
        let e: Vec<&dyn Trajectory> = estimates.iter().map(|p| p as &dyn Trajectory).collect();
        let g: Vec<&dyn Trajectory> = truth.iter().map(|p| p as &dyn Trajectory).collect();
        let s = star_id(&e, &g, t0, t1, cfg.dt, &cfg.metrics)?;
        Ok((sq, o, Some(s), Some(ta_star_id(s, t1 - t0)?)))
    } else {
        Ok((sq, o, None, None))
    }
}

fn initial_tracks(cfg: &ScenarioConfig, truth: &[TruthTrajectory]) -> Result<TrackSet> {
    let model = cfg.measurement_model()?;
    let pos_cov = match model.kind {
        MeasurementKind::LinearPosition => model.noise_cov.clone(),
        MeasurementKind::RangeBearing => DMatrix::identity(2, 2),
    };
    let tracks = truth
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let p = g.position(cfg.time(1));
            let n = p.len();
            Track::new(i, p, DMatrix::identity(n, n) * cfg.initial_std.powi(2))
        })
        .collect();
    TrackSet::new(tracks, cfg.window, cfg.dt, pos_cov)
}

fn run_solver(
    cfg: &ScenarioConfig,
    solver: &Solver,
    run: usize,
    truth: &[TruthTrajectory],
    scans: &[Scan],
    keep_rows: bool,
) -> Result<RunOutcome> {
    let model = cfg.measurement_model()?;
    let gate = if cfg.gating { chi2_gate(model.dims(), cfg.gate_probability) } else { f64::INFINITY };
    let mut tracks = initial_tracks(cfg, truth)?;
    let label = solver.label();
    let mut out = RunOutcome::default();
    for scan in scans {
        let mut values = Vec::with_capacity(scan.measurements.len());
        let mut covs = Vec::with_capacity(scan.measurements.len());
        for y in &scan.measurements {
            match to_position(&model.kind, y, &model.noise_cov, &model.sensor_origin) {
                Ok((p, c)) => {
                    values.push(p);
                    covs.push(c);
                }
                Err(_) => continue,
            }
        }
        let report =
            step_tracks_with_cov(&mut tracks, &values, Some(&covs), scan.step as i64, scan.time, solver, gate)?;
        out.time += report.solver_time;
        for (id, e) in report.errors {
            out.failures.push(Failure {
                solver: label.clone(),
                run,
                step: scan.step,
                track: id,
                message: e.to_string(),
            });
        }
        let mut estimates = Vec::with_capacity(tracks.tracks.len());
        let mut order_sum = 0.0;
        for track in &tracks.tracks {
            let poly = match &track.fit {
                Some(f) => f.poly.clone(),
                None => Polynomial::constant(track.initial.as_slice(), scan.time, cfg.dt)?,
            };
            if let Some(f) = &track.fit {
                order_sum += f.order as f64;
                out.fits += 1;
                if !f.converged {
                    out.nonconverged += 1;
                }
                if f.solver == SolverTag::Orls && track.buffer.len() >= 3 {
                    check_propositions(&tracks, track, f.order, f.lambda, &label, run, scan.step, &mut out.violations)?;
                }
            }
            if keep_rows {
                let order = track.fit.as_ref().map_or(0, |f| f.order);
                out.rows.push(TrackRow { run, step: scan.step, target: track.id, order, poly: poly.clone() });
            }
            estimates.push(poly);
        }
        out.orders.push(order_sum / tracks.tracks.len() as f64);
        let (sq, o, s, ta) = step_metrics(cfg, scan.step, &estimates, truth)?;
        out.metrics.sq_err.push(sq);
        out.metrics.ospa.push(o);
        out.metrics.star.push(s);
        out.metrics.ta.push(ta);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn check_propositions(
    tracks: &TrackSet,
    track: &Track,
    order: usize,
    lambda: f64,
    label: &str,
    run: usize,
    step: usize,
    out: &mut Vec<Violation>,
) -> Result<()> {
    let window = tracks.window_of(track)?;
    let t = window.len();
    let (lo, d1) = lambda_bounds(&window)?;
    let mut push = |message: String| out.push(Violation { solver: label.into(), run, step, track: track.id, message });
    let bound = d1 / lambda + 1.0;
    if order as f64 > bound * (1.0 + 1e-12) {
        push(format!("order {order} above D1/lambda + 1 = {bound}"));
    }
    if lambda > lo && lambda <= d1 && order + 1 >= t {
        push(format!("order {order} not below T - 1 = {} with lambda inside ({lo}, {d1}]", t - 1));
    }
    Ok(())
}

/// Aggregated results of one solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub label: String,
    pub solver: Solver,
    /// Time-averaged position RMSE.
    pub rmse: f64,
    pub ospa: f64,
    pub star_id: f64,
    pub ta_star_id: f64,
    /// Mean wall-clock solver time per step, in seconds.
    pub step_time: f64,
    pub mean_order: f64,
    pub failures: usize,
    pub nonconverged: usize,
    pub violations: usize,
}

/// Per-step averages over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSeries {
    pub label: String,
    pub rmse: Vec<f64>,
    pub ospa: Vec<f64>,
    pub star_id: Vec<Option<f64>>,
    pub ta_star_id: Vec<Option<f64>>,
    pub mean_order: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub summaries: Vec<SolverSummary>,
    pub series: Vec<StepSeries>,
    pub diagnostics: Vec<Diagnostic>,
    pub failures: Vec<Failure>,
    pub violations: Vec<Violation>,
    /// Stored estimates per solver in the order of `summaries`; empty
    /// unless an output directory is set.
    pub tracks: Vec<Vec<TrackRow>>,
}

impl ExperimentReport {
    pub fn summary(&self, label: &str) -> Option<&SolverSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }
}

fn unique_labels(solvers: &[Solver]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for s in solvers {
        let base = s.label();
        let mut label = base.clone();
        let mut k = 2;
        while labels.contains(&label) {
            label = format!("{base}-{k}");
            k += 1;
        }
        labels.push(label);
    }
    labels
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn aggregate(cfg: &ScenarioConfig, label: &str, solver: &Solver, runs: &[RunOutcome]) -> (SolverSummary, StepSeries) {
    let steps = cfg.steps;
    let n_runs = runs.len() as f64;
    let n_targets = cfg.targets.len() as f64;
    let rmse: Vec<f64> = (0..steps)
        .map(|k| (runs.iter().map(|r| r.metrics.sq_err[k]).sum::<f64>() / (n_runs * n_targets)).sqrt())
        .collect();
    let ospa: Vec<f64> = (0..steps).map(|k| runs.iter().map(|r| r.metrics.ospa[k]).sum::<f64>() / n_runs).collect();
    let star: Vec<Option<f64>> = (0..steps).map(|k| mean_opt(runs.iter().map(|r| r.metrics.star[k]))).collect();
    let ta: Vec<Option<f64>> = (0..steps).map(|k| mean_opt(runs.iter().map(|r| r.metrics.ta[k]))).collect();
    let orders: Vec<f64> = (0..steps).map(|k| runs.iter().map(|r| r.orders[k]).sum::<f64>() / n_runs).collect();
    let time: Duration = runs.iter().map(|r| r.time).sum();
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let summary = SolverSummary {
        label: label.into(),
        solver: solver.clone(),
        rmse: avg(&rmse),
        ospa: avg(&ospa),
        star_id: mean_opt(star.iter().copied()).unwrap_or(0.0),
        ta_star_id: mean_opt(ta.iter().copied()).unwrap_or(0.0),
        step_time: time.as_secs_f64() / (n_runs * steps as f64),
        mean_order: avg(&orders),
        failures: runs.iter().map(|r| r.failures.len()).sum(),
        nonconverged: runs.iter().map(|r| r.nonconverged).sum(),
        violations: runs.iter().map(|r| r.violations.len()).sum(),
    };
    let series = StepSeries { label: label.into(), rmse, ospa, star_id: star, ta_star_id: ta, mean_order: orders };
    (summary, series)
}

/// Runs every solver on every Monte-Carlo run. Each run's data are
/// simulated once and shared by all solvers. Files are written when
/// `spec.out_dir` is set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let diagnostics = validate_spec(spec)?;
    let cfg = &spec.scenario;
    let keep_rows = spec.out_dir.is_some();
    let seeds = spec.seeds();
    let work = |run: usize| -> Result<Vec<RunOutcome>> {
        let mut streams = RunStreams::new(seeds[run]);
        let truth = simulate_truth(cfg, &mut streams)?;
        let scans = generate_scans(cfg, &truth, &mut streams)?;
        spec.solvers.iter().map(|s| run_solver(cfg, s, run, &truth, &scans, keep_rows)).collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let per_run: Vec<Vec<RunOutcome>> =
        pool.install(|| (0..spec.runs).into_par_iter().map(work).collect::<Result<_>>())?;

    let labels = unique_labels(&spec.solvers);
    let mut report = ExperimentReport {
        summaries: Vec::new(),
        series: Vec::new(),
        diagnostics,
        failures: Vec::new(),
        violations: Vec::new(),
        tracks: Vec::new(),
    };
    for (i, solver) in spec.solvers.iter().enumerate() {
        let mut runs: Vec<RunOutcome> = per_run.iter().map(|r| r[i].clone()).collect();
        let (summary, series) = aggregate(cfg, &labels[i], solver, &runs);
        report.summaries.push(summary);
        report.series.push(series);
        let mut rows = Vec::new();
        for r in runs.iter_mut() {
            for f in &mut r.failures {
                f.solver = labels[i].clone();
            }
            for v in &mut r.violations {
                v.solver = labels[i].clone();
            }
            report.failures.append(&mut r.failures);
            report.violations.append(&mut r.violations);
            rows.append(&mut r.rows);
        }
        report.tracks.push(rows);
    }
    if let Some(dir) = &spec.out_dir {
        write_outputs(spec, &report, dir)?;
    }
    Ok(report)
}

pub fn scenario_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Plain-text table with one row per solver.
pub fn format_summary(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:>10} {:>10} {:>12} {:>11} {:>12} {:>8} {:>6} {:>6}",
        "solver", "rmse", "ospa", "star_id", "ta_star_id", "time_s", "order", "fail", "viol"
    );
    for r in &report.summaries {
        let _ = writeln!(
            s,
            "{:<12} {:>10.4} {:>10.4} {:>12.4} {:>11.4} {:>12.3e} {:>8.3} {:>6} {:>6}",
            r.label, r.rmse, r.ospa, r.star_id, r.ta_star_id, r.step_time, r.mean_order, r.failures, r.violations
        );
    }
    s
}

fn write_outputs(spec: &ExperimentSpec, report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("per_step.csv"))?;
    w.write_record(["solver", "step", "rmse", "ospa", "star_id", "ta_star_id", "mean_order"])?;
    for s in &report.series {
        for k in 0..s.rmse.len() {
            w.write_record([
                s.label.clone(),
                (k + 1).to_string(),
                s.rmse[k].to_string(),
                s.ospa[k].to_string(),
                fmt_opt(s.star_id[k]),
                fmt_opt(s.ta_star_id[k]),
                s.mean_order[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    for (s, rows) in report.series.iter().zip(&report.tracks) {
        series_table(s).save(&dir.join(format!("metrics_{}.csv", s.label)))?;
        write_tracks_csv(rows, fs::File::create(dir.join(format!("tracks_{}.csv", s.label)))?)?;
    }
    fs::write(dir.join("summary.txt"), format_summary(report))?;
    let json = |v: &serde_json::Value| serde_json::to_string_pretty(v).expect("json serializes");
    fs::write(
        dir.join("summary.json"),
        json(&serde_json::json!({ "schema_version": SCHEMA_VERSION, "solvers": report.summaries })),
    )?;
    let manifest = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": spec.scenario.name,
        "scenario_sha256": scenario_hash(&spec.scenario_text),
        "runs": spec.runs,
        "seed_base": spec.seed_base,
        "seeds": spec.seeds(),
        "solvers": spec.solvers.iter().zip(&report.summaries).map(|(s, r)| serde_json::json!({ "label": r.label, "solver": s })).collect::<Vec<_>>(),
        "strict": spec.strict,
        "diagnostics": report.diagnostics,
        "failures": report.failures,
        "violations": report.violations,
    });
    fs::write(dir.join("manifest.json"), json(&manifest))?;
    Ok(())
}

/// Per-step series as `step,metric,value` rows.
pub fn series_table(s: &StepSeries) -> MetricTable {
    let mut t = MetricTable::default();
    for k in 0..s.rmse.len() {
        let step = (k + 1) as i64;
        t.push(step, "rmse", s.rmse[k]);
        t.push(step, "ospa", s.ospa[k]);
        if let (Some(a), Some(b)) = (s.star_id[k], s.ta_star_id[k]) {
            t.push(step, "star_id", a);
            t.push(step, "ta_star_id", b);
        }
        t.push(step, "mean_order", s.mean_order[k]);
    }
    t
}

/// Rows `run,step,target,origin,scale,order,c_0_0,c_0_1,...`; coefficients
/// are listed order by order. Row lengths vary with the polynomial order.
pub fn write_tracks_csv<W: std::io::Write>(rows: &[TrackRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["run", "step", "target", "origin", "scale", "order", "dims", "coeffs..."])?;
    for r in rows {
        let c = r.poly.coeffs();
        let mut rec = vec![
            r.run.to_string(),
            r.step.to_string(),
            r.target.to_string(),
            r.poly.time_origin().to_string(),
            r.poly.time_scale().to_string(),
            r.order.to_string(),
            c.ncols().to_string(),
        ];
        for i in 0..c.nrows() {
            for d in 0..c.ncols() {
                rec.push(c[(i, d)].to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tracks_csv<R: std::io::Read>(input: R) -> Result<Vec<TrackRow>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let bad = |m: &str| Error::Io(format!("malformed tracks file: {m}"));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad("short row"));
        let int = |i: usize| -> Result<usize> { field(i)?.parse().map_err(|_| bad("integer field")) };
        let num = |i: usize| -> Result<f64> { field(i)?.parse().map_err(|_| bad("numeric field")) };
        let dims = int(6)?;
        let n = rec.len() - 7;
        if dims == 0 || n == 0 || n % dims != 0 {
            return Err(bad("coefficient count"));
        }
        let values: Vec<f64> = (7..rec.len()).map(num).collect::<Result<_>>()?;
        let poly = Polynomial::new(DMatrix::from_row_slice(n / dims, dims, &values), num(3)?, num(4)?)?;
        out.push(TrackRow { run: int(0)?, step: int(1)?, target: int(2)?, order: int(5)?, poly });
    }
    Ok(out)
}

/// Recomputes per-step metrics from stored track estimates, regenerating
/// the truth of each run from `seed_base + run`.
pub fn metrics_from_tracks(cfg: &ScenarioConfig, seed_base: u64, rows: &[TrackRow]) -> Result<StepSeries> {
    let runs: usize = rows.iter().map(|r| r.run + 1).max().unwrap_or(0);
    let n_targets = cfg.targets.len();
    let mut outcomes = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut streams = RunStreams::new(seed_base.wrapping_add(run as u64));
        let truth = simulate_truth(cfg, &mut streams)?;
        let mut out = RunOutcome::default();
        for step in 1..=cfg.steps {
            let mut est: Vec<Option<&TrackRow>> = vec![None; n_targets];
            for r in rows.iter().filter(|r| r.run == run && r.step == step) {
                if r.target < n_targets {
                    est[r.target] = Some(r);
                }
            }
            let est: Vec<&TrackRow> = est
                .into_iter()
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Io(format!("missing estimates for run {run} step {step}")))?;
            let polys: Vec<Polynomial> = est.iter().map(|r| r.poly.clone()).collect();
            let (sq, o, s, ta) = step_metrics(cfg, step, &polys, &truth)?;
            out.metrics.sq_err.push(sq);
            out.metrics.ospa.push(o);
            out.metrics.star.push(s);
            out.metrics.ta.push(ta);
            out.orders.push(est.iter().map(|r| r.order as f64).sum::<f64>() / n_targets as f64);
        }
        outcomes.push(out);
    }
    if outcomes.is_empty() {
        return Err(Error::Io("no track estimates".into()));
    }
    Ok(aggregate(cfg, "recomputed", &Solver::FixedOrder(0), &outcomes).1)
}
