//! Scenario files, ground truth and measurement scans.
//!
//! Two kinds of targets are supported: state-space targets whose motion
//! switches between Wiener-process velocity (WPV) and Wiener-process
//! acceleration (WPA) models, and targets whose truth is a chain of
//! polynomial pieces. Scenarios are TOML files; see `scenarios/` for the
//! reference ones.
//!
//! Step `k` (1-based) happens at time `k * dt`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{MeasurementKind, MeasurementModel};
use crate::metrics::{MetricConfig, Trajectory};
use crate::poly_model::Polynomial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionModel {
    Wpv,
    Wpa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSegment {
    pub model: MotionModel,
    /// Power spectral density of the driving noise.
    pub q: f64,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialPiece {
    pub start: usize,
    pub end: usize,
    /// Rows by order, in seconds since the piece's start time.
    pub coeffs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetConfig {
    StateSpace { initial_position: Vec<f64>, initial_velocity: Vec<f64>, segments: Vec<MotionSegment> },
    Polynomial { pieces: Vec<PolynomialPiece> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub kind: MeasurementKind,
    pub noise_cov: Vec<Vec<f64>>,
    #[serde(default)]
    pub sensor_origin: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutterConfig {
    /// Mean number of clutter points per scan.
    pub rate: f64,
    /// `[[x_min, x_max], [y_min, y_max]]`.
    pub region: Vec<[f64; 2]>,
    pub detection_probability: f64,
}

impl Default for ClutterConfig {
    fn default() -> Self {
        Self { rate: 0.0, region: vec![[-1.0, 1.0], [-1.0, 1.0]], detection_probability: 1.0 }
    }
}

fn default_window() -> usize {
    10
}
fn default_runs() -> usize {
    50
}
fn default_gate() -> f64 {
    0.99
}
fn default_gating() -> bool {
    true
}
fn default_initial_std() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub steps: usize,
    pub dt: f64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Probability mass inside the association gate.
    #[serde(default = "default_gate")]
    pub gate_probability: f64,
    /// Without gating every track takes its nearest measurement.
    #[serde(default = "default_gating")]
    pub gating: bool,
    /// Standard deviation of the position prior that seeds each track.
    #[serde(default = "default_initial_std")]
    pub initial_std: f64,
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub clutter: ClutterConfig,
    #[serde(default)]
    pub metrics: MetricConfig,
    pub targets: Vec<TargetConfig>,
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Scenario("matrix rows must be nonempty and equally long".into()));
    }
    Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn measurement_model(&self) -> Result<MeasurementModel> {
        let cov = matrix(&self.measurement.noise_cov)?;
        let origin =
            DVector::from_vec(self.measurement.sensor_origin.clone().unwrap_or_else(|| vec![0.0; cov.nrows()]));
        MeasurementModel::new(self.measurement.kind, cov, origin).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.steps == 0 || !(self.dt > 0.0) {
            return bad("steps and dt must be positive".into());
        }
        if self.window < 1 || self.runs < 1 {
            return bad("window and runs must be at least 1".into());
        }
        if !(self.gate_probability > 0.0 && self.gate_probability < 1.0) {
            return bad("gate_probability must lie in (0, 1)".into());
        }
        let c = &self.clutter;
        if !(0.0..=1.0).contains(&c.detection_probability) || !(c.rate >= 0.0) {
            return bad("detection probability must lie in [0, 1] and clutter rate be >= 0".into());
        }
        if c.region.len() != 2 || c.region.iter().any(|r| !(r[1] > r[0])) {
            return bad("clutter region must be a nonempty 2-d rectangle".into());
        }
        self.metrics.validate().map_err(|e| Error::Scenario(e.to_string()))?;
        self.measurement_model()?;
        if self.targets.is_empty() {
            return bad("at least one target required".into());
        }
        for (i, t) in self.targets.iter().enumerate() {
            match t {
                TargetConfig::StateSpace { initial_position, initial_velocity, segments } => {
                    if initial_position.len() != 2 || initial_velocity.len() != 2 {
                        return bad(format!("target {i}: initial state must be 2-d"));
                    }
                    check_cover(segments.iter().map(|s| (s.start, s.end)), self.steps, i)?;
                    if segments.iter().any(|s| !(s.q > 0.0)) {
                        return bad(format!("target {i}: spectral densities must be positive"));
                    }
                }
                TargetConfig::Polynomial { pieces } => {
                    check_cover(pieces.iter().map(|p| (p.start, p.end)), self.steps, i)?;
                    for p in pieces {
                        let m = matrix(&p.coeffs)?;
                        if m.ncols() != 2 {
                            return bad(format!("target {i}: polynomial pieces must be 2-d"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Intervals must tile `1..=steps` in order without gaps or overlaps.
fn check_cover(intervals: impl Iterator<Item = (usize, usize)>, steps: usize, target: usize) -> Result<()> {
    let mut next = 1;
    for (s, e) in intervals {
        if s != next || e < s {
            return Err(Error::Scenario(format!(
                "target {target}: interval [{s}, {e}] leaves a gap or overlap at step {next}"
            )));
        }
        next = e + 1;
    }
    if next != steps + 1 {
        return Err(Error::Scenario(format!("target {target}: intervals end at step {}, run has {steps}", next - 1)));
    }
    Ok(())
}

/// Independent random streams of one Monte-Carlo run, so that the data do not
/// depend on which estimator consumes them.
pub struct RunStreams {
    pub process: ChaCha8Rng,
    pub measurement: ChaCha8Rng,
    pub clutter: ChaCha8Rng,
    pub detection: ChaCha8Rng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        Self { process: stream(0), measurement: stream(1), clutter: stream(2), detection: stream(3) }
    }
}

/// Per-axis transition and process noise covariance of a Wiener-process
/// model over one interval `dt`.
pub fn discretize(model: MotionModel, q: f64, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = dt;
    match model {
        MotionModel::Wpv => (
            DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[t.powi(3) / 3.0, t * t / 2.0, t * t / 2.0, t]) * q,
        ),
        MotionModel::Wpa => (
            DMatrix::from_row_slice(3, 3, &[1.0, t, t * t / 2.0, 0.0, 1.0, t, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    t.powi(5) / 20.0,
                    t.powi(4) / 8.0,
                    t.powi(3) / 6.0,
                    t.powi(4) / 8.0,
                    t.powi(3) / 3.0,
                    t * t / 2.0,
                    t.powi(3) / 6.0,
                    t * t / 2.0,
                    t,
                ],
            ) * q,
        ),
    }
}

/// Kinematic state of a state-space target, per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    pub position: DVector<f64>,
    pub velocity: DVector<f64>,
    pub acceleration: DVector<f64>,
}

/// Draws the state sequence of a switching WPV/WPA target. The first step is
/// the initial state; acceleration starts at zero on entering WPA and is
/// dropped on leaving it.
pub fn simulate_ssm<R: Rng + ?Sized>(
    initial_position: &[f64],
    initial_velocity: &[f64],
    segments: &[MotionSegment],
    steps: usize,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<KinematicState>> {
    check_cover(segments.iter().map(|s| (s.start, s.end)), steps, 0)?;
    let r = initial_position.len();
    let mut state = KinematicState {
        position: DVector::from_column_slice(initial_position),
        velocity: DVector::from_column_slice(initial_velocity),
        acceleration: DVector::zeros(r),
    };
    let mut out = Vec::with_capacity(steps);
    out.push(state.clone());
    let factors: Vec<_> = segments
        .iter()
        .map(|s| {
            let (f, q) = discretize(s.model, s.q, dt);
            let l = q.cholesky().expect("process noise is positive definite").l();
            (f, l)
        })
        .collect();
    for k in 2..=steps {
        let idx = segments.iter().position(|s| (s.start..=s.end).contains(&k)).expect("segments cover the run");
        let seg = &segments[idx];
        let (f, l) = &factors[idx];
        if seg.model == MotionModel::Wpv {
            state.acceleration.fill(0.0);
        }
        for d in 0..r {
            let noise = DVector::from_fn(f.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let w = l * noise;
            let x = match seg.model {
                MotionModel::Wpv => {
                    let s = DVector::from_vec(vec![state.position[d], state.velocity[d]]);
                    let mut n = f * s + w;
                    n.extend([0.0]);
                    n
                }
                MotionModel::Wpa => {
                    let s = DVector::from_vec(vec![state.position[d], state.velocity[d], state.acceleration[d]]);
                    f * s + w
                }
            };
            state.position[d] = x[0];
            state.velocity[d] = x[1];
            state.acceleration[d] = x[2];
        }
        out.push(state.clone());
    }
    Ok(out)
}

/// Truth trajectory of one target over the run.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthTrajectory {
    /// Sampled states with cubic Hermite interpolation between steps.
    Sampled { times: Vec<f64>, states: Vec<KinematicState> },
    /// Polynomial pieces, each valid on `[start_time, end_time]` (the last
    /// piece extends beyond its end).
    Pieces(Vec<(f64, Polynomial)>),
}

impl TruthTrajectory {
    pub fn positions(&self, times: &[f64]) -> Vec<DVector<f64>> {
        times.iter().map(|&t| self.position(t)).collect()
    }
}

impl Trajectory for TruthTrajectory {
    fn position(&self, t: f64) -> DVector<f64> {
        match self {
            TruthTrajectory::Pieces(pieces) => {
                let idx = pieces.iter().rposition(|(start, _)| *start <= t).unwrap_or(0);
                pieces[idx].1.evaluate(t)
            }
            TruthTrajectory::Sampled { times, states } => {
                let n = times.len();
                if t <= times[0] {
                    return states[0].position.clone();
                }
                if t >= times[n - 1] {
                    return states[n - 1].position.clone();
                }
                let k = times.partition_point(|x| *x <= t) - 1;
                let h = times[k + 1] - times[k];
                let s = (t - times[k]) / h;
                let (a, b) = (&states[k], &states[k + 1]);
                let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
                let h10 = s.powi(3) - 2.0 * s * s + s;
                let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
                let h11 = s.powi(3) - s * s;
                &a.position * h00 + &a.velocity * (h10 * h) + &b.position * h01 + &b.velocity * (h11 * h)
            }
        }
    }
}

/// Chains polynomial pieces, rejecting position jumps above `1e-9` at the
/// junctions.
pub fn simulate_polynomial_truth(pieces: &[PolynomialPiece], dt: f64) -> Result<TruthTrajectory> {
    let mut out: Vec<(f64, Polynomial)> = Vec::with_capacity(pieces.len());
    for p in pieces {
        let start = p.start as f64 * dt;
        let poly = Polynomial::new(matrix(&p.coeffs)?, start, 1.0)?;
        if let Some((_, prev)) = out.last() {
            let jump = (prev.evaluate(start) - poly.evaluate(start)).norm();
            if jump > 1e-9 * (1.0 + poly.evaluate(start).norm()) {
                return Err(Error::Scenario(format!("polynomial truth jumps by {jump} at t = {start}")));
            }
        }
        out.push((start, poly));
    }
    Ok(TruthTrajectory::Pieces(out))
}

/// Truth of every target for one run.
pub fn simulate_truth(config: &ScenarioConfig, streams: &mut RunStreams) -> Result<Vec<TruthTrajectory>> {
    config
        .targets
        .iter()
        .map(|t| match t {
            TargetConfig::StateSpace { initial_position, initial_velocity, segments } => {
                let states = simulate_ssm(
                    initial_position,
                    initial_velocity,
                    segments,
                    config.steps,
                    config.dt,
                    &mut streams.process,
                )?;
                Ok(TruthTrajectory::Sampled { times: config.times(), states })
            }
            TargetConfig::Polynomial { pieces } => simulate_polynomial_truth(pieces, config.dt),
        })
        .collect()
}

/// Measurements at one step, in shuffled order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub step: usize,
    pub time: f64,
    pub measurements: Vec<DVector<f64>>,
    /// Target index for detections, `None` for clutter.
    pub origins: Vec<Option<usize>>,
}

pub fn generate_scans(
    config: &ScenarioConfig,
    truth: &[TruthTrajectory],
    streams: &mut RunStreams,
) -> Result<Vec<Scan>> {
    let model = config.measurement_model()?;
    let c = &config.clutter;
    let poisson =
        if c.rate > 0.0 { Some(Poisson::new(c.rate).map_err(|e| Error::Scenario(e.to_string()))?) } else { None };
    let mut scans = Vec::with_capacity(config.steps);
    for k in 1..=config.steps {
        let t = config.time(k);
        let mut items: Vec<(DVector<f64>, Option<usize>)> = Vec::new();
        for (i, traj) in truth.iter().enumerate() {
            if streams.detection.random::<f64>() < c.detection_probability {
                items.push((model.measure(&traj.position(t), &mut streams.measurement)?, Some(i)));
            }
        }
        let n = poisson.as_ref().map_or(0, |p| p.sample(&mut streams.clutter) as usize);
        for _ in 0..n {
            let p = DVector::from_iterator(2, c.region.iter().map(|r| streams.clutter.random_range(r[0]..r[1])));
            let y = match model.kind {
                MeasurementKind::LinearPosition => p,
                MeasurementKind::RangeBearing => match model.predict(&p) {
                    Ok(y) => y,
                    Err(_) => continue,
                },
            };
            items.push((y, None));
        }
        items.shuffle(&mut streams.clutter);
        let (measurements, origins) = items.into_iter().unzip();
        scans.push(Scan { step: k, time: t, measurements, origins });
    }
    Ok(scans)
}

/// Writes scans as `step,time,index,origin,y0,y1,...` rows.
pub fn write_scans_csv<W: Write>(scans: &[Scan], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dims = scans.iter().flat_map(|s| s.measurements.first()).map(|m| m.len()).next().unwrap_or(2);
    let mut header = vec!["step".to_string(), "time".into(), "index".into(), "origin".into()];
    header.extend((0..dims).map(|d| format!("y{d}")));
    w.write_record(&header)?;
    for s in scans {
        for (j, (y, o)) in s.measurements.iter().zip(&s.origins).enumerate() {
            let mut rec = vec![
                s.step.to_string(),
                format!("{}", s.time),
                j.to_string(),
                o.map_or("clutter".into(), |o| o.to_string()),
            ];
            rec.extend(y.iter().map(|v| format!("{v}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads scans written by [`write_scans_csv`].
pub fn read_scans_csv<R: std::io::Read>(input: R) -> Result<Vec<Scan>> {
    let mut r = csv::Reader::from_reader(input);
    let mut scans: Vec<Scan> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = || Error::Io(format!("malformed scan row {rec:?}"));
        let step: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let time: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let origin = match rec.get(3).ok_or_else(bad)? {
            "clutter" => None,
            o => Some(o.parse().map_err(|_| bad())?),
        };
        let y: Vec<f64> = rec.iter().skip(4).map(|v| v.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        if scans.last().is_none_or(|s| s.step != step) {
            scans.push(Scan { step, time, measurements: vec![], origins: vec![] });
        }
        let s = scans.last_mut().expect("pushed above");
        s.measurements.push(DVector::from_vec(y));
        s.origins.push(origin);
    }
    Ok(scans)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = include_str!("../scenarios/single_target.toml");
    const TWO: &str = include_str!("../scenarios/two_target.toml");

    fn wpv(start: usize, end: usize, q: f64) -> MotionSegment {
        MotionSegment { model: MotionModel::Wpv, q, start, end }
    }

    #[test]
    fn reference_scenarios_parse() {
        let s = ScenarioConfig::from_toml(SINGLE).unwrap();
        assert_eq!((s.steps, s.dt, s.window, s.runs), (100, 1.0, 10, 50));
        let t = ScenarioConfig::from_toml(TWO).unwrap();
        assert_eq!(t.targets.len(), 2);
        assert_eq!(t.clutter.rate, 15.0);
        assert_eq!(ScenarioConfig::from_toml(&t.to_toml()).unwrap(), t);
    }

    #[test]
    fn segment_gaps_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let segs = [wpv(1, 10, 0.1), wpv(12, 20, 0.1)];
        assert!(simulate_ssm(&[0.0, 0.0], &[1.0, 0.0], &segs, 20, 1.0, &mut rng).is_err());
        let segs = [wpv(1, 10, 0.1), wpv(10, 20, 0.1)];
        assert!(simulate_ssm(&[0.0, 0.0], &[1.0, 0.0], &segs, 20, 1.0, &mut rng).is_err());
    }

    #[test]
    fn noiseless_constant_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states = simulate_ssm(&[0.0, 0.0], &[1.0, 0.0], &[wpv(1, 20, 1e-30)], 20, 1.0, &mut rng).unwrap();
        for (k, s) in states.iter().enumerate() {
            assert!((s.position[0] - k as f64).abs() < 1e-9);
            assert!(s.position[1].abs() < 1e-9);
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let cfg = ScenarioConfig::from_toml(TWO).unwrap();
        let run = |seed| {
            let mut st = RunStreams::new(seed);
            let truth = simulate_truth(&cfg, &mut st).unwrap();
            generate_scans(&cfg, &truth, &mut st).unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn increment_variance_matches_process_noise() {
        let (q, dt) = (0.5, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let mut inc = Vec::with_capacity(n);
        for _ in 0..n {
            let s = simulate_ssm(&[0.0, 0.0], &[2.0, 0.0], &[wpv(1, 2, q)], 2, dt, &mut rng).unwrap();
            inc.push(s[1].position[0] - s[0].position[0] - 2.0 * dt);
        }
        let mean = inc.iter().sum::<f64>() / n as f64;
        let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = discretize(MotionModel::Wpv, q, dt).1[(0, 0)];
        assert!((var - expected).abs() <= 0.05 * expected, "{var} vs {expected}");

        let mut inc = Vec::with_capacity(n);
        let seg = [MotionSegment { model: MotionModel::Wpa, q, start: 1, end: 2 }];
        for _ in 0..n {
            let s = simulate_ssm(&[0.0, 0.0], &[0.0, 0.0], &seg, 2, dt, &mut rng).unwrap();
            inc.push(s[1].position[1] - s[0].position[1]);
        }
        let var = inc.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let expected = discretize(MotionModel::Wpa, q, dt).1[(0, 0)];
        assert!((var - expected).abs() <= 0.05 * expected, "{var} vs {expected}");
    }

    #[test]
    fn acceleration_handover() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let segs =
            [wpv(1, 5, 0.1), MotionSegment { model: MotionModel::Wpa, q: 1.0, start: 6, end: 10 }, wpv(11, 15, 0.1)];
        let s = simulate_ssm(&[0.0, 0.0], &[10.0, 10.0], &segs, 15, 1.0, &mut rng).unwrap();
        assert!(s[..5].iter().all(|s| s.acceleration.norm() == 0.0));
        assert!(s[5].acceleration.norm() > 0.0);
        assert!(s[10..].iter().all(|s| s.acceleration.norm() == 0.0));
    }

    #[test]
    fn polynomial_truth() {
        let line = PolynomialPiece { start: 1, end: 20, coeffs: vec![vec![0.0, 5.0], vec![2.0, -1.0]] };
        let tr = simulate_polynomial_truth(&[line.clone()], 1.0).unwrap();
        let p = tr.position(7.0);
        assert!((p[0] - 12.0).abs() < 1e-12 && (p[1] - -1.0).abs() < 1e-12);

        let bend =
            PolynomialPiece { start: 20, end: 40, coeffs: vec![vec![38.0, -14.0], vec![2.0, -1.0], vec![0.3, 0.1]] };
        let line19 = PolynomialPiece { end: 19, ..line.clone() };
        let tr = simulate_polynomial_truth(&[line19.clone(), bend.clone()], 1.0).unwrap();
        assert!((tr.position(20.0) - DVector::from_vec(vec![38.0, -14.0])).norm() < 1e-9);
        let jump = PolynomialPiece { coeffs: vec![vec![39.0, -14.0]], ..bend };
        assert!(simulate_polynomial_truth(&[line19, jump], 1.0).is_err());
    }

    #[test]
    fn reference_truth_is_continuous() {
        let cfg = ScenarioConfig::from_toml(TWO).unwrap();
        for t in &cfg.targets {
            let TargetConfig::Polynomial { pieces } = t else { panic!("polynomial targets expected") };
            simulate_polynomial_truth(pieces, cfg.dt).unwrap();
            assert_eq!((pieces[0].start, pieces.last().unwrap().end), (1, 100));
        }
    }

    #[test]
    fn noiseless_scans_equal_truth() {
        let mut cfg = ScenarioConfig::from_toml(TWO).unwrap();
        cfg.clutter.rate = 0.0;
        cfg.measurement.noise_cov = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let mut st = RunStreams::new(1);
        let truth = simulate_truth(&cfg, &mut st).unwrap();
        let scans = generate_scans(&cfg, &truth, &mut st).unwrap();
        for s in &scans {
            assert_eq!(s.measurements.len(), 2);
            for (y, o) in s.measurements.iter().zip(&s.origins) {
                assert_eq!(*y, truth[o.unwrap()].position(s.time));
            }
        }
    }

    #[test]
    fn clutter_count_and_support() {
        let mut cfg = ScenarioConfig::from_toml(TWO).unwrap();
        cfg.steps = 10_000;
        cfg.targets = vec![TargetConfig::Polynomial {
            pieces: vec![PolynomialPiece { start: 1, end: 10_000, coeffs: vec![vec![0.0, 0.0]] }],
        }];
        let mut st = RunStreams::new(2);
        let truth = simulate_truth(&cfg, &mut st).unwrap();
        let scans = generate_scans(&cfg, &truth, &mut st).unwrap();
        let mut count = 0usize;
        for s in &scans {
            for (y, o) in s.measurements.iter().zip(&s.origins) {
                if o.is_none() {
                    count += 1;
                    let r = &cfg.clutter.region;
                    assert!((r[0][0]..r[0][1]).contains(&y[0]) && (r[1][0]..r[1][1]).contains(&y[1]));
                }
            }
        }
        let mean = count as f64 / scans.len() as f64;
        assert!((14.5..=15.5).contains(&mean), "{mean}");
    }

    #[test]
    fn scans_csv_round_trip() {
        let cfg = ScenarioConfig::from_toml(TWO).unwrap();
        let mut st = RunStreams::new(3);
        let truth = simulate_truth(&cfg, &mut st).unwrap();
        let scans = generate_scans(&cfg, &truth, &mut st).unwrap();
        let mut buf = Vec::new();
        write_scans_csv(&scans[..5], &mut buf).unwrap();
        let back = read_scans_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in back.iter().zip(&scans) {
            assert_eq!(a.origins, b.origins);
            for (x, y) in a.measurements.iter().zip(&b.measurements) {
                assert!((x - y).norm() <= 1e-12 * y.norm().max(1.0));
            }
        }
    }

    #[test]
    fn hermite_interpolation_hits_samples() {
        let cfg = ScenarioConfig::from_toml(SINGLE).unwrap();
        let mut st = RunStreams::new(4);
        let truth = simulate_truth(&cfg, &mut st).unwrap();
        let TruthTrajectory::Sampled { times, states } = &truth[0] else { panic!() };
        for (t, s) in times.iter().zip(states) {
            assert_eq!(truth[0].position(*t), s.position);
        }
    }
}
