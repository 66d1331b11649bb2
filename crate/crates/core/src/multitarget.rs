//! Multi-target tracking with a fixed set of targets: global nearest
//! neighbour association per scan followed by independent per-track refits.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::assignment::solve_gated;
use crate::error::{Error, Result};
use crate::fit::{FitResult, Solver};
use crate::poly_model::Polynomial;
use crate::wls::{mahalanobis_sq, prediction_covariance, FitWindow, Variance};

/// Chi-square quantile at probability `prob` for `dof` degrees of freedom.
pub fn chi2_gate(dof: usize, prob: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(dof as f64).expect("positive degrees of freedom").inverse_cdf(prob)
}

/// One associated measurement with its noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub step: i64,
    pub time: f64,
    pub value: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: usize,
    /// Latest fit; `None` until the first associated measurement.
    pub fit: Option<FitResult>,
    /// Estimate used before any measurement was associated.
    pub initial: DVector<f64>,
    pub initial_cov: DMatrix<f64>,
    /// Associated measurements, oldest first.
    pub buffer: VecDeque<Sample>,
    pub misses: usize,
    /// Per-track weight; overrides the solver's policy when set.
    pub lambda: Option<f64>,
}

impl Track {
    pub fn new(id: usize, initial: DVector<f64>, initial_cov: DMatrix<f64>) -> Self {
        Self { id, fit: None, initial, initial_cov, buffer: VecDeque::new(), misses: 0, lambda: None }
    }

    /// Predicted position at `t`.
    pub fn predict(&self, t: f64) -> DVector<f64> {
        match &self.fit {
            Some(f) => f.poly.evaluate(t),
            None => self.initial.clone(),
        }
    }

    /// Covariance of the predicted position at `t`. Until two measurements
    /// are buffered the fit cannot capture motion, so the prior covariance
    /// is added.
    pub fn prediction_cov(&self, t: f64) -> DMatrix<f64> {
        let fitted = match &self.fit {
            Some(f) => match &f.covariance {
                Some(cov) => prediction_covariance(&f.poly, cov, t),
                None => DMatrix::zeros(self.initial.len(), self.initial.len()),
            },
            None => return self.initial_cov.clone(),
        };
        if self.buffer.len() < 2 {
            fitted + &self.initial_cov
        } else {
            fitted
        }
    }

    pub fn estimate(&self, t: f64) -> DVector<f64> {
        self.predict(t)
    }
}

#[derive(Debug, Clone)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
    /// Sliding window capacity `T_w`.
    pub capacity: usize,
    pub dt: f64,
    /// Measurement noise covariance.
    pub noise_cov: DMatrix<f64>,
}

impl TrackSet {
    pub fn new(tracks: Vec<Track>, capacity: usize, dt: f64, noise_cov: DMatrix<f64>) -> Result<Self> {
        let mut ids: Vec<usize> = tracks.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("track ids must be unique".into()));
        }
        if capacity == 0 || !(dt > 0.0) {
            return Err(Error::InvalidParameter("window capacity and dt must be positive".into()));
        }
        Ok(Self { tracks, capacity, dt, noise_cov })
    }

    /// Fit window of a track's buffered measurements.
    pub fn window_of(&self, track: &Track) -> Result<FitWindow> {
        let t = track.buffer.len();
        let m = self.noise_cov.nrows();
        let times: Vec<f64> = track.buffer.iter().map(|s| s.time).collect();
        let meas = DMatrix::from_fn(t, m, |k, j| track.buffer[k].value[j]);
        let first = &track.buffer[0].cov;
        let variance = if is_scaled_identity(first) && track.buffer.iter().all(|s| s.cov == *first) {
            Variance::Isotropic(first[(0, 0)])
        } else {
            Variance::Blocks(track.buffer.iter().map(|s| s.cov.clone()).collect())
        };
        FitWindow::new(times, meas, variance, self.dt)
    }
}

fn is_scaled_identity(m: &DMatrix<f64>) -> bool {
    let d = m[(0, 0)];
    m.iter().enumerate().all(|(k, v)| if k % (m.nrows() + 1) == 0 { *v == d } else { *v == 0.0 })
}

/// Measurement-to-track pairs of one scan.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(track id, measurement index)`.
    pub pairs: Vec<(usize, usize)>,
    /// Measurements left unassociated.
    pub clutter: Vec<usize>,
}

impl Assignment {
    /// Each measurement and each track appears at most once.
    pub fn is_consistent(&self) -> bool {
        let mut ids: Vec<_> = self.pairs.iter().map(|p| p.0).collect();
        let mut meas: Vec<_> = self.pairs.iter().map(|p| p.1).chain(self.clutter.iter().copied()).collect();
        let (n_ids, n_meas) = (ids.len(), meas.len());
        ids.sort_unstable();
        ids.dedup();
        meas.sort_unstable();
        meas.dedup();
        ids.len() == n_ids && meas.len() == n_meas
    }

    pub fn measurement_for(&self, track_id: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == track_id).map(|p| p.1)
    }
}

/// Squared Mahalanobis distance of every track prediction to every
/// measurement. `covs` gives per-measurement noise; the set's noise is used
/// when it is `None`.
pub fn association_costs(
    tracks: &TrackSet,
    scan: &[DVector<f64>],
    covs: Option<&[DMatrix<f64>]>,
    t: f64,
) -> Result<DMatrix<f64>> {
    let mut cost = DMatrix::zeros(tracks.tracks.len(), scan.len());
    for (i, track) in tracks.tracks.iter().enumerate() {
        let p = track.prediction_cov(t);
        let pred = track.predict(t);
        for (j, y) in scan.iter().enumerate() {
            let r = covs.map_or(&tracks.noise_cov, |c| &c[j]);
            cost[(i, j)] = mahalanobis_sq(&(y - &pred), &(r + &p))?;
        }
    }
    Ok(cost)
}

/// Global nearest neighbour: optimal one-to-one assignment of measurements
/// to track predictions, dropping pairs whose squared distance exceeds `gate`.
pub fn associate_gnn(tracks: &TrackSet, scan: &[DVector<f64>], t: f64, gate: f64) -> Result<Assignment> {
    associate_with_cov(tracks, scan, None, t, gate)
}

fn associate_with_cov(
    tracks: &TrackSet,
    scan: &[DVector<f64>],
    covs: Option<&[DMatrix<f64>]>,
    t: f64,
    gate: f64,
) -> Result<Assignment> {
    let cost = association_costs(tracks, scan, covs, t)?;
    let rows = solve_gated(&cost, gate);
    let pairs: Vec<(usize, usize)> =
        rows.iter().enumerate().filter_map(|(i, j)| j.map(|j| (tracks.tracks[i].id, j))).collect();
    let clutter = (0..scan.len()).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect();
    Ok(Assignment { pairs, clutter })
}

/// Outcome of one tracking step.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub assignment: Assignment,
    /// Wall-clock time spent inside solver calls.
    pub solver_time: Duration,
    pub errors: Vec<(usize, Error)>,
}

/// Associates `scan` (taken at step `step`, time `t`), slides every window,
/// and refits each track on its own window.
pub fn step_tracks(
    tracks: &mut TrackSet,
    scan: &[DVector<f64>],
    step: i64,
    t: f64,
    solver: &Solver,
    gate: f64,
) -> Result<StepReport> {
    step_tracks_with_cov(tracks, scan, None, step, t, solver, gate)
}

/// [`step_tracks`] with a noise covariance per measurement, e.g. for
/// converted range-bearing measurements.
pub fn step_tracks_with_cov(
    tracks: &mut TrackSet,
    scan: &[DVector<f64>],
    covs: Option<&[DMatrix<f64>]>,
    step: i64,
    t: f64,
    solver: &Solver,
    gate: f64,
) -> Result<StepReport> {
    if covs.is_some_and(|c| c.len() != scan.len()) {
        return Err(Error::Dimension("one covariance per measurement required".into()));
    }
    let assignment = associate_with_cov(tracks, scan, covs, t, gate)?;
    debug_assert!(assignment.is_consistent());
    let oldest = step - tracks.capacity as i64 + 1;
    let mut report = StepReport { assignment, ..Default::default() };
    for idx in 0..tracks.tracks.len() {
        let id = tracks.tracks[idx].id;
        {
            let track = &mut tracks.tracks[idx];
            match report.assignment.measurement_for(id) {
                Some(j) => track.buffer.push_back(Sample {
                    step,
                    time: t,
                    value: scan[j].clone(),
                    cov: covs.map_or_else(|| tracks.noise_cov.clone(), |c| c[j].clone()),
                }),
                None => track.misses += 1,
            }
            while track.buffer.front().is_some_and(|s| s.step < oldest) {
                track.buffer.pop_front();
            }
        }
        let track = &tracks.tracks[idx];
        if track.buffer.is_empty() {
            continue;
        }
        let fitted = tracks.window_of(track).and_then(|w| {
            let solver = with_track_lambda(solver, track.lambda);
            let start = Instant::now();
            let r = solver.fit(&w);
            report.solver_time += start.elapsed();
            r
        });
        match fitted {
            Ok(f) => tracks.tracks[idx].fit = Some(f),
            Err(e) => report.errors.push((id, e)),
        }
    }
    Ok(report)
}

fn with_track_lambda(solver: &Solver, lambda: Option<f64>) -> Solver {
    use crate::fit::LambdaPolicy::Fixed;
    match (solver, lambda) {
        (_, None) | (Solver::FixedOrder(_), _) => solver.clone(),
        (Solver::Orls(_), Some(l)) => Solver::Orls(Fixed(l)),
        (Solver::L0Newton { max_order, params, .. }, Some(l)) => {
            Solver::L0Newton { max_order: *max_order, lambda: Fixed(l), params: params.clone() }
        }
        (Solver::L1Admm { max_order, params, .. }, Some(l)) => {
            Solver::L1Admm { max_order: *max_order, lambda: Fixed(l), params: params.clone() }
        }
    }
}

/// One track's contribution to the joint objective: its trajectory, weight
/// and penalty value (order+1, nonzero count or l1 norm, per solver).
#[derive(Debug, Clone)]
pub struct TrackTerm {
    pub poly: Polynomial,
    pub lambda: f64,
    pub penalty: f64,
}

/// Joint multi-trajectory objective of a candidate association over a window:
/// the Mahalanobis fit of every track to its associated measurements plus each
/// track's penalty. `assignments[s]` holds `(track index, measurement index)`
/// pairs for `scans[s]`.
pub fn joint_cost(
    terms: &[TrackTerm],
    scans: &[(f64, Vec<DVector<f64>>)],
    assignments: &[Vec<(usize, usize)>],
    noise_cov: &DMatrix<f64>,
) -> Result<f64> {
    if scans.len() != assignments.len() {
        return Err(Error::Dimension("one assignment per scan required".into()));
    }
    let mut total: f64 = terms.iter().map(|t| t.lambda * t.penalty).sum();
    for ((t, scan), pairs) in scans.iter().zip(assignments) {
        let a = Assignment { pairs: pairs.clone(), clutter: vec![] };
        if !a.is_consistent() {
            return Err(Error::InvalidParameter(format!("association at t = {t} reuses a track or measurement")));
        }
        for &(i, j) in pairs {
            let term = terms.get(i).ok_or(Error::Dimension(format!("no track {i}")))?;
            let y = scan.get(j).ok_or(Error::Dimension(format!("no measurement {j} at t = {t}")))?;
            total += mahalanobis_sq(&(y - term.poly.evaluate(*t)), noise_cov)?;
        }
    }
    Ok(total)
}
