//! Evaluation metrics: position RMSE over Monte-Carlo runs, OSPA between
//! point sets, and the trajectory-level Star-ID and its time average.
//!
//! Star-ID is computed as the time integral over a window of the per-instant
//! OSPA distance (cutoff `star_cutoff`) between the estimated and the true
//! trajectory sets, by the trapezoid rule. The trajectory-level cutoff is
//! carried in the configuration but not used: with a fixed set of targets no
//! identity mismatch can arise.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assignment::solve_assignment;
use crate::error::{Error, Result};
use crate::poly_model::Polynomial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub ospa_cutoff: f64,
    pub ospa_order: f64,
    pub star_cutoff: f64,
    pub trajectory_cutoff: f64,
    /// Trapezoid intervals per sampling interval.
    pub substeps: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { ospa_cutoff: 20.0, ospa_order: 2.0, star_cutoff: 20.0, trajectory_cutoff: 20.0, substeps: 10 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ospa_cutoff > 0.0 && self.star_cutoff > 0.0 && self.trajectory_cutoff > 0.0) {
            return Err(Error::InvalidParameter("metric cutoffs must be positive".into()));
        }
        if !(self.ospa_order >= 1.0) || self.substeps == 0 {
            return Err(Error::InvalidParameter("metric order must be >= 1 and substeps >= 1".into()));
        }
        Ok(())
    }
}

/// Anything that gives a position at a continuous time.
pub trait Trajectory {
    fn position(&self, t: f64) -> DVector<f64>;
}

impl Trajectory for Polynomial {
    fn position(&self, t: f64) -> DVector<f64> {
        self.evaluate(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseSeries {
    pub per_step: Vec<f64>,
    pub average: f64,
}

/// Per-step root mean squared position error over runs, and its time
/// average. Inputs are indexed `[run][step]`.
pub fn rmse_position(estimates: &[Vec<DVector<f64>>], truth: &[Vec<DVector<f64>>]) -> Result<RmseSeries> {
    if estimates.is_empty() || estimates.len() != truth.len() {
        return Err(Error::Dimension(format!("{} estimate runs against {} truth runs", estimates.len(), truth.len())));
    }
    let steps = estimates[0].len();
    if estimates.iter().chain(truth).any(|r| r.len() != steps) || steps == 0 {
        return Err(Error::Dimension("every run must cover the same nonzero number of steps".into()));
    }
    let runs = estimates.len() as f64;
    let mut per_step = Vec::with_capacity(steps);
    for k in 0..steps {
        let mut sq = 0.0;
        for (e, t) in estimates.iter().zip(truth) {
            if e[k].len() != t[k].len() {
                return Err(Error::Dimension("position dimensions differ".into()));
            }
            sq += (&e[k] - &t[k]).norm_squared();
        }
        per_step.push((sq / runs).sqrt());
    }
    let average = per_step.iter().sum::<f64>() / steps as f64;
    Ok(RmseSeries { per_step, average })
}

/// OSPA distance of order `p` with cutoff `c`.
pub fn ospa(x: &[DVector<f64>], y: &[DVector<f64>], c: f64, p: f64) -> Result<f64> {
    if !(c > 0.0) || !(p >= 1.0) {
        return Err(Error::InvalidParameter("ospa needs c > 0 and p >= 1".into()));
    }
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let (n, m) = (small.len(), large.len());
    if m == 0 {
        return Ok(0.0);
    }
    let cost = DMatrix::from_fn(n, m, |i, j| (&small[i] - &large[j]).norm().min(c).powf(p));
    let rows = solve_assignment(&cost);
    let matched: f64 = rows.iter().enumerate().filter_map(|(i, j)| j.map(|j| cost[(i, j)])).sum();
    let total = matched + c.powf(p) * (m - n) as f64;
    Ok((total / m as f64).powf(1.0 / p))
}

/// Integral over `[t0, t1]` of the per-instant OSPA distance between the
/// estimated and true trajectories, in distance times time units.
pub fn star_id(
    estimated: &[&dyn Trajectory],
    truth: &[&dyn Trajectory],
    t0: f64,
    t1: f64,
    dt: f64,
    config: &MetricConfig,
) -> Result<f64> {
    config.validate()?;
    if !(t1 > t0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("empty integration window [{t0}, {t1}]")));
    }
    let intervals = (((t1 - t0) / dt).ceil() as usize).max(1) * config.substeps;
    let h = (t1 - t0) / intervals as f64;
    let at = |t: f64| -> Result<f64> {
        let e: Vec<_> = estimated.iter().map(|f| f.position(t)).collect();
        let g: Vec<_> = truth.iter().map(|f| f.position(t)).collect();
        ospa(&e, &g, config.star_cutoff, config.ospa_order)
    };
    let mut sum = 0.5 * (at(t0)? + at(t1)?);
    for i in 1..intervals {
        sum += at(t0 + i as f64 * h)?;
    }
    Ok(sum * h)
}

/// Star-ID divided by the window length.
pub fn ta_star_id(star: f64, length: f64) -> Result<f64> {
    if !(length > 0.0) {
        return Err(Error::InvalidParameter("window length must be positive".into()));
    }
    Ok(star / length)
}

/// Per-step metric values, written as `step,metric,value` rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<(i64, String, f64)>,
}

impl MetricTable {
    pub fn push(&mut self, step: i64, metric: &str, value: f64) {
        self.rows.push((step, metric.to_string(), value));
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "metric", "value"])?;
        for (step, metric, value) in &self.rows {
            w.write_record([step.to_string(), metric.clone(), format!("{value}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut table = MetricTable::default();
        for rec in r.records() {
            let rec = rec?;
            let parse_err = || Error::Io(format!("malformed metric row {rec:?}"));
            let step = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let value = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            table.push(step, rec.get(1).ok_or_else(parse_err)?, value);
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Offset<'a>(&'a Polynomial, DVector<f64>);

    impl Trajectory for Offset<'_> {
        fn position(&self, t: f64) -> DVector<f64> {
            self.0.evaluate(t) + &self.1
        }
    }

    fn line() -> Polynomial {
        Polynomial::new(dmatrix![1.0, -2.0; 3.0, 0.5], 0.0, 1.0).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let truth = vec![vec![dvector![1.0, 2.0], dvector![3.0, 4.0]]; 2];
        assert_eq!(rmse_position(&truth, &truth).unwrap().average, 0.0);
        let off: Vec<Vec<_>> = truth.iter().map(|r| r.iter().map(|p| p + dvector![3.0, 0.0]).collect()).collect();
        let r = rmse_position(&off, &truth).unwrap();
        assert!((r.average - 3.0).abs() < 1e-12);
        let est = vec![vec![dvector![0.0]], vec![dvector![2.0]]];
        let tru = vec![vec![dvector![0.0]], vec![dvector![0.0]]];
        assert!((rmse_position(&est, &tru).unwrap().per_step[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!(rmse_position(&est, &tru[..1]).is_err());
    }

    #[test]
    fn ospa_examples() {
        let x = vec![dvector![1.0, 2.0], dvector![5.0, -1.0]];
        assert_eq!(ospa(&x, &x, 20.0, 2.0).unwrap(), 0.0);
        assert_eq!(ospa(&[dvector![1.0, 1.0]], &[], 20.0, 2.0).unwrap(), 20.0);
        assert_eq!(ospa(&[dvector![0.0]], &[dvector![3.0]], 20.0, 2.0).unwrap(), 3.0);
        assert_eq!(ospa(&[], &[], 20.0, 2.0).unwrap(), 0.0);
        assert!(ospa(&x, &x, 0.0, 2.0).is_err());
    }

    #[test]
    fn star_id_examples() {
        let cfg = MetricConfig::default();
        let p = line();
        assert_eq!(star_id(&[&p], &[&p], 0.0, 10.0, 1.0, &cfg).unwrap(), 0.0);
        let shifted = Offset(&p, dvector![3.0, 0.0]);
        let s = star_id(&[&shifted], &[&p], 0.0, 10.0, 1.0, &cfg).unwrap();
        assert!((s - 30.0).abs() < 1e-9);
        assert!((ta_star_id(s, 10.0).unwrap() - 3.0).abs() < 1e-10);
        let far = Offset(&p, dvector![0.0, 25.0]);
        let s = star_id(&[&far], &[&p], 0.0, 10.0, 1.0, &cfg).unwrap();
        assert!((s - 200.0).abs() < 1e-9);
        assert!((ta_star_id(s, 10.0).unwrap() - 20.0).abs() < 1e-10);
        assert_eq!(ta_star_id(0.0, 10.0).unwrap(), 0.0);
        assert!(star_id(&[&p], &[&p], 3.0, 3.0, 1.0, &cfg).is_err());
        assert!(ta_star_id(1.0, 0.0).is_err());
    }

    #[test]
    fn star_id_refinement_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let order = rng.random_range(0..=3);
            let mk = |rng: &mut ChaCha8Rng, s: f64| {
                Polynomial::new(
                    DMatrix::from_fn(order + 1, 2, |i, _| rng.random_range(-s..s) / (1 + i * i) as f64),
                    0.0,
                    1.0,
                )
                .unwrap()
            };
            let truth = [mk(&mut rng, 50.0), mk(&mut rng, 50.0)];
            let est: Vec<_> = truth
                .iter()
                .map(|t| Polynomial::new(t.coeffs() + mk(&mut rng, 4.0).coeffs(), 0.0, 1.0).unwrap())
                .collect();
            let e: Vec<&dyn Trajectory> = est.iter().map(|p| p as &dyn Trajectory).collect();
            let g: Vec<&dyn Trajectory> = truth.iter().map(|p| p as &dyn Trajectory).collect();
            let coarse = star_id(&e, &g, 0.0, 9.0, 1.0, &MetricConfig { substeps: 1, ..Default::default() }).unwrap();
            let fine = star_id(&e, &g, 0.0, 9.0, 1.0, &MetricConfig { substeps: 10, ..Default::default() }).unwrap();
            assert!((coarse - fine).abs() <= 0.01 * fine.max(1e-9), "{coarse} vs {fine}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut t = MetricTable::default();
        t.push(2, "ospa", 1.5);
        t.push(3, "rmse", 0.25);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("step,metric,value\n"));
        assert_eq!(MetricTable::read_csv(&buf[..]).unwrap(), t);
    }

    fn points(v: &[f64]) -> Vec<DVector<f64>> {
        v.chunks(2).map(|c| dvector![c[0], c[1]]).collect()
    }

    proptest! {
        #[test]
        fn ospa_symmetric_and_bounded(
            a in prop::collection::vec(-40.0f64..40.0, 0..12),
            b in prop::collection::vec(-40.0f64..40.0, 0..12),
        ) {
            let (x, y) = (points(&a[..a.len() / 2 * 2]), points(&b[..b.len() / 2 * 2]));
            let d1 = ospa(&x, &y, 20.0, 2.0).unwrap();
            let d2 = ospa(&y, &x, 20.0, 2.0).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-12);
            prop_assert!((0.0..=20.0 + 1e-12).contains(&d1));
            prop_assert!(ospa(&x, &x, 20.0, 2.0).unwrap() < 1e-12);
        }

        #[test]
        fn singleton_ospa_is_clipped_distance(a in prop::collection::vec(-40.0f64..40.0, 4)) {
            let (x, y) = (dvector![a[0], a[1]], dvector![a[2], a[3]]);
            let d = ospa(&[x.clone()], &[y.clone()], 20.0, 2.0).unwrap();
            prop_assert!((d - (x - y).norm().min(20.0)).abs() < 1e-12);
        }
    }
}
