//! Track two maneuvering targets in clutter: gated nearest-neighbour
//! association followed by a sliding-window fit per track.

use nalgebra::DMatrix;
use tfot::metrics::{ospa, Trajectory};
use tfot::multitarget::{chi2_gate, step_tracks, Track, TrackSet};
use tfot::scenario::{generate_scans, simulate_truth, RunStreams, ScenarioConfig};
use tfot::{LambdaPolicy, Solver};

fn main() -> tfot::Result<()> {
    let cfg = ScenarioConfig::from_toml(include_str!("../scenarios/two_target.toml"))?;
    let mut streams = RunStreams::new(cfg.seed);
    let truth = simulate_truth(&cfg, &mut streams)?;
    let scans = generate_scans(&cfg, &truth, &mut streams)?;

    let cov = DMatrix::identity(2, 2) * cfg.initial_std.powi(2);
    let tracks = truth.iter().enumerate().map(|(i, t)| Track::new(i, t.position(cfg.time(1)), cov.clone())).collect();
    let noise = cfg.measurement_model()?.noise_cov;
    let mut set = TrackSet::new(tracks, cfg.window, cfg.dt, noise)?;
    let gate = chi2_gate(2, cfg.gate_probability);
    let solver = Solver::Orls(LambdaPolicy::GeometricMean);

    let mut total = 0.0;
    for scan in &scans {
        let report = step_tracks(&mut set, &scan.measurements, scan.step as i64, scan.time, &solver, gate)?;
        let est: Vec<_> = set.tracks.iter().map(|t| t.estimate(scan.time)).collect();
        let gt: Vec<_> = truth.iter().map(|t| t.position(scan.time)).collect();
        let d = ospa(&est, &gt, cfg.metrics.ospa_cutoff, cfg.metrics.ospa_order)?;
        total += d;
        if scan.step % 10 == 0 {
            let missed = set.tracks.len() - report.assignment.pairs.len();
            println!(
                "step {:>3}: ospa {d:6.3} m, {} measurements, {missed} tracks unassigned",
                scan.step,
                scan.measurements.len()
            );
        }
    }
    println!("mean ospa {:.3} m", total / scans.len() as f64);
    Ok(())
}
