use std::fs;

use tfot::bench::{metrics_from_tracks, read_tracks_csv, run_experiment, ExperimentSpec};
use tfot::Solver;

const SINGLE: &str = include_str!("../scenarios/single_target.toml");
const TWO: &str = include_str!("../scenarios/two_target.toml");

fn small_spec(text: &str, runs: usize, workers: usize, dir: &std::path::Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(text).unwrap();
    spec.runs = runs;
    spec.workers = workers;
    spec.solvers =
        vec![Solver::parse("fixed:2").unwrap(), Solver::parse("orls").unwrap(), Solver::parse("l0").unwrap()];
    spec.out_dir = Some(dir.to_path_buf());
    spec
}

#[test]
fn outputs_are_identical_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&small_spec(TWO, 4, 1, a.path())).unwrap();
    run_experiment(&small_spec(TWO, 4, 3, b.path())).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "manifest.json"));
    for name in names {
        let file = name.to_string_lossy();
        // Wall-clock timings differ between runs.
        if file.starts_with("summary") {
            continue;
        }
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{file} differs");
    }
}

#[test]
fn stored_tracks_reproduce_the_metric_series() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(SINGLE, 3, 0, dir.path());
    let report = run_experiment(&spec).unwrap();
    for series in &report.series {
        let file = fs::File::open(dir.path().join(format!("tracks_{}.csv", series.label))).unwrap();
        let rows = read_tracks_csv(file).unwrap();
        let again = metrics_from_tracks(&spec.scenario, spec.seed_base, &rows).unwrap();
        for (x, y) in series.rmse.iter().zip(&again.rmse) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{}: {x} vs {y}", series.label);
        }
        for (x, y) in series.ospa.iter().zip(&again.ospa) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
        for (x, y) in series.star_id.iter().zip(&again.star_id) {
            match (x, y) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
                (None, None) => {}
                _ => panic!("star-id coverage differs"),
            }
        }
    }
}

#[test]
fn manifest_records_seeds_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(SINGLE, 2, 0, dir.path());
    run_experiment(&spec).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!(spec.seeds()));
    assert_eq!(manifest["scenario_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["runs"], 2);
}
