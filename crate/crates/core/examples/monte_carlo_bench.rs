//! A short Monte-Carlo comparison of the reference solvers on the
//! single-target scenario, with outputs written to a directory.

use tfot::bench::{format_summary, run_experiment, validate_spec, ExperimentSpec};

fn main() -> tfot::Result<()> {
    let mut spec = ExperimentSpec::new(include_str!("../scenarios/single_target.toml"))?;
    spec.runs = 10;
    spec.out_dir = std::env::args().nth(1).map(Into::into);
    for d in validate_spec(&spec)? {
        eprintln!("{:?}: {}", d.severity, d.message);
    }
    let report = run_experiment(&spec)?;
    print!("{}", format_summary(&report));
    if let Some(dir) = &spec.out_dir {
        println!("outputs in {}", dir.display());
    }
    Ok(())
}
