use std::fs::File;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tfot::bench::{
    format_summary, metrics_from_tracks, read_tracks_csv, run_experiment, scenario_window, series_table, validate_spec,
    ExperimentSpec, Severity,
};
use tfot::scenario::{generate_scans, simulate_truth, write_scans_csv, RunStreams, ScenarioConfig};
use tfot::Solver;

#[derive(Parser)]
#[command(name = "tfot", version, about = "Polynomial trajectory fitting and tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write its scans as CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one window of one target's measurements and print the result.
    Fit {
        #[arg(long)]
        scenario: PathBuf,
        /// `fixed:2`, `orls`, `orls:lambda=3`, `l0:order=3,tau=1`, `l1:order=3,rho=1`.
        #[arg(long, default_value = "orls")]
        solver: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Last step of the window.
        #[arg(long, default_value_t = 10)]
        step: usize,
        #[arg(long, default_value_t = 0)]
        target: usize,
        #[arg(long)]
        strict_theory: bool,
    },
    /// Run a Monte-Carlo experiment.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        /// Repeatable; the reference set of five solvers when omitted.
        #[arg(long)]
        solver: Vec<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict_theory: bool,
        /// Worker threads; 0 uses all cores.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Recompute metrics from a stored `tracks_<solver>.csv`.
    Metrics {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        /// Seed base of the stored experiment.
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn solvers(specs: &[String], strict: bool) -> tfot::Result<Vec<Solver>> {
    let mut out = if specs.is_empty() {
        Solver::reference_set()
    } else {
        specs.iter().map(|s| Solver::parse(s)).collect::<tfot::Result<_>>()?
    };
    if strict {
        for s in &mut out {
            if let Solver::L0Newton { params, .. } = s {
                params.strict = true;
            }
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> tfot::Result<()> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let mut streams = RunStreams::new(seed.unwrap_or(cfg.seed));
            let truth = simulate_truth(&cfg, &mut streams)?;
            let scans = generate_scans(&cfg, &truth, &mut streams)?;
            match out {
                Some(path) => write_scans_csv(&scans, File::create(path)?),
                None => write_scans_csv(&scans, io::stdout().lock()),
            }
        }
        Command::Fit { scenario, solver, seed, step, target, strict_theory } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let solver = solvers(&[solver], strict_theory)?.remove(0);
            let window = scenario_window(&cfg, seed.unwrap_or(cfg.seed), target, step)?;
            let fit = solver.fit(&window)?;
            println!("{fit}");
            Ok(())
        }
        Command::Bench { scenario, solver, runs, seed, out, strict_theory, workers } => {
            let mut spec = ExperimentSpec::load(&scenario)?;
            spec.solvers = solvers(&solver, strict_theory)?;
            spec.runs = runs.unwrap_or(spec.runs);
            spec.seed_base = seed.unwrap_or(spec.seed_base);
            spec.out_dir = out;
            spec.strict = strict_theory;
            spec.workers = workers;
            for d in validate_spec(&spec)? {
                let tag = if d.severity == Severity::Error { "error" } else { "warning" };
                eprintln!("{tag}: {}", d.message);
            }
            let report = run_experiment(&spec)?;
            print!("{}", format_summary(&report));
            if !report.failures.is_empty() {
                eprintln!("{} solver failures, see manifest.json", report.failures.len());
            }
            Ok(())
        }
        Command::Metrics { scenario, tracks, seed, out } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            let rows = read_tracks_csv(File::open(tracks)?)?;
            let series = metrics_from_tracks(&cfg, seed.unwrap_or(cfg.seed), &rows)?;
            let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let star: Vec<f64> = series.star_id.iter().flatten().copied().collect();
            let ta: Vec<f64> = series.ta_star_id.iter().flatten().copied().collect();
            eprintln!(
                "rmse {:.4}  ospa {:.4}  star_id {:.4}  ta_star_id {:.4}",
                avg(&series.rmse),
                avg(&series.ospa),
                avg(&star),
                avg(&ta)
            );
            let table = series_table(&series);
            match out {
                Some(path) => table.save(&path),
                None => table.write_csv(io::stdout().lock()),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
