use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

mod config;
mod expr;
mod run;

use config::ExperimentConfig;
use run::{Outcome, RunError, Table};

const EXIT_SOLVER: u8 = 2;
const EXIT_CONFIG: u8 = 3;

/// Batch driver for critical-exponent experiments.
#[derive(Parser)]
#[command(name = "critlab", version)]
struct Cli {
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Subcommand)]
enum Experiment {
    /// Subcritical minimizer at a fixed exponent.
    Solve(Opts),
    /// λ at the critical exponent against the ceiling.
    Classify(Opts),
    /// Flip point of the classification along a path.
    Bisect(Opts),
    /// Green function profile.
    Green(Opts),
    /// Mass of the Green function (dimension 3).
    Mass(Opts),
    /// Concentration diagnostics along the continuation family.
    Blowup(Opts),
    /// The concentrating extremal family on the sphere.
    Counterexample(Opts),
    /// Test-function quotients and the maximum-point criterion.
    Testfn(Opts),
    /// Criterion at x0 for the regularizing family f_t.
    Probe(Opts),
}

impl Experiment {
    fn parts(&self) -> (&'static str, &Opts) {
        match self {
            Experiment::Solve(o) => ("solve", o),
            Experiment::Classify(o) => ("classify", o),
            Experiment::Bisect(o) => ("bisect", o),
            Experiment::Green(o) => ("green", o),
            Experiment::Mass(o) => ("mass", o),
            Experiment::Blowup(o) => ("blowup", o),
            Experiment::Counterexample(o) => ("counterexample", o),
            Experiment::Testfn(o) => ("testfn", o),
            Experiment::Probe(o) => ("probe", o),
        }
    }
}

macro_rules! options {
    ($($field:ident),* $(,)?) => {
        /// Every flag mirrors a config key of the same name.
        #[derive(Args)]
        struct Opts {
            /// `key = value` file; flags override its entries.
            #[arg(long)]
            config: Option<PathBuf>,
            $(
                #[arg(long)]
                $field: Option<String>,
            )*
        }

        impl Opts {
            fn overrides(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field).to_string(), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

options!(
    manifold, dim, nodes, size, h, f, q, tol, band, pole, x0, path, eta, t_min, t_max, tol_t, alpha, scan, delta,
    schedule, members, radii, deltas, eps, k, t_list, classify, json, csv,
);

fn write_table(path: &str, table: &Table) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    w.write_record(&table.header).map_err(|e| e.to_string())?;
    for row in &table.rows {
        w.write_record(row).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn emit(cfg: &ExperimentConfig, out: Outcome) -> Result<(), String> {
    let report = json!({
        "experiment": cfg.experiment,
        "config": cfg,
        "tolerances": out.tolerances,
        "result": out.result,
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    match cfg.str("json") {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| format!("{path}: {e}"))?,
        None => println!("{text}"),
    }
    if let (Some(path), Some(table)) = (cfg.str("csv"), &out.table) {
        write_table(path, table).map_err(|e| format!("{path}: {e}"))?;
    }
    Ok(())
}

fn set_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var("CRITLAB_THREADS") {
        let n: usize = v.parse().map_err(|_| format!("CRITLAB_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            return Err("CRITLAB_THREADS must be positive".into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = set_threads() {
        eprintln!("config error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let (name, opts) = cli.experiment.parts();
    let file = match &opts.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("config error: {}: {e}", p.display());
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => None,
    };
    let cfg = match ExperimentConfig::new(name, file, &opts.overrides()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match run::run(&cfg) {
        Ok(out) => match emit(&cfg, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("output error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Err(RunError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(RunError::Solver(e)) => {
            eprintln!("solver error: {e}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}
