//! gaugelab: batch experiment driver for finite-volume Hamiltonian lattice
//! gauge theory.
//!
//! Usage:
//!   gaugelab <experiment> [--config PATH] [--out DIR] [--seed N] [--subadditivity]
//!
//! Experiments: lattice-audit | lr-verify | converge | dyson | ground | gauss | run
//!
//! Exit codes: 0 success, 1 a check failed, 2 invalid input (bad config,
//! unknown experiment, precondition or dimension-budget refusal).

mod config;
mod experiments;

use config::Config;
use experiments::{dispatch, Outcome, RunContext};
use std::path::PathBuf;
use std::process::ExitCode;

struct Args {
    experiment: String,
    config_path: Option<PathBuf>,
    out_dir: PathBuf,
    seed: u64,
    subadditivity: bool,
}

fn parse_args() -> Result<Args, String> {
    let mut it = std::env::args().skip(1);
    let experiment = it
        .next()
        .ok_or_else(|| "missing experiment name; see --help".to_string())?;
    if experiment == "--help" || experiment == "-h" {
        return Err(usage());
    }
    let mut args = Args {
        experiment,
        config_path: None,
        out_dir: PathBuf::from("out"),
        seed: 0,
        subadditivity: false,
    };
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--config" => {
                let v = it.next().ok_or("--config needs a path")?;
                args.config_path = Some(PathBuf::from(v));
            }
            "--out" => {
                let v = it.next().ok_or("--out needs a directory")?;
                args.out_dir = PathBuf::from(v);
            }
            "--seed" => {
                let v = it.next().ok_or("--seed needs an integer")?;
                args.seed = v.parse().map_err(|e| format!("--seed: {e}"))?;
            }
            "--subadditivity" => args.subadditivity = true,
            other => return Err(format!("unknown flag `{other}`\n{}", usage())),
        }
    }
    Ok(args)
}

fn usage() -> String {
    "usage: gaugelab <lattice-audit|lr-verify|converge|dyson|ground|gauss|run> \
     [--config PATH] [--out DIR] [--seed N] [--subadditivity]"
        .to_string()
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{msg}");
            return ExitCode::from(2);
        }
    };
    let config = match &args.config_path {
        Some(p) => match Config::from_file(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        },
        None => Config::parse("").expect("empty config parses"),
    };
    let ctx = RunContext {
        config: &config,
        out_dir: &args.out_dir,
        seed: args.seed,
    };
    match dispatch(&args.experiment, &ctx, args.subadditivity) {
        Ok(Outcome::Success) => {
            println!("{}: all checks passed", args.experiment);
            ExitCode::SUCCESS
        }
        Ok(Outcome::ChecksFailed) => {
            eprintln!("{}: one or more checks FAILED (see CSVs)", args.experiment);
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{}: {e}", args.experiment);
            if e.is_invalid_input() {
                ExitCode::from(2)
            } else {
                // Internal numerical failures are reported as invalid runs
                // rather than check failures.
                ExitCode::from(2)
            }
        }
    }
}
