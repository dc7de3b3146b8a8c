use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apprentice::baseline::{exact_al_solve, full_subgradient_solve, FALLBACK_ITERATIONS};
use apprentice::experiment::{
    read_basis, read_cost, read_feature_expectation, read_features, read_mdp, read_theta,
    run_experiment, run_expert_stage, run_generate, run_train, ExperimentConfig, StageSeeds,
    TrainConfig,
};
use apprentice::extract::evaluate_theta;
use apprentice::features::Scheme;
use apprentice::verify::quick_suite;
use apprentice::Error;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

/// Apprenticeship learning with linearly parameterized occupancy measures.
#[derive(Parser)]
#[command(name = "apprentice", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the MDP, cost basis, feature matrix and true cost.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute the expert policy and estimate its feature expectation.
    Expert {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to `<out>/mdp.json`.
        #[arg(long)]
        mdp: Option<PathBuf>,
        /// Defaults to `<out>/basis.json`.
        #[arg(long)]
        basis: Option<PathBuf>,
        /// Defaults to `<out>/cost.json`.
        #[arg(long)]
        cost: Option<PathBuf>,
    },
    /// Run projected SGD on a problem stored on disk.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Report the feature gap of the policy extracted from a parameter.
    Evaluate {
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Expert feature expectation, e.g. `expert_fe.json`.
        #[arg(long)]
        expert: PathBuf,
        /// Where to write the report; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the full program exactly.
    Baseline {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Lp)]
        method: Method,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Run this many pipelines with consecutive master seeds, each in
        /// `<out>/seed-<n>`.
        #[arg(long)]
        parallel_seeds: Option<usize>,
    },
    /// Run quick randomized checks of the library's guarantees.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Lp,
    Subgradient,
}

enum Failure {
    Validation(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_experiment(
    path: &Path,
    seed: Option<u64>,
    scheme: Option<Scheme>,
) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        config.master_seed = s;
    }
    if let Some(s) = scheme {
        config.scheme = s;
    }
    Ok(config)
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { config, out, seed } => {
            let config = load_experiment(&config, seed, None)?;
            report_written(&run_generate(&config, &out)?);
        }
        Command::Expert {
            config,
            out,
            seed,
            mdp,
            basis,
            cost,
        } => {
            let config = load_experiment(&config, seed, None)?;
            let mdp = read_mdp(&mdp.unwrap_or_else(|| out.join("mdp.json")))?;
            let basis = read_basis(&basis.unwrap_or_else(|| out.join("basis.json")))?;
            let cost = read_cost(&cost.unwrap_or_else(|| out.join("cost.json")))?;
            let m = config
                .expert
                .m
                .ok_or_else(|| Failure::Validation("expert.m is required".into()))?;
            let seeds = StageSeeds::for_config(&config);
            report_written(&run_expert_stage(
                &config.expert,
                &mdp,
                &basis,
                cost,
                m,
                &seeds,
                &out,
            )?);
        }
        Command::Train {
            config,
            out,
            seed,
            scheme,
        } => {
            let mut config = TrainConfig::load(&config)?;
            if let Some(s) = seed {
                config.sgd.seed = s;
            }
            if let Some(s) = scheme {
                config.scheme = s;
            }
            report_written(&run_train(&config, &out)?);
        }
        Command::Evaluate {
            theta,
            mdp,
            basis,
            features,
            expert,
            out,
        } => {
            let mdp = read_mdp(&mdp)?;
            let basis = read_basis(&basis)?;
            let features = read_features(&features, &mdp)?;
            let expert = read_feature_expectation(&expert)?;
            let theta = read_theta(&theta)?;
            let report = evaluate_theta(&theta, &features, &basis, &mdp, &expert)?;
            emit(&to_json(&report)?, out.as_deref())?;
        }
        Command::Baseline {
            mdp,
            basis,
            target,
            method,
            out,
        } => {
            let mdp = read_mdp(&mdp)?;
            let basis = read_basis(&basis)?;
            let target = read_feature_expectation(&target)?;
            let solution = match method {
                Method::Lp => exact_al_solve(&mdp, &basis, &target)?,
                Method::Subgradient => {
                    full_subgradient_solve(&mdp, &basis, &target, FALLBACK_ITERATIONS)?
                }
            };
            emit(&to_json(&solution)?, out.as_deref())?;
        }
        Command::Run {
            config,
            out,
            seed,
            scheme,
            parallel_seeds,
        } => {
            let config = load_experiment(&config, seed, scheme)?;
            match parallel_seeds {
                None => {
                    let outcome = run_experiment(&config, &out)?;
                    eprintln!(
                        "wrote {} (feature gap {}, regret bound holds: {})",
                        out.display(),
                        outcome.regret.lhs,
                        outcome.regret.holds
                    );
                }
                Some(0) => {
                    return Err(Failure::Validation(
                        "--parallel-seeds must be positive".into(),
                    ))
                }
                Some(n) => {
                    let results: Vec<Result<(), Error>> = (0..n as u64)
                        .into_par_iter()
                        .map(|i| {
                            let mut c = config.clone();
                            c.master_seed = config.master_seed.wrapping_add(i);
                            let dir = out.join(format!("seed-{}", c.master_seed));
                            run_experiment(&c, &dir).map(|_| ())
                        })
                        .collect();
                    for r in results {
                        r?;
                    }
                    eprintln!("wrote {n} runs under {}", out.display());
                }
            }
        }
        Command::Verify { seed } => {
            let outcomes = quick_suite(seed)?;
            let mut failed = 0;
            for o in &outcomes {
                println!("{o}");
                if !o.passed {
                    failed += 1;
                }
            }
            if failed > 0 {
                return Err(Failure::Validation(format!(
                    "{failed} of {} checks failed",
                    outcomes.len()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}
