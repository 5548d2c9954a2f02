//! Command-line front end: train, evaluate, report, run-all, gradcheck.
//!
//! Settings are resolved in precedence order: config file, then `METARL__*`
//! environment variables, then flags. Every verb is deterministic given the
//! effective config; `--workers` only changes wall-clock time.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use metarl::diffcore::gradcheck;
use metarl::harness::config::{default_config, load_config, ExperimentConfig};
use metarl::harness::experiment::{
    evaluate_checkpoints, regenerate_reports, run_experiment, train_regime,
};
use metarl::harness::HarnessError;
use metarl::trainers::Regime;

#[derive(Parser)]
#[command(name = "metarl", version, about = "Adversarially robust meta-RL laboratory")]
struct Cli {
    /// Config file of `key = value` lines; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file and environment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Experiment directory, overriding the config file and environment.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for rollouts and evaluation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured regime, evaluate the full attack grid, and
    /// write all reports.
    RunAll,
    /// Train one regime, resuming from its checkpoint when possible.
    Train {
        /// One of: maml, random_noise, fgsm, admrl.
        #[arg(long)]
        regime: String,
    },
    /// Meta-test trained checkpoints and rewrite eval.csv.
    Evaluate {
        /// Restrict to one regime (default: all configured).
        #[arg(long)]
        regime: Option<String>,
        /// Restrict to one attack kind: clean, random, fgsm, adgan.
        #[arg(long)]
        attack: Option<String>,
        /// Restrict to one attack scale.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Rebuild report.md, report_table.csv, and convergence.csv from the
    /// experiment directory.
    Report,
    /// Finite-difference audit of the reverse-mode engine.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
}

fn parse_regime(name: &str) -> Result<Regime, HarnessError> {
    Regime::from_name(name).ok_or_else(|| HarnessError::Config {
        location: "command line".to_string(),
        detail: format!("unknown regime `{name}` (expected maml, random_noise, fgsm, admrl)"),
    })
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => default_config()?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    if let Some(workers) = cli.workers {
        // a second invocation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match &cli.command {
        Command::RunAll => {
            let cfg = effective_config(cli)?;
            let outcome = run_experiment(&cfg)?;
            println!(
                "wrote {} evaluation rows to {}",
                outcome.rows.len(),
                outcome.out_dir.display()
            );
            for (regime, error) in &outcome.aborted {
                eprintln!("regime {regime} aborted: {error}");
            }
            if !outcome.aborted.is_empty() {
                return Err(HarnessError::Config {
                    location: "run-all".to_string(),
                    detail: "one or more regimes aborted".to_string(),
                });
            }
            Ok(())
        }
        Command::Train { regime } => {
            let cfg = effective_config(cli)?;
            let regime = parse_regime(regime)?;
            let run = train_regime(&cfg, regime)?;
            let (iteration, mean_return) =
                run.history.last().copied().unwrap_or((0, f64::NAN));
            println!(
                "{}: iteration {} mean return {:.3} (checkpoint in {})",
                regime.name(),
                iteration,
                mean_return,
                cfg.out_dir.join("checkpoints").display()
            );
            Ok(())
        }
        Command::Evaluate { regime, attack, scale } => {
            let cfg = effective_config(cli)?;
            let regime = regime.as_deref().map(parse_regime).transpose()?;
            if let Some(kind) = attack.as_deref() {
                if !metarl::harness::config::KNOWN_ATTACK_KINDS.contains(&kind) {
                    return Err(HarnessError::Config {
                        location: "command line".to_string(),
                        detail: format!(
                            "unknown attack kind `{kind}` (expected clean, random, fgsm, adgan)"
                        ),
                    });
                }
            }
            let rows = evaluate_checkpoints(&cfg, regime, attack.as_deref(), *scale)?;
            print!("{}", metarl::harness::report::eval_csv(&rows));
            Ok(())
        }
        Command::Report => {
            let cfg = effective_config(cli)?;
            regenerate_reports(&cfg)?;
            println!("rebuilt reports in {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Gradcheck { cases } => {
            let seed = cli.seed.unwrap_or(0x5eed);
            let report = gradcheck::run_suite(*cases, seed);
            println!(
                "{} cases: max parameter error {:.3e}, max input error {:.3e}",
                report.cases, report.max_rel_err_params, report.max_rel_err_inputs
            );
            for failure in &report.failures {
                eprintln!("failed: {failure}");
            }
            if report.passed() {
                println!("gradcheck passed");
                Ok(())
            } else {
                Err(HarnessError::Config {
                    location: "gradcheck".to_string(),
                    detail: format!("{} case(s) failed", report.failures.len()),
                })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
