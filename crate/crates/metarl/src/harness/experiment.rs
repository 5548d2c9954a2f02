//! The train → evaluate → report pipeline over an experiment directory.
//!
//! Layout under `out_dir`:
//!
//! ```text
//! out_dir/
//!   checkpoints/<regime>.ckpt   training state, written at every log point
//!   eval.csv                    one row per (regime, attack, scale)
//!   convergence.csv             mean training return at each log point
//!   report.md                   regimes x attacks summary table
//!   report_table.csv            the same table, machine readable
//!   manifest.txt                config hash, timings, resume/abort notes
//! ```
//!
//! Training auto-resumes: a checkpoint is picked up only when its config
//! hash, seed, and regime match the current config, so stale state can
//! never silently leak into a changed experiment. Every artifact except the
//! manifest (which records wall-clock time) is a deterministic function of
//! the effective config.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use crate::envs::{sample_task_batch, TaskSpec};
use crate::seeding::{self, tag as tags};
use crate::trainers::{meta_test, train_with, ConvergencePoint, EvalRow, Regime, TrainerState};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::config::{attack_for, eval_grid, ExperimentConfig};
use super::report::{convergence_csv, eval_csv, report_markdown, report_table_csv};
use super::{write_atomic, HarnessError};

/// How a regime's training obtained its starting state; recorded in the
/// manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum ResumeNote {
    /// No checkpoint existed.
    Fresh,
    /// A matching checkpoint was loaded at this iteration.
    Resumed(usize),
    /// A checkpoint existed but was unusable; trained from scratch.
    Restarted(String),
}

/// One regime trained to completion.
#[derive(Debug)]
pub struct RegimeRun {
    pub regime: Regime,
    pub state: TrainerState,
    /// (iteration, mean return) at every log point, including ones replayed
    /// from the checkpoint after a resume.
    pub history: Vec<(usize, f64)>,
    pub resume: ResumeNote,
}

/// Everything `run-all` produced, for callers that want the numbers without
/// re-reading the CSVs.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<EvalRow>,
    pub convergence: Vec<ConvergencePoint>,
    /// (regime name, error) for regimes whose training failed; the rest of
    /// the pipeline continues without them.
    pub aborted: Vec<(String, String)>,
}

pub fn checkpoint_path(cfg: &ExperimentConfig, regime: Regime) -> PathBuf {
    PathBuf::from(&cfg.out_dir).join("checkpoints").join(format!("{}.ckpt", regime.name()))
}

/// The shared held-out task set and the seed for its rollout streams. Every
/// regime and every attack cell evaluates on exactly these tasks.
pub fn eval_tasks(cfg: &ExperimentConfig) -> (Vec<TaskSpec>, u64) {
    let mut rng = seeding::stream(cfg.seed, &[tags::EVAL_TASKS]);
    let tasks = sample_task_batch(&cfg.family, cfg.eval_n_tasks, &mut rng);
    (tasks, seeding::derive(cfg.seed, &[tags::EVAL_TASKS]))
}

fn starting_point(cfg: &ExperimentConfig, regime: Regime) -> (TrainerState, Vec<(usize, f64)>, ResumeNote) {
    let run = cfg.to_train_run(regime);
    let path = checkpoint_path(cfg, regime);
    if !path.exists() {
        return (TrainerState::init(&run), Vec::new(), ResumeNote::Fresh);
    }
    let fresh = |reason: String| {
        (TrainerState::init(&run), Vec::new(), ResumeNote::Restarted(reason))
    };
    match load_checkpoint(&path) {
        Ok(ckpt) => {
            if ckpt.config_hash != cfg.hash() {
                fresh("config hash changed".to_string())
            } else if ckpt.seed != cfg.seed {
                fresh("seed changed".to_string())
            } else if ckpt.regime != regime {
                fresh("regime mismatch".to_string())
            } else if ckpt.state.iteration > cfg.total_iterations {
                fresh("checkpoint is past the configured iteration count".to_string())
            } else {
                let at = ckpt.state.iteration;
                (ckpt.state, ckpt.history, ResumeNote::Resumed(at))
            }
        }
        Err(e) => fresh(e.to_string()),
    }
}

/// Trains one regime, resuming from its checkpoint when that is safe, and
/// checkpoints at every log point.
pub fn train_regime(cfg: &ExperimentConfig, regime: Regime) -> Result<RegimeRun, HarnessError> {
    let run = cfg.to_train_run(regime);
    let path = checkpoint_path(cfg, regime);
    let (state, mut history, resume) = starting_point(cfg, regime);
    let config_hash = cfg.hash();

    let mut write_err: Option<HarnessError> = None;
    let outcome = train_with(&run, state, |state, log| {
        if !log.is_log_point || write_err.is_some() {
            return;
        }
        history.push((log.iteration, log.mean_return));
        let ckpt = Checkpoint {
            regime,
            config_hash,
            seed: cfg.seed,
            history: history.clone(),
            state: state.clone(),
        };
        if let Err(e) = save_checkpoint(&ckpt, &path) {
            write_err = Some(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    Ok(RegimeRun { regime, state: outcome.state, history, resume })
}

/// Meta-tests one trained policy across the attack grid. `gan` is the
/// trained pair used by `adgan` cells (the other kinds ignore it).
fn evaluate_regime(
    cfg: &ExperimentConfig,
    regime: Regime,
    state: &TrainerState,
    gan: Option<&crate::attacks::AdGanParams>,
    tasks: &[TaskSpec],
    eval_seed: u64,
    grid: &[(String, f64)],
) -> Result<Vec<EvalRow>, HarnessError> {
    let mut rows = Vec::with_capacity(grid.len());
    for (kind, scale) in grid {
        let attack = attack_for(kind, *scale);
        let cell = meta_test(
            &state.policy,
            &cfg.family,
            &attack,
            gan,
            tasks,
            &cfg.meta,
            eval_seed,
        )?;
        rows.push(EvalRow {
            regime: regime.name().to_string(),
            attack: cell.attack,
            scale: cell.scale,
            mean_pre: cell.mean_pre,
            mean_post: cell.mean_post,
            std_post: cell.std_post,
            n_tasks: cell.n_tasks,
        });
    }
    Ok(rows)
}

/// Loads a regime's checkpoint and insists it belongs to this config.
pub fn load_regime(cfg: &ExperimentConfig, regime: Regime) -> Result<Checkpoint, HarnessError> {
    let path = checkpoint_path(cfg, regime);
    let ckpt = load_checkpoint(&path)?;
    let mismatch = |detail: String| HarnessError::CheckpointCorrupt { detail };
    if ckpt.config_hash != cfg.hash() {
        return Err(mismatch(format!(
            "{} was trained under a different config (hash {:016x}, current {:016x})",
            path.display(),
            ckpt.config_hash,
            cfg.hash()
        )));
    }
    if ckpt.seed != cfg.seed || ckpt.regime != regime {
        return Err(mismatch(format!("{} belongs to a different run", path.display())));
    }
    Ok(ckpt)
}

/// Evaluates already-trained checkpoints, optionally restricted to one
/// regime, one attack kind, or one scale, and rewrites `eval.csv` with the
/// produced rows.
pub fn evaluate_checkpoints(
    cfg: &ExperimentConfig,
    regime_filter: Option<Regime>,
    kind_filter: Option<&str>,
    scale_filter: Option<f64>,
) -> Result<Vec<EvalRow>, HarnessError> {
    let (tasks, eval_seed) = eval_tasks(cfg);
    let grid: Vec<(String, f64)> = eval_grid(cfg)
        .into_iter()
        .filter(|(k, s)| {
            kind_filter.map(|f| f == k).unwrap_or(true)
                && scale_filter.map(|f| f == *s).unwrap_or(true)
        })
        .collect();
    let regimes: Vec<Regime> = cfg
        .regimes
        .iter()
        .copied()
        .filter(|r| regime_filter.map(|f| f == *r).unwrap_or(true))
        .collect();

    // The trained pair lives in the admrl checkpoint; load it once if any
    // requested cell needs it.
    let needs_gan = grid.iter().any(|(k, _)| k == "adgan");
    let gan_source = if needs_gan {
        let ckpt = load_regime(cfg, Regime::AdMrl)?;
        Some(ckpt.state.gan.ok_or_else(|| HarnessError::CheckpointCorrupt {
            detail: "admrl checkpoint has no adversary pair".to_string(),
        })?)
    } else {
        None
    };

    let mut rows = Vec::new();
    for regime in regimes {
        let ckpt = load_regime(cfg, regime)?;
        rows.extend(evaluate_regime(
            cfg,
            regime,
            &ckpt.state,
            gan_source.as_ref(),
            &tasks,
            eval_seed,
            &grid,
        )?);
    }
    write_atomic(&PathBuf::from(&cfg.out_dir).join("eval.csv"), eval_csv(&rows).as_bytes())?;
    Ok(rows)
}

fn convergence_points(runs: &[RegimeRun]) -> Vec<ConvergencePoint> {
    runs.iter()
        .flat_map(|r| {
            r.history.iter().map(|&(iteration, mean_return)| ConvergencePoint {
                regime: r.regime.name().to_string(),
                iteration,
                mean_return,
            })
        })
        .collect()
}

fn write_report_files(
    cfg: &ExperimentConfig,
    rows: &[EvalRow],
    convergence: &[ConvergencePoint],
) -> Result<(), HarnessError> {
    let dir = PathBuf::from(&cfg.out_dir);
    write_atomic(&dir.join("eval.csv"), eval_csv(rows).as_bytes())?;
    write_atomic(&dir.join("convergence.csv"), convergence_csv(convergence).as_bytes())?;
    write_atomic(&dir.join("report.md"), report_markdown(rows).as_bytes())?;
    write_atomic(&dir.join("report_table.csv"), report_table_csv(rows).as_bytes())?;
    Ok(())
}

/// Rebuilds `report.md`, `report_table.csv`, and `convergence.csv` from the
/// files already in the experiment directory (the `report` verb).
pub fn regenerate_reports(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let dir = PathBuf::from(&cfg.out_dir);
    let text = std::fs::read_to_string(dir.join("eval.csv"))?;
    let rows = super::report::parse_eval_csv(&text)?;
    write_atomic(&dir.join("report.md"), report_markdown(&rows).as_bytes())?;
    write_atomic(&dir.join("report_table.csv"), report_table_csv(&rows).as_bytes())?;

    let mut convergence = Vec::new();
    for &regime in &cfg.regimes {
        if checkpoint_path(cfg, regime).exists() {
            let ckpt = load_regime(cfg, regime)?;
            convergence.extend(ckpt.history.iter().map(|&(iteration, mean_return)| {
                ConvergencePoint {
                    regime: regime.name().to_string(),
                    iteration,
                    mean_return,
                }
            }));
        }
    }
    write_atomic(&dir.join("convergence.csv"), convergence_csv(&convergence).as_bytes())?;
    Ok(())
}

/// Trains every configured regime (auto-resuming), meta-tests each across
/// the attack grid on a shared held-out task set, and writes all artifacts.
/// A regime whose training fails is recorded and skipped; its rows (and
/// `adgan` cells, when the failed regime is `admrl`) are simply absent.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let started = Instant::now();
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(dir.join("checkpoints"))?;

    let mut runs: Vec<RegimeRun> = Vec::new();
    let mut aborted: Vec<(String, String)> = Vec::new();
    for &regime in &cfg.regimes {
        match train_regime(cfg, regime) {
            Ok(run) => runs.push(run),
            Err(HarnessError::Train(e)) => {
                aborted.push((regime.name().to_string(), e.to_string()))
            }
            Err(other) => return Err(other),
        }
    }

    let (tasks, eval_seed) = eval_tasks(cfg);
    let gan_source = runs
        .iter()
        .find(|r| r.regime == Regime::AdMrl)
        .and_then(|r| r.state.gan.as_ref());
    let grid: Vec<(String, f64)> = eval_grid(cfg)
        .into_iter()
        .filter(|(k, _)| gan_source.is_some() || k != "adgan")
        .collect();
    let mut rows = Vec::new();
    for run in &runs {
        rows.extend(evaluate_regime(
            cfg,
            run.regime,
            &run.state,
            gan_source,
            &tasks,
            eval_seed,
            &grid,
        )?);
    }
    let convergence = convergence_points(&runs);
    write_report_files(cfg, &rows, &convergence)?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "config_hash = {:016x}", cfg.hash());
    let _ = writeln!(manifest, "seed = {}", cfg.seed);
    let _ = writeln!(manifest, "family = {}", cfg.family.kind.name());
    let regime_names: Vec<&str> = cfg.regimes.iter().map(|r| r.name()).collect();
    let _ = writeln!(manifest, "regimes = [{}]", regime_names.join(", "));
    let _ = writeln!(manifest, "eval_tasks = {}", cfg.eval_n_tasks);
    let _ = writeln!(manifest, "wall_seconds = {:.1}", started.elapsed().as_secs_f64());
    for run in &runs {
        let note = match &run.resume {
            ResumeNote::Fresh => "trained from scratch".to_string(),
            ResumeNote::Resumed(at) => format!("resumed from iteration {at}"),
            ResumeNote::Restarted(why) => format!("restarted ({why})"),
        };
        let _ = writeln!(manifest, "regime {} = {}", run.regime.name(), note);
    }
    for (regime, error) in &aborted {
        let _ = writeln!(manifest, "aborted {regime} = {error}");
    }
    write_atomic(&dir.join("manifest.txt"), manifest.as_bytes())?;

    Ok(ExperimentOutcome { out_dir: dir, rows, convergence, aborted })
}
