//! Experiment configuration: a plain-text `key = value` file with dotted
//! key paths, `#` comments, `[a, b, c]` lists, and quoted strings. Every
//! key has a documented default, unknown keys are errors, and environment
//! variables override file values: the variable for key `train.log_every`
//! is `METARL__TRAIN__LOG_EVERY` (prefix `METARL__`, dots become `__`,
//! uppercase).
//!
//! Known keys and defaults:
//!
//! ```text
//! seed                        = 1
//! out_dir                     = "runs"
//! family                      = nav2d        # nav2d | point_dir | point_vel
//! regimes                     = [maml, random_noise, fgsm, admrl]
//! attack.kinds                = [clean, random, fgsm, adgan]
//! attack.scales               = [0.2, 0.5, 0.8]
//! eval.n_tasks                = 40
//! train.total_iterations      = 500
//! train.noise_start_iteration = 300
//! train.log_every             = 50
//! train.policy_hidden         = [64, 64]
//! train.random_mu             = 0
//! train.random_sigma          = 1
//! train.random_scale          = 1
//! train.fgsm_epsilon          = 0.5
//! train.gan_hidden            = [64, 64]
//! train.gan_lr                = 0.001
//! train.gan_d_lr              = 0.001        # follows train.gan_lr
//! meta.inner_lr               = 0.1          # 0.05 for the point families
//! meta.meta_batch_size        = 20
//! meta.k_trajectories         = 10
//! meta.gamma                  = 0.99
//! trpo.kl_limit               = 0.01
//! trpo.cg_iters               = 10
//! trpo.cg_damping             = 0.00001
//! trpo.backtrack_ratio        = 0.8
//! trpo.max_backtracks         = 15
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::attacks::{AttackKind, AttackSpec};
use crate::envs::TaskFamily;
use crate::metapg::MetaConfig;
use crate::trainers::{Regime, TrainRun};

use super::HarnessError;

pub const ENV_PREFIX: &str = "METARL__";

/// The full effective configuration of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub family: TaskFamily,
    pub regimes: Vec<Regime>,
    /// Attack kind names evaluated at every scale of the grid.
    pub attack_kinds: Vec<String>,
    pub attack_scales: Vec<f64>,
    pub eval_n_tasks: usize,
    pub total_iterations: usize,
    pub noise_start_iteration: usize,
    pub log_every: usize,
    pub policy_hidden: Vec<usize>,
    pub random_mu: f64,
    pub random_sigma: f64,
    pub random_scale: f64,
    pub fgsm_epsilon: f64,
    pub gan_hidden: Vec<usize>,
    pub gan_lr: f64,
    /// Discriminator step size; `None` follows `gan_lr`.
    pub gan_d_lr: Option<f64>,
    pub meta: MetaConfig,
}

fn family_from_name(name: &str) -> Option<TaskFamily> {
    match name {
        "nav2d" => Some(TaskFamily::nav2d()),
        "point_dir" => Some(TaskFamily::point_dir()),
        "point_vel" => Some(TaskFamily::point_vel()),
        _ => None,
    }
}

pub const KNOWN_ATTACK_KINDS: [&str; 4] = ["clean", "random", "fgsm", "adgan"];

impl ExperimentConfig {
    /// Documented defaults for one environment family.
    pub fn default_for(family: TaskFamily) -> Self {
        ExperimentConfig {
            seed: 1,
            out_dir: PathBuf::from("runs"),
            family,
            regimes: Regime::all().to_vec(),
            attack_kinds: KNOWN_ATTACK_KINDS.iter().map(|s| s.to_string()).collect(),
            attack_scales: vec![0.2, 0.5, 0.8],
            eval_n_tasks: 40,
            total_iterations: 500,
            noise_start_iteration: 300,
            log_every: 50,
            policy_hidden: vec![64, 64],
            random_mu: 0.0,
            random_sigma: 1.0,
            random_scale: 1.0,
            fgsm_epsilon: 0.5,
            gan_hidden: vec![64, 64],
            gan_lr: 1e-3,
            gan_d_lr: None,
            meta: MetaConfig::for_family(family.kind),
        }
    }

    /// The training run this configuration describes for one regime.
    pub fn to_train_run(&self, regime: Regime) -> TrainRun {
        let mut run = TrainRun::new(regime, self.family, self.seed);
        run.total_iterations = self.total_iterations;
        run.noise_start_iteration = self.noise_start_iteration;
        run.log_every = self.log_every;
        run.meta = self.meta.clone();
        run.policy_hidden = self.policy_hidden.clone();
        run.random_mu = self.random_mu;
        run.random_sigma = self.random_sigma;
        run.random_scale = self.random_scale;
        run.fgsm_epsilon = self.fgsm_epsilon;
        run.gan_hidden = self.gan_hidden.clone();
        run.gan_lr = self.gan_lr;
        run.gan_d_lr = self.gan_d_lr.unwrap_or(self.gan_lr);
        run
    }

    /// Canonical one-line-per-key dump of every effective value; the config
    /// hash is a hash of exactly this text, so it changes iff an effective
    /// value changes.
    pub fn canonical_dump(&self) -> String {
        fn list<T: std::fmt::Display>(xs: &[T]) -> String {
            let inner: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            format!("[{}]", inner.join(", "))
        }
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("seed", self.seed.to_string());
        push("out_dir", format!("{:?}", self.out_dir));
        push("family", self.family.kind.name().to_string());
        push(
            "regimes",
            list(&self.regimes.iter().map(|r| r.name()).collect::<Vec<_>>()),
        );
        push("attack.kinds", list(&self.attack_kinds));
        push("attack.scales", list(&self.attack_scales));
        push("eval.n_tasks", self.eval_n_tasks.to_string());
        push("train.total_iterations", self.total_iterations.to_string());
        push("train.noise_start_iteration", self.noise_start_iteration.to_string());
        push("train.log_every", self.log_every.to_string());
        push("train.policy_hidden", list(&self.policy_hidden));
        push("train.random_mu", self.random_mu.to_string());
        push("train.random_sigma", self.random_sigma.to_string());
        push("train.random_scale", self.random_scale.to_string());
        push("train.fgsm_epsilon", self.fgsm_epsilon.to_string());
        push("train.gan_hidden", list(&self.gan_hidden));
        push("train.gan_lr", self.gan_lr.to_string());
        push("train.gan_d_lr", self.gan_d_lr.unwrap_or(self.gan_lr).to_string());
        push("meta.inner_lr", self.meta.inner_lr.to_string());
        push("meta.meta_batch_size", self.meta.meta_batch_size.to_string());
        push("meta.k_trajectories", self.meta.k_trajectories.to_string());
        push("meta.gamma", self.meta.gamma.to_string());
        push("trpo.kl_limit", self.meta.trpo.kl_limit.to_string());
        push("trpo.cg_iters", self.meta.trpo.cg_iters.to_string());
        push("trpo.cg_damping", self.meta.trpo.cg_damping.to_string());
        push("trpo.backtrack_ratio", self.meta.trpo.backtrack_ratio.to_string());
        push("trpo.max_backtracks", self.meta.trpo.max_backtracks.to_string());
        out
    }

    /// FNV-1a hash of the canonical dump.
    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical_dump().as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// The attack spec for a grid cell. The `clean` kind ignores its scale.
pub fn attack_for(kind: &str, scale: f64) -> AttackSpec {
    match kind {
        "clean" => AttackSpec { kind: AttackKind::Identity, scale },
        "random" => AttackSpec::random(scale),
        "fgsm" => AttackSpec::fgsm(scale),
        "adgan" => AttackSpec::adgan(scale),
        other => panic!("unvalidated attack kind `{other}`"),
    }
}

/// The evaluation grid: one clean row plus every configured kind at every
/// configured scale, in configuration order.
pub fn eval_grid(cfg: &ExperimentConfig) -> Vec<(String, f64)> {
    let mut cells = vec![("clean".to_string(), 0.0)];
    for kind in &cfg.attack_kinds {
        for &scale in &cfg.attack_scales {
            cells.push((kind.clone(), scale));
        }
    }
    cells
}

/// One parsed `key = value` assignment and where it came from.
#[derive(Debug, Clone)]
pub struct Pair {
    pub key: String,
    pub value: RawValue,
    pub location: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawValue {
    Int(i128),
    Float(f64),
    Str(String),
    List(Vec<RawValue>),
}

impl RawValue {
    fn type_name(&self) -> &'static str {
        match self {
            RawValue::Int(_) => "integer",
            RawValue::Float(_) => "number",
            RawValue::Str(_) => "string",
            RawValue::List(_) => "list",
        }
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_scalar(token: &str, location: &str) -> Result<RawValue, HarnessError> {
    let token = token.trim();
    if let Some(rest) = token.strip_prefix('"') {
        let Some(inner) = rest.strip_suffix('"') else {
            return Err(HarnessError::Config {
                location: location.to_string(),
                detail: format!("unterminated string `{token}`"),
            });
        };
        return Ok(RawValue::Str(inner.to_string()));
    }
    if token.is_empty() {
        return Err(HarnessError::Config {
            location: location.to_string(),
            detail: "empty value".to_string(),
        });
    }
    if let Ok(i) = token.parse::<i128>() {
        return Ok(RawValue::Int(i));
    }
    if let Ok(f) = token.parse::<f64>() {
        return Ok(RawValue::Float(f));
    }
    if token.contains(char::is_whitespace) {
        return Err(HarnessError::Config {
            location: location.to_string(),
            detail: format!("unquoted value `{token}` contains whitespace"),
        });
    }
    Ok(RawValue::Str(token.to_string()))
}

fn parse_value(text: &str, location: &str) -> Result<RawValue, HarnessError> {
    let text = text.trim();
    if let Some(rest) = text.strip_prefix('[') {
        let Some(inner) = rest.strip_suffix(']') else {
            return Err(HarnessError::Config {
                location: location.to_string(),
                detail: format!("unterminated list `{text}`"),
            });
        };
        let inner = inner.trim();
        if inner.is_empty() {
            return Ok(RawValue::List(Vec::new()));
        }
        let items: Result<Vec<RawValue>, HarnessError> =
            inner.split(',').map(|item| parse_scalar(item, location)).collect();
        return Ok(RawValue::List(items?));
    }
    parse_scalar(text, location)
}

/// Parses the config text into key/value pairs, with line numbers for
/// error messages.
pub fn parse_pairs(text: &str) -> Result<Vec<Pair>, HarnessError> {
    let mut pairs = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let location = format!("line {}", idx + 1);
        let line = strip_comment(raw_line).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Config {
                location,
                detail: format!("expected `key = value`, found `{line}`"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(HarnessError::Config {
                location,
                detail: "missing key before `=`".to_string(),
            });
        }
        let value = parse_value(value, &location)?;
        pairs.push(Pair { key: key.to_string(), value, location });
    }
    Ok(pairs)
}

/// Maps prefixed environment variables to config pairs:
/// `METARL__TRAIN__LOG_EVERY=5` becomes `train.log_every = 5`.
pub fn env_pairs(
    vars: impl Iterator<Item = (String, String)>,
) -> Result<Vec<Pair>, HarnessError> {
    let mut pairs = Vec::new();
    for (name, value) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
        let key = rest.to_lowercase().replace("__", ".");
        let location = format!("environment variable {name}");
        let value = parse_value(&value, &location)?;
        pairs.push(Pair { key, value, location });
    }
    pairs.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(pairs)
}

fn as_f64(v: &RawValue, key: &str, location: &str) -> Result<f64, HarnessError> {
    match v {
        RawValue::Int(i) => Ok(*i as f64),
        RawValue::Float(f) => Ok(*f),
        other => Err(HarnessError::Config {
            location: location.to_string(),
            detail: format!("`{key}` expects a number, found {}", other.type_name()),
        }),
    }
}

fn as_usize(v: &RawValue, key: &str, location: &str) -> Result<usize, HarnessError> {
    match v {
        RawValue::Int(i) if *i >= 0 && *i <= usize::MAX as i128 => Ok(*i as usize),
        other => Err(HarnessError::Config {
            location: location.to_string(),
            detail: format!(
                "`{key}` expects a nonnegative integer, found {}",
                other.type_name()
            ),
        }),
    }
}

fn as_u64(v: &RawValue, key: &str, location: &str) -> Result<u64, HarnessError> {
    match v {
        RawValue::Int(i) if *i >= 0 && *i <= u64::MAX as i128 => Ok(*i as u64),
        other => Err(HarnessError::Config {
            location: location.to_string(),
            detail: format!("`{key}` expects an unsigned integer, found {}", other.type_name()),
        }),
    }
}

fn as_str(v: &RawValue, key: &str, location: &str) -> Result<String, HarnessError> {
    match v {
        RawValue::Str(s) => Ok(s.clone()),
        other => Err(HarnessError::Config {
            location: location.to_string(),
            detail: format!("`{key}` expects a string, found {}", other.type_name()),
        }),
    }
}

fn as_list(v: &RawValue, key: &str, location: &str) -> Result<Vec<RawValue>, HarnessError> {
    match v {
        RawValue::List(items) => Ok(items.clone()),
        other => Err(HarnessError::Config {
            location: location.to_string(),
            detail: format!("`{key}` expects a list, found {}", other.type_name()),
        }),
    }
}

/// Builds the effective config from parsed pairs (later pairs win). The
/// family is resolved first so family-dependent defaults are in place
/// before the remaining keys apply.
pub fn build_config(pairs: &[Pair]) -> Result<ExperimentConfig, HarnessError> {
    let mut family = TaskFamily::nav2d();
    for pair in pairs {
        if pair.key == "family" {
            let name = as_str(&pair.value, &pair.key, &pair.location)?;
            family = family_from_name(&name).ok_or_else(|| HarnessError::Config {
                location: pair.location.clone(),
                detail: format!("unknown family `{name}`"),
            })?;
        }
    }
    let mut cfg = ExperimentConfig::default_for(family);

    for pair in pairs {
        let (key, loc) = (pair.key.as_str(), pair.location.as_str());
        let v = &pair.value;
        match key {
            "seed" => cfg.seed = as_u64(v, key, loc)?,
            "out_dir" => cfg.out_dir = PathBuf::from(as_str(v, key, loc)?),
            "family" => {} // resolved above
            "regimes" => {
                let mut regimes = Vec::new();
                for item in as_list(v, key, loc)? {
                    let name = as_str(&item, key, loc)?;
                    let regime =
                        Regime::from_name(&name).ok_or_else(|| HarnessError::Config {
                            location: loc.to_string(),
                            detail: format!("unknown regime `{name}`"),
                        })?;
                    if regimes.contains(&regime) {
                        return Err(HarnessError::Config {
                            location: loc.to_string(),
                            detail: format!("duplicate regime `{name}`"),
                        });
                    }
                    regimes.push(regime);
                }
                cfg.regimes = regimes;
            }
            "attack.kinds" => {
                let mut kinds = Vec::new();
                for item in as_list(v, key, loc)? {
                    let name = as_str(&item, key, loc)?;
                    if !KNOWN_ATTACK_KINDS.contains(&name.as_str()) {
                        return Err(HarnessError::Config {
                            location: loc.to_string(),
                            detail: format!("unknown attack kind `{name}`"),
                        });
                    }
                    kinds.push(name);
                }
                cfg.attack_kinds = kinds;
            }
            "attack.scales" => {
                let mut scales = Vec::new();
                for item in as_list(v, key, loc)? {
                    let s = as_f64(&item, key, loc)?;
                    if !(s.is_finite() && s >= 0.0) {
                        return Err(HarnessError::Config {
                            location: loc.to_string(),
                            detail: format!("attack scale {s} must be finite and nonnegative"),
                        });
                    }
                    scales.push(s);
                }
                cfg.attack_scales = scales;
            }
            "eval.n_tasks" => cfg.eval_n_tasks = as_usize(v, key, loc)?,
            "train.total_iterations" => cfg.total_iterations = as_usize(v, key, loc)?,
            "train.noise_start_iteration" => {
                cfg.noise_start_iteration = as_usize(v, key, loc)?
            }
            "train.log_every" => cfg.log_every = as_usize(v, key, loc)?,
            "train.policy_hidden" => {
                cfg.policy_hidden = as_list(v, key, loc)?
                    .iter()
                    .map(|item| as_usize(item, key, loc))
                    .collect::<Result<_, _>>()?
            }
            "train.random_mu" => cfg.random_mu = as_f64(v, key, loc)?,
            "train.random_sigma" => cfg.random_sigma = as_f64(v, key, loc)?,
            "train.random_scale" => cfg.random_scale = as_f64(v, key, loc)?,
            "train.fgsm_epsilon" => cfg.fgsm_epsilon = as_f64(v, key, loc)?,
            "train.gan_hidden" => {
                cfg.gan_hidden = as_list(v, key, loc)?
                    .iter()
                    .map(|item| as_usize(item, key, loc))
                    .collect::<Result<_, _>>()?
            }
            "train.gan_lr" => cfg.gan_lr = as_f64(v, key, loc)?,
            "train.gan_d_lr" => cfg.gan_d_lr = Some(as_f64(v, key, loc)?),
            "meta.inner_lr" => cfg.meta.inner_lr = as_f64(v, key, loc)?,
            "meta.meta_batch_size" => cfg.meta.meta_batch_size = as_usize(v, key, loc)?,
            "meta.k_trajectories" => cfg.meta.k_trajectories = as_usize(v, key, loc)?,
            "meta.gamma" => cfg.meta.gamma = as_f64(v, key, loc)?,
            "trpo.kl_limit" => cfg.meta.trpo.kl_limit = as_f64(v, key, loc)?,
            "trpo.cg_iters" => cfg.meta.trpo.cg_iters = as_usize(v, key, loc)?,
            "trpo.cg_damping" => cfg.meta.trpo.cg_damping = as_f64(v, key, loc)?,
            "trpo.backtrack_ratio" => cfg.meta.trpo.backtrack_ratio = as_f64(v, key, loc)?,
            "trpo.max_backtracks" => cfg.meta.trpo.max_backtracks = as_usize(v, key, loc)?,
            unknown => {
                return Err(HarnessError::UnknownKey {
                    key: unknown.to_string(),
                    location: loc.to_string(),
                })
            }
        }
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> Result<(), HarnessError> {
    let bad = |detail: String| HarnessError::Config { location: "config".to_string(), detail };
    if cfg.regimes.is_empty() {
        return Err(bad("at least one regime is required".to_string()));
    }
    if cfg.noise_start_iteration > cfg.total_iterations {
        return Err(bad(format!(
            "train.noise_start_iteration ({}) exceeds train.total_iterations ({})",
            cfg.noise_start_iteration, cfg.total_iterations
        )));
    }
    if cfg.log_every == 0 {
        return Err(bad("train.log_every must be positive".to_string()));
    }
    if cfg.eval_n_tasks == 0 {
        return Err(bad("eval.n_tasks must be positive".to_string()));
    }
    if cfg.attack_kinds.iter().any(|k| k == "adgan")
        && !cfg.regimes.contains(&Regime::AdMrl)
    {
        return Err(bad(
            "attack kind `adgan` needs the `admrl` regime to supply its generator"
                .to_string(),
        ));
    }
    Ok(())
}

/// Parses config text plus explicit override pairs (used for environment
/// overrides; later pairs win).
pub fn config_from_str(text: &str, overrides: &[Pair]) -> Result<ExperimentConfig, HarnessError> {
    let mut pairs = parse_pairs(text)?;
    pairs.extend(overrides.iter().cloned());
    build_config(&pairs)
}

/// Loads a config file and applies environment overrides.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path)?;
    let overrides = env_pairs(std::env::vars())?;
    config_from_str(&text, &overrides)
}

/// The default config (no file), still honoring environment overrides.
pub fn default_config() -> Result<ExperimentConfig, HarnessError> {
    let overrides = env_pairs(std::env::vars())?;
    build_config(&overrides)
}
