//! Gaussian-policy trajectory collection with a state-perturbation hook,
//! discounted returns, a ridge-regularized linear baseline, and per-batch
//! advantage standardization.
//!
//! The perturbation model is observational: the environment always evolves
//! from the true state, while the policy acts on whatever the perturber
//! returns. Log-probabilities are recorded against the observed state, which
//! is exactly what the surrogate losses differentiate later.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffcore::{Mat, ParamVector};
use crate::envs::{reset, step, TaskSpec};
use crate::nets::MlpArch;
use crate::seeding::{self, tag};

/// Diagonal-Gaussian policy: a tanh MLP maps observations to the action
/// mean; a state-independent learned `log_std` names the exploration scale.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub arch: MlpArch,
    pub params: ParamVector,
}

pub const LOG_STD_SEGMENT: &str = "log_std";

impl GaussianPolicy {
    /// Seeded init: MLP weights scaled-normal, biases zero, log-std zero
    /// (unit standard deviation).
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let arch = MlpArch::new(obs_dim, hidden, act_dim);
        let layout = arch.layout_with(&[(LOG_STD_SEGMENT, act_dim)]);
        let mut params = ParamVector::zeros(layout);
        arch.init_into(&mut params, seed, false);
        GaussianPolicy { arch, params }
    }

    /// Same architecture, different parameters.
    pub fn with_params(&self, params: ParamVector) -> Self {
        GaussianPolicy { arch: self.arch.clone(), params }
    }

    pub fn obs_dim(&self) -> usize {
        self.arch.input
    }

    pub fn act_dim(&self) -> usize {
        self.arch.output
    }

    pub fn log_std(&self) -> &[f64] {
        self.params.seg(LOG_STD_SEGMENT).expect("policy layout has log_std")
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std().iter().map(|v| v.exp()).collect()
    }

    /// Mean and standard deviation of the action distribution at `obs`.
    pub fn action_distribution(&self, obs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (self.arch.forward(&self.params, obs), self.std())
    }

    /// Batched means over column-observations.
    pub fn mean_batch(&self, obs: &Mat) -> Mat {
        self.arch.forward_batch(&self.params, obs)
    }
}

/// Sum of per-dimension Gaussian log-densities.
pub fn log_prob(mean: &[f64], std: &[f64], action: &[f64]) -> f64 {
    debug_assert!(mean.len() == std.len() && std.len() == action.len());
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut acc = 0.0;
    for i in 0..mean.len() {
        let z = (action[i] - mean[i]) / std[i];
        acc += -0.5 * z * z - std[i].ln() - half_log_2pi;
    }
    acc
}

/// Observation hook applied at every step before the policy acts. The
/// acting policy is passed in so policy-aware attacks can differentiate
/// against it; `rng` is the perturber's own stream, separate from action
/// sampling, so attacks never shift the action noise.
pub trait Perturber: Sync {
    fn perturb(&self, policy: &GaussianPolicy, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// The clean observation model.
pub struct IdentityPerturber;

impl Perturber for IdentityPerturber {
    fn perturb(&self, _policy: &GaussianPolicy, x: &[f64], _rng: &mut ChaCha8Rng) -> Vec<f64> {
        x.to_vec()
    }
}

/// One collected episode. `returns` and `advantages` start empty and are
/// filled by [`prepare_batch`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub true_states: Vec<Vec<f64>>,
    pub observed: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Undiscounted episode return.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Collects `k` episodes of at most `h` steps. Every episode draws from two
/// streams derived from `task_seed` and the episode index: one for action
/// sampling, one for the perturber.
pub fn collect_trajectories(
    policy: &GaussianPolicy,
    task: &TaskSpec,
    k: usize,
    h: usize,
    perturber: &dyn Perturber,
    task_seed: u64,
) -> Vec<Trajectory> {
    (0..k)
        .map(|j| {
            let mut action_rng = seeding::stream(task_seed, &[tag::ACTION, j as u64]);
            let mut perturb_rng = seeding::stream(task_seed, &[tag::PERTURB, j as u64]);
            let mut traj = Trajectory::default();
            let mut state = reset(task);
            for _t in 0..h {
                let obs = perturber.perturb(policy, &state, &mut perturb_rng);
                debug_assert_eq!(obs.len(), state.len());
                let (mean, std) = policy.action_distribution(&obs);
                let action: Vec<f64> = mean
                    .iter()
                    .zip(std.iter())
                    .map(|(&m, &s)| {
                        let z: f64 = action_rng.sample(StandardNormal);
                        m + s * z
                    })
                    .collect();
                let lp = log_prob(&mean, &std, &action);
                let tr = step(task, &state, &action);
                traj.true_states.push(state.clone());
                traj.observed.push(obs);
                traj.actions.push(action);
                traj.rewards.push(tr.reward);
                traj.log_probs.push(lp);
                state = tr.next_state;
                if tr.done {
                    break;
                }
            }
            traj
        })
        .collect()
}

/// Discounted reward-to-go via the backward recursion
/// `Q_t = r_t + gamma * Q_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Ridge-regularized linear value baseline over handcrafted features of the
/// observed state and normalized time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBaseline {
    coeffs: Vec<f64>,
}

const RIDGE: f64 = 1e-5;

fn features(obs: &[f64], t: usize, horizon: usize) -> Vec<f64> {
    let tau = t as f64 / horizon.max(1) as f64;
    let mut f = Vec::with_capacity(2 * obs.len() + 4);
    f.extend_from_slice(obs);
    f.extend(obs.iter().map(|&v| v * v));
    f.push(tau);
    f.push(tau * tau);
    f.push(tau * tau * tau);
    f.push(1.0);
    f
}

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky.
fn solve_spd(a: &mut [Vec<f64>], b: &mut [f64]) -> Vec<f64> {
    let n = b.len();
    // in-place LL^T factorization
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= a[i][k] * a[j][k];
            }
            if i == j {
                assert!(sum > 0.0, "matrix is not positive definite");
                a[i][j] = sum.sqrt();
            } else {
                a[i][j] = sum / a[j][j];
            }
        }
    }
    // forward substitution L y = b
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i][k] * b[k];
        }
        b[i] = sum / a[i][i];
    }
    // back substitution L^T x = y
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= a[k][i] * b[k];
        }
        b[i] = sum / a[i][i];
    }
    b.to_vec()
}

/// Fits the baseline to the discounted returns of a trajectory batch.
/// Requires `returns` to be filled.
pub fn fit_baseline(trajs: &[Trajectory], horizon: usize) -> LinearBaseline {
    let obs_dim = trajs
        .iter()
        .find(|t| !t.is_empty())
        .map(|t| t.observed[0].len())
        .expect("cannot fit a baseline to an empty batch");
    let dim = 2 * obs_dim + 4;
    let mut gram = vec![vec![0.0; dim]; dim];
    let mut rhs = vec![0.0; dim];
    for traj in trajs {
        assert_eq!(
            traj.returns.len(),
            traj.len(),
            "fit_baseline needs discounted returns to be filled"
        );
        for (t, obs) in traj.observed.iter().enumerate() {
            let f = features(obs, t, horizon);
            for i in 0..dim {
                for j in 0..=i {
                    gram[i][j] += f[i] * f[j];
                }
                rhs[i] += f[i] * traj.returns[t];
            }
        }
    }
    for i in 0..dim {
        for j in i + 1..dim {
            gram[i][j] = gram[j][i];
        }
        gram[i][i] += RIDGE;
    }
    let coeffs = solve_spd(&mut gram, &mut rhs);
    LinearBaseline { coeffs }
}

impl LinearBaseline {
    pub fn predict(&self, obs: &[f64], t: usize, horizon: usize) -> f64 {
        let f = features(obs, t, horizon);
        assert_eq!(f.len(), self.coeffs.len(), "baseline fitted for another obs dim");
        f.iter().zip(self.coeffs.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Advantage per step: discounted return minus baseline prediction, then
/// standardized over every step in the batch. A zero-variance batch (e.g. a
/// perfect baseline) yields all-zero advantages.
pub fn compute_advantages(trajs: &mut [Trajectory], baseline: &LinearBaseline, horizon: usize) {
    let mut all = Vec::new();
    for traj in trajs.iter() {
        assert_eq!(traj.returns.len(), traj.len(), "advantages need returns first");
        for (t, obs) in traj.observed.iter().enumerate() {
            all.push(traj.returns[t] - baseline.predict(obs, t, horizon));
        }
    }
    if all.is_empty() {
        return;
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let degenerate = std < 1e-10;
    let mut it = all.into_iter();
    for traj in trajs.iter_mut() {
        traj.advantages = (0..traj.len())
            .map(|_| {
                let a = it.next().unwrap();
                if degenerate {
                    0.0
                } else {
                    (a - mean) / std
                }
            })
            .collect();
    }
}

/// Fills returns, fits the baseline, and standardizes advantages for one
/// task's trajectory batch. Returns the fitted baseline.
pub fn prepare_batch(trajs: &mut [Trajectory], gamma: f64, horizon: usize) -> LinearBaseline {
    for traj in trajs.iter_mut() {
        traj.returns = discounted_returns(&traj.rewards, gamma);
    }
    let baseline = fit_baseline(trajs, horizon);
    compute_advantages(trajs, &baseline, horizon);
    baseline
}

/// Debug dump: one row per step with true state, observed state, action,
/// reward and log-probability.
pub fn write_trajectories_csv<W: Write>(trajs: &[Trajectory], w: &mut W) -> std::io::Result<()> {
    let (sd, ad) = trajs
        .iter()
        .find(|t| !t.is_empty())
        .map(|t| (t.true_states[0].len(), t.actions[0].len()))
        .unwrap_or((0, 0));
    let mut header = String::from("traj,t");
    for i in 0..sd {
        header.push_str(&format!(",s{i}"));
    }
    for i in 0..sd {
        header.push_str(&format!(",o{i}"));
    }
    for i in 0..ad {
        header.push_str(&format!(",a{i}"));
    }
    header.push_str(",reward,logp");
    writeln!(w, "{header}")?;
    for (j, traj) in trajs.iter().enumerate() {
        for t in 0..traj.len() {
            let mut row = format!("{j},{t}");
            for v in &traj.true_states[t] {
                row.push_str(&format!(",{v}"));
            }
            for v in &traj.observed[t] {
                row.push_str(&format!(",{v}"));
            }
            for v in &traj.actions[t] {
                row.push_str(&format!(",{v}"));
            }
            row.push_str(&format!(",{},{}", traj.rewards[t], traj.log_probs[t]));
            writeln!(w, "{row}")?;
        }
    }
    Ok(())
}
