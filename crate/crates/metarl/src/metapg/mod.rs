//! MAML-style meta policy gradient: REINFORCE surrogate, one-step inner
//! adaptation, the meta objective over a task batch, and the trust-region
//! outer update.
//!
//! The outer meta-gradient is first-order: the adapted parameters are
//! treated as a stopped-gradient function of the base parameters, so the
//! query-batch gradient evaluated at the adapted parameters stands in for
//! the full meta-gradient. This is the headline approximation of the whole
//! crate and keeps the autodiff engine strictly first-order.

pub mod trpo;

pub use trpo::{conjugate_gradient, trpo_step, TrpoConfig, TrpoReport};

use rayon::prelude::*;

use crate::diffcore::{
    apply_update, DiffError, Graph, GraphBuilder, Mat, NodeId, ParamVector, UpdateRule,
};
use crate::envs::{FamilyKind, TaskSpec};
use crate::nets::{weighted_logp_sum, MlpArch, ParamSource};
use crate::rollout::{
    collect_trajectories, prepare_batch, GaussianPolicy, Perturber, Trajectory, LOG_STD_SEGMENT,
};
use crate::seeding::{self, tag};

/// Meta-training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    /// Inner-loop adaptation step size.
    pub inner_lr: f64,
    /// Tasks per meta-batch.
    pub meta_batch_size: usize,
    /// Trajectories per task per phase (support and query alike).
    pub k_trajectories: usize,
    pub gamma: f64,
    pub trpo: TrpoConfig,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            inner_lr: 0.1,
            meta_batch_size: 20,
            k_trajectories: 10,
            gamma: 0.99,
            trpo: TrpoConfig::default(),
        }
    }
}

impl MetaConfig {
    /// Family-tuned defaults: the point-mass families want a gentler inner
    /// step than navigation.
    pub fn for_family(kind: FamilyKind) -> Self {
        let mut cfg = MetaConfig::default();
        if kind != FamilyKind::Nav2D {
            cfg.inner_lr = 0.05;
        }
        cfg
    }
}

/// One task's inner-loop record: base parameters, adapted parameters, and
/// the support batch the adaptation consumed.
#[derive(Debug, Clone)]
pub struct AdaptedPolicy {
    pub base: ParamVector,
    pub adapted: ParamVector,
    pub support: Vec<Trajectory>,
}

/// Flat step-level view of a trajectory batch: observations and actions as
/// one column per step, plus advantages and the behavior log-probs recorded
/// at collection time.
#[derive(Debug, Clone)]
pub struct StackedBatch {
    pub obs: Mat,
    pub actions: Mat,
    pub advantages: Vec<f64>,
    pub behavior_logps: Vec<f64>,
}

impl StackedBatch {
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }
}

fn assert_prepared(trajs: &[Trajectory]) {
    assert!(!trajs.is_empty(), "surrogate over an empty batch");
    for t in trajs {
        assert_eq!(
            t.advantages.len(),
            t.len(),
            "surrogate needs advantages; run prepare_batch first"
        );
    }
}

/// Stacks a prepared trajectory batch into step-major matrices.
pub fn stack_steps(trajs: &[Trajectory]) -> StackedBatch {
    assert_prepared(trajs);
    let obs_dim = trajs[0].observed[0].len();
    let act_dim = trajs[0].actions[0].len();
    let n: usize = trajs.iter().map(|t| t.len()).sum();
    let mut obs = Mat::zeros(obs_dim, n);
    let mut actions = Mat::zeros(act_dim, n);
    let mut advantages = Vec::with_capacity(n);
    let mut behavior_logps = Vec::with_capacity(n);
    let mut col = 0;
    for t in trajs {
        for step in 0..t.len() {
            for (d, &v) in t.observed[step].iter().enumerate() {
                obs.set(d, col, v);
            }
            for (d, &v) in t.actions[step].iter().enumerate() {
                actions.set(d, col, v);
            }
            advantages.push(t.advantages[step]);
            behavior_logps.push(t.log_probs[step]);
            col += 1;
        }
    }
    StackedBatch { obs, actions, advantages, behavior_logps }
}

/// Builds the scalar REINFORCE surrogate
/// `-(1/N) sum_t log pi(a_t | obs_t) * adv_t` with parameters as graph
/// variables and everything else baked in as constants.
fn surrogate_graph(arch: &MlpArch, batch: &StackedBatch) -> Graph {
    let n = batch.len();
    let mut b = GraphBuilder::new(0);
    let x = b.constant(batch.obs.clone());
    let mu = arch.build_graph(&mut b, x, &ParamSource::Var);
    let ls = b.param(LOG_STD_SEGMENT, batch.actions.rows(), 1);
    let weighted = weighted_logp_sum(&mut b, mu, ls, batch.actions.clone(), &batch.advantages);
    let out = b.scale(weighted, -1.0 / n as f64);
    b.finish(out)
}

/// Surrogate loss value at `params` over a prepared batch.
pub fn reinforce_surrogate(
    arch: &MlpArch,
    params: &ParamVector,
    trajs: &[Trajectory],
) -> Result<f64, DiffError> {
    let batch = stack_steps(trajs);
    surrogate_graph(arch, &batch).eval_scalar(params, &[])
}

/// Surrogate loss and its parameter gradient.
pub fn surrogate_value_and_grad(
    arch: &MlpArch,
    params: &ParamVector,
    trajs: &[Trajectory],
) -> Result<(f64, ParamVector), DiffError> {
    let batch = stack_steps(trajs);
    let graph = surrogate_graph(arch, &batch);
    let (value, grad, _) = graph.value_and_grads(params, &[])?;
    Ok((value, grad))
}

/// One explicit inner gradient step on the support batch:
/// `theta' = theta - inner_lr * grad`.
pub fn inner_adapt(
    policy: &GaussianPolicy,
    support: &[Trajectory],
    inner_lr: f64,
) -> Result<GaussianPolicy, DiffError> {
    let (_, grad) = surrogate_value_and_grad(&policy.arch, &policy.params, support)?;
    let (adapted, _) = apply_update(&policy.params, &grad, &UpdateRule::Sgd { lr: inner_lr })?;
    Ok(policy.with_params(adapted))
}

/// Everything the outer step needs from one task: the adaptation record,
/// the query batch, and step-level caches of the adapted (behavior) policy
/// on the query observations.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub task: TaskSpec,
    pub adapt: AdaptedPolicy,
    pub query: Vec<Trajectory>,
    /// Query observations, one column per step.
    pub obs: Mat,
    pub actions: Mat,
    pub advantages: Vec<f64>,
    pub behavior_logps: Vec<f64>,
    /// Behavior-policy means on the query observations.
    pub mu_old: Mat,
    /// Behavior-policy standard deviations.
    pub sigma_old: Vec<f64>,
    /// Query surrogate at the adapted parameters.
    pub query_loss: f64,
}

impl TaskData {
    pub fn steps(&self) -> usize {
        self.advantages.len()
    }
}

/// One meta-batch evaluation: the task-mean query loss, its first-order
/// meta-gradient, and the per-task records the outer step consumes.
#[derive(Debug, Clone)]
pub struct MetaBatch {
    pub loss: f64,
    pub meta_grad: ParamVector,
    pub tasks: Vec<TaskData>,
}

/// Adapts to every task in the batch and evaluates the query surrogate.
/// Support and query rollouts both run under `perturber`. Tasks are
/// processed in parallel but aggregated in index order, so the result is
/// identical for any worker count.
pub fn meta_objective(
    policy: &GaussianPolicy,
    tasks: &[TaskSpec],
    perturber: &dyn Perturber,
    cfg: &MetaConfig,
    iter_seed: u64,
) -> Result<MetaBatch, DiffError> {
    assert!(!tasks.is_empty(), "meta objective over an empty task batch");
    let per_task: Vec<(TaskData, ParamVector)> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| -> Result<(TaskData, ParamVector), DiffError> {
            let horizon = task.family.horizon;
            let support_seed = seeding::derive(iter_seed, &[tag::SUPPORT, i as u64]);
            let query_seed = seeding::derive(iter_seed, &[tag::QUERY, i as u64]);

            let mut support = collect_trajectories(
                policy,
                task,
                cfg.k_trajectories,
                horizon,
                perturber,
                support_seed,
            );
            prepare_batch(&mut support, cfg.gamma, horizon);
            let adapted = inner_adapt(policy, &support, cfg.inner_lr)?;

            let mut query = collect_trajectories(
                &adapted,
                task,
                cfg.k_trajectories,
                horizon,
                perturber,
                query_seed,
            );
            prepare_batch(&mut query, cfg.gamma, horizon);
            let stacked = stack_steps(&query);
            let (query_loss, grad) =
                surrogate_value_and_grad(&adapted.arch, &adapted.params, &query)?;
            let mu_old = adapted.mean_batch(&stacked.obs);
            let sigma_old = adapted.std();
            let data = TaskData {
                task: *task,
                adapt: AdaptedPolicy {
                    base: policy.params.clone(),
                    adapted: adapted.params.clone(),
                    support,
                },
                query,
                obs: stacked.obs,
                actions: stacked.actions,
                advantages: stacked.advantages,
                behavior_logps: stacked.behavior_logps,
                mu_old,
                sigma_old,
                query_loss,
            };
            Ok((data, grad))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let n = per_task.len() as f64;
    let mut loss = 0.0;
    let mut meta_grad = policy.params.zeros_like();
    let mut task_data = Vec::with_capacity(per_task.len());
    for (data, grad) in per_task {
        loss += data.query_loss;
        meta_grad = meta_grad.add_scaled(1.0, &grad)?;
        task_data.push(data);
    }
    loss /= n;
    for g in meta_grad.as_mut_slice() {
        *g /= n;
    }
    Ok(MetaBatch { loss, meta_grad, tasks: task_data })
}

const HALF_LOG_2PI: f64 = 0.9189385332046727;

/// Per-task parameters implied by a candidate base vector: the adapted
/// parameters shifted by the same offset as the base (first-order reading
/// of the adaptation map).
fn shifted_params(
    theta_old: &ParamVector,
    theta_new: &ParamVector,
    task: &TaskData,
) -> ParamVector {
    let delta = theta_new.add_scaled(-1.0, theta_old).expect("layouts agree");
    task.adapt.adapted.add_scaled(1.0, &delta).expect("layouts agree")
}

/// Importance-weighted query surrogate
/// `mean_i [ -(1/N_i) sum_t ratio_t * adv_t ]` with ratios against the
/// recorded behavior log-probs. At `theta_new = theta_old` the ratios are
/// one, and its gradient is exactly the first-order meta-gradient.
pub fn importance_surrogate(
    arch: &MlpArch,
    theta_old: &ParamVector,
    theta_new: &ParamVector,
    tasks: &[TaskData],
) -> f64 {
    let mut total = 0.0;
    for task in tasks {
        let params = shifted_params(theta_old, theta_new, task);
        let mu = arch.forward_batch(&params, &task.obs);
        let sigma: Vec<f64> =
            params.seg(LOG_STD_SEGMENT).expect("policy layout").iter().map(|v| v.exp()).collect();
        let mut acc = 0.0;
        for j in 0..task.steps() {
            let mut lp = 0.0;
            for d in 0..sigma.len() {
                let z = (task.actions.get(d, j) - mu.get(d, j)) / sigma[d];
                lp += -0.5 * z * z - sigma[d].ln() - HALF_LOG_2PI;
            }
            acc += (lp - task.behavior_logps[j]).exp() * task.advantages[j];
        }
        total += -acc / task.steps() as f64;
    }
    total / tasks.len() as f64
}

/// Closed-form diagonal-Gaussian KL from the behavior policies to the
/// candidate, averaged over every query step of every task.
pub fn mean_kl(
    arch: &MlpArch,
    theta_old: &ParamVector,
    theta_new: &ParamVector,
    tasks: &[TaskData],
) -> f64 {
    let mut acc = 0.0;
    let mut n_tot = 0usize;
    for task in tasks {
        let params = shifted_params(theta_old, theta_new, task);
        let mu_new = arch.forward_batch(&params, &task.obs);
        let sigma_new: Vec<f64> =
            params.seg(LOG_STD_SEGMENT).expect("policy layout").iter().map(|v| v.exp()).collect();
        for j in 0..task.steps() {
            for d in 0..sigma_new.len() {
                let so = task.sigma_old[d];
                let sn = sigma_new[d];
                let dm = task.mu_old.get(d, j) - mu_new.get(d, j);
                acc += (sn / so).ln() + (so * so + dm * dm) / (2.0 * sn * sn) - 0.5;
            }
        }
        n_tot += task.steps();
    }
    acc / n_tot as f64
}

/// Per-task forward caches for Fisher-vector products. The Fisher is the
/// Gauss-Newton form for a diagonal Gaussian: `J_mu^T diag(1/sigma^2) J_mu`
/// averaged over pooled query steps, plus the exact constant `2` block for
/// the log-std coordinates. Products are computed matrix-free: a forward
/// tangent through the mean network followed by a seeded reverse pass, both
/// over values cached at the behavior parameters.
pub struct FisherCache {
    tasks: Vec<TaskFisher>,
    n_tot: usize,
}

struct TaskFisher {
    graph: Graph,
    values: Vec<Mat>,
    mu: NodeId,
    inv_var: Vec<f64>,
    params: ParamVector,
}

impl FisherCache {
    pub fn new(arch: &MlpArch, tasks: &[TaskData]) -> Result<Self, DiffError> {
        let mut cached = Vec::with_capacity(tasks.len());
        let mut n_tot = 0usize;
        for task in tasks {
            let mut b = GraphBuilder::new(0);
            let x = b.constant(task.obs.clone());
            let mu = arch.build_graph(&mut b, x, &ParamSource::Var);
            let graph = b.finish(mu);
            let values = graph.forward(&task.adapt.adapted, &[])?;
            let inv_var = task.sigma_old.iter().map(|s| 1.0 / (s * s)).collect();
            n_tot += task.steps();
            cached.push(TaskFisher {
                graph,
                values,
                mu,
                inv_var,
                params: task.adapt.adapted.clone(),
            });
        }
        Ok(FisherCache { tasks: cached, n_tot })
    }

    /// Damped Fisher-vector product `F v + damping * v`.
    pub fn apply(&self, v: &ParamVector, damping: f64) -> ParamVector {
        let mut out = v.zeros_like();
        for tf in &self.tasks {
            let tangent = tf.graph.tangent_at(&tf.values, Some(v), None, tf.mu);
            let seed = Mat::from_fn(tangent.rows(), tangent.cols(), |i, j| {
                tangent.get(i, j) * tf.inv_var[i]
            });
            let (pg, _) = tf.graph.backward_from(&tf.values, &tf.params, tf.mu, &seed);
            out = out.add_scaled(1.0, &pg).expect("layouts agree");
        }
        let n = self.n_tot as f64;
        for o in out.as_mut_slice() {
            *o /= n;
        }
        {
            let ls_out = out.seg_mut(LOG_STD_SEGMENT).expect("policy layout");
            let ls_v = v.seg(LOG_STD_SEGMENT).expect("policy layout");
            for (o, &vi) in ls_out.iter_mut().zip(ls_v) {
                *o += 2.0 * vi;
            }
        }
        out.add_scaled(damping, v).expect("layouts agree")
    }
}

/// The trust-region outer update for one evaluated meta-batch: wires the
/// Fisher cache, the importance surrogate, and the closed-form KL into
/// [`trpo_step`].
pub fn outer_step(
    policy: &GaussianPolicy,
    batch: &MetaBatch,
    cfg: &MetaConfig,
) -> Result<(GaussianPolicy, TrpoReport), DiffError> {
    let fisher = FisherCache::new(&policy.arch, &batch.tasks)?;
    let arch = policy.arch.clone();
    let theta = policy.params.clone();
    let damping = cfg.trpo.cg_damping;
    let (new_params, report) = trpo_step(
        &policy.params,
        &batch.meta_grad,
        &mut |v| fisher.apply(v, damping),
        &mut |cand| importance_surrogate(&arch, &theta, cand, &batch.tasks),
        &mut |cand| mean_kl(&arch, &theta, cand, &batch.tasks),
        &cfg.trpo,
    );
    Ok((policy.with_params(new_params), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{finite_diff_oracle, relative_gradient_error};
    use crate::envs::{TaskFamily, TaskParam};
    use crate::rollout::IdentityPerturber;

    fn nav_task(goal: [f64; 2]) -> TaskSpec {
        TaskSpec { family: TaskFamily::nav2d(), param: TaskParam::NavGoal(goal) }
    }

    fn one_step_traj(obs: Vec<f64>, action: Vec<f64>, adv: f64) -> Trajectory {
        let mut t = Trajectory::default();
        t.true_states.push(obs.clone());
        t.observed.push(obs);
        t.actions.push(action);
        t.rewards.push(0.0);
        t.log_probs.push(0.0);
        t.returns = vec![0.0];
        t.advantages = vec![adv];
        t
    }

    fn small_prepared_batch(policy: &GaussianPolicy, seed: u64) -> Vec<Trajectory> {
        let mut trajs = collect_trajectories(
            policy,
            &nav_task([0.3, -0.2]),
            2,
            8,
            &IdentityPerturber,
            seed,
        );
        prepare_batch(&mut trajs, 0.99, 8);
        trajs
    }

    #[test]
    fn zero_advantages_give_zero_loss_and_zero_gradient() {
        let policy = GaussianPolicy::new(2, 2, &[4], 3);
        let trajs = vec![
            one_step_traj(vec![0.1, 0.2], vec![0.0, 0.1], 0.0),
            one_step_traj(vec![-0.3, 0.0], vec![0.2, -0.1], 0.0),
        ];
        let (loss, grad) = surrogate_value_and_grad(&policy.arch, &policy.params, &trajs).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn unit_advantage_single_step_is_negative_log_prob() {
        let policy = GaussianPolicy::new(2, 2, &[4], 5);
        let obs = vec![0.3, -0.1];
        let action = vec![0.2, 0.4];
        let trajs = vec![one_step_traj(obs.clone(), action.clone(), 1.0)];
        let loss = reinforce_surrogate(&policy.arch, &policy.params, &trajs).unwrap();
        let (mean, std) = policy.action_distribution(&obs);
        let want = -crate::rollout::log_prob(&mean, &std, &action);
        assert!((loss - want).abs() <= 1e-12, "{loss} vs {want}");
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let policy = GaussianPolicy::new(2, 2, &[4], 11);
        let trajs = small_prepared_batch(&policy, 13);
        let (_, grad) = surrogate_value_and_grad(&policy.arch, &policy.params, &trajs).unwrap();
        let arch = policy.arch.clone();
        let layout = policy.params.layout().clone();
        let mut f = |x: &[f64]| {
            let p = ParamVector::from_data(layout.clone(), x.to_vec()).unwrap();
            reinforce_surrogate(&arch, &p, &trajs).unwrap()
        };
        let fd = finite_diff_oracle(&mut f, policy.params.as_slice(), 1e-5);
        let err = relative_gradient_error(&fd, grad.as_slice());
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn inner_adapt_is_exactly_one_gradient_step() {
        let policy = GaussianPolicy::new(2, 2, &[4], 7);
        let trajs = small_prepared_batch(&policy, 17);
        let (_, grad) = surrogate_value_and_grad(&policy.arch, &policy.params, &trajs).unwrap();
        let adapted = inner_adapt(&policy, &trajs, 0.1).unwrap();
        let want = policy.params.add_scaled(-0.1, &grad).unwrap();
        assert_eq!(adapted.params.as_slice(), want.as_slice());
    }

    #[test]
    fn zero_advantage_support_is_a_fixed_point() {
        let policy = GaussianPolicy::new(2, 2, &[4], 9);
        let trajs = vec![one_step_traj(vec![0.1, 0.1], vec![0.0, 0.0], 0.0)];
        let adapted = inner_adapt(&policy, &trajs, 0.1).unwrap();
        assert_eq!(adapted.params.as_slice(), policy.params.as_slice());
    }

    #[test]
    fn zero_inner_lr_is_a_fixed_point() {
        let policy = GaussianPolicy::new(2, 2, &[4], 9);
        let trajs = small_prepared_batch(&policy, 23);
        let adapted = inner_adapt(&policy, &trajs, 0.0).unwrap();
        assert_eq!(adapted.params.as_slice(), policy.params.as_slice());
    }

    #[test]
    fn one_parameter_policy_adapts_by_the_hand_computed_step() {
        // mu = w*x + b with w=0.5, b=0.1, log_std=0; one step with
        // x=0.7, a=0.3, adv=2: mu=0.45, dlogp/dmu=(a-mu)=-0.15,
        // dL/dw = -2*(-0.15)*0.7 = 0.21, dL/db = 0.3,
        // dL/dls = -2*((a-mu)^2 - 1) = 1.955
        let arch = MlpArch::new(1, &[], 1);
        let layout = arch.layout_with(&[(LOG_STD_SEGMENT, 1)]);
        let mut params = ParamVector::zeros(layout);
        params.seg_mut("w0").unwrap()[0] = 0.5;
        params.seg_mut("b0").unwrap()[0] = 0.1;
        let policy = GaussianPolicy { arch, params };
        let trajs = vec![one_step_traj(vec![0.7], vec![0.3], 2.0)];
        let adapted = inner_adapt(&policy, &trajs, 0.1).unwrap();
        assert!((adapted.params.seg("w0").unwrap()[0] - 0.479).abs() <= 1e-12);
        assert!((adapted.params.seg("b0").unwrap()[0] - 0.07).abs() <= 1e-12);
        assert!((adapted.params.seg(LOG_STD_SEGMENT).unwrap()[0] - (-0.1955)).abs() <= 1e-12);
    }

    fn small_meta_cfg() -> MetaConfig {
        MetaConfig {
            inner_lr: 0.1,
            meta_batch_size: 2,
            k_trajectories: 3,
            gamma: 0.99,
            trpo: TrpoConfig::default(),
        }
    }

    #[test]
    fn one_task_meta_objective_is_its_query_surrogate() {
        let policy = GaussianPolicy::new(2, 2, &[8], 4);
        let tasks = [nav_task([0.2, 0.4])];
        let cfg = small_meta_cfg();
        let batch = meta_objective(&policy, &tasks, &IdentityPerturber, &cfg, 42).unwrap();
        assert_eq!(batch.tasks.len(), 1);
        let data = &batch.tasks[0];
        let again =
            reinforce_surrogate(&policy.arch, &data.adapt.adapted, &data.query).unwrap();
        assert_eq!(batch.loss, again);
        let (_, grad_again) =
            surrogate_value_and_grad(&policy.arch, &data.adapt.adapted, &data.query).unwrap();
        assert_eq!(batch.meta_grad.as_slice(), grad_again.as_slice());
    }

    #[test]
    fn meta_objective_is_the_task_mean_and_deterministic() {
        let policy = GaussianPolicy::new(2, 2, &[8], 6);
        let tasks = [nav_task([0.2, 0.4]), nav_task([-0.3, 0.1])];
        let cfg = small_meta_cfg();
        let a = meta_objective(&policy, &tasks, &IdentityPerturber, &cfg, 17).unwrap();
        let b = meta_objective(&policy, &tasks, &IdentityPerturber, &cfg, 17).unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.meta_grad.as_slice(), b.meta_grad.as_slice());
        let mean = (a.tasks[0].query_loss + a.tasks[1].query_loss) / 2.0;
        assert_eq!(a.loss, mean);
    }

    #[test]
    fn importance_surrogate_gradient_is_the_meta_gradient() {
        let policy = GaussianPolicy::new(2, 2, &[4], 8);
        let tasks = [nav_task([0.25, -0.15]), nav_task([-0.1, 0.35])];
        let cfg = small_meta_cfg();
        let batch = meta_objective(&policy, &tasks, &IdentityPerturber, &cfg, 29).unwrap();
        // at theta the ratios are 1, so the value is minus the mean of the
        // standardized advantages: essentially zero
        let at_theta =
            importance_surrogate(&policy.arch, &policy.params, &policy.params, &batch.tasks);
        assert!(at_theta.abs() <= 1e-9, "value at theta {at_theta}");
        let arch = policy.arch.clone();
        let layout = policy.params.layout().clone();
        let theta = policy.params.clone();
        let task_data = batch.tasks.clone();
        let mut f = |x: &[f64]| {
            let p = ParamVector::from_data(layout.clone(), x.to_vec()).unwrap();
            importance_surrogate(&arch, &theta, &p, &task_data)
        };
        let fd = finite_diff_oracle(&mut f, policy.params.as_slice(), 1e-5);
        let err = relative_gradient_error(&fd, batch.meta_grad.as_slice());
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn kl_is_zero_at_theta_and_positive_away_from_it() {
        let policy = GaussianPolicy::new(2, 2, &[4], 10);
        let tasks = [nav_task([0.2, 0.2])];
        let cfg = small_meta_cfg();
        let batch = meta_objective(&policy, &tasks, &IdentityPerturber, &cfg, 31).unwrap();
        let at_theta = mean_kl(&policy.arch, &policy.params, &policy.params, &batch.tasks);
        assert_eq!(at_theta, 0.0);
        let mut moved = policy.params.clone();
        moved.seg_mut("w0").unwrap()[0] += 0.05;
        let away = mean_kl(&policy.arch, &policy.params, &moved, &batch.tasks);
        assert!(away > 0.0, "kl {away}");
    }

    #[test]
    fn fisher_vector_product_matches_a_dense_finite_difference_fisher() {
        let policy = GaussianPolicy::new(2, 2, &[3], 12);
        let n_steps = 5;
        let mut rng = crate::seeding::stream(77, &[1]);
        let obs = Mat::from_fn(2, n_steps, |_, _| {
            rand::Rng::random_range(&mut rng, -0.5..0.5)
        });
        let mu_old = policy.mean_batch(&obs);
        let sigma_old = policy.std();
        let data = TaskData {
            task: nav_task([0.0, 0.0]),
            adapt: AdaptedPolicy {
                base: policy.params.clone(),
                adapted: policy.params.clone(),
                support: Vec::new(),
            },
            query: Vec::new(),
            obs: obs.clone(),
            actions: Mat::zeros(2, n_steps),
            advantages: vec![0.0; n_steps],
            behavior_logps: vec![0.0; n_steps],
            mu_old,
            sigma_old: sigma_old.clone(),
            query_loss: 0.0,
        };
        let cache = FisherCache::new(&policy.arch, std::slice::from_ref(&data)).unwrap();

        // dense Fisher from finite-difference Jacobians of the mean
        let p = policy.params.len();
        let h = 1e-5;
        let mut jac = vec![vec![0.0; p]; 2 * n_steps]; // rows: (dim, step)
        for pi in 0..p {
            let mut plus = policy.params.clone();
            plus.as_mut_slice()[pi] += h;
            let mut minus = policy.params.clone();
            minus.as_mut_slice()[pi] -= h;
            let mp = policy.arch.forward_batch(&plus, &obs);
            let mm = policy.arch.forward_batch(&minus, &obs);
            for d in 0..2 {
                for j in 0..n_steps {
                    jac[d * n_steps + j][pi] = (mp.get(d, j) - mm.get(d, j)) / (2.0 * h);
                }
            }
        }
        let v = ParamVector::from_data(
            policy.params.layout().clone(),
            (0..p).map(|i| ((i * 13 % 7) as f64 - 3.0) / 5.0).collect(),
        )
        .unwrap();
        let mut want = vec![0.0; p];
        for d in 0..2 {
            let w = 1.0 / (sigma_old[d] * sigma_old[d]);
            for j in 0..n_steps {
                let row = &jac[d * n_steps + j];
                let jv: f64 = row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
                for (o, &r) in want.iter_mut().zip(row) {
                    *o += w * jv * r / n_steps as f64;
                }
            }
        }
        let ls = policy.params.layout().find(LOG_STD_SEGMENT).unwrap().offset;
        for d in 0..2 {
            want[ls + d] += 2.0 * v.as_slice()[ls + d];
        }
        let got = cache.apply(&v, 0.0);
        let err = relative_gradient_error(&want, got.as_slice());
        assert!(err <= 1e-5, "relative error {err}");
    }

    #[test]
    fn outer_step_accepts_and_respects_the_trust_region() {
        let policy = GaussianPolicy::new(2, 2, &[8], 14);
        let tasks = [nav_task([0.3, 0.1]), nav_task([-0.2, -0.4])];
        let cfg = small_meta_cfg();
        let batch = meta_objective(&policy, &tasks, &IdentityPerturber, &cfg, 55).unwrap();
        let (updated, report) = outer_step(&policy, &batch, &cfg).unwrap();
        assert!(report.accepted, "outer step should accept: {}", report.reason);
        assert!(report.surrogate_after < report.surrogate_before);
        assert!(report.kl <= cfg.trpo.kl_limit * (1.0 + 1e-6));
        assert!(updated.params.as_slice() != policy.params.as_slice());
    }
}
