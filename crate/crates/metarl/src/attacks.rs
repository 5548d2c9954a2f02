//! State-perturbation attacks behind one perturber interface: random
//! Gaussian noise, FGSM, and an adversarial generator–discriminator pair,
//! plus the composite objective that trains the pair.
//!
//! All attacks perturb what the policy observes; the environment always
//! steps on the true state. Each perturber respects an L-infinity budget
//! after projection, and an attack strength of zero is bit-exactly the
//! identity, so clean evaluation is the `scale = 0` special case.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::diffcore::{
    apply_update, AdamConfig, AdamState, DiffError, Graph, GraphBuilder, Mat, ParamVector,
    UpdateRule,
};
use crate::nets::{weighted_logp_sum, MlpArch, ParamSource};
use crate::rollout::{GaussianPolicy, Perturber, LOG_STD_SEGMENT};
use crate::seeding::{self, tag};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("non-finite gradient in fgsm perturbation")]
    NonFiniteGradient,
}

/// Which perturbation is applied at every observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    /// No perturbation: the clean observation model.
    Identity,
    /// Additive scaled Gaussian draw per coordinate.
    RandomGaussian { mu: f64, sigma: f64 },
    /// Sign-of-gradient step of amplitude `epsilon`.
    Fgsm { epsilon: f64 },
    /// Learned generator output, clipped to the budget.
    AdGan,
}

impl AttackKind {
    /// Stable name used in reports and CSV columns.
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Identity => "clean",
            AttackKind::RandomGaussian { .. } => "random",
            AttackKind::Fgsm { .. } => "fgsm",
            AttackKind::AdGan => "adgan",
        }
    }
}

/// An attack kind at a given evaluation strength. The L-infinity projection
/// budget always equals the scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub scale: f64,
}

impl AttackSpec {
    pub fn identity() -> Self {
        AttackSpec { kind: AttackKind::Identity, scale: 0.0 }
    }

    /// Standard-normal random attack at `scale`.
    pub fn random(scale: f64) -> Self {
        AttackSpec { kind: AttackKind::RandomGaussian { mu: 0.0, sigma: 1.0 }, scale }
    }

    /// FGSM attack with `epsilon = scale`.
    pub fn fgsm(scale: f64) -> Self {
        AttackSpec { kind: AttackKind::Fgsm { epsilon: scale }, scale }
    }

    /// Generator attack with projection budget `scale`.
    pub fn adgan(scale: f64) -> Self {
        AttackSpec { kind: AttackKind::AdGan, scale }
    }

    pub fn budget(&self) -> f64 {
        self.scale
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Additive Gaussian perturbation `x + scale * dx` with `dx ~ N(mu, sigma^2)`
/// i.i.d. per coordinate. Unprojected — the perturber applies the budget.
pub fn random_perturb(
    x: &[f64],
    mu: f64,
    sigma: f64,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    if scale == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            v + scale * (mu + sigma * z)
        })
        .collect()
}

/// Sign-of-gradient perturbation `x + epsilon * sign(g)` with
/// `g = loss_grad_at_state(x)`. Zero-gradient coordinates stay put.
pub fn fgsm_perturb(
    x: &[f64],
    epsilon: f64,
    loss_grad_at_state: &mut dyn FnMut(&[f64]) -> Vec<f64>,
) -> Result<Vec<f64>, AttackError> {
    assert!(epsilon >= 0.0, "epsilon must be nonnegative");
    if epsilon == 0.0 {
        return Ok(x.to_vec());
    }
    let g = loss_grad_at_state(x);
    if !g.iter().all(|v| v.is_finite()) {
        return Err(AttackError::NonFiniteGradient);
    }
    Ok(x.iter().zip(&g).map(|(&v, &gi)| v + epsilon * sign(gi)).collect())
}

/// Generator and discriminator of the adversarial attack, with the hinge
/// bound and the composite-objective weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AdGanParams {
    pub gen_arch: MlpArch,
    pub disc_arch: MlpArch,
    pub generator: ParamVector,
    pub discriminator: ParamVector,
    /// Soft L2 radius on the raw generator output (and its output scaling).
    pub hinge_bound: f64,
    pub gan_weight_alpha: f64,
    pub hinge_weight_beta: f64,
}

impl AdGanParams {
    /// Seeded pair over `state_dim`-dimensional states. The generator's
    /// final layer starts at zero so the initial attack is exactly the
    /// identity, while gradients still flow through the hidden layers.
    pub fn new(state_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let gen_arch = MlpArch::new(state_dim, hidden, state_dim);
        let disc_arch = MlpArch::new(state_dim, hidden, 1);
        let mut generator = ParamVector::zeros(gen_arch.layout());
        gen_arch.init_into(&mut generator, seeding::derive(seed, &[tag::GAN_INIT, 0]), true);
        let mut discriminator = ParamVector::zeros(disc_arch.layout());
        disc_arch.init_into(&mut discriminator, seeding::derive(seed, &[tag::GAN_INIT, 1]), false);
        AdGanParams {
            gen_arch,
            disc_arch,
            generator,
            discriminator,
            hinge_bound: 0.2,
            gan_weight_alpha: 0.8,
            hinge_weight_beta: 0.2,
        }
    }

    /// Raw perturbation `G(x) = c * tanh(net(x))` for one state.
    pub fn generator_output(&self, x: &[f64]) -> Vec<f64> {
        self.gen_arch
            .forward(&self.generator, x)
            .into_iter()
            .map(|v| self.hinge_bound * v.tanh())
            .collect()
    }

    /// Batched generator output, one column per state.
    pub fn generator_output_batch(&self, x: &Mat) -> Mat {
        let raw = self.gen_arch.forward_batch(&self.generator, x);
        raw.map(|v| self.hinge_bound * v.tanh())
    }

    /// Discriminator logit for one state.
    pub fn disc_logit(&self, x: &[f64]) -> f64 {
        self.disc_arch.forward(&self.discriminator, x)[0]
    }
}

/// Perturbed state `x + clip_Linf(G(x), budget)`.
pub fn gan_perturb(gan: &AdGanParams, x: &[f64], budget: f64) -> Vec<f64> {
    let g = gan.generator_output(x);
    assert_eq!(g.len(), x.len(), "generator dimension mismatch");
    x.iter().zip(&g).map(|(&v, &gi)| v + gi.clamp(-budget, budget)).collect()
}

/// Mean L2 norm of the generator output over a state batch — the
/// convergence diagnostic for adversarial training.
pub fn mean_generator_norm(gan: &AdGanParams, states: &Mat) -> f64 {
    let out = gan.generator_output_batch(states);
    let mut acc = 0.0;
    for j in 0..out.cols() {
        let mut sq = 0.0;
        for i in 0..out.rows() {
            let v = out.get(i, j);
            sq += v * v;
        }
        acc += sq.sqrt();
    }
    acc / out.cols() as f64
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// GAN value `E log sig(D(x)) + E log(1 - sig(D(xt)))` from raw logits,
/// clamped to [-20, 20] before the log-sigmoid. The discriminator ascends
/// this; the generator trains on the non-saturating `-log sig(D(xt))`.
pub fn gan_loss_from_logits(real_logits: &[f64], fake_logits: &[f64]) -> f64 {
    assert!(
        !real_logits.is_empty() && !fake_logits.is_empty(),
        "gan loss over an empty batch"
    );
    let real: f64 =
        real_logits.iter().map(|&z| sigmoid(z.clamp(-20.0, 20.0)).ln()).sum::<f64>()
            / real_logits.len() as f64;
    let fake: f64 = fake_logits
        .iter()
        .map(|&z| (1.0 - sigmoid(z.clamp(-20.0, 20.0))).ln())
        .sum::<f64>()
        / fake_logits.len() as f64;
    real + fake
}

/// GAN value over state batches (one column per state).
pub fn gan_loss(gan: &AdGanParams, real: &Mat, fake: &Mat) -> f64 {
    assert!(real.cols() > 0 && fake.cols() > 0, "gan loss over an empty batch");
    let real_logits = gan.disc_arch.forward_batch(&gan.discriminator, real);
    let fake_logits = gan.disc_arch.forward_batch(&gan.discriminator, fake);
    gan_loss_from_logits(real_logits.as_slice(), fake_logits.as_slice())
}

/// Negated agent loss: minimizing this maximizes the adapted policy's
/// query-batch surrogate loss.
pub fn adv_loss(query_surrogate_loss: f64) -> f64 {
    -query_surrogate_loss
}

/// Mean hinge `max(0, norm - c)` over precomputed generator-output norms.
pub fn hinge_from_norms(norms: &[f64], c: f64) -> f64 {
    assert!(c > 0.0, "hinge bound must be positive");
    norms.iter().map(|&n| (n - c).max(0.0)).sum::<f64>() / norms.len() as f64
}

/// Mean hinge on the L2 norm of the generator output over a state batch.
pub fn hinge_loss(gan: &AdGanParams, states: &Mat, c: f64) -> f64 {
    let out = gan.generator_output_batch(states);
    let norms: Vec<f64> = (0..out.cols())
        .map(|j| (0..out.rows()).map(|i| out.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    hinge_from_norms(&norms, c)
}

/// Composite adversarial objective `adv + alpha * gan + beta * hinge`.
pub fn total_gan_objective(adv: f64, gan: f64, hinge: f64, alpha_w: f64, beta_w: f64) -> f64 {
    adv + alpha_w * gan + beta_w * hinge
}

/// Gradient of the single-step surrogate `-log pi(a | x)` with respect to
/// the state `x`, for a fixed policy. This is the FGSM attack loss: the
/// probe action stands in for the trajectory data of the REINFORCE
/// surrogate at one step.
pub fn fgsm_loss_gradient(policy: &GaussianPolicy, x: &[f64], probe_action: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut b = GraphBuilder::new(d);
    let x_in = b.input(0, d, 1);
    let mu = policy.arch.build_graph(&mut b, x_in, &ParamSource::Fixed(&policy.params));
    let ls = b.constant(Mat::col_vec(policy.log_std()));
    let action = Mat::col_vec(probe_action);
    let weighted = weighted_logp_sum(&mut b, mu, ls, action, &[1.0]);
    let loss = b.scale(weighted, -1.0);
    let graph = b.finish(loss);
    graph.grad_inputs(&policy.params, x).expect("finite fgsm gradient")
}

struct RandomGaussianPerturber {
    mu: f64,
    sigma: f64,
    scale: f64,
    budget: f64,
}

impl Perturber for RandomGaussianPerturber {
    fn perturb(&self, _policy: &GaussianPolicy, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        if self.scale == 0.0 {
            return x.to_vec();
        }
        let raw = random_perturb(x, self.mu, self.sigma, self.scale, rng);
        x.iter()
            .zip(&raw)
            .map(|(&v, &r)| v + (r - v).clamp(-self.budget, self.budget))
            .collect()
    }
}

struct FgsmPerturber {
    epsilon: f64,
    budget: f64,
}

impl Perturber for FgsmPerturber {
    fn perturb(&self, policy: &GaussianPolicy, x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        if self.epsilon == 0.0 {
            return x.to_vec();
        }
        // probe action from the perturber's own stream: the attack loss is
        // the one-step surrogate at a sampled action, whose state gradient
        // does not vanish at the mean
        let (mean, std) = policy.action_distribution(x);
        let probe: Vec<f64> = mean
            .iter()
            .zip(&std)
            .map(|(&m, &s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s * z
            })
            .collect();
        let eps = self.epsilon.min(self.budget);
        let mut grad = |xs: &[f64]| fgsm_loss_gradient(policy, xs, &probe);
        fgsm_perturb(x, eps, &mut grad).expect("finite fgsm gradient")
    }
}

struct AdGanPerturber {
    gan: AdGanParams,
    budget: f64,
}

impl Perturber for AdGanPerturber {
    fn perturb(&self, _policy: &GaussianPolicy, x: &[f64], _rng: &mut ChaCha8Rng) -> Vec<f64> {
        if self.budget == 0.0 {
            return x.to_vec();
        }
        gan_perturb(&self.gan, x, self.budget)
    }
}

/// Instantiates the perturber for an attack spec. AdGan needs the trained
/// pair; the other kinds ignore `gan`.
pub fn make_perturber(spec: &AttackSpec, gan: Option<&AdGanParams>) -> Box<dyn Perturber> {
    match spec.kind {
        AttackKind::Identity => Box::new(crate::rollout::IdentityPerturber),
        AttackKind::RandomGaussian { mu, sigma } => Box::new(RandomGaussianPerturber {
            mu,
            sigma,
            scale: spec.scale,
            budget: spec.budget(),
        }),
        AttackKind::Fgsm { epsilon } => {
            Box::new(FgsmPerturber { epsilon, budget: spec.budget() })
        }
        AttackKind::AdGan => {
            let gan = gan.expect("adgan perturber needs generator parameters").clone();
            Box::new(AdGanPerturber { gan, budget: spec.budget() })
        }
    }
}

/// One task's query data for the adversarial term of the generator update:
/// true states (the generator re-perturbs them inside the graph), the
/// actions and standardized advantages of the collected rollouts, and the
/// adapted policy parameters those rollouts used.
#[derive(Debug, Clone)]
pub struct AdvTaskBatch {
    pub true_states: Mat,
    pub actions: Mat,
    pub advantages: Vec<f64>,
    pub adapted: ParamVector,
}

/// Discriminator loss graph: minus the GAN value, with both batches baked
/// in as constants and the discriminator as the graph variable.
fn build_disc_loss_graph(gan: &AdGanParams, real: &Mat, fake: &Mat) -> Graph {
    let mut b = GraphBuilder::new(0);
    let xr = b.constant(real.clone());
    let zr = gan.disc_arch.build_graph(&mut b, xr, &ParamSource::Var);
    let zr = b.clip_sym(zr, 20.0);
    let sr = b.sigmoid(zr);
    let lr = b.log(sr);
    let m_real = b.mean(lr);

    let xf = b.constant(fake.clone());
    let zf = gan.disc_arch.build_graph(&mut b, xf, &ParamSource::Var);
    let zf = b.clip_sym(zf, 20.0);
    let sf = b.sigmoid(zf);
    let neg_sf = b.scale(sf, -1.0);
    let one_minus = b.shift(neg_sf, 1.0);
    let lf = b.log(one_minus);
    let m_fake = b.mean(lf);

    let value = b.add(m_real, m_fake);
    let loss = b.neg(value);
    b.finish(loss)
}

/// One Adam step of the discriminator ascending the GAN value on a
/// real/fake state batch pair. Returns the GAN value before the step.
pub fn disc_adam_step(
    gan: &mut AdGanParams,
    real: &Mat,
    fake: &Mat,
    adam_state: &mut AdamState,
    adam: &AdamConfig,
) -> Result<f64, DiffError> {
    assert!(real.cols() > 0 && fake.cols() > 0, "gan loss over an empty batch");
    let graph = build_disc_loss_graph(gan, real, fake);
    let (loss, grad, _) = graph.value_and_grads(&gan.discriminator, &[])?;
    let rule = UpdateRule::Adam { cfg: *adam, state: &*adam_state };
    let (updated, next_state) = apply_update(&gan.discriminator, &grad, &rule)?;
    gan.discriminator = updated;
    *adam_state = next_state.expect("adam returns its state");
    Ok(-loss)
}

/// Adds `G(x) = c * tanh(net(x))` over a constant state batch and returns
/// (raw output node, perturbed-state node clipped to `budget`).
fn gen_on_states(
    b: &mut GraphBuilder,
    gan: &AdGanParams,
    states: &Mat,
    budget: f64,
) -> (crate::diffcore::NodeId, crate::diffcore::NodeId) {
    let x = b.constant(states.clone());
    let raw = gan.gen_arch.build_graph(b, x, &ParamSource::Var);
    let t = b.tanh(raw);
    let g = b.scale(t, gan.hinge_bound);
    let clipped = b.clip_sym(g, budget);
    let perturbed = b.add(x, clipped);
    (g, perturbed)
}

/// Total generator objective as a graph over the generator parameters:
///
/// * adversarial term: minus the mean over tasks of the adapted policies'
///   query surrogate, evaluated on re-perturbed true states (gradients flow
///   through the observations only — the policies are baked in as
///   constants);
/// * GAN term (weight alpha): non-saturating `-E log sig(D(xt))` over the
///   pooled states, with the discriminator fixed;
/// * hinge term (weight beta): mean `max(0, |G(x)|_2 - c)` over the pooled
///   states, on the unclipped generator output.
fn build_generator_objective(
    gan: &AdGanParams,
    policy_arch: &MlpArch,
    all_states: &Mat,
    tasks: &[AdvTaskBatch],
    budget: f64,
) -> Graph {
    assert!(!tasks.is_empty(), "generator objective needs at least one task");
    assert!(all_states.cols() > 0, "generator objective needs pooled states");
    let mut b = GraphBuilder::new(0);

    // pooled states: hinge on raw norms, non-saturating GAN on fakes
    let (g_pool, fake_pool) = gen_on_states(&mut b, gan, all_states, budget);
    let norms = b.col_norm(g_pool);
    let shifted = b.shift(norms, -gan.hinge_bound);
    let active = b.max_const(shifted, 0.0);
    let hinge = b.mean(active);

    let zf = gan.disc_arch.build_graph(&mut b, fake_pool, &ParamSource::Fixed(&gan.discriminator));
    let zf = b.clip_sym(zf, 20.0);
    let sf = b.sigmoid(zf);
    let lf = b.log(sf);
    let mean_lf = b.mean(lf);
    let gan_term = b.neg(mean_lf);

    // adversarial term: -(1/T) sum_i L_i where L_i is the query surrogate
    // loss, i.e. +(1/T) sum_i (1/N_i) sum_t logp * adv
    let mut adv_acc = None;
    for task in tasks {
        let n_i = task.advantages.len();
        assert!(n_i > 0, "empty query batch in generator objective");
        let (_, perturbed) = gen_on_states(&mut b, gan, &task.true_states, budget);
        let mu = policy_arch.build_graph(&mut b, perturbed, &ParamSource::Fixed(&task.adapted));
        let ls = b.constant(Mat::col_vec(task.adapted.seg(LOG_STD_SEGMENT).expect("policy")));
        let weighted = weighted_logp_sum(&mut b, mu, ls, task.actions.clone(), &task.advantages);
        let term = b.scale(weighted, 1.0 / n_i as f64);
        adv_acc = Some(match adv_acc {
            None => term,
            Some(acc) => b.add(acc, term),
        });
    }
    let adv = b.scale(adv_acc.expect("at least one task"), 1.0 / tasks.len() as f64);

    let weighted_gan = b.scale(gan_term, gan.gan_weight_alpha);
    let weighted_hinge = b.scale(hinge, gan.hinge_weight_beta);
    let partial = b.add(adv, weighted_gan);
    let total = b.add(partial, weighted_hinge);
    b.finish(total)
}

/// One Adam step of the generator descending the total objective. Returns
/// the objective value before the step.
pub fn gen_adam_step(
    gan: &mut AdGanParams,
    policy_arch: &MlpArch,
    all_states: &Mat,
    tasks: &[AdvTaskBatch],
    budget: f64,
    adam_state: &mut AdamState,
    adam: &AdamConfig,
) -> Result<f64, DiffError> {
    let graph = build_generator_objective(gan, policy_arch, all_states, tasks, budget);
    let (value, grad, _) = graph.value_and_grads(&gan.generator, &[])?;
    let rule = UpdateRule::Adam { cfg: *adam, state: &*adam_state };
    let (updated, next_state) = apply_update(&gan.generator, &grad, &rule)?;
    gan.generator = updated;
    *adam_state = next_state.expect("adam returns its state");
    Ok(value)
}

/// Total objective value and its gradient with respect to the generator
/// parameters, without stepping.
pub fn generator_objective_gradient(
    gan: &AdGanParams,
    policy_arch: &MlpArch,
    all_states: &Mat,
    tasks: &[AdvTaskBatch],
    budget: f64,
) -> Result<(f64, ParamVector), DiffError> {
    let graph = build_generator_objective(gan, policy_arch, all_states, tasks, budget);
    let (value, grad, _) = graph.value_and_grads(&gan.generator, &[])?;
    Ok((value, grad))
}

/// Evaluates the total generator objective without stepping (loop-based,
/// no graph): used for finite-difference validation and logging.
pub fn generator_objective_value(
    gan: &AdGanParams,
    policy_arch: &MlpArch,
    all_states: &Mat,
    tasks: &[AdvTaskBatch],
    budget: f64,
) -> f64 {
    // hinge + non-saturating gan over pooled states
    let g = gan.generator_output_batch(all_states);
    let norms: Vec<f64> = (0..g.cols())
        .map(|j| (0..g.rows()).map(|i| g.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let hinge = hinge_from_norms(&norms, gan.hinge_bound);
    let fake = Mat::from_fn(all_states.rows(), all_states.cols(), |i, j| {
        all_states.get(i, j) + g.get(i, j).clamp(-budget, budget)
    });
    let logits = gan.disc_arch.forward_batch(&gan.discriminator, &fake);
    let gan_term = -logits
        .as_slice()
        .iter()
        .map(|&z| sigmoid(z.clamp(-20.0, 20.0)).ln())
        .sum::<f64>()
        / logits.len() as f64;

    let mut adv = 0.0;
    for task in tasks {
        let gq = gan.generator_output_batch(&task.true_states);
        let xt = Mat::from_fn(task.true_states.rows(), task.true_states.cols(), |i, j| {
            task.true_states.get(i, j) + gq.get(i, j).clamp(-budget, budget)
        });
        let mu = policy_arch.forward_batch(&task.adapted, &xt);
        let sigma: Vec<f64> = task
            .adapted
            .seg(LOG_STD_SEGMENT)
            .expect("policy")
            .iter()
            .map(|v| v.exp())
            .collect();
        let n = task.advantages.len();
        let mut acc = 0.0;
        for j in 0..n {
            let mut lp = 0.0;
            for d in 0..sigma.len() {
                let z = (task.actions.get(d, j) - mu.get(d, j)) / sigma[d];
                lp += -0.5 * z * z - sigma[d].ln() - 0.9189385332046727;
            }
            acc += lp * task.advantages[j];
        }
        adv += acc / n as f64;
    }
    adv /= tasks.len() as f64;

    total_gan_objective(adv, gan_term, hinge, gan.gan_weight_alpha, gan.hinge_weight_beta)
}
