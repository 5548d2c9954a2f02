//! Acceptance gate: the ten end-to-end properties this laboratory promises.
//!
//! Each test prints one `criterion NN PASS` line (visible with
//! `--nocapture`); a failing criterion panics with the offending numbers.
//! Criteria 5–9 share one desk-scale training bundle — three seeds of the
//! clean meta-learner and of the adversarial pair on 2-D navigation — built
//! once on first use. Run with `--test-threads 1` to keep the timing
//! measurement of criterion 5 honest on a laptop core count.
//!
//! 1. Reverse-mode gradients match central finite differences.
//! 2. Estimator oracles: return recursion, log-density normalization, and
//!    the trust-region KL postcondition.
//! 3. Attack contracts: sign structure, L∞ budgets, scale-0 identity.
//! 4. The adversary's total objective is wired to its parameters: analytic
//!    gradient matches finite differences through a two-step rollout.
//! 5. The clean meta-learner adapts: post-adaptation return beats
//!    pre-adaptation by at least 25% at desk scale, within 15 minutes.
//! 6. The learned attack is effective: it hurts the clean meta-learner at
//!    least as much as random noise at the same evaluation scale.
//! 7. Adversarial training is robust: under the learned attack the
//!    adversarially trained policy beats the clean one.
//! 8. Clean performance is retained: the adversarially trained policy keeps
//!    at least 85% of the clean policy's improvement over a fresh policy.
//! 9. The hinge holds: the generator's mean perturbation norm stays within
//!    1.25·c on the states the trained pair actually visits.
//! 10. Runs are reproducible byte for byte, including across a
//!     checkpoint-resume boundary.

use std::path::Path;
use std::time::Instant;

use once_cell::sync::Lazy;

use metarl::attacks::{
    generator_objective_gradient, generator_objective_value, make_perturber, mean_generator_norm,
    AdGanParams, AdvTaskBatch, AttackSpec,
};
use metarl::diffcore::{gradcheck, Mat};
use metarl::envs::{sample_task_batch, TaskFamily, TaskSpec};
use metarl::harness::{
    checkpoint_path, default_config, run_experiment, save_checkpoint, Checkpoint,
};
use metarl::metapg::{meta_objective, MetaConfig};
use metarl::rollout::{
    collect_trajectories, discounted_returns, log_prob, GaussianPolicy, IdentityPerturber,
    Trajectory,
};
use metarl::seeding::{self, tag};
use metarl::trainers::{
    meta_test, train, train_with, MetaTestRow, Regime, TrainRun, TrainerState,
};
use rand::Rng;
use rand_distr::StandardNormal;

// ---------------------------------------------------------------------------
// Desk-scale configuration shared by criteria 5–9

const DESK_SEEDS: [u64; 3] = [1, 2, 3];
const DESK_ITERATIONS: usize = 200;
const DESK_NOISE_START: usize = 140;
const DESK_GAN_LR: f64 = 0.001;
const DESK_GAN_D_LR: f64 = 0.001;
const DESK_HIDDEN: [usize; 2] = [32, 32];
const DESK_EVAL_TASKS: usize = 40;
const EVAL_SCALE: f64 = 0.5;

fn desk_run(regime: Regime, seed: u64) -> TrainRun {
    let mut run = TrainRun::new(regime, TaskFamily::nav2d(), seed);
    run.total_iterations = DESK_ITERATIONS;
    run.noise_start_iteration = DESK_NOISE_START;
    run.policy_hidden = DESK_HIDDEN.to_vec();
    run.gan_hidden = DESK_HIDDEN.to_vec();
    run.gan_lr = DESK_GAN_LR;
    run.gan_d_lr = DESK_GAN_D_LR;
    run.meta.meta_batch_size = 20;
    run.meta.k_trajectories = 10;
    run
}

/// Everything criteria 5–9 need from one seed: the two trained states, the
/// held-out task set, and the five evaluation cells over it.
struct SeedArtifacts {
    seed: u64,
    admrl: TrainerState,
    maml_clean: MetaTestRow,
    maml_random: MetaTestRow,
    maml_adgan: MetaTestRow,
    admrl_clean: MetaTestRow,
    admrl_adgan: MetaTestRow,
    /// Mean return of the untrained (freshly initialized) policy without
    /// adaptation: the floor both regimes are measured against.
    fresh_return: f64,
    tasks: Vec<TaskSpec>,
    eval_seed: u64,
}

struct DeskBundle {
    seeds: Vec<SeedArtifacts>,
    /// Wall-clock seconds spent training and evaluating the clean runs.
    maml_secs: f64,
}

static DESK: Lazy<DeskBundle> = Lazy::new(|| {
    let family = TaskFamily::nav2d();
    let mut seeds = Vec::new();
    let mut maml_secs = 0.0;
    for seed in DESK_SEEDS {
        let mut rng = seeding::stream(seed, &[tag::EVAL_TASKS]);
        let tasks = sample_task_batch(&family, DESK_EVAL_TASKS, &mut rng);
        let eval_seed = seeding::derive(seed, &[tag::EVAL_TASKS]);

        let maml_run = desk_run(Regime::Maml, seed);
        let clock = Instant::now();
        eprintln!("[desk bundle] training clean meta-learner, seed {seed}");
        let maml = train(&maml_run).expect("clean training at desk scale").state;
        let cfg = &maml_run.meta;
        let maml_clean =
            meta_test(&maml.policy, &family, &AttackSpec::identity(), None, &tasks, cfg, eval_seed)
                .expect("clean evaluation");
        let maml_random = meta_test(
            &maml.policy,
            &family,
            &AttackSpec::random(EVAL_SCALE),
            None,
            &tasks,
            cfg,
            eval_seed,
        )
        .expect("random-attacked evaluation");
        maml_secs += clock.elapsed().as_secs_f64();

        eprintln!("[desk bundle] training adversarial pair, seed {seed}");
        let admrl = train(&desk_run(Regime::AdMrl, seed)).expect("adversarial training").state;
        let gan = admrl.gan.clone().expect("adversarial state carries the pair");
        let maml_adgan = meta_test(
            &maml.policy,
            &family,
            &AttackSpec::adgan(EVAL_SCALE),
            Some(&gan),
            &tasks,
            cfg,
            eval_seed,
        )
        .expect("attacked evaluation");
        let admrl_clean =
            meta_test(&admrl.policy, &family, &AttackSpec::identity(), None, &tasks, cfg, eval_seed)
                .expect("clean evaluation");
        let admrl_adgan = meta_test(
            &admrl.policy,
            &family,
            &AttackSpec::adgan(EVAL_SCALE),
            Some(&gan),
            &tasks,
            cfg,
            eval_seed,
        )
        .expect("attacked evaluation");

        let fresh = TrainerState::init(&maml_run).policy;
        let mut acc = 0.0;
        for (t, task) in tasks.iter().enumerate() {
            let trajs = collect_trajectories(
                &fresh,
                task,
                cfg.k_trajectories,
                family.horizon,
                &IdentityPerturber,
                seeding::derive(eval_seed, &[tag::EVAL_ROLLOUT, t as u64, 0]),
            );
            acc += mean_return(&trajs);
        }
        let fresh_return = acc / tasks.len() as f64;

        seeds.push(SeedArtifacts {
            seed,
            admrl,
            maml_clean,
            maml_random,
            maml_adgan,
            admrl_clean,
            admrl_adgan,
            fresh_return,
            tasks,
            eval_seed,
        });
    }
    DeskBundle { seeds, maml_secs }
});

fn mean_return(trajs: &[Trajectory]) -> f64 {
    trajs.iter().map(|t| t.rewards.iter().sum::<f64>()).sum::<f64>() / trajs.len() as f64
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

#[test]
fn criterion_01_gradient_oracle() {
    let clock = Instant::now();
    let report = gradcheck::run_suite(100, 0xACCE17);
    let secs = clock.elapsed().as_secs_f64();
    assert!(
        report.passed(),
        "gradient check failures:\n{}",
        report.failures.join("\n")
    );
    assert!(
        report.max_rel_err_params <= 1e-4 && report.max_rel_err_inputs <= 1e-4,
        "gradient errors above 1e-4: params {:.3e}, inputs {:.3e}",
        report.max_rel_err_params,
        report.max_rel_err_inputs
    );
    assert!(secs < 10.0, "gradient suite took {secs:.1}s (budget 10s)");
    println!(
        "criterion 01 PASS: 100 cases, max rel err params {:.2e} / inputs {:.2e} in {secs:.2}s",
        report.max_rel_err_params, report.max_rel_err_inputs
    );
}

// ---------------------------------------------------------------------------
// 2. Estimator oracles

#[test]
fn criterion_02_estimator_oracles() {
    // Discounted returns against an independent power-series oracle, plus
    // the defining recursion held exactly.
    let mut rng = seeding::stream(0xACCE17, &[21]);
    for case in 0..1000u64 {
        let len = 1 + (rng.random::<u64>() % 60) as usize;
        let gamma = [0.9, 0.97, 0.99, 1.0][(case % 4) as usize];
        let rewards: Vec<f64> =
            (0..len).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
        let returns = discounted_returns(&rewards, gamma);
        assert_eq!(returns.len(), len);
        for t in 0..len {
            let mut oracle = 0.0;
            let mut pow = 1.0;
            for r in &rewards[t..] {
                oracle += pow * r;
                pow *= gamma;
            }
            let tol = 1e-9 * oracle.abs().max(1.0);
            assert!(
                (returns[t] - oracle).abs() <= tol,
                "case {case}: return[{t}] = {} vs oracle {oracle}",
                returns[t]
            );
            let next = if t + 1 < len { returns[t + 1] } else { 0.0 };
            assert!(
                returns[t] == rewards[t] + gamma * next,
                "case {case}: recursion broken at t={t}"
            );
        }
    }

    // Log-density normalization by trapezoid quadrature, one and two dims.
    let quad1 = {
        let (mean, std) = (vec![0.3], vec![0.7]);
        let (lo, hi) = (mean[0] - 10.0 * std[0], mean[0] + 10.0 * std[0]);
        let n = 40_000;
        let da = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let a = lo + i as f64 * da;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * log_prob(&mean, &std, &[a]).exp() * da;
        }
        total
    };
    assert!((quad1 - 1.0).abs() <= 1e-4, "1-D quadrature {quad1}");
    let quad2 = {
        let (mean, std) = (vec![0.2, -0.4], vec![0.5, 1.3]);
        let n = 900;
        let (lo0, hi0) = (mean[0] - 8.0 * std[0], mean[0] + 8.0 * std[0]);
        let (lo1, hi1) = (mean[1] - 8.0 * std[1], mean[1] + 8.0 * std[1]);
        let (d0, d1) = ((hi0 - lo0) / n as f64, (hi1 - lo1) / n as f64);
        let mut total = 0.0;
        for i in 0..=n {
            let wi = if i == 0 || i == n { 0.5 } else { 1.0 };
            let a0 = lo0 + i as f64 * d0;
            for j in 0..=n {
                let wj = if j == 0 || j == n { 0.5 } else { 1.0 };
                let a1 = lo1 + j as f64 * d1;
                total += wi * wj * log_prob(&mean, &std, &[a0, a1]).exp() * d0 * d1;
            }
        }
        total
    };
    assert!((quad2 - 1.0).abs() <= 1e-4, "2-D quadrature {quad2}");

    // Trust-region KL postcondition over 50 accepted steps drawn from small
    // training runs with varied seeds.
    let mut accepted = 0usize;
    let mut max_kl_ratio: f64 = 0.0;
    'outer: for seed in 11..31u64 {
        let mut run = TrainRun::new(Regime::Maml, TaskFamily::nav2d(), seed);
        run.family.horizon = 20;
        run.total_iterations = 10;
        run.noise_start_iteration = 10;
        run.policy_hidden = vec![8];
        run.meta.meta_batch_size = 4;
        run.meta.k_trajectories = 4;
        let delta = run.meta.trpo.kl_limit;
        let out = train(&run).expect("small training run");
        for log in &out.logs {
            if log.trpo.accepted {
                accepted += 1;
                assert!(
                    log.trpo.kl <= delta * (1.0 + 1e-6),
                    "accepted step with KL {} over limit {delta} (seed {seed})",
                    log.trpo.kl
                );
                max_kl_ratio = max_kl_ratio.max(log.trpo.kl / delta);
                if accepted >= 50 {
                    break 'outer;
                }
            }
        }
    }
    assert!(accepted >= 50, "only {accepted} accepted steps observed");
    println!(
        "criterion 02 PASS: returns oracle x1000, quadrature {quad1:.6}/{quad2:.6}, \
         50 accepted steps with max KL/limit {max_kl_ratio:.4}"
    );
}

// ---------------------------------------------------------------------------
// 3. Attack contracts

#[test]
fn criterion_03_attack_contracts() {
    let mut rng = seeding::stream(0xACCE17, &[3]);
    let policy = GaussianPolicy::new(2, 2, &[16], 5);
    let gan = AdGanParams::new(2, &[16], 9);

    // FGSM sign structure and every perturber's L∞ budget on 1000 states.
    let mut checked = 0usize;
    for i in 0..1000u64 {
        let x: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.5).collect();
        let scale = [0.2, 0.5, 0.8][(i % 3) as usize];
        for spec in [
            AttackSpec::random(scale),
            AttackSpec::fgsm(scale),
            AttackSpec::adgan(scale),
        ] {
            let p = make_perturber(&spec, Some(&gan));
            let mut prng = seeding::stream(7, &[i]);
            let xt = p.perturb(&policy, &x, &mut prng);
            for (a, b) in x.iter().zip(xt.iter()) {
                assert!(
                    (a - b).abs() <= scale + 1e-12,
                    "{} at scale {scale} broke its budget: |{a} - {b}|",
                    spec.kind.name()
                );
            }
            if spec.kind.name() == "fgsm" {
                for (&a, &b) in x.iter().zip(xt.iter()) {
                    assert!(
                        b == a + scale || b == a - scale || b == a,
                        "fgsm coordinate {b} is not {a} shifted by an element of \
                         {{-eps, 0, +eps}} (eps {scale})"
                    );
                }
            }
            checked += 1;
        }
    }

    // Scale 0 is the identity, bit for bit, on whole trajectories.
    let family = TaskFamily::nav2d();
    let task = &sample_task_batch(&family, 1, &mut rng)[0];
    let reference = collect_trajectories(&policy, task, 3, 30, &IdentityPerturber, 40);
    for spec in [AttackSpec::random(0.0), AttackSpec::fgsm(0.0), AttackSpec::adgan(0.0)] {
        let p = make_perturber(&spec, Some(&gan));
        let got = collect_trajectories(&policy, task, 3, 30, p.as_ref(), 40);
        assert!(
            got == reference,
            "{} at scale 0 is not the identity on trajectories",
            spec.kind.name()
        );
    }
    println!(
        "criterion 03 PASS: {checked} budget checks, fgsm sign lattice, scale-0 identity bit-exact"
    );
}

// ---------------------------------------------------------------------------
// 4. Adversary objective wiring

#[test]
fn criterion_04_generator_gradient() {
    // A real two-step rollout batch through the full pipeline.
    let mut family = TaskFamily::nav2d();
    family.horizon = 2;
    let policy = GaussianPolicy::new(2, 2, &[4], 11);
    let mut gan = AdGanParams::new(2, &[4], 13);
    // Move off the zero-output initialization so the hinge and clip paths
    // see non-trivial perturbations.
    {
        let mut warm = seeding::stream(17, &[1]);
        for v in gan.generator.as_mut_slice() {
            *v += warm.sample::<f64, _>(StandardNormal) * 0.3;
        }
    }
    let mut cfg = MetaConfig::for_family(family.kind);
    cfg.meta_batch_size = 3;
    cfg.k_trajectories = 2;
    let mut rng = seeding::stream(19, &[2]);
    let tasks = sample_task_batch(&family, cfg.meta_batch_size, &mut rng);
    let perturber = make_perturber(&AttackSpec::adgan(gan.hinge_bound), Some(&gan));
    let batch =
        meta_objective(&policy, &tasks, perturber.as_ref(), &cfg, 23).expect("toy meta batch");

    let mut pooled: Vec<Vec<f64>> = Vec::new();
    let mut adv_tasks = Vec::new();
    for td in &batch.tasks {
        for traj in &td.query {
            pooled.extend(traj.true_states.iter().cloned());
        }
        let n: usize = td.query.iter().map(|t| t.true_states.len()).sum();
        let mut flat = Vec::with_capacity(n);
        for traj in &td.query {
            flat.extend(traj.true_states.iter().cloned());
        }
        adv_tasks.push(AdvTaskBatch {
            true_states: Mat::from_fn(2, n, |i, j| flat[j][i]),
            actions: td.actions.clone(),
            advantages: td.advantages.clone(),
            adapted: td.adapt.adapted.clone(),
        });
    }
    let all_states = Mat::from_fn(2, pooled.len(), |i, j| pooled[j][i]);
    let budget = gan.hinge_bound;

    let (value, grad) =
        generator_objective_gradient(&gan, &policy.arch, &all_states, &adv_tasks, budget)
            .expect("analytic objective gradient");
    let base = generator_objective_value(&gan, &policy.arch, &all_states, &adv_tasks, budget);
    assert!(
        (value - base).abs() <= 1e-9 * base.abs().max(1.0),
        "graph value {value} disagrees with direct evaluation {base}"
    );

    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    for i in 0..gan.generator.as_slice().len() {
        let mut plus = gan.clone();
        plus.generator.as_mut_slice()[i] += h;
        let mut minus = gan.clone();
        minus.generator.as_mut_slice()[i] -= h;
        let fd = (generator_objective_value(&plus, &policy.arch, &all_states, &adv_tasks, budget)
            - generator_objective_value(&minus, &policy.arch, &all_states, &adv_tasks, budget))
            / (2.0 * h);
        let an = grad.as_slice()[i];
        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
        assert!(
            rel <= 1e-3,
            "generator coordinate {i}: analytic {an:.6e} vs finite difference {fd:.6e} (rel {rel:.2e})"
        );
        max_rel = max_rel.max(rel);
    }
    println!(
        "criterion 04 PASS: {} generator coordinates, max rel err {max_rel:.2e} (bound 1e-3)",
        gan.generator.as_slice().len()
    );
}

// ---------------------------------------------------------------------------
// 5. The clean meta-learner adapts at desk scale

#[test]
fn criterion_05_meta_learning_works() {
    let desk = &*DESK;
    let pre: f64 =
        desk.seeds.iter().map(|s| s.maml_clean.mean_pre).sum::<f64>() / desk.seeds.len() as f64;
    let post: f64 =
        desk.seeds.iter().map(|s| s.maml_clean.mean_post).sum::<f64>() / desk.seeds.len() as f64;
    let bar = pre + 0.25 * pre.abs();
    assert!(
        post >= bar,
        "adaptation too weak: pre {pre:.3}, post {post:.3}, needed {bar:.3}"
    );
    assert!(
        desk.maml_secs <= 900.0,
        "clean training of {} seeds took {:.0}s (budget 900s)",
        DESK_SEEDS.len(),
        desk.maml_secs
    );
    println!(
        "criterion 05 PASS: seed-mean return pre {pre:.3} -> post {post:.3} (+{:.0}%), \
         clean legs {:.0}s",
        100.0 * (post - pre) / pre.abs(),
        desk.maml_secs
    );
}

// ---------------------------------------------------------------------------
// 6. The learned attack beats random noise on the clean policy

#[test]
fn criterion_06_attack_effectiveness() {
    let desk = &*DESK;
    let mut passing = 0usize;
    for s in &desk.seeds {
        let ok = s.maml_clean.mean_post > s.maml_random.mean_post
            && s.maml_random.mean_post >= s.maml_adgan.mean_post;
        println!(
            "criterion 06 seed {}: clean {:.3}  random {:.3}  adversarial {:.3}  [{}]",
            s.seed,
            s.maml_clean.mean_post,
            s.maml_random.mean_post,
            s.maml_adgan.mean_post,
            if ok { "ordered" } else { "out of order" }
        );
        passing += ok as usize;
    }
    assert!(
        passing >= 2,
        "attack ordering held in only {passing} of {} seeds",
        desk.seeds.len()
    );
    println!(
        "criterion 06 PASS: clean > random >= adversarial at scale {EVAL_SCALE} in {passing}/{} seeds",
        desk.seeds.len()
    );
}

// ---------------------------------------------------------------------------
// 7. Adversarial training is more robust under the learned attack

#[test]
fn criterion_07_robustness_ordering() {
    let desk = &*DESK;
    let mut passing = 0usize;
    for s in &desk.seeds {
        let ok = s.admrl_adgan.mean_post > s.maml_adgan.mean_post;
        println!(
            "criterion 07 seed {}: adversarially trained {:.3} vs clean-trained {:.3}  [{}]",
            s.seed,
            s.admrl_adgan.mean_post,
            s.maml_adgan.mean_post,
            if ok { "robust" } else { "not robust" }
        );
        passing += ok as usize;
    }
    assert!(
        passing >= 2,
        "robustness ordering held in only {passing} of {} seeds",
        desk.seeds.len()
    );
    println!(
        "criterion 07 PASS: attacked return favors adversarial training in {passing}/{} seeds",
        desk.seeds.len()
    );
}

// ---------------------------------------------------------------------------
// 8. Clean performance is retained

#[test]
fn criterion_08_clean_retention() {
    let desk = &*DESK;
    let n = desk.seeds.len() as f64;
    let fresh = desk.seeds.iter().map(|s| s.fresh_return).sum::<f64>() / n;
    let maml = desk.seeds.iter().map(|s| s.maml_clean.mean_post).sum::<f64>() / n;
    let admrl = desk.seeds.iter().map(|s| s.admrl_clean.mean_post).sum::<f64>() / n;
    let imp_maml = maml - fresh;
    let imp_admrl = admrl - fresh;
    assert!(
        imp_maml > 0.0,
        "clean baseline did not improve over a fresh policy ({maml:.3} vs {fresh:.3})"
    );
    let ratio = imp_admrl / imp_maml;
    assert!(
        ratio >= 0.85,
        "clean retention {ratio:.3} below 0.85: improvements {imp_admrl:.3} vs {imp_maml:.3} \
         over fresh {fresh:.3}"
    );
    println!(
        "criterion 08 PASS: clean improvement over fresh policy retained at {:.0}% \
         (adversarial {admrl:.3}, clean {maml:.3}, fresh {fresh:.3})",
        100.0 * ratio
    );
}

// ---------------------------------------------------------------------------
// 9. Hinge enforcement on visited states

#[test]
fn criterion_09_hinge_enforcement() {
    let desk = &*DESK;
    let family = TaskFamily::nav2d();
    let mut norms = Vec::new();
    for s in &desk.seeds {
        let gan = s.admrl.gan.as_ref().expect("adversarial state carries the pair");
        let perturber = make_perturber(&AttackSpec::adgan(EVAL_SCALE), Some(gan));
        let mut states: Vec<Vec<f64>> = Vec::new();
        for (t, task) in s.tasks.iter().enumerate() {
            let trajs = collect_trajectories(
                &s.admrl.policy,
                task,
                3,
                family.horizon,
                perturber.as_ref(),
                seeding::derive(s.eval_seed, &[tag::EVAL_ROLLOUT, t as u64, 0]),
            );
            for traj in &trajs {
                states.extend(traj.true_states.iter().cloned());
            }
        }
        let m = Mat::from_fn(2, states.len(), |i, j| states[j][i]);
        let norm = mean_generator_norm(gan, &m);
        let bound = 1.25 * gan.hinge_bound;
        println!(
            "criterion 09 seed {}: mean |G| {:.4} over {} visited states (bound {:.3})",
            s.seed,
            norm,
            states.len(),
            bound
        );
        norms.push((s.seed, norm, bound));
    }
    for &(seed, norm, bound) in &norms {
        assert!(
            norm <= bound,
            "seed {seed}: mean generator norm {norm:.4} exceeds 1.25c = {bound:.3}"
        );
    }
    let mean = norms.iter().map(|&(_, n, _)| n).sum::<f64>() / norms.len() as f64;
    println!("criterion 09 PASS: mean generator norm {mean:.4} within bound on every seed");
}

// ---------------------------------------------------------------------------
// 10. Byte-identical reproducibility, including across resume

#[test]
fn criterion_10_reproducibility() {
    let scratch = tempfile::tempdir().expect("scratch dir");
    let mut cfg = default_config().expect("built-in defaults");
    cfg.seed = 5;
    cfg.eval_n_tasks = 3;
    cfg.total_iterations = 4;
    cfg.noise_start_iteration = 2;
    cfg.log_every = 2;
    cfg.policy_hidden = vec![8];
    cfg.gan_hidden = vec![8];
    cfg.family.horizon = 20;
    cfg.meta.meta_batch_size = 2;
    cfg.meta.k_trajectories = 2;

    let run_into = |dir: &Path| {
        let mut c = cfg.clone();
        c.out_dir = dir.to_path_buf();
        let outcome = run_experiment(&c).expect("experiment run");
        assert!(outcome.aborted.is_empty(), "aborted regimes: {:?}", outcome.aborted);
        c
    };
    let read = |dir: &Path, name: &str| -> Vec<u8> {
        std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
    };
    let artifacts = ["eval.csv", "convergence.csv", "report.md", "report_table.csv"];

    let dir_a = scratch.path().join("first");
    let dir_b = scratch.path().join("second");
    run_into(&dir_a);
    run_into(&dir_b);
    for name in artifacts {
        assert!(
            read(&dir_a, name) == read(&dir_b, name),
            "{name} differs between two identical runs"
        );
    }

    // Interrupt: train every regime for two iterations, persist checkpoints
    // exactly as the harness would have at that point, then let the full run
    // resume from them.
    let dir_c = scratch.path().join("resumed");
    let mut interrupted = cfg.clone();
    interrupted.out_dir = dir_c.to_path_buf();
    let mut cut = interrupted.clone();
    cut.total_iterations = 2;
    for regime in cut.regimes.clone() {
        let out = train_with(
            &cut.to_train_run(regime),
            TrainerState::init(&cut.to_train_run(regime)),
            |_, _| {},
        )
        .expect("interrupted leg");
        let history: Vec<(usize, f64)> = out
            .logs
            .iter()
            .filter(|l| l.iteration % interrupted.log_every == 0)
            .map(|l| (l.iteration, l.mean_return))
            .collect();
        let ckpt = Checkpoint {
            regime,
            config_hash: interrupted.hash(),
            seed: interrupted.seed,
            history,
            state: out.state,
        };
        save_checkpoint(&ckpt, &checkpoint_path(&interrupted, regime)).expect("planted checkpoint");
    }
    let outcome = run_experiment(&interrupted).expect("resumed run");
    assert!(outcome.aborted.is_empty(), "aborted regimes: {:?}", outcome.aborted);
    for name in artifacts {
        assert!(
            read(&dir_a, name) == read(&dir_c, name),
            "{name} differs after checkpoint resume"
        );
    }
    println!(
        "criterion 10 PASS: byte-identical artifacts across two runs and across a resume \
         ({} files compared)",
        artifacts.len()
    );
}
