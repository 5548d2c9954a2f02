//! Randomized finite-difference validation suite: builds random graphs of
//! the shapes this crate actually differentiates (Gaussian-surrogate MLP
//! losses, squared-error chains, logistic chains, hinge/clip compositions)
//! and compares reverse-mode gradients against the central-difference
//! oracle, for both parameters and inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::finite_diff::{finite_diff_oracle, relative_gradient_error};
use super::graph::{Graph, GraphBuilder};
use super::matrix::Mat;
use super::params::{Layout, ParamVector};

const FD_STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

/// Outcome of [`run_suite`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub cases: usize,
    pub max_rel_err_params: f64,
    pub max_rel_err_inputs: f64,
    /// One line per failing case; empty when everything passed.
    pub failures: Vec<String>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Case {
    graph: Graph,
    params: ParamVector,
    inputs: Vec<f64>,
}

fn normal(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * scale
}

/// Gaussian log-likelihood surrogate over a small tanh MLP — the shape the
/// policy-gradient losses use.
fn surrogate_case(rng: &mut ChaCha8Rng) -> Case {
    let d = rng.random_range(1..=4usize);
    let n = rng.random_range(1..=6usize);
    let h = rng.random_range(2..=6usize);
    let a = rng.random_range(1..=3usize);
    let layout = Layout::builder()
        .push("w1", h * d)
        .push("b1", h)
        .push("w2", a * h)
        .push("b2", a)
        .push("ls", a)
        .build();
    let mut params = ParamVector::zeros(layout);
    for v in params.as_mut_slice() {
        *v = normal(rng, 0.6);
    }
    let inputs: Vec<f64> = (0..d * n).map(|_| normal(rng, 1.0)).collect();
    let actions = Mat::from_fn(a, n, |_, _| normal(rng, 0.8));
    let adv: Vec<f64> = (0..n).map(|_| normal(rng, 1.0)).collect();
    let adv_sum: f64 = adv.iter().sum();

    let mut b = GraphBuilder::new(d * n);
    let x = b.input(0, d, n);
    let w1 = b.param("w1", h, d);
    let b1 = b.param("b1", h, 1);
    let pre = b.affine(w1, b1, x);
    let hid = b.tanh(pre);
    let w2 = b.param("w2", a, h);
    let b2 = b.param("b2", a, 1);
    let mu = b.affine(w2, b2, hid);
    let act = b.constant(actions);
    let diff = b.sub(act, mu);
    let dsq = b.square(diff);
    let ls = b.param("ls", a, 1);
    let neg2ls = b.scale(ls, -2.0);
    let invvar = b.exp(neg2ls);
    let weighted = b.mul(dsq, invvar);
    let advrow = b.constant(Mat::row_vec(&adv));
    let per_step = b.mul(weighted, advrow);
    let s1 = b.sum(per_step);
    let s1 = b.scale(s1, -0.5);
    let ls_sum = b.sum(ls);
    let s2 = b.scale(ls_sum, -adv_sum);
    let partial = b.add(s1, s2);
    let shifted = b.shift(partial, -adv_sum * (a as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln());
    let loss = b.scale(shifted, -1.0 / n as f64);
    Case { graph: b.finish(loss), params, inputs }
}

/// Mean squared error of a two-layer tanh network against random targets.
fn squared_error_case(rng: &mut ChaCha8Rng) -> Case {
    let d = rng.random_range(1..=3usize);
    let n = rng.random_range(1..=5usize);
    let h = rng.random_range(2..=5usize);
    let layout = Layout::builder().push("w1", h * d).push("b1", h).push("w2", h).push("b2", 1).build();
    let mut params = ParamVector::zeros(layout);
    for v in params.as_mut_slice() {
        *v = normal(rng, 0.7);
    }
    let inputs: Vec<f64> = (0..d * n).map(|_| normal(rng, 1.0)).collect();
    let target = Mat::from_fn(1, n, |_, _| normal(rng, 1.0));

    let mut b = GraphBuilder::new(d * n);
    let x = b.input(0, d, n);
    let w1 = b.param("w1", h, d);
    let b1 = b.param("b1", h, 1);
    let hid = b.affine(w1, b1, x);
    let hid = b.tanh(hid);
    let w2 = b.param("w2", 1, h);
    let b2 = b.param("b2", 1, 1);
    let y = b.affine(w2, b2, hid);
    let t = b.constant(target);
    let e = b.sub(y, t);
    let sq = b.square(e);
    let loss = b.mean(sq);
    Case { graph: b.finish(loss), params, inputs }
}

/// Logistic-discriminator style chain: mean log sigmoid of an MLP.
fn logistic_case(rng: &mut ChaCha8Rng) -> Case {
    let d = rng.random_range(1..=3usize);
    let n = rng.random_range(1..=6usize);
    let h = rng.random_range(2..=5usize);
    let layout = Layout::builder().push("w1", h * d).push("b1", h).push("w2", h).push("b2", 1).build();
    let mut params = ParamVector::zeros(layout);
    for v in params.as_mut_slice() {
        *v = normal(rng, 0.8);
    }
    let inputs: Vec<f64> = (0..d * n).map(|_| normal(rng, 1.0)).collect();

    let mut b = GraphBuilder::new(d * n);
    let x = b.input(0, d, n);
    let w1 = b.param("w1", h, d);
    let b1 = b.param("b1", h, 1);
    let hid = b.affine(w1, b1, x);
    let hid = b.tanh(hid);
    let w2 = b.param("w2", 1, h);
    let b2 = b.param("b2", 1, 1);
    let logits = b.affine(w2, b2, hid);
    let clamped = b.clip_sym(logits, 20.0);
    let s = b.sigmoid(clamped);
    let l = b.log(s);
    let loss = b.mean(l);
    Case { graph: b.finish(loss), params, inputs }
}

/// Hinge/clip composition: mean hinge on per-column norms of a clipped,
/// tanh-scaled generator output.
fn hinge_case(rng: &mut ChaCha8Rng) -> Case {
    let d = rng.random_range(1..=4usize);
    let n = rng.random_range(1..=6usize);
    let h = rng.random_range(2..=5usize);
    let c = 0.3;
    let budget = 0.25;
    let layout = Layout::builder().push("w1", h * d).push("b1", h).push("w2", d * h).push("b2", d).build();
    let mut params = ParamVector::zeros(layout);
    for v in params.as_mut_slice() {
        *v = normal(rng, 0.9);
    }
    let inputs: Vec<f64> = (0..d * n).map(|_| normal(rng, 1.0)).collect();

    let mut b = GraphBuilder::new(d * n);
    let x = b.input(0, d, n);
    let w1 = b.param("w1", h, d);
    let b1 = b.param("b1", h, 1);
    let hid = b.affine(w1, b1, x);
    let hid = b.tanh(hid);
    let w2 = b.param("w2", d, h);
    let b2 = b.param("b2", d, 1);
    let raw = b.affine(w2, b2, hid);
    let g = b.tanh(raw);
    let g = b.scale(g, c);
    let clipped = b.clip_sym(g, budget);
    let norms = b.col_norm(clipped);
    let excess = b.shift(norms, -0.2);
    let hinge = b.max_const(excess, 0.0);
    let loss = b.mean(hinge);
    Case { graph: b.finish(loss), params, inputs }
}

/// Runs `cases` random graphs through reverse mode vs. central differences.
pub fn run_suite(cases: usize, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        cases,
        max_rel_err_params: 0.0,
        max_rel_err_inputs: 0.0,
        failures: Vec::new(),
    };
    for i in 0..cases {
        let case = match i % 4 {
            0 => surrogate_case(&mut rng),
            1 => squared_error_case(&mut rng),
            2 => logistic_case(&mut rng),
            _ => hinge_case(&mut rng),
        };
        let Case { graph, params, inputs } = case;
        let (_, pgrad, igrad) = match graph.value_and_grads(&params, &inputs) {
            Ok(v) => v,
            Err(e) => {
                report.failures.push(format!("case {i}: evaluation failed: {e}"));
                continue;
            }
        };

        let layout = params.layout().clone();
        let fd_params = finite_diff_oracle(
            &mut |p: &[f64]| {
                let pv = ParamVector::from_data(layout.clone(), p.to_vec()).unwrap();
                graph.eval_scalar(&pv, &inputs).unwrap()
            },
            params.as_slice(),
            FD_STEP,
        );
        let fd_inputs = finite_diff_oracle(
            &mut |x: &[f64]| graph.eval_scalar(&params, x).unwrap(),
            &inputs,
            FD_STEP,
        );

        let ep = relative_gradient_error(&fd_params, pgrad.as_slice());
        let ei = relative_gradient_error(&fd_inputs, &igrad);
        report.max_rel_err_params = report.max_rel_err_params.max(ep);
        report.max_rel_err_inputs = report.max_rel_err_inputs.max(ei);
        if ep > TOLERANCE {
            report.failures.push(format!("case {i}: parameter gradient rel err {ep:.3e}"));
        }
        if ei > TOLERANCE {
            report.failures.push(format!("case {i}: input gradient rel err {ei:.3e}"));
        }
    }
    report
}
