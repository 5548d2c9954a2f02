//! Small MLP plumbing shared by the Gaussian policy, the perturbation
//! generator, and the discriminator: parameter layouts, seeded
//! initialization, a fast loop-based forward pass for rollouts, and graph
//! construction helpers for everything that needs gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffcore::{GraphBuilder, Layout, Mat, NodeId, ParamVector};
use std::sync::Arc;

/// Fully-connected tanh network: hidden layers use tanh, the output layer is
/// linear. `hidden` may be empty (a single affine map).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArch {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

/// Where a graph should read the network weights from: the graph's bound
/// parameter vector (differentiable) or a fixed vector baked in as constants.
pub enum ParamSource<'a> {
    Var,
    Fixed(&'a ParamVector),
}

impl MlpArch {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        assert!(input > 0 && output > 0);
        MlpArch { input, hidden: hidden.to_vec(), output }
    }

    /// Per-layer (out, in) dimensions.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input;
        for &h in &self.hidden {
            dims.push((h, prev));
            prev = h;
        }
        dims.push((self.output, prev));
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Layout with segments `w0, b0, w1, b1, ...` plus any extras appended.
    pub fn layout_with(&self, extras: &[(&str, usize)]) -> Arc<Layout> {
        let mut b = Layout::builder();
        for (i, (out, inp)) in self.layer_dims().iter().enumerate() {
            b = b.push(&format!("w{i}"), out * inp).push(&format!("b{i}"), *out);
        }
        for (name, len) in extras {
            b = b.push(name, *len);
        }
        b.build()
    }

    pub fn layout(&self) -> Arc<Layout> {
        self.layout_with(&[])
    }

    /// Seeded init: weights are standard normal draws scaled by
    /// 1/sqrt(fan_in), biases zero. With `zero_last`, the output layer's
    /// weights are zeroed so the network starts as the constant zero map
    /// while hidden activations stay informative.
    pub fn init_into(&self, params: &mut ParamVector, seed: u64, zero_last: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        for (i, (out, inp)) in dims.iter().enumerate() {
            let scale = if zero_last && i == last { 0.0 } else { 1.0 / (*inp as f64).sqrt() };
            let w = params.seg_mut(&format!("w{i}")).expect("layout has layer weights");
            for v in w.iter_mut().take(out * inp) {
                let z: f64 = rng.sample(StandardNormal);
                *v = z * scale;
            }
            // biases stay zero
        }
    }

    /// Loop-based forward for a single observation; the rollout hot path.
    pub fn forward(&self, params: &ParamVector, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input, "mlp input dimension mismatch");
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        let mut cur = x.to_vec();
        for (i, (out, inp)) in dims.iter().enumerate() {
            let w = params.seg(&format!("w{i}")).expect("layer weights");
            let b = params.seg(&format!("b{i}")).expect("layer biases");
            let mut next = vec![0.0; *out];
            for (r, n) in next.iter_mut().enumerate() {
                let row = &w[r * inp..(r + 1) * inp];
                let mut acc = b[r];
                for (&wv, &xv) in row.iter().zip(cur.iter()) {
                    acc += wv * xv;
                }
                *n = if i == last { acc } else { acc.tanh() };
            }
            cur = next;
        }
        cur
    }

    /// Batched forward over column-observations, loop/matrix based (no
    /// graph); used where only values are needed.
    pub fn forward_batch(&self, params: &ParamVector, x: &Mat) -> Mat {
        assert_eq!(x.rows(), self.input, "mlp batch input dimension mismatch");
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        let mut cur = x.clone();
        for (i, (out, inp)) in dims.iter().enumerate() {
            let w = Mat::from_vec(*out, *inp, params.seg(&format!("w{i}")).unwrap().to_vec());
            let b = params.seg(&format!("b{i}")).unwrap();
            let mut y = w.matmul(&cur);
            for r in 0..*out {
                let bias = b[r];
                for c in 0..y.cols() {
                    let v = y.get(r, c) + bias;
                    y.set(r, c, if i == last { v } else { v.tanh() });
                }
            }
            cur = y;
        }
        cur
    }

    /// Adds the network to a graph: returns the output node (`output x k`
    /// for a `input x k` input node). With [`ParamSource::Var`] the weights
    /// come from the graph's bound parameter vector; with
    /// [`ParamSource::Fixed`] they are baked in as constants.
    pub fn build_graph(
        &self,
        b: &mut GraphBuilder,
        x: NodeId,
        src: &ParamSource<'_>,
    ) -> NodeId {
        let dims = self.layer_dims();
        let last = dims.len() - 1;
        let mut cur = x;
        for (i, (out, inp)) in dims.iter().enumerate() {
            let (wn, bn) = (format!("w{i}"), format!("b{i}"));
            let (w, bias) = match src {
                ParamSource::Var => (b.param(&wn, *out, *inp), b.param(&bn, *out, 1)),
                ParamSource::Fixed(pv) => {
                    let w = Mat::from_vec(*out, *inp, pv.seg(&wn).unwrap().to_vec());
                    let bias = Mat::col_vec(pv.seg(&bn).unwrap());
                    (b.constant(w), b.constant(bias))
                }
            };
            cur = b.affine(w, bias, cur);
            if i != last {
                cur = b.tanh(cur);
            }
        }
        cur
    }
}

/// Builds the scalar node `sum_t adv_t * log pi(a_t | obs_t)` for a diagonal
/// Gaussian whose mean is the `mu` node (`act_dim x k`) and whose
/// state-independent log-std is the `log_std` node (`act_dim x 1`). Actions
/// and advantages enter as constants: gradients flow only through `mu` and
/// `log_std`.
pub fn weighted_logp_sum(
    b: &mut GraphBuilder,
    mu: NodeId,
    log_std: NodeId,
    actions: Mat,
    advantages: &[f64],
) -> NodeId {
    let act_dim = actions.rows();
    let n = actions.cols();
    assert_eq!(advantages.len(), n, "one advantage per step");
    let adv_sum: f64 = advantages.iter().sum();

    let act = b.constant(actions);
    let diff = b.sub(act, mu);
    let dsq = b.square(diff);
    let neg2ls = b.scale(log_std, -2.0);
    let invvar = b.exp(neg2ls);
    let weighted = b.mul(dsq, invvar); // column-broadcast over steps
    let advrow = b.constant(Mat::row_vec(advantages));
    let per_step = b.mul(weighted, advrow); // row-broadcast over action dims
    let s1 = b.sum(per_step);
    let s1 = b.scale(s1, -0.5);
    let ls_sum = b.sum(log_std);
    let s2 = b.scale(ls_sum, -adv_sum);
    let partial = b.add(s1, s2);
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    b.shift(partial, -adv_sum * act_dim as f64 * half_log_2pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Graph;

    fn arch_and_params(seed: u64) -> (MlpArch, ParamVector) {
        let arch = MlpArch::new(3, &[4, 4], 2);
        let mut p = ParamVector::zeros(arch.layout());
        arch.init_into(&mut p, seed, false);
        (arch, p)
    }

    #[test]
    fn forward_matches_batched_forward() {
        let (arch, p) = arch_and_params(5);
        let x1 = [0.1, -0.2, 0.3];
        let x2 = [1.0, 0.5, -0.7];
        let single1 = arch.forward(&p, &x1);
        let single2 = arch.forward(&p, &x2);
        let batch = Mat::from_fn(3, 2, |i, j| if j == 0 { x1[i] } else { x2[i] });
        let out = arch.forward_batch(&p, &batch);
        for i in 0..2 {
            assert!((out.get(i, 0) - single1[i]).abs() < 1e-14);
            assert!((out.get(i, 1) - single2[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn graph_forward_matches_loop_forward() {
        let (arch, p) = arch_and_params(11);
        let x = [0.4, 0.0, -1.3];
        let mut b = GraphBuilder::new(3);
        let xin = b.input(0, 3, 1);
        let out = arch.build_graph(&mut b, xin, &ParamSource::Var);
        let s = b.sum(out);
        let g: Graph = b.finish(s);
        let vals = g.forward(&p, &x).unwrap();
        let got = vals[vals.len() - 2].as_slice().to_vec();
        let want = arch.forward(&p, &x);
        for (a, b) in got.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn fixed_source_matches_var_source() {
        let (arch, p) = arch_and_params(13);
        let x = [0.9, -0.9, 0.25];
        let build = |src: &ParamSource<'_>| {
            let mut b = GraphBuilder::new(3);
            let xin = b.input(0, 3, 1);
            let out = arch.build_graph(&mut b, xin, src);
            let s = b.sum(out);
            b.finish(s)
        };
        let unused = ParamVector::zeros(Layout::builder().push("z", 1).build());
        let g_var = build(&ParamSource::Var);
        let g_fix = build(&ParamSource::Fixed(&p));
        let a = g_var.eval_scalar(&p, &x).unwrap();
        let b = g_fix.eval_scalar(&unused, &x).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn zero_last_initialization_outputs_zero() {
        let arch = MlpArch::new(2, &[8], 2);
        let mut p = ParamVector::zeros(arch.layout());
        arch.init_into(&mut p, 3, true);
        let y = arch.forward(&p, &[0.7, -0.4]);
        assert_eq!(y, vec![0.0, 0.0]);
        // hidden weights are not zero, so gradients can flow
        assert!(p.seg("w0").unwrap().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn weighted_logp_sum_matches_closed_form() {
        // single step, one action dim: adv * logp recovers the Gaussian
        // log-density
        let layout = Layout::builder().push("mu", 1).push("ls", 1).build();
        let params =
            ParamVector::from_data(layout, vec![0.3, -0.2]).unwrap();
        let mut b = GraphBuilder::new(0);
        let mu = b.param("mu", 1, 1);
        let ls = b.param("ls", 1, 1);
        let s = weighted_logp_sum(&mut b, mu, ls, Mat::scalar(0.9), &[2.0]);
        let g = b.finish(s);
        let got = g.eval_scalar(&params, &[]).unwrap();
        let sigma = (-0.2f64).exp();
        let logp = -0.5 * ((0.9 - 0.3) / sigma).powi(2)
            - (-0.2)
            - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((got - 2.0 * logp).abs() < 1e-12);
    }
}
