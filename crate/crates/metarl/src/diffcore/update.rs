//! Parameter update rules. Both rules are pure: inputs are never mutated,
//! and Adam returns its advanced moment estimates alongside the new
//! parameters.

use super::params::ParamVector;
use super::DiffError;

/// Adam hyper-parameters (defaults: lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// Which rule to apply in [`apply_update`].
#[derive(Debug, Clone)]
pub enum UpdateRule<'a> {
    /// Plain gradient descent: `theta - lr * g`.
    Sgd { lr: f64 },
    /// Adam descent from the given state (state is read, not mutated).
    Adam { cfg: AdamConfig, state: &'a AdamState },
}

/// Applies one descent step. Returns the new parameters and, for Adam, the
/// advanced state. Neither argument is mutated.
pub fn apply_update(
    params: &ParamVector,
    grad: &ParamVector,
    rule: &UpdateRule<'_>,
) -> Result<(ParamVector, Option<AdamState>), DiffError> {
    if !params.same_layout(grad) {
        return Err(DiffError::LayoutMismatch {
            detail: "parameter and gradient layouts differ".into(),
        });
    }
    match rule {
        UpdateRule::Sgd { lr } => Ok((params.add_scaled(-lr, grad)?, None)),
        UpdateRule::Adam { cfg, state } => {
            if state.m.len() != params.len() || state.v.len() != params.len() {
                return Err(DiffError::LayoutMismatch {
                    detail: "adam state length differs from parameters".into(),
                });
            }
            let t = state.t + 1;
            let mut next = AdamState { m: state.m.clone(), v: state.v.clone(), t };
            let bc1 = 1.0 - cfg.beta1.powi(t as i32);
            let bc2 = 1.0 - cfg.beta2.powi(t as i32);
            let mut out = params.clone();
            let (po, go) = (out.as_mut_slice(), grad.as_slice());
            for i in 0..go.len() {
                let g = go[i];
                next.m[i] = cfg.beta1 * next.m[i] + (1.0 - cfg.beta1) * g;
                next.v[i] = cfg.beta2 * next.v[i] + (1.0 - cfg.beta2) * g * g;
                let m_hat = next.m[i] / bc1;
                let v_hat = next.v[i] / bc2;
                po[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
            Ok((out, Some(next)))
        }
    }
}
