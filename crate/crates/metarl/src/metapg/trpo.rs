//! Trust-region outer step: conjugate-gradient natural direction plus a
//! KL-constrained backtracking line search.
//!
//! Everything here is expressed against closures — the Fisher-vector
//! product, the importance-weighted surrogate and the mean KL — so the
//! solver itself stays independent of policies and rollouts and can be
//! exercised on closed-form problems in the tests.

use crate::diffcore::ParamVector;

/// Trust-region hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrpoConfig {
    /// KL trust-region radius for the outer step.
    pub kl_limit: f64,
    /// Conjugate-gradient iterations for the natural direction.
    pub cg_iters: usize,
    /// Damping added to the Fisher-vector product.
    pub cg_damping: f64,
    /// Multiplicative step shrink per backtrack.
    pub backtrack_ratio: f64,
    /// Line-search attempts before giving up.
    pub max_backtracks: usize,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        TrpoConfig {
            kl_limit: 0.01,
            cg_iters: 10,
            cg_damping: 1e-5,
            backtrack_ratio: 0.8,
            max_backtracks: 15,
        }
    }
}

/// What the outer step did, for convergence logs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrpoReport {
    pub accepted: bool,
    /// Scale actually applied to the natural direction (0 when rejected).
    pub step_scale: f64,
    /// Backtracks consumed before acceptance or giving up.
    pub backtracks: usize,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    /// KL divergence of the accepted step (0 when rejected).
    pub kl: f64,
    /// Human-readable outcome ("accepted", or why the step fell back).
    pub reason: &'static str,
}

impl TrpoReport {
    fn fallback(surrogate: f64, reason: &'static str) -> Self {
        TrpoReport {
            accepted: false,
            step_scale: 0.0,
            backtracks: 0,
            surrogate_before: surrogate,
            surrogate_after: surrogate,
            kl: 0.0,
            reason,
        }
    }
}

fn dot(a: &ParamVector, b: &ParamVector) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive-definite `A` given only the
/// matrix-vector product, starting from `x = 0`. Returns `None` if any
/// iterate goes non-finite (a poisoned product must not become a step).
pub fn conjugate_gradient(
    apply: &mut dyn FnMut(&ParamVector) -> ParamVector,
    b: &ParamVector,
    iters: usize,
) -> Option<ParamVector> {
    const RESIDUAL_TOL: f64 = 1e-10;
    let mut x = b.zeros_like();
    let mut r = b.clone();
    let mut p = b.clone();
    let mut rs = dot(&r, &r);
    if rs.sqrt() < RESIDUAL_TOL {
        return Some(x);
    }
    for _ in 0..iters {
        let ap = apply(&p);
        let denom = dot(&p, &ap);
        if !denom.is_finite() || denom <= 0.0 {
            return None;
        }
        let alpha = rs / denom;
        x = x.add_scaled(alpha, &p).expect("layouts agree");
        r = r.add_scaled(-alpha, &ap).expect("layouts agree");
        if !x.all_finite() {
            return None;
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() < RESIDUAL_TOL {
            break;
        }
        p = r.add_scaled(rs_new / rs, &p).expect("layouts agree");
        rs = rs_new;
    }
    Some(x)
}

/// One trust-region update of `theta` against the meta-gradient of a loss
/// (lower surrogate is better).
///
/// The natural direction solves `F s = g` by conjugate gradient, is scaled
/// to the trust-region boundary `sqrt(2 delta / s^T F s)`, and then backs
/// off geometrically until the surrogate improves and the measured KL stays
/// within `delta`. If no candidate qualifies — or the CG iterates go
/// non-finite — the parameters are returned unchanged with the reason in
/// the report.
pub fn trpo_step(
    theta: &ParamVector,
    meta_grad: &ParamVector,
    fvp: &mut dyn FnMut(&ParamVector) -> ParamVector,
    surrogate_eval: &mut dyn FnMut(&ParamVector) -> f64,
    kl_eval: &mut dyn FnMut(&ParamVector) -> f64,
    cfg: &TrpoConfig,
) -> (ParamVector, TrpoReport) {
    assert!(cfg.kl_limit > 0.0, "kl_limit must be positive");
    let loss_before = surrogate_eval(theta);

    if meta_grad.as_slice().iter().all(|&g| g == 0.0) {
        return (theta.clone(), TrpoReport::fallback(loss_before, "zero meta-gradient"));
    }

    let direction = match conjugate_gradient(fvp, meta_grad, cfg.cg_iters) {
        Some(s) => s,
        None => {
            return (
                theta.clone(),
                TrpoReport::fallback(loss_before, "non-finite conjugate gradient"),
            );
        }
    };

    let s_f_s = dot(&direction, &fvp(&direction));
    if !s_f_s.is_finite() || s_f_s <= 0.0 {
        return (theta.clone(), TrpoReport::fallback(loss_before, "non-positive curvature"));
    }
    let full_scale = (2.0 * cfg.kl_limit / s_f_s).sqrt();

    let mut scale = full_scale;
    for backtracks in 0..cfg.max_backtracks {
        let candidate = theta.add_scaled(-scale, &direction).expect("layouts agree");
        let loss = surrogate_eval(&candidate);
        let kl = kl_eval(&candidate);
        if loss.is_finite() && kl.is_finite() && loss < loss_before && kl <= cfg.kl_limit {
            let report = TrpoReport {
                accepted: true,
                step_scale: scale,
                backtracks,
                surrogate_before: loss_before,
                surrogate_after: loss,
                kl,
                reason: "accepted",
            };
            return (candidate, report);
        }
        scale *= cfg.backtrack_ratio;
    }

    let mut report = TrpoReport::fallback(loss_before, "line search exhausted");
    report.backtracks = cfg.max_backtracks;
    (theta.clone(), report)
}
