//! Central-difference gradient oracle. This is the independent check the
//! graph engine is validated against (unit tests and the `gradcheck` CLI
//! verb); it never touches the reverse-mode machinery.

/// Central finite differences of `f` at `x` with step `h` per coordinate.
pub fn finite_diff_oracle(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut point = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + h;
        let fp = f(&point);
        point[i] = orig - h;
        let fm = f(&point);
        point[i] = orig;
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// Relative discrepancy between two gradients: max-norm of the difference
/// over the max-norm of the reference (floored to avoid division by zero).
pub fn relative_gradient_error(reference: &[f64], candidate: &[f64]) -> f64 {
    assert_eq!(reference.len(), candidate.len());
    let diff = reference
        .iter()
        .zip(candidate.iter())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-8);
    diff / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_slope() {
        // d/dx x^2 at 3 is 6
        let g = finite_diff_oracle(&mut |x| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_zero_slope() {
        let g = finite_diff_oracle(&mut |_| 42.0, &[1.0, -2.0], 1e-5);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn sine_slope_at_zero() {
        // d/dx sin(x) at 0 is 1 to truncation accuracy
        let g = finite_diff_oracle(&mut |x| x[0].sin(), &[0.0], 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-10);
    }
}
