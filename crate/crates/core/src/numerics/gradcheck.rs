//! Central finite differences, the reference every analytic gradient is
//! checked against.

use crate::numerics::l2_norm;

/// Estimates `∇f(x)` coordinate by coordinate with
/// `(f(x + eps·eᵢ) − f(x − eps·eᵢ)) / 2·eps`.
///
/// # Panics
/// If `eps` is not strictly positive.
pub fn finite_difference_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    assert!(eps > 0.0, "finite-difference step must be positive, got {eps}");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
///
/// The floor keeps the measure meaningful when both gradients vanish; below
/// it the comparison is effectively absolute.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error on vectors of different length");
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2_norm(&diff) / l2_norm(a).max(l2_norm(b)).max(floor)
}
