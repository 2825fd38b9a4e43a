//! Small dense-vector helpers used by the losses and the trainer.
//!
//! Everything is 64-bit: the gradient identity tests require f64 throughout.

/// Dot product. Panics in debug builds on dimension mismatch.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "dot: dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two vectors.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "euclidean_distance: dimension mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Squared Euclidean distance.
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "squared_distance: dimension mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `acc += scale * v`, in place.
pub fn axpy(acc: &mut [f64], scale: f64, v: &[f64]) {
    debug_assert_eq!(acc.len(), v.len(), "axpy: dimension mismatch");
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

/// Gradient of `u / ||u||` applied to an upstream gradient.
///
/// Given the unit vector `unit = u / r` (with `r = ||u|| > 0`) and the
/// gradient `g` of some scalar with respect to `unit`, returns the gradient
/// with respect to `u`: `(g - unit (unit . g)) / r`.
pub fn normalize_backward(unit: &[f64], prenorm: f64, g: &[f64]) -> Vec<f64> {
    debug_assert!(prenorm > 0.0, "normalize_backward: zero pre-norm");
    let radial = dot(unit, g);
    unit.iter()
        .zip(g)
        .map(|(u, gi)| (gi - u * radial) / prenorm)
        .collect()
}

/// `log(1 + sum_i e^{a_i})` with max-subtraction so large exponents cannot
/// overflow. An empty slice yields `log(1) = 0`.
pub fn log1p_sum_exp(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().cloned().fold(0.0f64, f64::max);
    let sum: f64 = (-m).exp() + values.iter().map(|v| (v - m).exp()).sum::<f64>();
    m + sum.ln()
}

/// `log(sum_i e^{a_i})` with max-subtraction. The slice must be non-empty.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty(), "log_sum_exp: empty slice");
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + sum.ln()
}

/// Softmax weights `e^{a_i} / sum_j e^{a_j}`, computed with max-subtraction.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    debug_assert!(!values.is_empty(), "softmax: empty slice");
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Weights `e^{a_i} / (1 + sum_j e^{a_j})`, the derivative pattern of
/// `log(1 + sum e)`, computed with max-subtraction.
pub fn log1p_softmax_weights(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let m = values.iter().cloned().fold(0.0f64, f64::max);
    let denom: f64 = (-m).exp() + values.iter().map(|v| (v - m).exp()).sum::<f64>();
    values.iter().map(|v| (v - m).exp() / denom).collect()
}
