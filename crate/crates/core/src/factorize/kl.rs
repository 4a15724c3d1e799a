/// Default floor on predicted magnitudes (normalized units).
pub const KL_FLOOR: f64 = 1e-8;

/// Generalized KL term `m log(m/m̃) - m + m̃` with `0 log 0 = 0`.
///
/// `predicted` is floored at `floor` before use.
#[inline]
pub fn kl_pointwise(m: f64, predicted: f64, floor: f64) -> f64 {
    let p = predicted.max(floor);
    if m > 0.0 {
        m * (m / p).ln() - m + p
    } else {
        p
    }
}

/// Mean generalized KL between targets and predictions.
pub fn mean_kl(targets: &[f64], predictions: &[f64], floor: f64) -> f64 {
    assert_eq!(targets.len(), predictions.len());
    if targets.is_empty() {
        return 0.0;
    }
    targets.iter().zip(predictions).map(|(&m, &p)| kl_pointwise(m, p, floor)).sum::<f64>() / targets.len() as f64
}
