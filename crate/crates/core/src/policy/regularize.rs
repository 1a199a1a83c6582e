//! Sensory-dropout regularizers, applied independently per sample.

use rand::Rng;

use super::PolicyError;

/// Zeroes the whole vector with probability `p`.
///
/// # Panics
/// If `p` is outside `[0, 1]`.
pub fn mask_state(proprio: &[f64], p: f64, rng: &mut impl Rng) -> Vec<f64> {
    if rng.random_bool(p) {
        vec![0.0; proprio.len()]
    } else {
        proprio.to_vec()
    }
}

/// Drops each view independently with probability `p`, rescuing one
/// uniformly chosen view when all were dropped. Order is preserved.
///
/// # Panics
/// If `p` is outside `[0, 1]`.
pub fn drop_views<T: Clone>(
    views: &[T],
    p: f64,
    rng: &mut impl Rng,
) -> Result<Vec<T>, PolicyError> {
    if views.is_empty() {
        return Err(PolicyError::NoViews);
    }
    let kept: Vec<T> = views
        .iter()
        .filter(|_| !rng.random_bool(p))
        .cloned()
        .collect();
    if kept.is_empty() {
        return Ok(vec![views[rng.random_range(0..views.len())].clone()]);
    }
    Ok(kept)
}
