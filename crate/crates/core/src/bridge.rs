//! Brownian-bridge arithmetic along metric-graph edges.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math;

/// Bridge from `alpha` to `beta` over duration `resistance`, queried against `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeQuery {
    pub alpha: f64,
    pub beta: f64,
    pub resistance: f64,
    pub threshold: f64,
}

/// Probability that the bridge stays strictly above the threshold.
pub fn bridge_min_above(q: &BridgeQuery) -> f64 {
    debug_assert!(q.resistance > 0.0);
    let (a, b) = (q.alpha - q.threshold, q.beta - q.threshold);
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    -math::exp_m1(-2.0 * a * b / q.resistance)
}

/// Conditional variance of the bridge at the midpoint of a segment of resistance `R`.
pub fn midpoint_variance(resistance: f64) -> f64 {
    0.25 * resistance
}

/// Value at the midpoint of a bridge segment: `N((α + β)/2, R/4)`.
pub fn sample_midpoint<R: Rng + ?Sized>(alpha: f64, beta: f64, resistance: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    0.5 * (alpha + beta) + math::sqrt(midpoint_variance(resistance)) * z
}
