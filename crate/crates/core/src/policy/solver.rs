//! Offline optimal threshold for a known delay distribution.
//!
//! For the waiting rule `w(d) = (γ - d)⁺` the frame length is `max(D, γ)`, and
//! the optimal threshold is the unique root of
//!
//! ```text
//! h(γ) = ½·E[max(D, γ)²] − γ·E[max(D, γ)]
//! ```
//!
//! `h(0) = E[D²]/2 > 0` and `h'(γ) = −E[max(D, γ)] < 0`, so bisection on a
//! bracket `[0, U]` with `h(U) < 0` always converges. The optimal average age
//! is `γ* + E[D]`.

use statrs::function::erf::erfc;

use crate::delay::DelayDistribution;
use crate::error::{Error, Result};

/// Absolute tolerance on γ.
pub const GAMMA_TOLERANCE: f64 = 1e-9;
const MAX_BRACKET_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSolution {
    pub gamma_star: f64,
    /// Optimal long-run average age, `gamma_star + mean_delay`.
    pub aoi_star: f64,
    pub mean_delay: f64,
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `(E[max(D, γ)], E[max(D, γ)²])` in closed form.
///
/// For the lognormal this uses the partial moments
/// `E[Dʲ; D > γ] = exp(jμ + j²σ²/2)·Φ((μ + jσ² − ln γ)/σ)`.
pub fn threshold_moments(dist: &DelayDistribution, gamma: f64) -> (f64, f64) {
    match *dist {
        DelayDistribution::Deterministic { value } => {
            let m = value.max(gamma);
            (m, m * m)
        }
        DelayDistribution::Lognormal { mu, sigma } => {
            let (m1, m2) = dist.moments();
            if gamma <= 0.0 {
                return (m1, m2);
            }
            let lg = gamma.ln();
            let s2 = sigma * sigma;
            let below = std_normal_cdf((lg - mu) / sigma);
            let above1 = m1 * std_normal_cdf((mu + s2 - lg) / sigma);
            let above2 = m2 * std_normal_cdf((mu + 2.0 * s2 - lg) / sigma);
            (gamma * below + above1, gamma * gamma * below + above2)
        }
    }
}

/// `h(γ)`, the mean of `Q − γL` when the threshold in force is γ itself.
pub fn renewal_drift(dist: &DelayDistribution, gamma: f64) -> f64 {
    let (e1, e2) = threshold_moments(dist, gamma);
    0.5 * e2 - gamma * e1
}

/// Long-run average age of the fixed-threshold policy `w(d) = (γ − d)⁺`:
/// `E[L²/2] / E[L] + E[D]` with `L = max(D, γ)`.
pub fn threshold_policy_aoi(dist: &DelayDistribution, gamma: f64) -> f64 {
    let (e1, e2) = threshold_moments(dist, gamma);
    0.5 * e2 / e1 + dist.mean()
}

/// Average age of zero-wait sampling, `E[D²]/(2E[D]) + E[D]`.
pub fn zero_wait_aoi(dist: &DelayDistribution) -> f64 {
    threshold_policy_aoi(dist, 0.0)
}

pub fn solve_optimal_threshold(dist: &DelayDistribution) -> Result<ThresholdSolution> {
    dist.validate()?;
    let (mean, second) = dist.moments();
    if !(mean.is_finite() && second.is_finite()) {
        return Err(Error::Solver("non-finite delay moments".into()));
    }
    let gamma_star = bisect(|g| renewal_drift(dist, g), 10.0 * mean)?;
    Ok(ThresholdSolution {
        gamma_star,
        aoi_star: gamma_star + mean,
        mean_delay: mean,
    })
}

/// Root of a strictly decreasing `h` with `h(0) > 0`.
fn bisect(h: impl Fn(f64) -> f64, initial_upper: f64) -> Result<f64> {
    let mut lo = 0.0;
    if !(h(lo) > 0.0) {
        return Err(Error::Solver(format!("h(0) = {} is not positive", h(lo))));
    }
    let mut hi = initial_upper.max(GAMMA_TOLERANCE);
    let mut doublings = 0;
    while !(h(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
            return Err(Error::Solver("could not bracket the root".into()));
        }
    }
    while hi - lo > GAMMA_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
