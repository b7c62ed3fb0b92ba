//! Piecewise-stationary transmission delay.
//!
//! A [`DelayProcess`] is an ordered list of segments, each with its own delay
//! distribution. The distribution of a packet's delay is fixed by the segment
//! containing its *sampling* time, and segments are left-closed: a packet
//! sampled exactly at a segment start belongs to the new segment.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::rng::{stream_rng, RngStream, SimRng};

/// Default assumed delay lower bound used by the step-size schedule.
pub const DEFAULT_D_LB: f64 = 0.1;

/// Lognormal delay: `ln D ~ Normal(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalSpec {
    pub mu: f64,
    pub sigma: f64,
}

impl LognormalSpec {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let spec = Self { mu, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::InvalidParameter {
                name: "mu",
                value: self.mu,
                reason: "must be finite",
            });
        }
        check_positive("sigma", self.sigma)?;
        // E[D^2] must be finite for the ratio objective to make sense.
        let (mean, second) = true_moments(self);
        if !(mean.is_finite() && mean > 0.0 && second.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                reason: "moments overflow",
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

/// Closed-form `(E[D], E[D²])` of a lognormal.
pub fn true_moments(spec: &LognormalSpec) -> (f64, f64) {
    let s2 = spec.sigma * spec.sigma;
    ((spec.mu + 0.5 * s2).exp(), (2.0 * spec.mu + 2.0 * s2).exp())
}

/// Delay distribution of a stationary segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayDistribution {
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    /// Point mass; mostly useful for analytic test cases.
    Deterministic {
        value: f64,
    },
}

impl DelayDistribution {
    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        LognormalSpec::new(mu, sigma)?;
        Ok(Self::Lognormal { mu, sigma })
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        check_positive("value", value)?;
        Ok(Self::Deterministic { value })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Lognormal { mu, sigma } => LognormalSpec { mu, sigma }.validate(),
            Self::Deterministic { value } => check_positive("value", value),
        }
    }

    /// `(E[D], E[D²])`.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            Self::Lognormal { mu, sigma } => true_moments(&LognormalSpec { mu, sigma }),
            Self::Deterministic { value } => (value, value * value),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    /// Maps one standard normal variate to a delay. Every distribution
    /// consumes exactly one variate per packet so that runs with different
    /// policies see the same underlying noise frame by frame.
    fn delay_from_normal(&self, z: f64) -> f64 {
        match *self {
            Self::Lognormal { mu, sigma } => (mu + sigma * z).exp().max(f64::MIN_POSITIVE),
            Self::Deterministic { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySegment {
    /// Segment onset in seconds.
    pub start: f64,
    pub distribution: DelayDistribution,
}

impl DelaySegment {
    pub fn new(start: f64, distribution: DelayDistribution) -> Self {
        Self {
            start,
            distribution,
        }
    }
}

/// Checks ordering and coverage of a segment list.
pub fn validate_segments(segments: &[DelaySegment]) -> Result<()> {
    let first = segments
        .first()
        .ok_or_else(|| Error::Config("at least one delay segment is required".into()))?;
    if first.start != 0.0 {
        return Err(Error::Config(format!(
            "first segment must start at 0, got {}",
            first.start
        )));
    }
    for pair in segments.windows(2) {
        if !(pair[1].start > pair[0].start) || !pair[1].start.is_finite() {
            return Err(Error::Config(format!(
                "segment start times must be strictly increasing ({} then {})",
                pair[0].start, pair[1].start
            )));
        }
    }
    for seg in segments {
        seg.distribution.validate()?;
    }
    Ok(())
}

/// Index of the segment containing `t` under the `[start_i, start_{i+1})`
/// convention. Times before zero map to the first segment.
pub fn segment_index(segments: &[DelaySegment], t: f64) -> usize {
    segments.partition_point(|s| s.start <= t).saturating_sub(1)
}

/// Piecewise-stationary delay source with its own random stream.
#[derive(Debug, Clone)]
pub struct DelayProcess {
    segments: Vec<DelaySegment>,
    d_lb: f64,
    rng: SimRng,
}

impl DelayProcess {
    pub fn new(segments: Vec<DelaySegment>, seed: u64, d_lb: f64) -> Result<Self> {
        validate_segments(&segments)?;
        check_positive("d_lb", d_lb)?;
        Ok(Self {
            segments,
            d_lb,
            rng: stream_rng(seed, RngStream::Delay),
        })
    }

    /// Single stationary segment starting at zero.
    pub fn stationary(distribution: DelayDistribution, seed: u64, d_lb: f64) -> Result<Self> {
        Self::new(vec![DelaySegment::new(0.0, distribution)], seed, d_lb)
    }

    pub fn segments(&self) -> &[DelaySegment] {
        &self.segments
    }

    pub fn d_lb(&self) -> f64 {
        self.d_lb
    }

    pub fn segment_at(&self, t: f64) -> &DelaySegment {
        &self.segments[segment_index(&self.segments, t)]
    }

    /// Draws the delay of a packet sampled at `sample_time`.
    pub fn sample_delay(&mut self, sample_time: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.segment_at(sample_time)
            .distribution
            .delay_from_normal(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regime_segments() -> Vec<DelaySegment> {
        vec![
            DelaySegment::new(0.0, DelayDistribution::lognormal(0.3, 1.25).unwrap()),
            DelaySegment::new(1e5, DelayDistribution::lognormal(-1.0, 1.0).unwrap()),
            DelaySegment::new(2e5, DelayDistribution::lognormal(-0.2, 1.1).unwrap()),
        ]
    }

    #[test]
    fn segment_lookup_is_left_closed() {
        let p = DelayProcess::new(regime_segments(), 1, 0.1).unwrap();
        assert_eq!(p.segment_at(0.0).start, 0.0);
        assert_eq!(p.segment_at(99_999.999).start, 0.0);
        assert_eq!(p.segment_at(1e5).start, 1e5);
        assert_eq!(p.segment_at(1.5e5).start, 1e5);
        assert_eq!(p.segment_at(2e5).start, 2e5);
        assert_eq!(p.segment_at(1e9).start, 2e5);
    }

    #[test]
    fn first_segment_parameters_apply_mid_segment() {
        let p = DelayProcess::new(regime_segments(), 1, 0.1).unwrap();
        assert_eq!(
            p.segment_at(5e4).distribution,
            DelayDistribution::Lognormal {
                mu: 0.3,
                sigma: 1.25
            }
        );
    }

    #[test]
    fn point_mass_returns_its_value() {
        let mut p =
            DelayProcess::stationary(DelayDistribution::deterministic(1.0).unwrap(), 3, 0.1)
                .unwrap();
        for t in [0.0, 1.0, 1e6] {
            assert_eq!(p.sample_delay(t), 1.0);
        }
    }

    #[test]
    fn moments_closed_form() {
        let (m, m2) = true_moments(&LognormalSpec::new(0.3, 1.25).unwrap());
        assert!((m - 1.08125f64.exp()).abs() < 1e-12);
        assert!((m2 - 3.725f64.exp()).abs() < 1e-10);
        let (m, m2) = true_moments(&LognormalSpec::new(-1.0, 1.0).unwrap());
        assert!((m - 0.606_530_659_712_633_4).abs() < 1e-12);
        assert!((m2 - 1.0).abs() < 1e-12);
        // sigma -> 0 approaches a point mass at exp(mu)
        let (m, m2) = true_moments(&LognormalSpec::new(0.0, 1e-12).unwrap());
        assert!((m - 1.0).abs() < 1e-12 && (m2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lognormal_sample_mean_matches_closed_form() {
        let mut p =
            DelayProcess::stationary(DelayDistribution::lognormal(-1.0, 1.0).unwrap(), 11, 0.1)
                .unwrap();
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let d = p.sample_delay(0.0);
            assert!(d > 0.0);
            sum += d;
            sum_sq += d * d;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        let exact = (-0.5f64).exp();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact}");
        assert!((mean - exact).abs() / exact < 0.003);
    }

    #[test]
    fn seed_fixes_sequence() {
        let draw = |seed| {
            let mut p = DelayProcess::new(regime_segments(), seed, 0.1).unwrap();
            (0..1000)
                .map(|i| p.sample_delay(i as f64 * 300.0).to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn rejects_bad_segments() {
        let ln = DelayDistribution::lognormal(0.0, 1.0).unwrap();
        assert!(validate_segments(&[]).is_err());
        assert!(validate_segments(&[DelaySegment::new(1.0, ln)]).is_err());
        assert!(validate_segments(&[
            DelaySegment::new(0.0, ln),
            DelaySegment::new(5.0, ln),
            DelaySegment::new(5.0, ln)
        ])
        .is_err());
        assert!(DelayDistribution::lognormal(0.0, 0.0).is_err());
        assert!(DelayDistribution::lognormal(0.0, -1.0).is_err());
        assert!(DelayDistribution::lognormal(f64::NAN, 1.0).is_err());
        assert!(DelayDistribution::deterministic(0.0).is_err());
        assert!(DelayProcess::new(vec![DelaySegment::new(0.0, ln)], 0, 0.0).is_err());
    }
}
