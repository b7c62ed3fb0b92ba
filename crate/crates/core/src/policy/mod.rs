//! Waiting-time policies.
//!
//! Every policy here is a threshold rule `W_k = (γ − D_k)⁺`; they differ only
//! in where γ comes from: zero, a constant, the clairvoyant per-segment
//! optimum, or a Robbins-Monro estimate learned from `(Q_k, L_k)`.

mod solver;

pub use solver::{
    renewal_drift, solve_optimal_threshold, std_normal_cdf, threshold_moments,
    threshold_policy_aoi, zero_wait_aoi, ThresholdSolution, GAMMA_TOLERANCE,
};

use crate::controller::{DetectionEvent, TestRecord};
use crate::delay::{segment_index, DelaySegment};
use crate::error::{check_positive, Result};

/// What the sender knows when the ACK of frame `index` arrives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ack {
    pub index: usize,
    pub sample_time: f64,
    pub delay: f64,
}

pub trait SamplingPolicy {
    /// Waiting time before the next sample.
    fn on_ack(&mut self, ack: &Ack) -> Result<f64>;

    /// Current threshold estimate, if the policy has one.
    fn gamma(&self) -> Option<f64> {
        None
    }

    /// Change points the policy has declared so far.
    fn detections(&self) -> &[DetectionEvent] {
        &[]
    }

    /// Every change test the policy ran, when it keeps a log.
    fn test_log(&self) -> Option<&[TestRecord]> {
        None
    }
}

pub fn wait_zero(_delay: f64) -> f64 {
    0.0
}

pub fn wait_threshold(gamma: f64, delay: f64) -> f64 {
    (gamma - delay).max(0.0)
}

/// Robbins-Monro step size: `1/(2 d_lb)` for the first frame, then
/// `1/((k + 2) d_lb)`.
pub fn rm_step_size(k: usize, d_lb: f64) -> f64 {
    debug_assert!(k >= 1);
    if k <= 1 {
        1.0 / (2.0 * d_lb)
    } else {
        1.0 / ((k as f64 + 2.0) * d_lb)
    }
}

/// Online threshold estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerState {
    pub gamma: f64,
    /// Updates applied since the last reset; the next update uses
    /// `η_{frames_since_reset + 1}`.
    pub frames_since_reset: usize,
    pub d_lb: f64,
}

impl LearnerState {
    pub fn new(d_lb: f64) -> Result<Self> {
        check_positive("d_lb", d_lb)?;
        Ok(Self {
            gamma: 0.0,
            frames_since_reset: 0,
            d_lb,
        })
    }

    pub fn wait(&self, delay: f64) -> f64 {
        wait_threshold(self.gamma, delay)
    }

    pub fn reset(&mut self) {
        self.gamma = 0.0;
        self.frames_since_reset = 0;
    }

    pub fn update(&mut self, q: f64, l: f64) {
        *self = rm_update(self, q, l);
    }
}

/// `γ' = (γ + η_k (Q − γ L))⁺` with `k = frames_since_reset + 1`.
pub fn rm_update(state: &LearnerState, q: f64, l: f64) -> LearnerState {
    let k = state.frames_since_reset + 1;
    let eta = rm_step_size(k, state.d_lb);
    LearnerState {
        gamma: (state.gamma + eta * (q - state.gamma * l)).max(0.0),
        frames_since_reset: k,
        d_lb: state.d_lb,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroWait;

impl SamplingPolicy for ZeroWait {
    fn on_ack(&mut self, ack: &Ack) -> Result<f64> {
        Ok(wait_zero(ack.delay))
    }

    fn gamma(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedThreshold {
    pub gamma: f64,
}

impl SamplingPolicy for FixedThreshold {
    fn on_ack(&mut self, ack: &Ack) -> Result<f64> {
        Ok(wait_threshold(self.gamma, ack.delay))
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.gamma)
    }
}

/// Clairvoyant baseline: knows the true segments and applies each segment's
/// optimal threshold to packets sampled inside it.
#[derive(Debug, Clone)]
pub struct OracleThreshold {
    segments: Vec<DelaySegment>,
    solutions: Vec<ThresholdSolution>,
    current: usize,
}

impl OracleThreshold {
    pub fn new(segments: &[DelaySegment]) -> Result<Self> {
        let solutions = segments
            .iter()
            .map(|s| solve_optimal_threshold(&s.distribution))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            segments: segments.to_vec(),
            solutions,
            current: 0,
        })
    }

    pub fn solutions(&self) -> &[ThresholdSolution] {
        &self.solutions
    }
}

impl SamplingPolicy for OracleThreshold {
    fn on_ack(&mut self, ack: &Ack) -> Result<f64> {
        self.current = segment_index(&self.segments, ack.sample_time);
        Ok(wait_threshold(
            self.solutions[self.current].gamma_star,
            ack.delay,
        ))
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.solutions[self.current].gamma_star)
    }
}

/// Robbins-Monro threshold learner without change detection.
#[derive(Debug, Clone)]
pub struct OnlineLearner {
    state: LearnerState,
}

impl OnlineLearner {
    pub fn new(d_lb: f64) -> Result<Self> {
        Ok(Self {
            state: LearnerState::new(d_lb)?,
        })
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }
}

impl SamplingPolicy for OnlineLearner {
    fn on_ack(&mut self, ack: &Ack) -> Result<f64> {
        check_positive("delay", ack.delay)?;
        let wait = self.state.wait(ack.delay);
        let l = ack.delay + wait;
        self.state.update(0.5 * l * l, l);
        Ok(wait)
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.state.gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelayDistribution;
    use proptest::prelude::*;

    #[test]
    fn zero_wait_always_zero() {
        assert_eq!(wait_zero(5.0), 0.0);
        assert_eq!(wait_zero(0.01), 0.0);
    }

    #[test]
    fn threshold_clamps() {
        assert_eq!(wait_threshold(2.0, 3.0), 0.0);
        assert_eq!(wait_threshold(2.0, 0.5), 1.5);
        assert_eq!(wait_threshold(0.0, 0.7), 0.0);
    }

    #[test]
    fn step_sizes() {
        assert_eq!(rm_step_size(1, 1.0), 0.5);
        assert_eq!(rm_step_size(2, 1.0), 0.25);
        assert!((rm_step_size(10, 0.5) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn first_update_by_hand() {
        // γ=0, D=2, W=0 → Q=2, L=2; η₁ = 1/2 → γ' = 1
        let s = LearnerState::new(1.0).unwrap();
        let next = rm_update(&s, 2.0, 2.0);
        assert_eq!(next.gamma, 1.0);
        assert_eq!(next.frames_since_reset, 1);
    }

    #[test]
    fn fixed_point_is_stationary() {
        let s = LearnerState {
            gamma: 1.5,
            frames_since_reset: 7,
            d_lb: 0.3,
        };
        let next = rm_update(&s, 0.5 * 3.0 * 3.0, 3.0);
        assert_eq!(next.gamma, 1.5);
    }

    #[test]
    fn projection_keeps_gamma_nonnegative() {
        let s = LearnerState {
            gamma: 50.0,
            frames_since_reset: 0,
            d_lb: 0.1,
        };
        let next = rm_update(&s, 0.5 * 50.0 * 50.0, 50.0);
        assert_eq!(next.gamma, 0.0);
    }

    #[test]
    fn online_learner_cold_start_is_zero_wait() {
        let mut p = OnlineLearner::new(1.0).unwrap();
        let w = p
            .on_ack(&Ack {
                index: 1,
                sample_time: 0.0,
                delay: 2.0,
            })
            .unwrap();
        assert_eq!(w, 0.0);
        assert_eq!(p.gamma(), Some(1.0));
    }

    #[test]
    fn oracle_switches_at_segment_start() {
        let segs = [
            DelaySegment::new(0.0, DelayDistribution::deterministic(1.0).unwrap()),
            DelaySegment::new(10.0, DelayDistribution::deterministic(4.0).unwrap()),
        ];
        let mut p = OracleThreshold::new(&segs).unwrap();
        let ack = |t| Ack {
            index: 1,
            sample_time: t,
            delay: 0.2,
        };
        assert!((p.on_ack(&ack(9.99)).unwrap() - 0.3).abs() < 1e-8);
        // γ* for a point mass at v is v/2
        assert!((p.on_ack(&ack(10.0)).unwrap() - 1.8).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn threshold_wait_plus_delay_is_max(gamma in 0.0f64..100.0, d in 1e-6f64..100.0) {
            let l = wait_threshold(gamma, d) + d;
            prop_assert!((l - gamma.max(d)).abs() <= 4.0 * f64::EPSILON * gamma.max(d));
        }

        #[test]
        fn update_never_negative(
            gamma in 0.0f64..1e3,
            l in 1e-3f64..1e3,
            k in 0usize..1000,
            d_lb in 1e-3f64..10.0,
        ) {
            let s = LearnerState { gamma, frames_since_reset: k, d_lb };
            prop_assert!(rm_update(&s, 0.5 * l * l, l).gamma >= 0.0);
        }
    }
}
