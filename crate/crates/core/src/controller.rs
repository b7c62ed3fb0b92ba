//! Online threshold learning with change-triggered restarts.
//!
//! Per ACK of frame `k`: choose `W_k = (γ_k − D_k)⁺`; if more than `2n`
//! frames have passed since the last detected change `τ`, test the last
//! `2n` delays; on a change set `τ = k` and restart the learner; otherwise
//! apply the Robbins-Monro update with step `η_{k−τ}`.
//!
//! The restart frame itself carries no update (`η_0` is undefined), so frame
//! `τ + 1` is zero-wait and its update uses `η_1`, exactly like a cold start.

use crate::detect::{detect, DetectorConfig, KsOutcome};
use crate::error::{check_positive, Error, Result};
use crate::policy::{Ack, LearnerState, SamplingPolicy};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub index: usize,
    pub sample_time: f64,
    pub statistic: f64,
    pub threshold: f64,
}

/// One executed test, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestRecord {
    pub index: usize,
    pub outcome: KsOutcome,
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub learner: LearnerState,
    /// Frame index of the most recent detected change; 0 initially.
    pub tau: usize,
    /// `D_1, D_2, ...` since the start of the run.
    pub delay_history: Vec<f64>,
}

impl ControllerState {
    pub fn new(d_lb: f64) -> Result<Self> {
        Ok(Self {
            learner: LearnerState::new(d_lb)?,
            tau: 0,
            delay_history: Vec::new(),
        })
    }

    /// Index of the last processed frame.
    pub fn current_index(&self) -> usize {
        self.delay_history.len()
    }

    pub fn eligible(&self, k: usize, window: usize) -> bool {
        k - self.tau > 2 * window
    }

    /// Marks a change at frame `k` and restarts the learner. Delay history is
    /// kept; the windows stop reaching before `k` once they are eligible again.
    pub fn reset(&mut self, k: usize) {
        self.tau = k;
        self.learner.reset();
    }
}

/// The joint learner/detector policy.
#[derive(Debug, Clone)]
pub struct OnlineKs {
    state: ControllerState,
    config: DetectorConfig,
    rng: SimRng,
    events: Vec<DetectionEvent>,
    tests: Option<Vec<TestRecord>>,
}

impl OnlineKs {
    pub fn new(d_lb: f64, config: DetectorConfig, rng: SimRng) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: ControllerState::new(d_lb)?,
            config,
            rng,
            events: Vec::new(),
            tests: None,
        })
    }

    /// Keep every test outcome, not just detections.
    pub fn record_tests(mut self) -> Self {
        self.tests = Some(Vec::new());
        self
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn events(&self) -> &[DetectionEvent] {
        &self.events
    }

    pub fn tests(&self) -> Option<&[TestRecord]> {
        self.tests.as_deref()
    }

    fn due(&self, k: usize) -> bool {
        let n = self.config.window;
        self.state.eligible(k, n)
            && (k - self.state.tau - 2 * n - 1).is_multiple_of(self.config.stride)
    }

    /// Handles the ACK of frame `k` with observed delay `delay`.
    pub fn handle_ack(&mut self, k: usize, sample_time: f64, delay: f64) -> Result<f64> {
        let expected = self.state.current_index() + 1;
        if k != expected {
            return Err(Error::OutOfOrder { expected, got: k });
        }
        check_positive("delay", delay)?;
        self.state.delay_history.push(delay);

        let wait = self.state.learner.wait(delay);
        let l = delay + wait;
        let q = 0.5 * l * l;

        if self.due(k) {
            let outcome = detect(&self.state.delay_history, k, &self.config, &mut self.rng)?;
            if let Some(tests) = self.tests.as_mut() {
                tests.push(TestRecord { index: k, outcome });
            }
            if outcome.changed {
                log::debug!(
                    "change detected at frame {k} (t={sample_time:.3}): {:.4} > {:.4}",
                    outcome.statistic,
                    outcome.threshold
                );
                self.events.push(DetectionEvent {
                    index: k,
                    sample_time,
                    statistic: outcome.statistic,
                    threshold: outcome.threshold,
                });
                self.state.reset(k);
                return Ok(wait);
            }
        }
        self.state.learner.update(q, l);
        Ok(wait)
    }
}

impl SamplingPolicy for OnlineKs {
    fn on_ack(&mut self, ack: &Ack) -> Result<f64> {
        self.handle_ack(ack.index, ack.sample_time, ack.delay)
    }

    fn gamma(&self) -> Option<f64> {
        Some(self.state.learner.gamma)
    }

    fn detections(&self) -> &[DetectionEvent] {
        &self.events
    }

    fn test_log(&self) -> Option<&[TestRecord]> {
        self.tests.as_deref()
    }
}
