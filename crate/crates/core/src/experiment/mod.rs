//! Multi-policy, multi-replication experiment runner.
//!
//! The comparison metric is the running average age since the most recent
//! *true* change point,
//!
//! ```text
//! â(t) = 1/(t − τ_i) ∫_{τ_i}^t A(u) du,   τ_i < t ≤ τ_{i+1},
//! ```
//!
//! so an evaluation time equal to a change point still reports the segment
//! that just ended. Policies never see the true change points; only the
//! metric and the clairvoyant oracle do.

mod config;
mod output;

pub use config::{ExperimentConfig, MetricConfig, OutputConfig, PolicySpec, DEFAULT_METRIC_POINTS};
pub use output::{write_outputs, OutputPaths};

use rayon::prelude::*;

use crate::controller::{DetectionEvent, OnlineKs, TestRecord};
use crate::delay::{DelayProcess, DelaySegment};
use crate::engine::{AoiTrajectory, FrameRecord};
use crate::error::Result;
use crate::policy::{
    solve_optimal_threshold, FixedThreshold, OnlineLearner, OracleThreshold, SamplingPolicy,
    ThresholdSolution, ZeroWait,
};
use crate::rng::{replication_seed, stream_rng, RngStream};
use crate::sim::{simulate, StopRule};

/// Per-segment optimal threshold and age, for reference lines.
pub fn oracle_reference(config: &ExperimentConfig) -> Result<Vec<ThresholdSolution>> {
    config
        .segments
        .iter()
        .map(|s| solve_optimal_threshold(&s.distribution))
        .collect()
}

/// Index of the latest true change point strictly before `t`.
fn metric_segment(segments: &[DelaySegment], t: f64) -> usize {
    segments.partition_point(|s| s.start < t).saturating_sub(1)
}

/// `â(t)` from an exact trajectory.
pub fn running_average(traj: &AoiTrajectory, segments: &[DelaySegment], t: f64) -> Result<f64> {
    let start = segments[metric_segment(segments, t)].start;
    Ok((traj.cumulative(t)? - traj.cumulative(start)?) / (t - start))
}

/// First detection inside a segment, matched to that segment's change point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedDetection {
    pub change_time: f64,
    pub detected: Option<DetectionEvent>,
    /// Frames sampled from the change up to and including the detecting one.
    pub delay_frames: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    /// `â` at each metric time.
    pub a_hat: Vec<f64>,
    /// `â` at the end of each segment.
    pub terminal: Vec<f64>,
    pub frames: usize,
    pub final_gamma: Option<f64>,
    /// `|Σ X_k − ∫A| / ∫A` over the simulated frames.
    pub audit_error: f64,
    pub detections: Vec<DetectionEvent>,
    pub matched: Vec<MatchedDetection>,
    pub trace: Option<Vec<(FrameRecord, f64)>>,
    pub tests: Option<Vec<TestRecord>>,
}

impl ReplicationResult {
    pub fn false_alarms(&self) -> usize {
        let hits = self.matched.iter().filter(|m| m.detected.is_some()).count();
        self.detections.len() - hits
    }
}

#[derive(Debug, Clone)]
pub struct PolicyResult {
    pub spec: PolicySpec,
    pub label: String,
    pub replications: Vec<ReplicationResult>,
}

impl PolicyResult {
    pub fn mean_terminal(&self, segment: usize) -> f64 {
        mean(self.replications.iter().map(|r| r.terminal[segment]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub policy: String,
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub segment: usize,
    pub terminal_a_hat: f64,
    pub gamma_star: f64,
    pub aoi_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionStats {
    pub policy: String,
    pub change_time: f64,
    /// Fraction of replications with a detection inside the segment.
    pub detection_rate: f64,
    pub mean_delay: f64,
    pub p50_delay: f64,
    pub p90_delay: f64,
    pub mean_delay_frames: f64,
    pub mean_false_alarms: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub metric_times: Vec<f64>,
    pub oracle: Vec<ThresholdSolution>,
    pub policies: Vec<PolicyResult>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values.iter().copied());
    if n < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

/// Linear-interpolated percentile of sorted data, `q ∈ [0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn match_detections(
    config: &ExperimentConfig,
    events: &[DetectionEvent],
    first_frames: &[Option<usize>],
) -> Vec<MatchedDetection> {
    (1..config.segments.len())
        .map(|i| {
            let change_time = config.segments[i].start;
            let end = config.segment_end(i);
            let detected = events
                .iter()
                .find(|e| e.sample_time >= change_time && e.sample_time < end)
                .copied();
            let delay_frames = match (detected, first_frames[i]) {
                (Some(e), Some(first)) => Some(e.index + 1 - first),
                _ => None,
            };
            MatchedDetection {
                change_time,
                detected,
                delay_frames,
            }
        })
        .collect()
}

fn build_policy(
    spec: PolicySpec,
    config: &ExperimentConfig,
    seed: u64,
    record_tests: bool,
) -> Result<Box<dyn SamplingPolicy + Send>> {
    Ok(match spec {
        PolicySpec::ZeroWait => Box::new(ZeroWait),
        PolicySpec::Fixed { gamma } => Box::new(FixedThreshold { gamma }),
        PolicySpec::Oracle => Box::new(OracleThreshold::new(&config.segments)?),
        PolicySpec::Online => Box::new(OnlineLearner::new(config.d_lb)?),
        PolicySpec::OnlineKs => {
            let ks = OnlineKs::new(
                config.d_lb,
                config.detector,
                stream_rng(seed, RngStream::Bootstrap),
            )?;
            Box::new(if record_tests { ks.record_tests() } else { ks })
        }
    })
}

/// Runs one `(policy, replication)` pair to the horizon.
pub fn run_replication(
    config: &ExperimentConfig,
    spec: PolicySpec,
    replication: usize,
    metric_times: &[f64],
) -> Result<ReplicationResult> {
    let seed = replication_seed(config.base_seed, replication as u64);
    let mut process = DelayProcess::new(config.segments.clone(), seed, config.d_lb)?;
    let keep_trace = config.output.trace && replication == 0;
    let stop = StopRule::Horizon(config.horizon);

    let mut policy = build_policy(
        spec,
        config,
        seed,
        config.output.detector_log && replication == 0,
    )?;
    let run = simulate(&mut process, policy.as_mut(), stop, keep_trace)?;
    let detections = policy.detections().to_vec();
    let tests = policy.test_log().map(<[_]>::to_vec);

    let timeline = &run.timeline;
    let traj = timeline.trajectory();
    let simulated = traj.cumulative(timeline.next_sample_time())?;
    let audit_error = (timeline.area_sum() - simulated).abs() / simulated.max(f64::MIN_POSITIVE);
    let a_hat = metric_times
        .iter()
        .map(|&t| running_average(traj, &config.segments, t))
        .collect::<Result<Vec<_>>>()?;
    let terminal = (0..config.segments.len())
        .map(|i| running_average(traj, &config.segments, config.segment_end(i)))
        .collect::<Result<Vec<_>>>()?;
    let matched = match_detections(config, &detections, &run.segment_first_frame);

    Ok(ReplicationResult {
        replication,
        seed,
        a_hat,
        terminal,
        frames: timeline.frames_closed(),
        final_gamma: policy.gamma(),
        audit_error,
        detections,
        matched,
        trace: timeline.frame_log().map(<[_]>::to_vec),
        tests,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let oracle = oracle_reference(config)?;
    let metric_times = config.metric_times();
    let jobs: Vec<(usize, usize)> = (0..config.policies.len())
        .flat_map(|p| (0..config.replications).map(move |r| (p, r)))
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|&(p, r)| run_replication(config, config.policies[p], r, &metric_times))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let policies = config
        .policies
        .iter()
        .map(|&spec| PolicyResult {
            spec,
            label: spec.label(),
            replications: results.by_ref().take(config.replications).collect(),
        })
        .collect();
    Ok(ExperimentResult {
        config: config.clone(),
        metric_times,
        oracle,
        policies,
    })
}

impl ExperimentResult {
    pub fn policy(&self, label: &str) -> Option<&PolicyResult> {
        self.policies.iter().find(|p| p.label == label)
    }

    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::with_capacity(self.policies.len() * self.metric_times.len());
        for p in &self.policies {
            for (j, &t) in self.metric_times.iter().enumerate() {
                let values: Vec<f64> = p.replications.iter().map(|r| r.a_hat[j]).collect();
                let (mean, stderr) = mean_stderr(&values);
                rows.push(MetricRow {
                    policy: p.label.clone(),
                    t,
                    mean,
                    stderr,
                });
            }
        }
        rows
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for p in &self.policies {
            for (i, sol) in self.oracle.iter().enumerate() {
                rows.push(SummaryRow {
                    policy: p.label.clone(),
                    segment: i,
                    terminal_a_hat: p.mean_terminal(i),
                    gamma_star: sol.gamma_star,
                    aoi_star: sol.aoi_star,
                });
            }
        }
        rows
    }

    pub fn detection_stats(&self) -> Vec<DetectionStats> {
        let mut out = Vec::new();
        for p in self
            .policies
            .iter()
            .filter(|p| p.spec == PolicySpec::OnlineKs)
        {
            let reps = &p.replications;
            let false_alarms = mean(reps.iter().map(|r| r.false_alarms() as f64));
            for (i, seg) in self.config.segments.iter().enumerate().skip(1) {
                let hits: Vec<&MatchedDetection> = reps
                    .iter()
                    .map(|r| &r.matched[i - 1])
                    .filter(|m| m.detected.is_some())
                    .collect();
                let mut delays: Vec<f64> = hits
                    .iter()
                    .map(|m| m.detected.unwrap().sample_time - m.change_time)
                    .collect();
                delays.sort_by(f64::total_cmp);
                out.push(DetectionStats {
                    policy: p.label.clone(),
                    change_time: seg.start,
                    detection_rate: hits.len() as f64 / reps.len() as f64,
                    mean_delay: mean(delays.iter().copied()),
                    p50_delay: percentile(&delays, 0.5),
                    p90_delay: percentile(&delays, 0.9),
                    mean_delay_frames: mean(
                        hits.iter().filter_map(|m| m.delay_frames).map(|f| f as f64),
                    ),
                    mean_false_alarms: false_alarms,
                });
            }
        }
        out
    }

    /// Largest decomposition audit error over all runs.
    pub fn max_audit_error(&self) -> f64 {
        self.policies
            .iter()
            .flat_map(|p| p.replications.iter().map(|r| r.audit_error))
            .fold(0.0, f64::max)
    }
}
