//! Experiment configuration file (TOML).

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::delay::{validate_segments, DelaySegment, DEFAULT_D_LB};
use crate::detect::DetectorConfig;
use crate::error::{check_positive, Error, Result};

pub const DEFAULT_METRIC_POINTS: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySpec {
    ZeroWait,
    /// Per-segment optimal threshold with knowledge of the true segments.
    Oracle,
    /// Robbins-Monro learner without change detection.
    Online,
    /// Learner with KS change detection and restarts.
    OnlineKs,
    Fixed {
        gamma: f64,
    },
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::ZeroWait => "zero-wait".into(),
            PolicySpec::Oracle => "oracle".into(),
            PolicySpec::Online => "online".into(),
            PolicySpec::OnlineKs => "online-ks".into(),
            PolicySpec::Fixed { gamma } => format!("fixed-{gamma}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Evenly spaced evaluation times `T·j/points`, `j = 1..=points`.
    pub points: usize,
    /// Explicit evaluation times; overrides `points` when present.
    pub times: Option<Vec<f64>>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_METRIC_POINTS,
            times: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub metrics: String,
    pub summary: String,
    pub detections: String,
    pub detection_summary: String,
    /// Per-frame trace of replication 0 for every policy.
    pub trace: bool,
    /// Every KS test outcome of replication 0 for `online-ks`.
    pub detector_log: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            metrics: "metrics.csv".into(),
            summary: "summary.csv".into(),
            detections: "detections.csv".into(),
            detection_summary: "detection_summary.csv".into(),
            trace: false,
            detector_log: false,
        }
    }
}

fn default_replications() -> usize {
    30
}

fn default_d_lb() -> f64 {
    DEFAULT_D_LB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Observation window `T` in seconds.
    pub horizon: f64,
    pub segments: Vec<DelaySegment>,
    pub policies: Vec<PolicySpec>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Assumed delay lower bound for the learner's step sizes.
    #[serde(default = "default_d_lb")]
    pub d_lb: f64,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("horizon", self.horizon)?;
        validate_segments(&self.segments)?;
        if let Some(s) = self.segments.iter().find(|s| s.start >= self.horizon) {
            return Err(Error::Config(format!(
                "segment start {} is not inside the horizon {}",
                s.start, self.horizon
            )));
        }
        if self.replications < 1 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("no policies configured".into()));
        }
        let mut labels = HashSet::new();
        for p in &self.policies {
            if let PolicySpec::Fixed { gamma } = p {
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return Err(Error::Config(format!(
                        "fixed gamma must be >= 0, got {gamma}"
                    )));
                }
            }
            if !labels.insert(p.label()) {
                return Err(Error::Config(format!(
                    "policy `{}` listed twice",
                    p.label()
                )));
            }
        }
        check_positive("d_lb", self.d_lb)?;
        self.detector.validate()?;
        match &self.metric.times {
            Some(times) => {
                if times.is_empty() {
                    return Err(Error::Config("metric.times is empty".into()));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Config(
                        "metric.times must be strictly increasing".into(),
                    ));
                }
                if times.iter().any(|&t| !(t > 0.0 && t <= self.horizon)) {
                    return Err(Error::Config(
                        "metric.times must lie in (0, horizon]".into(),
                    ));
                }
            }
            None if self.metric.points < 1 => {
                return Err(Error::Config("metric.points must be >= 1".into()));
            }
            None => {}
        }
        let o = &self.output;
        let names = [&o.metrics, &o.summary, &o.detections, &o.detection_summary];
        let mut seen = HashSet::new();
        for name in names {
            if name.is_empty() {
                return Err(Error::Config("output file names must be non-empty".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("output path `{name}` used twice")));
            }
        }
        Ok(())
    }

    pub fn metric_times(&self) -> Vec<f64> {
        match &self.metric.times {
            Some(t) => t.clone(),
            None => {
                let p = self.metric.points;
                (1..=p)
                    .map(|j| {
                        if j == p {
                            self.horizon
                        } else {
                            self.horizon * j as f64 / p as f64
                        }
                    })
                    .collect()
            }
        }
    }

    /// End of segment `i`: the next segment's start, or the horizon.
    pub fn segment_end(&self, i: usize) -> f64 {
        self.segments.get(i + 1).map_or(self.horizon, |s| s.start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay::DelayDistribution;
    use crate::detect::ThresholdMode;

    const SAMPLE: &str = r#"
horizon = 300000.0
replications = 30
base_seed = 7
d_lb = 0.5
policies = ["zero-wait", "oracle", "online", "online-ks", { fixed = { gamma = 2.0 } }]

[[segments]]
start = 0.0
distribution = { kind = "lognormal", mu = 0.3, sigma = 1.25 }

[[segments]]
start = 100000.0
distribution = { kind = "lognormal", mu = -1.0, sigma = 1.0 }

[detector]
window = 100
mode = { kind = "fixed", threshold = 0.4 }

[metric]
points = 300
"#;

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.segments.len(), 2);
        assert_eq!(
            cfg.segments[1].distribution,
            DelayDistribution::Lognormal {
                mu: -1.0,
                sigma: 1.0
            }
        );
        assert_eq!(cfg.policies[4], PolicySpec::Fixed { gamma: 2.0 });
        assert_eq!(cfg.policies[4].label(), "fixed-2");
        assert_eq!(cfg.detector.window, 100);
        assert_eq!(cfg.detector.replicates, 500);
        assert_eq!(cfg.detector.mode, ThresholdMode::Fixed { threshold: 0.4 });
        assert_eq!(cfg.metric_times().len(), 300);
        assert_eq!(*cfg.metric_times().last().unwrap(), 300000.0);
        assert_eq!(cfg.output.metrics, "metrics.csv");
        assert_eq!(cfg.segment_end(0), 1e5);
        assert_eq!(cfg.segment_end(1), 3e5);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases = [
            SAMPLE.replace("horizon = 300000.0", "horizon = 50000.0"),
            SAMPLE.replace("replications = 30", "replications = 0"),
            SAMPLE.replace("\"online\", \"online-ks\"", "\"online\", \"online\""),
            SAMPLE.replace("window = 100", "window = 1"),
            SAMPLE.replace("threshold = 0.4", "threshold = 1.4"),
            SAMPLE.replace("d_lb = 0.5", "d_lb = 0.0"),
            SAMPLE.replace("points = 300", "points = 300\ntimes = []"),
            SAMPLE.replace("[metric]", "[output]\nsummary = \"metrics.csv\"\n[metric]"),
            SAMPLE.replace("start = 100000.0", "start = 0.0"),
            SAMPLE.replace("sigma = 1.25", "sigma = -1.25"),
            SAMPLE.replace("base_seed = 7", "base_seed = 7\nbogus = 1"),
        ];
        for (i, text) in cases.iter().enumerate() {
            assert!(
                ExperimentConfig::from_toml_str(text).is_err(),
                "case {i} accepted"
            );
        }
    }
}
