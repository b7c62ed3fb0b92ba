//! Sliding two-window Kolmogorov–Smirnov change test.
//!
//! The last `n` delays are compared with the `n` before them. Both empirical
//! CDFs are evaluated on a common grid of `N` equally spaced cut points over
//! `[0, D_max]`, and the statistic `Δ` is their largest gap. The critical
//! value `δ` is either fixed or obtained by bootstrap: resample both windows
//! from the pooled data (the no-change null), recompute `Δ` `R` times and
//! take the `⌊αR⌋`-th largest. A change is declared only when `Δ > δ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::delay::{DelayDistribution, DelayProcess, DEFAULT_D_LB};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, RngStream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThresholdMode {
    Bootstrap,
    Fixed { threshold: f64 },
}

/// Where bootstrap replicates draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    /// Both replicate windows from `D1 ∪ D2`.
    #[default]
    Pooled,
    /// Window one from `D1`, window two from `D2`.
    PerWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Samples per window (`n`).
    pub window: usize,
    /// Bootstrap replicates (`R`).
    pub replicates: usize,
    pub alpha: f64,
    /// Number of CDF cut points (`N`).
    pub grid_points: usize,
    pub mode: ThresholdMode,
    pub resample: Resample,
    /// Run the test on every `stride`-th eligible frame.
    pub stride: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window: 50,
            replicates: 500,
            alpha: 0.05,
            grid_points: 100,
            mode: ThresholdMode::Bootstrap,
            resample: Resample::Pooled,
            stride: 1,
        }
    }
}

impl DetectorConfig {
    /// `⌊αR⌋`, with a small guard against `α·R` landing just below an integer.
    pub fn threshold_rank(&self) -> usize {
        (self.alpha * self.replicates as f64 + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.window < 2 {
            return bad(format!("detector window must be >= 2, got {}", self.window));
        }
        if self.grid_points < 2 {
            return bad(format!(
                "grid_points must be >= 2, got {}",
                self.grid_points
            ));
        }
        if self.stride < 1 {
            return bad("detector stride must be >= 1".into());
        }
        match self.mode {
            ThresholdMode::Bootstrap => {
                if self.replicates < 1 {
                    return bad("bootstrap needs at least one replicate".into());
                }
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
                }
                if self.threshold_rank() < 1 {
                    return bad(format!(
                        "floor(alpha * replicates) = 0 for alpha={} R={}",
                        self.alpha, self.replicates
                    ));
                }
            }
            ThresholdMode::Fixed { threshold } => {
                if !(0.0..=1.0).contains(&threshold) {
                    return bad(format!(
                        "fixed threshold must lie in [0, 1], got {threshold}"
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    /// `Δ`.
    pub statistic: f64,
    /// `δ`.
    pub threshold: f64,
    pub changed: bool,
}

/// `(recent, older)` windows ending at frame `k` (1-based; `history[0]` is
/// `D_1`): `recent = D_{k-n+1..=k}`, `older = D_{k-2n+1..=k-n}`.
pub fn build_windows(history: &[f64], k: usize, n: usize) -> Result<(&[f64], &[f64])> {
    if k < 2 * n || k > history.len() || n == 0 {
        return Err(Error::InsufficientHistory {
            index: k,
            needed: 2 * n,
            available: k.min(history.len()),
        });
    }
    Ok((&history[k - n..k], &history[k - 2 * n..k - n]))
}

/// `N` equally spaced cut points from 0 to `d_max` inclusive.
pub fn uniform_grid(d_max: f64, points: usize) -> Vec<f64> {
    let last = points.saturating_sub(1).max(1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| d_max * i as f64 / last).collect();
    if let Some(x) = grid.last_mut() {
        *x = d_max;
    }
    grid
}

/// Index of the first cut point `x` with `d <= x`; `grid.len()` if none.
fn grid_bin(grid: &[f64], d: f64) -> usize {
    grid.partition_point(|&x| x < d)
}

/// Cumulative counts `|{d <= x_i}|` from per-bin counts, in place.
fn accumulate(counts: &mut [u32]) {
    let mut run = 0;
    for c in counts.iter_mut() {
        run += *c;
        *c = run;
    }
}

fn max_gap(c1: &[u32], c2: &[u32], n1: usize, n2: usize) -> f64 {
    let (n1, n2) = (n1 as f64, n2 as f64);
    c1.iter()
        .zip(c2)
        .map(|(&a, &b)| (a as f64 / n1 - b as f64 / n2).abs())
        .fold(0.0, f64::max)
}

/// Empirical CDF of `data` at each cut point, using `(-∞, x]`.
pub fn ecdf_on_grid(data: &[f64], grid: &[f64]) -> Vec<f64> {
    debug_assert!(grid.windows(2).all(|w| w[0] <= w[1]));
    // one spare slot collects values above the last cut point
    let mut counts = vec![0u32; grid.len() + 1];
    for &d in data {
        counts[grid_bin(grid, d)] += 1;
    }
    accumulate(&mut counts);
    let n = data.len().max(1) as f64;
    counts[..grid.len()].iter().map(|&c| c as f64 / n).collect()
}

pub fn ks_statistic(f1: &[f64], f2: &[f64]) -> Result<f64> {
    if f1.len() != f2.len() {
        return Err(Error::LengthMismatch {
            left: f1.len(),
            right: f2.len(),
        });
    }
    Ok(f1
        .iter()
        .zip(f2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Bootstrap replicates of `Δ` under the configured resampling scheme.
pub fn bootstrap_statistics(
    d1: &[f64],
    d2: &[f64],
    replicates: usize,
    grid: &[f64],
    resample: Resample,
    rng: &mut SimRng,
) -> Vec<f64> {
    let bins = |data: &[f64]| data.iter().map(|&d| grid_bin(grid, d)).collect::<Vec<_>>();
    let (b1, b2) = (bins(d1), bins(d2));
    let pooled: Vec<usize> = b1.iter().chain(&b2).copied().collect();
    let (src1, src2) = match resample {
        Resample::Pooled => (&pooled, &pooled),
        Resample::PerWindow => (&b1, &b2),
    };
    let mut c1 = vec![0u32; grid.len() + 1];
    let mut c2 = vec![0u32; grid.len() + 1];
    (0..replicates)
        .map(|_| {
            c1.fill(0);
            c2.fill(0);
            for _ in 0..d1.len() {
                c1[src1[rng.gen_range(0..src1.len())]] += 1;
            }
            for _ in 0..d2.len() {
                c2[src2[rng.gen_range(0..src2.len())]] += 1;
            }
            accumulate(&mut c1);
            accumulate(&mut c2);
            max_gap(&c1[..grid.len()], &c2[..grid.len()], d1.len(), d2.len())
        })
        .collect()
}

/// The `rank`-th largest value (1-based).
pub fn rank_from_top(values: &mut [f64], rank: usize) -> f64 {
    assert!(rank >= 1 && rank <= values.len());
    let idx = values.len() - rank;
    *values.select_nth_unstable_by(idx, f64::total_cmp).1
}

pub fn bootstrap_threshold(
    d1: &[f64],
    d2: &[f64],
    replicates: usize,
    alpha: f64,
    grid: &[f64],
    resample: Resample,
    rng: &mut SimRng,
) -> Result<f64> {
    let cfg = DetectorConfig {
        replicates,
        alpha,
        ..DetectorConfig::default()
    };
    let rank = cfg.threshold_rank();
    if !(alpha > 0.0 && alpha < 1.0) || rank < 1 || rank > replicates {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "floor(alpha * replicates) must be at least 1",
        });
    }
    let mut stats = bootstrap_statistics(d1, d2, replicates, grid, resample, rng);
    Ok(rank_from_top(&mut stats, rank))
}

/// Grid over `[0, max(D1 ∪ D2)]`.
pub fn window_grid(d1: &[f64], d2: &[f64], points: usize) -> Vec<f64> {
    let d_max = d1.iter().chain(d2).copied().fold(0.0, f64::max);
    uniform_grid(d_max, points)
}

/// Statistic of two windows on a shared grid.
pub fn window_statistic(d1: &[f64], d2: &[f64], grid: &[f64]) -> f64 {
    ks_statistic(&ecdf_on_grid(d1, grid), &ecdf_on_grid(d2, grid))
        .expect("both ECDFs share the grid")
}

/// Runs one test on the windows ending at frame `k`.
pub fn detect(
    history: &[f64],
    k: usize,
    config: &DetectorConfig,
    rng: &mut SimRng,
) -> Result<KsOutcome> {
    config.validate()?;
    let (recent, older) = build_windows(history, k, config.window)?;
    let grid = window_grid(recent, older, config.grid_points);
    let statistic = window_statistic(recent, older, &grid);
    let threshold = match config.mode {
        ThresholdMode::Fixed { threshold } => threshold,
        ThresholdMode::Bootstrap => bootstrap_threshold(
            recent,
            older,
            config.replicates,
            config.alpha,
            &grid,
            config.resample,
            rng,
        )?,
    };
    Ok(KsOutcome {
        statistic,
        threshold,
        changed: statistic > threshold,
    })
}

/// Behaviour of the bootstrap test on a stationary stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub trials: usize,
    /// Fraction of tests that declared a change.
    pub false_alarm_rate: f64,
    pub threshold_mean: f64,
    pub threshold_median: f64,
    /// Bootstrap thresholds sorted ascending.
    pub thresholds: Vec<f64>,
    /// Observed statistics sorted ascending.
    pub statistics: Vec<f64>,
}

/// Runs `trials` independent bootstrap tests, each on `2n` fresh draws from
/// `dist`. The median threshold is a natural choice for fixed-threshold mode.
pub fn calibrate(
    dist: &DelayDistribution,
    config: &DetectorConfig,
    trials: usize,
    seed: u64,
) -> Result<Calibration> {
    let config = DetectorConfig {
        mode: ThresholdMode::Bootstrap,
        ..*config
    };
    config.validate()?;
    if trials == 0 {
        return Err(Error::Config("calibration needs at least one trial".into()));
    }
    let n = config.window;
    let mut process = DelayProcess::stationary(*dist, seed, DEFAULT_D_LB)?;
    let mut rng = stream_rng(seed, RngStream::Bootstrap);
    let mut history = vec![0.0; 2 * n];
    let mut alarms = 0;
    let mut thresholds = Vec::with_capacity(trials);
    let mut statistics = Vec::with_capacity(trials);
    for _ in 0..trials {
        history
            .iter_mut()
            .for_each(|d| *d = process.sample_delay(0.0));
        let out = detect(&history, 2 * n, &config, &mut rng)?;
        alarms += usize::from(out.changed);
        thresholds.push(out.threshold);
        statistics.push(out.statistic);
    }
    thresholds.sort_by(f64::total_cmp);
    statistics.sort_by(f64::total_cmp);
    Ok(Calibration {
        trials,
        false_alarm_rate: alarms as f64 / trials as f64,
        threshold_mean: thresholds.iter().sum::<f64>() / trials as f64,
        threshold_median: thresholds[trials / 2],
        thresholds,
        statistics,
    })
}
