use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use agesim::delay::DelayDistribution;
use agesim::detect::{calibrate, DetectorConfig};
use agesim::experiment::{run_experiment, write_outputs, ExperimentConfig, ExperimentResult};
use agesim::policy::{solve_optimal_threshold, zero_wait_aoi};

#[derive(Debug, Parser)]
#[command(
    name = "agesim",
    version,
    about = "Age-of-Information sampling experiments"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config and write CSV outputs.
    Run {
        /// Experiment config file.
        #[arg(short, long)]
        config: PathBuf,
        /// Override `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `replications`.
        #[arg(long)]
        replications: Option<usize>,
        /// Output directory.
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the optimal threshold and average age of each segment.
    Solve {
        /// Take segments from this config instead of --mu/--sigma.
        #[arg(short, long, conflicts_with_all = ["mu", "sigma"])]
        config: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true, requires = "sigma")]
        mu: Option<f64>,
        #[arg(long, requires = "mu")]
        sigma: Option<f64>,
    },
    /// Measure the bootstrap test on a stationary lognormal stream and
    /// suggest a fixed threshold.
    Calibrate {
        #[arg(long, allow_hyphen_values = true, default_value_t = -1.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Window size n.
        #[arg(long, default_value_t = 50)]
        window: usize,
        /// Bootstrap replicates R.
        #[arg(long, default_value_t = 500)]
        replicates: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 100)]
        grid_points: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_report(result: &ExperimentResult) {
    println!(
        "{:<12} {:>8} {:>14} {:>10} {:>10}",
        "policy", "segment", "terminal_a_hat", "gamma*", "a*"
    );
    for row in result.summary_rows() {
        println!(
            "{:<12} {:>8} {:>14.4} {:>10.4} {:>10.4}",
            row.policy, row.segment, row.terminal_a_hat, row.gamma_star, row.aoi_star
        );
    }
    for s in result.detection_stats() {
        println!(
            "{} change at {}: detected in {:.0}% of runs, mean delay {:.1}s ({:.1} frames), p90 {:.1}s, false alarms/run {:.2}",
            s.policy,
            s.change_time,
            100.0 * s.detection_rate,
            s.mean_delay,
            s.mean_delay_frames,
            s.p90_delay,
            s.mean_false_alarms
        );
    }
    log::info!(
        "max decomposition audit error {:.3e}",
        result.max_audit_error()
    );
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Run {
            config,
            seed,
            replications,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.base_seed = seed;
            }
            if let Some(r) = replications {
                cfg.replications = r;
            }
            log::info!(
                "running {} policies x {} replications to T={}",
                cfg.policies.len(),
                cfg.replications,
                cfg.horizon
            );
            let result = run_experiment(&cfg)?;
            let paths = write_outputs(&result, &out)?;
            print_report(&result);
            println!("wrote {}", paths.metrics.display());
        }
        Command::Solve { config, mu, sigma } => {
            let dists = match (config, mu, sigma) {
                (Some(path), _, _) => ExperimentConfig::load(&path)?
                    .segments
                    .iter()
                    .map(|s| s.distribution)
                    .collect(),
                (None, Some(mu), Some(sigma)) => vec![DelayDistribution::lognormal(mu, sigma)?],
                _ => anyhow::bail!("pass either --config or both --mu and --sigma"),
            };
            println!("segment,gamma_star,aoi_star,mean_delay,zero_wait_aoi");
            for (i, d) in dists.iter().enumerate() {
                let sol = solve_optimal_threshold(d)?;
                println!(
                    "{i},{},{},{},{}",
                    sol.gamma_star,
                    sol.aoi_star,
                    sol.mean_delay,
                    zero_wait_aoi(d)
                );
            }
        }
        Command::Calibrate {
            mu,
            sigma,
            window,
            replicates,
            alpha,
            grid_points,
            trials,
            seed,
        } => {
            let config = DetectorConfig {
                window,
                replicates,
                alpha,
                grid_points,
                ..DetectorConfig::default()
            };
            let cal = calibrate(
                &DelayDistribution::lognormal(mu, sigma)?,
                &config,
                trials,
                seed,
            )?;
            println!("trials            {}", cal.trials);
            println!("false alarm rate  {:.4}", cal.false_alarm_rate);
            println!("threshold mean    {:.4}", cal.threshold_mean);
            println!("threshold median  {:.4}", cal.threshold_median);
        }
    }
    Ok(())
}
