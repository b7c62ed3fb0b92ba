//! CSV outputs. Column order is fixed and floats use Rust's shortest
//! round-trip formatting with a dot decimal separator.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{ExperimentResult, PolicySpec};
use crate::error::Result;

#[derive(Debug, Clone, Default)]
pub struct OutputPaths {
    pub metrics: PathBuf,
    pub summary: PathBuf,
    pub detections: PathBuf,
    pub detection_summary: PathBuf,
    pub traces: Vec<PathBuf>,
    pub detector_log: Option<PathBuf>,
}

fn opt(v: Option<impl std::fmt::Display>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_metrics(result: &ExperimentResult, w: &mut impl Write) -> Result<()> {
    writeln!(w, "policy,t,a_hat_mean,a_hat_stderr")?;
    for row in result.metric_rows() {
        writeln!(w, "{},{},{},{}", row.policy, row.t, row.mean, row.stderr)?;
    }
    Ok(())
}

pub fn write_summary(result: &ExperimentResult, w: &mut impl Write) -> Result<()> {
    writeln!(w, "policy,segment,terminal_a_hat,gamma_star,aoi_star")?;
    for row in result.summary_rows() {
        writeln!(
            w,
            "{},{},{},{},{}",
            row.policy, row.segment, row.terminal_a_hat, row.gamma_star, row.aoi_star
        )?;
    }
    Ok(())
}

pub fn write_detections(result: &ExperimentResult, w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "replication,true_change_time,detected_time,delay,delay_frames"
    )?;
    for p in result
        .policies
        .iter()
        .filter(|p| p.spec == PolicySpec::OnlineKs)
    {
        for rep in &p.replications {
            for m in &rep.matched {
                let detected = m.detected.map(|e| e.sample_time);
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    rep.replication,
                    m.change_time,
                    opt(detected),
                    opt(detected.map(|t| t - m.change_time)),
                    opt(m.delay_frames)
                )?;
            }
        }
    }
    Ok(())
}

pub fn write_detection_summary(result: &ExperimentResult, w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "policy,change_time,detection_rate,mean_delay,p50_delay,p90_delay,mean_delay_frames,mean_false_alarms"
    )?;
    for s in result.detection_stats() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.policy,
            s.change_time,
            s.detection_rate,
            s.mean_delay,
            s.p50_delay,
            s.p90_delay,
            s.mean_delay_frames,
            s.mean_false_alarms
        )?;
    }
    Ok(())
}

type CsvWriter = fn(&ExperimentResult, &mut BufWriter<File>) -> Result<()>;

/// Writes every configured output under `dir`, creating it if needed.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir)?;
    let out = &result.config.output;
    let mut paths = OutputPaths {
        metrics: dir.join(&out.metrics),
        summary: dir.join(&out.summary),
        detections: dir.join(&out.detections),
        detection_summary: dir.join(&out.detection_summary),
        ..OutputPaths::default()
    };

    let files: [(&PathBuf, CsvWriter); 4] = [
        (&paths.metrics, write_metrics),
        (&paths.summary, write_summary),
        (&paths.detections, write_detections),
        (&paths.detection_summary, write_detection_summary),
    ];
    for (path, write) in files {
        let mut w = create(path)?;
        write(result, &mut w)?;
        w.flush()?;
    }

    for p in &result.policies {
        let Some(trace) = p.replications.first().and_then(|r| r.trace.as_ref()) else {
            continue;
        };
        let path = dir.join(format!("trace_{}.csv", p.label));
        let mut w = create(&path)?;
        writeln!(w, "k,S_k,W_k,D_k,R_k,X_k")?;
        for (f, x) in trace {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                f.index, f.sample_time, f.wait, f.delay, f.reception_time, x
            )?;
        }
        w.flush()?;
        paths.traces.push(path);
    }

    let tests = result
        .policies
        .iter()
        .filter_map(|p| p.replications.first().and_then(|r| r.tests.as_ref()))
        .next();
    if let Some(tests) = tests {
        let path = dir.join("detector_tests.csv");
        let mut w = create(&path)?;
        writeln!(w, "k,delta,threshold,changed")?;
        for t in tests {
            writeln!(
                w,
                "{},{},{},{}",
                t.index, t.outcome.statistic, t.outcome.threshold, t.outcome.changed
            )?;
        }
        w.flush()?;
        paths.detector_log = Some(path);
    }
    Ok(paths)
}
