//! One replication: a delay process, a policy and a timeline.

use crate::delay::{segment_index, DelayProcess};
use crate::engine::Timeline;
use crate::error::Result;
use crate::policy::{Ack, SamplingPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Stop at the first sampling time at or past `T`; the age curve then
    /// covers `[0, T]`.
    Horizon(f64),
    /// Stop after this many closed frames.
    Frames(usize),
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub timeline: Timeline,
    /// For each segment, the index of the first frame sampled inside it.
    pub segment_first_frame: Vec<Option<usize>>,
}

pub fn simulate(
    process: &mut DelayProcess,
    policy: &mut dyn SamplingPolicy,
    stop: StopRule,
    retain_frames: bool,
) -> Result<SimRun> {
    let mut timeline = Timeline::new(retain_frames);
    let mut first = vec![None; process.segments().len()];
    loop {
        let s = timeline.next_sample_time();
        let done = match stop {
            StopRule::Horizon(t) => s >= t,
            StopRule::Frames(k) => timeline.frames_closed() >= k,
        };
        if done {
            break;
        }
        let delay = process.sample_delay(s);
        let frame = *timeline.transmit(delay)?;
        first[segment_index(process.segments(), s)].get_or_insert(frame.index);
        let wait = policy.on_ack(&Ack {
            index: frame.index,
            sample_time: frame.sample_time,
            delay,
        })?;
        timeline.close_frame(wait)?;
    }
    Ok(SimRun {
        timeline,
        segment_first_frame: first,
    })
}
