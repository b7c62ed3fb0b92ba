//! Sampling/transmission timeline and the exact age-of-information curve.
//!
//! The age `A(t) = t - S_{i(t)}` is piecewise linear with slope one between
//! receptions, so every integral here is a sum of trapezoids over recorded
//! breakpoints. No quadrature is involved.

use crate::error::{check_nonnegative, check_positive, Error, Result};

/// One sampling frame `[S_k, S_{k+1})`.
///
/// `wait` is the idle time the sender spends after this frame's ACK. It is
/// zero until the ACK has been handled by [`Timeline::close_frame`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub sample_time: f64,
    pub wait: f64,
    pub delay: f64,
    pub reception_time: f64,
}

impl FrameRecord {
    /// Virtual frame zero: a sample generated and delivered at `t = 0`, so
    /// the age starts at zero.
    pub fn origin() -> Self {
        Self {
            index: 0,
            sample_time: 0.0,
            wait: 0.0,
            delay: 0.0,
            reception_time: 0.0,
        }
    }

    /// `L_k = D_k + W_k`.
    pub fn length(&self) -> f64 {
        self.delay + self.wait
    }

    /// `Q_k = L_k² / 2`.
    pub fn reward(&self) -> f64 {
        let l = self.length();
        0.5 * l * l
    }
}

/// FCFS reception time `R_k = max(R_{k-1}, S_k) + D_k`.
pub fn fcfs_reception(prev_reception: f64, sample_time: f64, delay: f64) -> f64 {
    prev_reception.max(sample_time) + delay
}

/// Next frame when the sender samples `wait` seconds after the previous ACK.
/// The returned frame's own `wait` is left at zero.
pub fn step_frame(prev: &FrameRecord, wait: f64, delay: f64) -> Result<FrameRecord> {
    check_nonnegative("wait", wait)?;
    check_positive("delay", delay)?;
    let sample_time = prev.reception_time + wait;
    Ok(FrameRecord {
        index: prev.index + 1,
        sample_time,
        wait: 0.0,
        delay,
        reception_time: fcfs_reception(prev.reception_time, sample_time, delay),
    })
}

/// Closed-form age area over one ACK-gated frame:
/// `X_k = (D_{k-1} + W_{k-1}) D_k + (D_k + W_k)² / 2`.
pub fn frame_area(prev_delay: f64, prev_wait: f64, delay: f64, wait: f64) -> f64 {
    let l = delay + wait;
    (prev_delay + prev_wait) * delay + 0.5 * l * l
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Reception {
    time: f64,
    sample_time: f64,
    /// `∫_0^time A(u) du`.
    cumulative: f64,
}

/// Trapezoid area under `u - sample_time` on `[a, b]`.
fn piece_area(sample_time: f64, a: f64, b: f64) -> f64 {
    0.5 * ((a - sample_time) + (b - sample_time)) * (b - a)
}

/// Exact piecewise-linear age curve.
#[derive(Debug, Clone)]
pub struct AoiTrajectory {
    receptions: Vec<Reception>,
    horizon: f64,
    area: f64,
}

impl Default for AoiTrajectory {
    fn default() -> Self {
        Self::new()
    }
}

impl AoiTrajectory {
    pub fn new() -> Self {
        Self {
            receptions: vec![Reception {
                time: 0.0,
                sample_time: 0.0,
                cumulative: 0.0,
            }],
            horizon: 0.0,
            area: 0.0,
        }
    }

    /// Time up to which the age is known.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `∫_0^horizon A(t) dt`.
    pub fn accumulated_area(&self) -> f64 {
        self.area
    }

    fn last(&self) -> &Reception {
        self.receptions
            .last()
            .expect("origin reception is always present")
    }

    /// Advances the known horizon to `t`, with no reception in between.
    pub fn extend_to(&mut self, t: f64) -> Result<()> {
        if !(t >= self.horizon) {
            return Err(Error::OutOfHorizon {
                from: self.horizon,
                to: t,
                horizon: self.horizon,
            });
        }
        self.area += piece_area(self.last().sample_time, self.horizon, t);
        self.horizon = t;
        Ok(())
    }

    /// Delivery at `time` of a sample generated at `sample_time`.
    pub fn record_reception(&mut self, time: f64, sample_time: f64) -> Result<()> {
        let last = *self.last();
        if !(sample_time >= last.sample_time && sample_time <= time) {
            return Err(Error::InvalidParameter {
                name: "sample_time",
                value: sample_time,
                reason: "receptions must deliver fresher samples in FCFS order",
            });
        }
        self.extend_to(time)?;
        self.receptions.push(Reception {
            time,
            sample_time,
            cumulative: self.area,
        });
        Ok(())
    }

    fn check_range(&self, from: f64, to: f64) -> Result<()> {
        if from.is_nan() || to.is_nan() || from < 0.0 || to > self.horizon || from > to {
            return Err(Error::OutOfHorizon {
                from,
                to,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    /// Index of the reception in force at `t` (latest with `time <= t`).
    fn active(&self, t: f64) -> usize {
        self.receptions.partition_point(|r| r.time <= t) - 1
    }

    pub fn age_at(&self, t: f64) -> Result<f64> {
        self.check_range(t, t)?;
        Ok(t - self.receptions[self.active(t)].sample_time)
    }

    /// `∫_from^to A(t) dt`, summed piece by piece.
    pub fn integrate(&self, from: f64, to: f64) -> Result<f64> {
        self.check_range(from, to)?;
        let mut i = self.active(from);
        let mut a = from;
        let mut total = 0.0;
        loop {
            let end = self.receptions.get(i + 1).map_or(to, |r| r.time.min(to));
            total += piece_area(self.receptions[i].sample_time, a, end);
            if end >= to {
                return Ok(total);
            }
            a = end;
            i += 1;
        }
    }

    /// `∫_0^t A(u) du` via the running prefix; `O(log n)` per query.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        self.check_range(0.0, t)?;
        let r = &self.receptions[self.active(t)];
        Ok(r.cumulative + piece_area(r.sample_time, r.time, t))
    }

    /// Vertices of the sawtooth as `(time, age)` pairs: the origin, then the
    /// peak and post-drop age at each reception, and the age at the horizon.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2 * self.receptions.len() + 1);
        out.push((0.0, 0.0));
        for pair in self.receptions.windows(2) {
            let (prev, r) = (&pair[0], &pair[1]);
            out.push((r.time, r.time - prev.sample_time));
            out.push((r.time, r.time - r.sample_time));
        }
        out.push((self.horizon, self.horizon - self.last().sample_time));
        out
    }

    /// Number of real (non-virtual) receptions.
    pub fn reception_count(&self) -> usize {
        self.receptions.len() - 1
    }
}

/// Drives the frame recursion and keeps the age curve in sync.
#[derive(Debug, Clone)]
pub struct Timeline {
    last: FrameRecord,
    prev: FrameRecord,
    awaiting_ack: bool,
    next_sample_time: f64,
    area_sum: f64,
    trajectory: AoiTrajectory,
    log: Option<Vec<(FrameRecord, f64)>>,
}

impl Timeline {
    /// `retain_frames` keeps every closed frame with its `X_k` for tracing.
    pub fn new(retain_frames: bool) -> Self {
        Self {
            last: FrameRecord::origin(),
            prev: FrameRecord::origin(),
            awaiting_ack: false,
            next_sample_time: 0.0,
            area_sum: 0.0,
            trajectory: AoiTrajectory::new(),
            log: retain_frames.then(Vec::new),
        }
    }

    pub fn next_sample_time(&self) -> f64 {
        self.next_sample_time
    }

    pub fn last_frame(&self) -> &FrameRecord {
        &self.last
    }

    pub fn frames_closed(&self) -> usize {
        if self.awaiting_ack {
            self.last.index - 1
        } else {
            self.last.index
        }
    }

    /// `Σ X_k` over closed frames.
    pub fn area_sum(&self) -> f64 {
        self.area_sum
    }

    pub fn trajectory(&self) -> &AoiTrajectory {
        &self.trajectory
    }

    pub fn into_trajectory(self) -> AoiTrajectory {
        self.trajectory
    }

    /// Closed frames with their `X_k`, if retention was enabled.
    pub fn frame_log(&self) -> Option<&[(FrameRecord, f64)]> {
        self.log.as_deref()
    }

    /// Sends the next packet at the scheduled sampling time.
    pub fn transmit(&mut self, delay: f64) -> Result<&FrameRecord> {
        self.transmit_at(self.next_sample_time, delay)
    }

    /// Sends a packet at an arbitrary time, possibly before the previous ACK
    /// (the FCFS queued case). `X_k` bookkeeping assumes ACK-gated sampling;
    /// the age curve itself is exact either way.
    pub fn transmit_at(&mut self, sample_time: f64, delay: f64) -> Result<&FrameRecord> {
        if self.awaiting_ack {
            return Err(Error::OutOfOrder {
                expected: self.last.index,
                got: self.last.index + 1,
            });
        }
        check_positive("delay", delay)?;
        if !(sample_time >= self.last.sample_time) {
            return Err(Error::InvalidParameter {
                name: "sample_time",
                value: sample_time,
                reason: "sampling times must be nondecreasing",
            });
        }
        let frame = FrameRecord {
            index: self.last.index + 1,
            sample_time,
            wait: 0.0,
            delay,
            reception_time: fcfs_reception(self.last.reception_time, sample_time, delay),
        };
        if sample_time > self.trajectory.horizon() {
            self.trajectory.extend_to(sample_time)?;
        }
        self.trajectory
            .record_reception(frame.reception_time, frame.sample_time)?;
        self.prev = self.last;
        self.last = frame;
        self.awaiting_ack = true;
        Ok(&self.last)
    }

    /// Handles the ACK of the in-flight frame: fixes its wait, accounts its
    /// `X_k`, and schedules the next sample at `R_k + W_k`. Returns `X_k`.
    pub fn close_frame(&mut self, wait: f64) -> Result<f64> {
        if !self.awaiting_ack {
            return Err(Error::OutOfOrder {
                expected: self.last.index + 1,
                got: self.last.index,
            });
        }
        check_nonnegative("wait", wait)?;
        self.last.wait = wait;
        let x = frame_area(self.prev.delay, self.prev.wait, self.last.delay, wait);
        self.area_sum += x;
        self.next_sample_time = self.last.reception_time + wait;
        self.trajectory.extend_to(self.next_sample_time)?;
        self.awaiting_ack = false;
        if let Some(log) = self.log.as_mut() {
            log.push((self.last, x));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(r: f64) -> FrameRecord {
        FrameRecord {
            index: 3,
            sample_time: r - 1.0,
            wait: 0.0,
            delay: 1.0,
            reception_time: r,
        }
    }

    #[test]
    fn step_zero_wait() {
        let f = step_frame(&rec(10.0), 0.0, 1.0).unwrap();
        assert_eq!((f.sample_time, f.reception_time, f.index), (10.0, 11.0, 4));
    }

    #[test]
    fn step_with_wait() {
        let f = step_frame(&rec(10.0), 2.0, 1.0).unwrap();
        assert_eq!((f.sample_time, f.reception_time), (12.0, 13.0));
    }

    #[test]
    fn step_rejects_bad_inputs() {
        assert!(step_frame(&rec(10.0), -0.1, 1.0).is_err());
        assert!(step_frame(&rec(10.0), 0.0, 0.0).is_err());
        assert!(step_frame(&rec(10.0), 0.0, -1.0).is_err());
    }

    #[test]
    fn queued_branch_uses_previous_reception() {
        assert_eq!(fcfs_reception(10.0, 8.0, 1.5), 11.5);
        assert_eq!(fcfs_reception(10.0, 12.0, 1.5), 13.5);
    }

    #[test]
    fn frame_area_examples() {
        assert_eq!(frame_area(1.0, 0.0, 1.0, 0.0), 1.5);
        assert_eq!(frame_area(2.0, 1.0, 1.0, 0.0), 3.5);
    }

    #[test]
    fn single_piece_integral() {
        let mut t = AoiTrajectory::new();
        t.record_reception(3.0, 1.0).unwrap();
        t.extend_to(7.0).unwrap();
        // age 2 at t=3 growing over 4 seconds: 2*4 + 4²/2
        assert!((t.integrate(3.0, 7.0).unwrap() - 16.0).abs() < 1e-12);
        assert_eq!(t.integrate(5.0, 5.0).unwrap(), 0.0);
        assert!(t.integrate(0.0, 7.5).is_err());
        assert!(t.integrate(5.0, 4.0).is_err());
    }

    #[test]
    fn age_drops_to_delay_at_reception() {
        let mut tl = Timeline::new(false);
        tl.transmit(2.0).unwrap();
        tl.close_frame(1.0).unwrap();
        tl.transmit(0.5).unwrap();
        tl.close_frame(0.0).unwrap();
        let traj = tl.trajectory();
        // sample 2 taken at 3, delivered at 3.5
        assert!((traj.age_at(3.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((traj.age_at(3.4999).unwrap() - 3.4999).abs() < 1e-12);
        assert!((traj.age_at(1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn queued_transmission_is_exact() {
        let mut tl = Timeline::new(false);
        tl.transmit_at(0.0, 2.0).unwrap();
        tl.close_frame(0.0).unwrap();
        // sampled at t=1 while packet 1 (delivered at 2) is still in flight
        let f = *tl.transmit_at(1.0, 1.0).unwrap();
        assert_eq!(f.reception_time, 3.0);
        assert!((tl.trajectory().age_at(3.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ack_protocol_is_enforced() {
        let mut tl = Timeline::new(false);
        assert!(tl.close_frame(0.0).is_err());
        tl.transmit(1.0).unwrap();
        assert!(tl.transmit(1.0).is_err());
        assert!(tl.close_frame(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn decomposition_identity(
            frames in prop::collection::vec((0.01f64..10.0, 0.0f64..5.0), 1..200)
        ) {
            let mut tl = Timeline::new(false);
            for &(d, w) in &frames {
                let s = tl.next_sample_time();
                tl.transmit(d).unwrap();
                let x = tl.close_frame(w).unwrap();
                let direct = tl.trajectory().integrate(s, tl.next_sample_time()).unwrap();
                prop_assert!((x - direct).abs() <= 1e-9 * x.max(1.0));
                prop_assert!(x >= 0.5 * d * d);
            }
            let total = tl.trajectory().integrate(0.0, tl.next_sample_time()).unwrap();
            prop_assert!((tl.area_sum() - total).abs() <= 1e-9 * total);
            let prefix = tl.trajectory().cumulative(tl.next_sample_time()).unwrap();
            prop_assert!((prefix - total).abs() <= 1e-9 * total);
            prop_assert!((tl.trajectory().accumulated_area() - total).abs() <= 1e-9 * total);
        }

        #[test]
        fn age_matches_replayed_receptions(
            frames in prop::collection::vec((0.01f64..3.0, 0.0f64..2.0), 1..50),
            probe in 0.0f64..1.0,
        ) {
            let mut tl = Timeline::new(true);
            for &(d, w) in &frames {
                tl.transmit(d).unwrap();
                tl.close_frame(w).unwrap();
            }
            let t = probe * tl.next_sample_time();
            let newest = tl
                .frame_log()
                .unwrap()
                .iter()
                .filter(|(f, _)| f.reception_time <= t)
                .map(|(f, _)| f.sample_time)
                .fold(0.0, f64::max);
            let age = tl.trajectory().age_at(t).unwrap();
            prop_assert!((age - (t - newest)).abs() < 1e-9);
        }
    }
}
