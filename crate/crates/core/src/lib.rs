//! Age-of-Information optimal sampling over a channel whose delay
//! distribution changes at unknown times.
//!
//! The crate simulates a sender that samples a process, transmits each update
//! over a one-packet FCFS channel and decides, after each ACK, how long to
//! wait before the next sample. It provides the exact age curve, the
//! threshold waiting policies (zero-wait, fixed, clairvoyant optimal, online
//! Robbins-Monro), a bootstrap Kolmogorov–Smirnov change detector, the joint
//! learner/detector, and a config-driven multi-replication experiment runner.

// Negated float comparisons are used deliberately so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod delay;
pub mod detect;
pub mod engine;
mod error;
pub mod experiment;
pub mod policy;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
