//! The covert channel: bit messages become per-activation sender plans, and
//! receiver traces become bits again.
//!
//! Framing is a `1010...` preamble used to train a decision threshold,
//! followed by the payload with each bit repeated over `frames_per_bit`
//! frames and decided by majority vote. Sender and receiver agree on frame
//! alignment through the static schedule; there is no clock recovery.

mod decode;
mod message;
mod plan;

use thiserror::Error;

pub use decode::{calibrate_threshold, decode, receive, DecodeParams, DecodeResult, ThresholdCalibration};
pub use message::{bits_to_string, parse_bits, preamble_bits, BitMessage};
pub use plan::{encode, AttackPlan, BurstSpec, SenderAction};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("message and preamble are both empty; nothing to transmit")]
    EmptyPlan,
    #[error("trace has {available} samples, {needed} needed")]
    TraceTooShort { needed: usize, available: usize },
    #[error(
        "channel closed at calibration: preamble means {mean_one:.1} and {mean_zero:.1} ticks \
         differ by less than {floor:.1}"
    )]
    ChannelClosed { mean_one: f64, mean_zero: f64, floor: f64 },
}
