use serde::{Deserialize, Serialize};

use super::message::preamble_bits;
use super::{BitMessage, ChannelError};
use crate::simkernel::TimingTrace;

/// Result of threshold training on the preamble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub threshold_ticks: f64,
    pub mean_one: f64,
    pub mean_zero: f64,
    /// Minimum separation the two means had to exceed.
    pub floor_ticks: f64,
}

/// Trains the decision threshold: the midpoint between the mean delta of
/// preamble-1 frames and that of preamble-0 frames. Preamble frames start at
/// `start_sample`.
///
/// Fails with [`ChannelError::ChannelClosed`] when the two means are not
/// separated by more than `max(1 tick, 3 standard errors)`.
pub fn calibrate_threshold(
    trace: &TimingTrace,
    preamble_len: usize,
    frames_per_bit: usize,
    start_sample: usize,
) -> Result<ThresholdCalibration, ChannelError> {
    if frames_per_bit == 0 {
        return Err(ChannelError::InvalidMessage("frames_per_bit must be >= 1".into()));
    }
    if preamble_len < 2 {
        return Err(ChannelError::InvalidMessage(
            "preamble must contain at least one 1 and one 0".into(),
        ));
    }
    let needed = start_sample + preamble_len * frames_per_bit;
    if trace.len() < needed {
        return Err(ChannelError::TraceTooShort {
            needed,
            available: trace.len(),
        });
    }
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for (i, bit) in preamble_bits(preamble_len).into_iter().enumerate() {
        let from = start_sample + i * frames_per_bit;
        let group = if bit == 1 { &mut ones } else { &mut zeros };
        group.extend(
            trace.samples[from..from + frames_per_bit]
                .iter()
                .map(|s| s.delta_ticks as f64),
        );
    }
    let (m1, v1) = mean_var(&ones);
    let (m0, v0) = mean_var(&zeros);
    let se = (v1 / ones.len() as f64 + v0 / zeros.len() as f64).sqrt();
    let floor = (3.0 * se).max(1.0);
    if (m1 - m0).abs() <= floor {
        return Err(ChannelError::ChannelClosed {
            mean_one: m1,
            mean_zero: m0,
            floor,
        });
    }
    Ok(ThresholdCalibration {
        threshold_ticks: (m1 + m0) / 2.0,
        mean_one: m1,
        mean_zero: m0,
        floor_ticks: floor,
    })
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// How to slice the trace into bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub threshold_ticks: f64,
    pub frames_per_bit: usize,
    /// First trace sample of the first bit to decode.
    #[serde(default)]
    pub start_sample: usize,
    /// Number of bits to decode; defaults to the ground-truth length, or to
    /// every complete bit in the trace.
    #[serde(default)]
    pub bit_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub decoded_bits: Vec<u8>,
    /// Present only when ground truth was supplied.
    pub ber: Option<f64>,
    pub bit_errors: Option<usize>,
    pub threshold_ticks: f64,
    /// Mean signed margin `delta - threshold` over each bit's frames.
    pub per_bit_confidence: Vec<f64>,
    /// The trace ended before every requested bit was seen.
    pub partial: bool,
}

/// Majority vote per bit over its frames (`delta > threshold` votes 1).
/// Ties go to the sign of the summed margin, then to 0.
pub fn decode(
    trace: &TimingTrace,
    params: &DecodeParams,
    ground_truth: Option<&[u8]>,
) -> Result<DecodeResult, ChannelError> {
    let fpb = params.frames_per_bit;
    if fpb == 0 {
        return Err(ChannelError::InvalidMessage("frames_per_bit must be >= 1".into()));
    }
    let available = trace.len().saturating_sub(params.start_sample) / fpb;
    let wanted = params.bit_count.or(ground_truth.map(<[u8]>::len)).unwrap_or(available);
    let n = wanted.min(available);
    let mut decoded_bits = Vec::with_capacity(n);
    let mut per_bit_confidence = Vec::with_capacity(n);
    for bit in 0..n {
        let from = params.start_sample + bit * fpb;
        let frames = &trace.samples[from..from + fpb];
        let mut votes = 0usize;
        let mut margin = 0.0;
        for s in frames {
            let m = s.delta_ticks as f64 - params.threshold_ticks;
            margin += m;
            if m > 0.0 {
                votes += 1;
            }
        }
        let one = match (2 * votes).cmp(&fpb) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => margin > 0.0,
        };
        decoded_bits.push(u8::from(one));
        per_bit_confidence.push(margin / fpb as f64);
    }
    let (ber, bit_errors) = match ground_truth {
        Some(truth) if n > 0 => {
            let errors = decoded_bits.iter().zip(truth).filter(|(a, b)| a != b).count() + n.saturating_sub(truth.len());
            (Some(errors as f64 / n as f64), Some(errors))
        }
        _ => (None, None),
    };
    Ok(DecodeResult {
        decoded_bits,
        ber,
        bit_errors,
        threshold_ticks: params.threshold_ticks,
        per_bit_confidence,
        partial: n < wanted,
    })
}

/// Receiver pipeline for a framed message: train on the preamble, then
/// decode the payload that follows it.
pub fn receive(
    trace: &TimingTrace,
    layout: &BitMessage,
    ground_truth: Option<&[u8]>,
) -> Result<(ThresholdCalibration, DecodeResult), ChannelError> {
    let fpb = layout.frames_per_bit as usize;
    let pre = layout.preamble_len as usize;
    let cal = calibrate_threshold(trace, pre, fpb, 0)?;
    let params = DecodeParams {
        threshold_ticks: cal.threshold_ticks,
        frames_per_bit: fpb,
        start_sample: pre * fpb,
        bit_count: Some(layout.bits.len()),
    };
    Ok((cal, decode(trace, &params, ground_truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkernel::{TraceMetadata, TraceSample};

    fn trace(deltas: &[u64]) -> TimingTrace {
        TimingTrace {
            samples: deltas
                .iter()
                .enumerate()
                .map(|(i, &d)| TraceSample {
                    frame_index: i as u64 + 1,
                    delta_ticks: d,
                })
                .collect(),
            metadata: TraceMetadata {
                config_digest: "t".into(),
                attack: true,
                seed: 0,
                counter_freq: 1,
                start_offset: 0,
                speed_exponent: None,
                overrides: vec![],
            },
        }
    }

    #[test]
    fn midpoint_threshold() {
        let cal = calibrate_threshold(&trace(&[1000, 900]), 2, 1, 0).unwrap();
        assert_eq!(cal.threshold_ticks, 950.0);
    }

    #[test]
    fn equal_means_close_the_channel() {
        let err = calibrate_threshold(&trace(&[900, 900, 900, 900]), 4, 1, 0).unwrap_err();
        assert!(matches!(err, ChannelError::ChannelClosed { .. }));
    }

    #[test]
    fn short_trace_cannot_calibrate() {
        let err = calibrate_threshold(&trace(&[1000]), 2, 1, 0).unwrap_err();
        assert!(matches!(
            err,
            ChannelError::TraceTooShort {
                needed: 2,
                available: 1
            }
        ));
    }

    #[test]
    fn threshold_comparison() {
        let p = DecodeParams {
            threshold_ticks: 950.0,
            frames_per_bit: 1,
            start_sample: 0,
            bit_count: None,
        };
        let r = decode(&trace(&[1000, 900, 1000]), &p, Some(&[1, 1, 1])).unwrap();
        assert_eq!(r.decoded_bits, vec![1, 0, 1]);
        assert_eq!(r.bit_errors, Some(1));
        assert!((r.ber.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(!r.partial);
        assert_eq!(r.per_bit_confidence, vec![50.0, -50.0, 50.0]);
    }

    #[test]
    fn majority_vote_and_ties() {
        let p = DecodeParams {
            threshold_ticks: 950.0,
            frames_per_bit: 3,
            start_sample: 0,
            bit_count: None,
        };
        let r = decode(&trace(&[1000, 900, 1000, 900, 900, 1000]), &p, None).unwrap();
        assert_eq!(r.decoded_bits, vec![1, 0]);
        assert_eq!(r.ber, None);
        let p2 = DecodeParams { frames_per_bit: 2, ..p };
        let r2 = decode(&trace(&[1000, 940, 960, 800]), &p2, None).unwrap();
        assert_eq!(r2.decoded_bits, vec![1, 0]);
    }

    #[test]
    fn short_trace_is_partial() {
        let p = DecodeParams {
            threshold_ticks: 950.0,
            frames_per_bit: 2,
            start_sample: 0,
            bit_count: Some(4),
        };
        let r = decode(&trace(&[1000, 1000, 900]), &p, None).unwrap();
        assert_eq!(r.decoded_bits, vec![1]);
        assert!(r.partial);
    }
}
