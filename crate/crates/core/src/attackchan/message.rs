use serde::{Deserialize, Serialize};

use super::ChannelError;

/// Payload bits plus framing. Bits are stored as `0`/`1` bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitMessage {
    pub bits: Vec<u8>,
    pub frames_per_bit: u32,
    pub preamble_len: u32,
}

impl BitMessage {
    pub fn new(bits: Vec<u8>, frames_per_bit: u32, preamble_len: u32) -> Result<Self, ChannelError> {
        if frames_per_bit == 0 {
            return Err(ChannelError::InvalidMessage("frames_per_bit must be >= 1".into()));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(ChannelError::InvalidMessage(format!("bit value {b} is not 0 or 1")));
        }
        Ok(BitMessage {
            bits,
            frames_per_bit,
            preamble_len,
        })
    }

    /// Alternating `1010...` training pattern.
    pub fn preamble(&self) -> Vec<u8> {
        preamble_bits(self.preamble_len as usize)
    }

    /// Preamble followed by payload.
    pub fn framed_bits(&self) -> Vec<u8> {
        let mut out = self.preamble();
        out.extend_from_slice(&self.bits);
        out
    }

    pub fn frame_count(&self) -> usize {
        (self.preamble_len as usize + self.bits.len()) * self.frames_per_bit as usize
    }
}

pub fn preamble_bits(len: usize) -> Vec<u8> {
    (0..len).map(|i| u8::from(i % 2 == 0)).collect()
}

/// Parses `0x`-prefixed hex (MSB first, four bits per digit) or a binary
/// string, optionally `0b`-prefixed. Underscores are ignored.
pub fn parse_bits(text: &str) -> Result<Vec<u8>, ChannelError> {
    let t: String = text.trim().chars().filter(|&c| c != '_').collect();
    let bad = |m: String| ChannelError::InvalidMessage(m);
    if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        if hex.is_empty() {
            return Err(bad("empty hex message".into()));
        }
        let mut out = Vec::with_capacity(hex.len() * 4);
        for c in hex.chars() {
            let v = c.to_digit(16).ok_or_else(|| bad(format!("invalid hex digit `{c}`")))?;
            out.extend((0..4).rev().map(|k| ((v >> k) & 1) as u8));
        }
        return Ok(out);
    }
    let bin = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")).unwrap_or(&t);
    if bin.is_empty() {
        return Err(bad("empty binary message".into()));
    }
    bin.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(bad(format!("invalid binary digit `{other}`"))),
        })
        .collect()
}

pub fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
}
