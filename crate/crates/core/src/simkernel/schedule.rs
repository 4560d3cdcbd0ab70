use serde::{Deserialize, Serialize};

use super::config::{SimConfig, ValidatedConfig};

/// One board's slot within the major frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinorFrame {
    pub position: usize,
    pub board_id: u16,
    /// Offset of the switch-in from the start of the major frame, ns.
    pub start_ns: u64,
    pub slice_ns: u64,
    /// Nominal (jitter-free, attack-free) perceived duration of the switch
    /// that follows this slice.
    pub switch_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub frames: Vec<MinorFrame>,
    pub major_frame_ns: u64,
}

/// Minor frames of a validated configuration. Identical inputs always give
/// identical output.
pub fn build_schedule(config: &ValidatedConfig) -> Schedule {
    config.schedule().clone()
}

pub(crate) fn nominal_schedule(cfg: &SimConfig) -> Schedule {
    let n = cfg.boards.len();
    let base = cfg.speed_scale().saturating_mul(cfg.base_switch_cost);
    let mut frames = Vec::with_capacity(n);
    let mut t = 0u64;
    for (i, b) in cfg.boards.iter().enumerate() {
        let switch_ns = base.max(cfg.enforced_for(i, (i + 1) % n));
        frames.push(MinorFrame {
            position: i,
            board_id: b.id,
            start_ns: t,
            slice_ns: b.time_slice,
            switch_ns,
        });
        t = t.saturating_add(b.time_slice).saturating_add(switch_ns);
    }
    Schedule {
        frames,
        major_frame_ns: t,
    }
}
