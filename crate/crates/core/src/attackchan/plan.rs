use serde::{Deserialize, Serialize};

use super::{BitMessage, ChannelError};
use crate::simkernel::HypercallKind;

/// What the sender does in its Time-Slice-End handler for one activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum SenderAction {
    Idle,
    Burst { kind: HypercallKind, count: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstSpec {
    pub kind: HypercallKind,
    pub count: u32,
}

impl Default for BurstSpec {
    fn default() -> Self {
        BurstSpec {
            kind: HypercallKind::VmmuConfig,
            count: 50,
        }
    }
}

impl BurstSpec {
    pub fn action(self) -> SenderAction {
        SenderAction::Burst {
            kind: self.kind,
            count: self.count,
        }
    }
}

/// Per-activation sender actions. Action `i` affects trace sample `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub actions: Vec<SenderAction>,
    /// Repeat `actions` forever instead of going idle after the last one.
    #[serde(default)]
    pub cyclic: bool,
}

impl AttackPlan {
    /// Burst on every activation: the "with attack" run of an assessment.
    pub fn continuous(burst: BurstSpec) -> Self {
        AttackPlan {
            actions: vec![burst.action()],
            cyclic: true,
        }
    }

    pub fn action_at(&self, index: u64) -> SenderAction {
        if self.actions.is_empty() {
            return SenderAction::Idle;
        }
        let len = self.actions.len() as u64;
        if self.cyclic {
            self.actions[(index % len) as usize]
        } else if index < len {
            self.actions[index as usize]
        } else {
            SenderAction::Idle
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Bit 1 becomes a burst on each of its frames, bit 0 stays idle.
pub fn encode(message: &BitMessage, burst: BurstSpec) -> Result<AttackPlan, ChannelError> {
    let fpb = message.frames_per_bit as usize;
    if fpb == 0 {
        return Err(ChannelError::InvalidMessage("frames_per_bit must be >= 1".into()));
    }
    let bits = message.framed_bits();
    if bits.is_empty() {
        return Err(ChannelError::EmptyPlan);
    }
    let actions = bits
        .iter()
        .flat_map(|&b| {
            let a = if b == 1 { burst.action() } else { SenderAction::Idle };
            std::iter::repeat_n(a, fpb)
        })
        .collect();
    Ok(AttackPlan { actions, cyclic: false })
}
