use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::error::{ConfigError, ConfigIssue};

/// Minimum number of major frames a simulation must cover.
pub const MIN_MAJOR_FRAMES: u64 = 30;

/// Largest accepted speed exponent. Keeps every scaled duration well inside
/// `u64` nanoseconds.
pub const MAX_SPEED_EXPONENT: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoardRole {
    Benign,
    Sender,
    Receiver,
    Io,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypercallKind {
    VmmuConfig,
    IpcSend,
    EventLog,
    IrqConfig,
}

impl HypercallKind {
    pub const ALL: [HypercallKind; 4] = [
        HypercallKind::VmmuConfig,
        HypercallKind::IpcSend,
        HypercallKind::EventLog,
        HypercallKind::IrqConfig,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HypercallKind::VmmuConfig => "vmmu_config",
            HypercallKind::IpcSend => "ipc_send",
            HypercallKind::EventLog => "event_log",
            HypercallKind::IrqConfig => "irq_config",
        }
    }
}

impl fmt::Display for HypercallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One partition ("virtual board") in the cyclic schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualBoardSpec {
    pub id: u16,
    pub role: BoardRole,
    /// Slice length in wall-clock nanoseconds.
    pub time_slice: u64,
    /// The Time-Slice-End interrupt fires this many ns before the slice ends.
    pub tse_offset: u64,
    #[serde(default)]
    pub authorized_hypercalls: BTreeSet<HypercallKind>,
    /// Per-board enforced switch duration, applied to switches into and out
    /// of this board. `None` uses the global value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_override: Option<u64>,
}

impl VirtualBoardSpec {
    pub fn new(id: u16, role: BoardRole, time_slice: u64, tse_offset: u64) -> Self {
        VirtualBoardSpec {
            id,
            role,
            time_slice,
            tse_offset,
            authorized_hypercalls: BTreeSet::new(),
            switch_override: None,
        }
    }

    pub fn authorize(mut self, kinds: &[HypercallKind]) -> Self {
        self.authorized_hypercalls.extend(kinds.iter().copied());
        self
    }
}

/// Cost of one hypercall class, in nanoseconds at full speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypercallCost {
    /// Execution time of one call (instruction bound, scaled by `2^N`).
    pub base_cost: u64,
    /// Cache refill stall charged to the next context switch. Memory bound:
    /// it is not scaled by the speed exponent and overlaps the switch's
    /// instruction stream.
    pub cache_flush_penalty: u64,
    /// Extension of the next switch when a call is still in flight at the
    /// end of the slice (instruction bound, scaled by `2^N`).
    pub critical_section: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypercallModel {
    pub vmmu_config: HypercallCost,
    pub ipc_send: HypercallCost,
    pub event_log: HypercallCost,
    pub irq_config: HypercallCost,
}

impl HypercallModel {
    pub fn cost(&self, kind: HypercallKind) -> &HypercallCost {
        match kind {
            HypercallKind::VmmuConfig => &self.vmmu_config,
            HypercallKind::IpcSend => &self.ipc_send,
            HypercallKind::EventLog => &self.event_log,
            HypercallKind::IrqConfig => &self.irq_config,
        }
    }

    pub fn max_cache_flush_penalty(&self) -> u64 {
        HypercallKind::ALL
            .iter()
            .map(|&k| self.cost(k).cache_flush_penalty)
            .max()
            .unwrap_or(0)
    }

    pub fn max_critical_section(&self) -> u64 {
        HypercallKind::ALL
            .iter()
            .map(|&k| self.cost(k).critical_section)
            .max()
            .unwrap_or(0)
    }
}

impl Default for HypercallModel {
    fn default() -> Self {
        HypercallModel {
            vmmu_config: HypercallCost {
                base_cost: 4_000,
                cache_flush_penalty: 35_000,
                critical_section: 6_000,
            },
            ipc_send: HypercallCost {
                base_cost: 500,
                cache_flush_penalty: 0,
                critical_section: 500,
            },
            event_log: HypercallCost {
                base_cost: 300,
                cache_flush_penalty: 0,
                critical_section: 200,
            },
            irq_config: HypercallCost {
                base_cost: 400,
                cache_flush_penalty: 0,
                critical_section: 300,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JitterKind {
    None,
    Uniform,
    TruncatedNormal,
}

/// Per-switch kernel execution jitter, in nanoseconds at full speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JitterModel {
    pub kind: JitterKind,
    pub magnitude: u64,
    #[serde(default)]
    pub tail_probability: f64,
    #[serde(default)]
    pub tail_magnitude: u64,
}

impl JitterModel {
    pub fn none() -> Self {
        JitterModel {
            kind: JitterKind::None,
            magnitude: 0,
            tail_probability: 0.0,
            tail_magnitude: 0,
        }
    }

    /// Largest possible draw.
    pub fn max_draw(&self) -> u64 {
        match self.kind {
            JitterKind::None => 0,
            _ => self.magnitude + if self.tail_ppm() > 0 { self.tail_magnitude } else { 0 },
        }
    }

    /// Tail probability in parts per million, the unit used by the sampler.
    pub fn tail_ppm(&self) -> u32 {
        (self.tail_probability * 1e6).round().clamp(0.0, 1e6) as u32
    }
}

impl Default for JitterModel {
    fn default() -> Self {
        JitterModel {
            kind: JitterKind::TruncatedNormal,
            magnitude: 4_000,
            tail_probability: 0.005,
            tail_magnitude: 8_000,
        }
    }
}

/// Full description of one simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Minor-frame order.
    pub boards: Vec<VirtualBoardSpec>,
    /// One simulated instruction per `2^N` ns of virtual time.
    pub speed_exponent: u32,
    /// Time-base counter ticks per second at `N = 0`.
    pub counter_freq: u64,
    /// Guest timer interrupts per second per board.
    pub tick_frequency: u64,
    /// Minimum perceived duration of every context switch (wall clock ns).
    pub enforced_switch_duration: u64,
    /// Context switch cost at full speed, ns.
    pub base_switch_cost: u64,
    pub hypercall_costs: HypercallModel,
    pub jitter: JitterModel,
    pub seed: u64,
    /// Simulated duration, virtual ns.
    pub sim_duration: u64,
}

impl SimConfig {
    /// Four 100 ms boards (benign, sender, receiver, I/O) with the shipped
    /// cost model, 10 us padding and a 15 minute run.
    pub fn calibrated_default() -> Self {
        SimConfig {
            boards: standard_boards(1),
            speed_exponent: 1,
            counter_freq: 1_500_000_000,
            tick_frequency: 10,
            enforced_switch_duration: 10_000,
            base_switch_cost: 20_000,
            hypercall_costs: HypercallModel::default(),
            jitter: JitterModel::default(),
            seed: 0,
            sim_duration: 15 * 60 * 1_000_000_000,
        }
    }

    /// Multiplier applied to instruction-bound cost-model durations.
    pub fn speed_scale(&self) -> u64 {
        1u64 << self.speed_exponent.min(MAX_SPEED_EXPONENT)
    }

    /// Enforced duration for the switch from `out` to `inc` (board indices).
    pub fn enforced_for(&self, out: usize, inc: usize) -> u64 {
        let a = self.boards[out].switch_override;
        let b = self.boards[inc].switch_override;
        match (a, b) {
            (None, None) => self.enforced_switch_duration,
            (x, y) => x.unwrap_or(0).max(y.unwrap_or(0)),
        }
    }

    /// Largest actual switch cost the cost model can produce, in wall ns.
    pub fn worst_case_switch_cost(&self) -> u64 {
        let s = self.speed_scale();
        let compute =
            s * (self.base_switch_cost + self.hypercall_costs.max_critical_section() + self.jitter.max_draw());
        compute.max(self.hypercall_costs.max_cache_flush_penalty())
    }

    pub fn position_of(&self, role: BoardRole) -> Option<usize> {
        self.boards.iter().position(|b| b.role == role)
    }

    /// Digest identifying the configuration, excluding the seed.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.seed = 0;
        let json = serde_json::to_vec(&c).expect("config serializes");
        crate::digest::short_digest(&json)
    }

    /// Fails only for values TOML cannot represent (integers above `i64::MAX`).
    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Applies `key=value` overrides addressed by dotted paths
    /// (`jitter.magnitude`, `boards.0.time_slice`). Unknown keys are errors.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let value = toml::Value::try_from(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let value = apply_overrides(value, overrides)?;
        value
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
    }

    /// Checks every invariant and computes the nominal schedule.
    pub fn validate(self) -> Result<ValidatedConfig, ConfigError> {
        let issues = self.issues();
        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        let schedule = super::schedule::nominal_schedule(&self);
        let frames = self.sim_duration / schedule.major_frame_ns.max(1);
        if frames < MIN_MAJOR_FRAMES {
            return Err(ConfigError::Invalid(vec![ConfigIssue::new(
                "sim_duration",
                format!(
                    "duration too short: {} ns fits {} major frames of {} ns, need at least {}",
                    self.sim_duration, frames, schedule.major_frame_ns, MIN_MAJOR_FRAMES
                ),
            )]));
        }
        Ok(ValidatedConfig { config: self, schedule })
    }

    fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        if self.boards.is_empty() {
            out.push(ConfigIssue::new("boards", "schedule empty"));
        }
        if self.counter_freq == 0 {
            out.push(ConfigIssue::new("counter_freq", "counter_freq must be > 0"));
        }
        if self.speed_exponent > MAX_SPEED_EXPONENT {
            out.push(ConfigIssue::new(
                "speed_exponent",
                format!("speed_exponent must be <= {MAX_SPEED_EXPONENT}"),
            ));
        }
        let mut ids = BTreeSet::new();
        for (i, b) in self.boards.iter().enumerate() {
            let path = |f: &str| format!("boards.{i}.{f}");
            if !ids.insert(b.id) {
                out.push(ConfigIssue::new(path("id"), format!("duplicate board id {}", b.id)));
            }
            if b.time_slice == 0 {
                out.push(ConfigIssue::new(path("time_slice"), "time_slice must be > 0"));
            }
            if b.tse_offset == 0 {
                out.push(ConfigIssue::new(path("tse_offset"), "tse_offset must be > 0"));
            } else if b.tse_offset >= b.time_slice {
                out.push(ConfigIssue::new(path("tse_offset"), "tse_offset must be < time_slice"));
            }
            // One slice must span at least one counter tick, otherwise two
            // consecutive switch-ins could read the same counter value.
            let ticks = (b.time_slice as u128 * self.counter_freq as u128)
                / (1_000_000_000u128 << self.speed_exponent.min(MAX_SPEED_EXPONENT));
            if self.counter_freq > 0 && b.time_slice > 0 && ticks == 0 {
                out.push(ConfigIssue::new(
                    path("time_slice"),
                    "time_slice shorter than one counter tick",
                ));
            }
        }
        for role in [BoardRole::Sender, BoardRole::Receiver, BoardRole::Io] {
            let n = self.boards.iter().filter(|b| b.role == role).count();
            if n > 1 {
                out.push(ConfigIssue::new(
                    "boards",
                    format!("at most one board may have role {role:?}, found {n}"),
                ));
            }
        }
        let j = &self.jitter;
        if !(0.0..=1.0).contains(&j.tail_probability) || j.tail_probability.is_nan() {
            out.push(ConfigIssue::new(
                "jitter.tail_probability",
                "tail_probability must lie in [0, 1]",
            ));
        }
        let hc = &self.hypercall_costs;
        let heavy = |c: &HypercallCost| c.cache_flush_penalty + c.critical_section;
        for kind in [
            HypercallKind::IpcSend,
            HypercallKind::EventLog,
            HypercallKind::IrqConfig,
        ] {
            if heavy(hc.cost(kind)) > heavy(&hc.vmmu_config) {
                out.push(ConfigIssue::new(
                    format!("hypercall_costs.{}", kind.name()),
                    "vmmu_config must dominate cache_flush_penalty + critical_section",
                ));
            }
        }
        if self.tick_frequency > 1_000_000_000 {
            out.push(ConfigIssue::new(
                "tick_frequency",
                "tick_frequency must be at most 1e9 per second",
            ));
        }
        out
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::calibrated_default()
    }
}

/// `benign` benign boards followed by sender, receiver and I/O boards, all
/// with 100 ms slices and a 1 ms TSE offset.
pub fn standard_boards(benign: usize) -> Vec<VirtualBoardSpec> {
    const SLICE: u64 = 100_000_000;
    const TSE: u64 = 1_000_000;
    let mut boards: Vec<VirtualBoardSpec> = (0..benign)
        .map(|i| {
            VirtualBoardSpec::new(i as u16, BoardRole::Benign, SLICE, TSE)
                .authorize(&[HypercallKind::IpcSend, HypercallKind::EventLog])
        })
        .collect();
    let n = benign as u16;
    boards.push(VirtualBoardSpec::new(n, BoardRole::Sender, SLICE, TSE).authorize(&HypercallKind::ALL));
    boards.push(VirtualBoardSpec::new(n + 1, BoardRole::Receiver, SLICE, TSE).authorize(&[HypercallKind::IpcSend]));
    boards.push(
        VirtualBoardSpec::new(n + 2, BoardRole::Io, SLICE, TSE)
            .authorize(&[HypercallKind::IpcSend, HypercallKind::EventLog]),
    );
    boards
}

/// A configuration that passed validation, with its nominal schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: SimConfig,
    schedule: super::schedule::Schedule,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn schedule(&self) -> &super::schedule::Schedule {
        &self.schedule
    }

    pub fn major_frame_ns(&self) -> u64 {
        self.schedule.major_frame_ns
    }

    pub fn into_inner(self) -> SimConfig {
        self.config
    }
}

/// Free-standing form of [`SimConfig::validate`].
pub fn validate_config(config: SimConfig) -> Result<ValidatedConfig, ConfigError> {
    config.validate()
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(ConfigError::Override {
            key: s.to_string(),
            message: "expected key=value".into(),
        }),
    }
}

/// Applies dotted-path overrides to any TOML document. Shared by simulation
/// configs and plan files.
pub fn apply_overrides(mut root: toml::Value, overrides: &[(String, String)]) -> Result<toml::Value, ConfigError> {
    for (key, raw) in overrides {
        let err = |message: &str| ConfigError::Override {
            key: key.clone(),
            message: message.to_string(),
        };
        let mut slot = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().copied().enumerate() {
            slot = match slot {
                // Unset optional fields are absent from the document; the typed
                // structs deny unknown fields, so a misspelt leaf still fails.
                toml::Value::Table(t) => {
                    if i + 1 == parts.len() && !t.contains_key(part) {
                        t.insert(part.to_string(), toml::Value::Boolean(false));
                    }
                    t.get_mut(part).ok_or_else(|| err("unknown key"))?
                }
                toml::Value::Array(a) => {
                    let idx: usize = part.parse().map_err(|_| err("expected array index"))?;
                    a.get_mut(idx).ok_or_else(|| err("array index out of range"))?
                }
                _ => return Err(err("unknown key")),
            };
        }
        *slot = parse_toml_scalar(raw);
    }
    Ok(root)
}

fn parse_toml_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
