use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{BoardRole, HypercallKind, ValidatedConfig};
use super::counter::TimeBase;
use super::error::SimError;
use super::jitter::JitterSampler;
use super::trace::{TimingTrace, TraceMetadata, TraceSample};
use crate::attackchan::{AttackPlan, SenderAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub frame_index: u64,
    pub outgoing_board: u16,
    pub incoming_board: u16,
    pub actual_cost: u64,
    pub perceived_cost: u64,
    pub counter_at_switch_in: u64,
    /// Virtual time at which the incoming board is switched in.
    pub switch_in_ns: u64,
}

/// A hypercall the issuing board is not authorized for. Logged only; it
/// never changes timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub frame_index: u64,
    pub board: u16,
    pub kind: HypercallKind,
    pub count: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLog {
    /// Only populated by [`run_simulation`].
    pub switches: Vec<SwitchEvent>,
    pub audit: Vec<AuditEvent>,
    pub tse_interrupts: u64,
    pub tsb_interrupts: u64,
    pub timer_ticks: u64,
    pub hypercalls_issued: u64,
    pub major_frames: u64,
    pub end_ns: u64,
}

/// Runs the scheduler over `sim_duration` virtual ns and returns the
/// receiver's trace with the full event log.
///
/// Per switch, `actual = max(2^N * (base + critical_section + jitter),
/// cache_flush_penalty)` and the next switch-in happens `max(actual,
/// enforced)` after the slice end. The flush penalty is a memory stall: it
/// overlaps the (slowed) instruction stream of the switch and is not scaled.
pub fn run_simulation(
    config: &ValidatedConfig,
    attack: Option<&AttackPlan>,
) -> Result<(TimingTrace, EventLog), SimError> {
    simulate(config, attack, true)
}

/// As [`run_simulation`] without recording per-switch events.
pub fn simulate_trace(config: &ValidatedConfig, attack: Option<&AttackPlan>) -> Result<TimingTrace, SimError> {
    simulate(config, attack, false).map(|(t, _)| t)
}

fn simulate(
    config: &ValidatedConfig,
    attack: Option<&AttackPlan>,
    record_switches: bool,
) -> Result<(TimingTrace, EventLog), SimError> {
    let cfg = config.config();
    let boards = &cfg.boards;
    let n = boards.len();
    let recv = cfg.position_of(BoardRole::Receiver).ok_or(SimError::NoReceiver)?;
    let send = cfg.position_of(BoardRole::Sender);
    if attack.is_some() && send.is_none() {
        return Err(SimError::NoSender);
    }
    // Plan action i must land in trace sample i. Sample k spans receiver
    // switch-ins k and k+1; when the sender runs before the receiver inside
    // the major frame, the activation in between is the (k+1)-th.
    let lead = match send {
        Some(s) if s < recv => 1,
        _ => 0,
    };

    let scale = cfg.speed_scale();
    let timebase = TimeBase::new(cfg.counter_freq, cfg.speed_exponent);
    let jitter = JitterSampler::new(&cfg.jitter);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tick_period = 1_000_000_000u64.checked_div(cfg.tick_frequency).filter(|&p| p > 0);

    let expected = (cfg.sim_duration / config.major_frame_ns().max(1)) as usize + 1;
    let mut samples = Vec::with_capacity(expected);
    let mut log = EventLog::default();
    if record_switches {
        log.switches.reserve(expected * n);
    }

    let mut t_in = 0u64;
    let mut frame = 0u64;
    let mut pos = 0usize;
    let mut sender_activation = 0u64;
    let mut last_recv: Option<u64> = None;
    let mut start_offset = 0u64;

    while t_in <= cfg.sim_duration {
        let board = &boards[pos];
        if pos == recv {
            let now = timebase.read(t_in);
            log.tsb_interrupts += 1;
            match last_recv {
                Some(prev) => samples.push(TraceSample {
                    frame_index: frame,
                    delta_ticks: now - prev,
                }),
                None => start_offset = now,
            }
            last_recv = Some(now);
        }
        let slice_end = t_in + board.time_slice;
        if let Some(p) = tick_period {
            log.timer_ticks += slice_end.div_ceil(p) - t_in.div_ceil(p);
        }

        let mut pending_flush = 0u64;
        let mut pending_crit = 0u64;
        if Some(pos) == send {
            log.tse_interrupts += 1;
            let action = match attack {
                Some(plan) if sender_activation >= lead => plan.action_at(sender_activation - lead),
                _ => SenderAction::Idle,
            };
            if let SenderAction::Burst { kind, count } = action {
                if count > 0 {
                    if board.authorized_hypercalls.contains(&kind) {
                        let cost = cfg.hypercall_costs.cost(kind);
                        let call_ns = scale * cost.base_cost;
                        let burst_ns = call_ns.saturating_mul(count as u64);
                        pending_flush = cost.cache_flush_penalty;
                        if burst_ns > board.tse_offset {
                            // Preempted mid-burst: one call is in flight at slice end.
                            pending_crit = cost.critical_section;
                            log.hypercalls_issued += board.tse_offset.div_ceil(call_ns.max(1));
                        } else {
                            log.hypercalls_issued += count as u64;
                        }
                    } else {
                        log.audit.push(AuditEvent {
                            frame_index: frame,
                            board: board.id,
                            kind,
                            count,
                        });
                    }
                }
            }
            sender_activation += 1;
        }

        let next = (pos + 1) % n;
        let draw = jitter.draw(&mut rng);
        let compute = scale * (cfg.base_switch_cost + pending_crit + draw);
        let actual = compute.max(pending_flush);
        let perceived = actual.max(cfg.enforced_for(pos, next));
        let t_next = slice_end + perceived;
        if record_switches {
            log.switches.push(SwitchEvent {
                frame_index: if next == 0 { frame + 1 } else { frame },
                outgoing_board: board.id,
                incoming_board: boards[next].id,
                actual_cost: actual,
                perceived_cost: perceived,
                counter_at_switch_in: timebase.read(t_next),
                switch_in_ns: t_next,
            });
        }
        pos = next;
        if pos == 0 {
            frame += 1;
        }
        t_in = t_next;
    }
    log.major_frames = frame;
    log.end_ns = t_in;

    let trace = TimingTrace {
        samples,
        metadata: TraceMetadata {
            config_digest: cfg.digest(),
            attack: attack.is_some(),
            seed: cfg.seed,
            counter_freq: cfg.counter_freq,
            start_offset,
            speed_exponent: Some(cfg.speed_exponent),
            overrides: Vec::new(),
        },
    };
    Ok((trace, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attackchan::BurstSpec;
    use crate::simkernel::config::{JitterModel, SimConfig};

    fn cfg(n: u32, padding: u64) -> SimConfig {
        let mut c = SimConfig::calibrated_default();
        c.speed_exponent = n;
        c.enforced_switch_duration = padding;
        c.sim_duration = 60_000_000_000;
        c
    }

    fn burst_every_frame() -> AttackPlan {
        AttackPlan::continuous(BurstSpec::default())
    }

    #[test]
    fn clamp_holds_on_every_switch() {
        let c = cfg(0, 21_000).validate().unwrap();
        let (_, log) = run_simulation(&c, Some(&burst_every_frame())).unwrap();
        assert!(!log.switches.is_empty());
        for e in &log.switches {
            assert_eq!(e.perceived_cost, e.actual_cost.max(21_000));
        }
    }

    #[test]
    fn counter_strictly_increases_across_switches() {
        let c = cfg(2, 1_000).validate().unwrap();
        let (_, log) = run_simulation(&c, None).unwrap();
        for w in log.switches.windows(2) {
            assert!(w[1].counter_at_switch_in > w[0].counter_at_switch_in);
        }
    }

    #[test]
    fn sample_count_is_activations_minus_one() {
        let c = cfg(0, 1_000).validate().unwrap();
        let (trace, log) = run_simulation(&c, None).unwrap();
        assert_eq!(trace.len() as u64, log.tsb_interrupts - 1);
        assert!(trace.samples.iter().all(|s| s.delta_ticks > 0));
    }

    #[test]
    fn schedule_is_conserved_every_major_frame() {
        let c = cfg(1, 10_000).validate().unwrap();
        let (_, log) = run_simulation(&c, Some(&burst_every_frame())).unwrap();
        let slices: u64 = c.config().boards.iter().map(|b| b.time_slice).sum();
        let n = c.config().boards.len();
        let mut frame_start = 0u64;
        for chunk in log.switches.chunks_exact(n) {
            let perceived: u64 = chunk.iter().map(|e| e.perceived_cost).sum();
            let end = chunk[n - 1].switch_in_ns;
            assert_eq!(end - frame_start, slices + perceived);
            frame_start = end;
        }
    }

    #[test]
    fn jitter_free_clamped_run_has_constant_period() {
        let mut c = cfg(0, 30_000);
        c.jitter = JitterModel::none();
        c.counter_freq = 1_000_000_000;
        let (trace, _) = run_simulation(&c.validate().unwrap(), None).unwrap();
        let first = trace.samples[0].delta_ticks;
        assert!(trace.samples.iter().all(|s| s.delta_ticks == first));
        assert_eq!(first, 400_000_000 + 4 * 30_000);
    }

    #[test]
    fn unauthorized_burst_is_audited_without_timing_effect() {
        let mut c = cfg(0, 1_000);
        c.boards[1].authorized_hypercalls.clear();
        let c = c.validate().unwrap();
        let (with, log) = run_simulation(&c, Some(&burst_every_frame())).unwrap();
        let (without, _) = run_simulation(&c, None).unwrap();
        assert_eq!(with.samples, without.samples);
        // The first sender activation precedes the receiver's first read and stays idle.
        assert_eq!(log.audit.len() as u64, log.tse_interrupts - 1);
        assert_eq!(log.hypercalls_issued, 0);
    }

    #[test]
    fn burst_shifts_the_sender_adjacent_switch_at_full_speed() {
        let c = cfg(0, 1_000).validate().unwrap();
        let (_, log) = run_simulation(&c, Some(&burst_every_frame())).unwrap();
        let sender_id = c.config().boards[1].id;
        for e in log.switches.iter().filter(|e| e.outgoing_board == sender_id).skip(1) {
            assert_eq!(e.actual_cost, 35_000);
        }
    }

    #[test]
    fn burst_is_hidden_at_half_speed() {
        let c = cfg(1, 1_000).validate().unwrap();
        let (with, _) = run_simulation(&c, Some(&burst_every_frame())).unwrap();
        let (without, _) = run_simulation(&c, None).unwrap();
        assert_eq!(with.samples, without.samples);
    }

    #[test]
    fn attack_without_sender_is_rejected() {
        let mut c = cfg(0, 1_000);
        c.boards.retain(|b| b.role != BoardRole::Sender);
        let c = c.validate().unwrap();
        assert!(matches!(
            run_simulation(&c, Some(&burst_every_frame())),
            Err(SimError::NoSender)
        ));
    }

    #[test]
    fn timer_ticks_follow_tick_frequency() {
        let mut c = cfg(0, 1_000);
        c.tick_frequency = 1000;
        let (_, log) = run_simulation(&c.validate().unwrap(), None).unwrap();
        // About one tick per simulated millisecond.
        let ms = log.end_ns / 1_000_000;
        assert!(log.timer_ticks.abs_diff(ms) <= 4 * log.major_frames + 1);
    }
}
