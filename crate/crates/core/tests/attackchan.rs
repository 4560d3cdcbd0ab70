use covsim_core::attackchan::{
    calibrate_threshold, decode, encode, parse_bits, receive, AttackPlan, BitMessage, BurstSpec, ChannelError,
    DecodeParams, SenderAction,
};
use covsim_core::simkernel::{simulate_trace, HypercallKind, SimConfig, TimingTrace, TraceMetadata, TraceSample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic(deltas: Vec<u64>) -> TimingTrace {
    TimingTrace {
        samples: deltas
            .into_iter()
            .enumerate()
            .map(|(i, d)| TraceSample {
                frame_index: i as u64 + 1,
                delta_ticks: d,
            })
            .collect(),
        metadata: TraceMetadata {
            config_digest: "synthetic".into(),
            attack: true,
            seed: 0,
            counter_freq: 1_000_000_000,
            start_offset: 0,
            speed_exponent: None,
            overrides: vec![],
        },
    }
}

fn open_channel() -> SimConfig {
    let mut c = SimConfig::calibrated_default();
    c.speed_exponent = 0;
    c.enforced_switch_duration = 1_000;
    c.seed = 11;
    c
}

fn random_bits(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..=1u8)).collect()
}

proptest! {
    #[test]
    fn encode_then_decode_round_trips_on_separated_levels(
        bits in prop::collection::vec(0u8..2, 1..64),
        fpb in 1u32..5,
        pre in 1u32..12,
        base in 1_000u64..1_000_000,
        shift in 50u64..5_000,
        seed in any::<u64>(),
    ) {
        let pre = pre * 2;
        let msg = BitMessage::new(bits.clone(), fpb, pre).unwrap();
        let plan = encode(&msg, BurstSpec::default()).unwrap();
        prop_assert_eq!(plan.len(), msg.frame_count());
        // Noise strictly below shift / 2 keeps the levels apart.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = shift / 2 - 1;
        let deltas = (0..plan.len() as u64)
            .map(|i| {
                let on = matches!(plan.action_at(i), SenderAction::Burst { .. });
                base + rng.random_range(0..=noise) + if on { shift } else { 0 }
            })
            .collect();
        let (_, result) = receive(&synthetic(deltas), &msg, Some(&bits)).unwrap();
        prop_assert_eq!(result.decoded_bits, bits);
        prop_assert_eq!(result.ber, Some(0.0));
        prop_assert!(!result.partial);
    }

    #[test]
    fn longer_bursts_never_shorten_a_period(c1 in 0u32..400, extra in 0u32..400, seed in any::<u64>(), n in 0u32..3) {
        let mut c = open_channel();
        c.speed_exponent = n;
        c.seed = seed;
        c.sim_duration = 40 * 440_000_000;
        let v = c.validate().unwrap();
        let plan = |count| AttackPlan::continuous(BurstSpec { kind: HypercallKind::VmmuConfig, count });
        let small = simulate_trace(&v, Some(&plan(c1))).unwrap();
        let large = simulate_trace(&v, Some(&plan(c1 + extra))).unwrap();
        prop_assert_eq!(small.len(), large.len());
        let mean = |t: &covsim_core::simkernel::TimingTrace| t.deltas_f64().iter().sum::<f64>() / t.len() as f64;
        prop_assert!(mean(&large) >= mean(&small));
        // Periods can only grow, though a later switch-in can shift the
        // counter read by a tick either way.
        let mut total_small = 0u64;
        let mut total_large = 0u64;
        for (s, l) in small.samples.iter().zip(&large.samples) {
            total_small += s.delta_ticks;
            total_large += l.delta_ticks;
            prop_assert!(total_large >= total_small);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jitter_free_open_channel_round_trips_exactly(
        bits in prop::collection::vec(0u8..2, 1..48),
        seed in any::<u64>(),
        fpb in 1u32..3,
    ) {
        let mut c = open_channel();
        c.jitter = covsim_core::simkernel::JitterModel::none();
        c.seed = seed;
        let msg = BitMessage::new(bits.clone(), fpb, 8).unwrap();
        let plan = encode(&msg, BurstSpec::default()).unwrap();
        let v = c.validate().unwrap();
        let trace = simulate_trace(&v, Some(&plan)).unwrap();
        let (_, r) = receive(&trace, &msg, Some(&bits)).unwrap();
        prop_assert_eq!(r.decoded_bits, bits);
    }
}

/// Exact two-sided binomial p-value (sum of outcomes no more likely than k).
fn binomial_two_sided(k: u64, n: u64) -> f64 {
    use statrs::distribution::{Binomial, Discrete};
    let b = Binomial::new(0.5, n).unwrap();
    let pk = b.pmf(k);
    (0..=n)
        .map(|i| b.pmf(i))
        .filter(|&p| p <= pk * (1.0 + 1e-9))
        .sum::<f64>()
        .min(1.0)
}

#[test]
fn masked_channel_errors_are_indistinguishable_from_coin_flips() {
    let mut c = open_channel();
    c.enforced_switch_duration = c.worst_case_switch_cost();
    let bits = random_bits(1000, 78);
    let msg = BitMessage::new(bits.clone(), 1, 16).unwrap();
    let plan = encode(&msg, BurstSpec::default()).unwrap();
    let trace = simulate_trace(&c.validate().unwrap(), Some(&plan)).unwrap();
    let mean = trace.deltas_f64().iter().sum::<f64>() / trace.len() as f64;
    let params = DecodeParams {
        threshold_ticks: mean,
        frames_per_bit: 1,
        start_sample: 16,
        bit_count: Some(1000),
    };
    let r = decode(&trace, &params, Some(&bits)).unwrap();
    let errors = (r.ber.unwrap() * 1000.0).round() as u64;
    assert!(binomial_two_sided(errors, 1000) >= 0.05, "{errors} errors in 1000");
}

#[test]
fn calibrated_open_channel_threshold_lies_between_cluster_means() {
    let msg = BitMessage::new(Vec::new(), 1, 32).unwrap();
    let plan = encode(&msg, BurstSpec::default()).unwrap();
    let v = open_channel().validate().unwrap();
    let trace = simulate_trace(&v, Some(&plan)).unwrap();
    let cal = calibrate_threshold(&trace, 32, 1, 0).unwrap();
    assert!(cal.mean_zero < cal.threshold_ticks && cal.threshold_ticks < cal.mean_one);
}

#[test]
fn open_channel_transmits_64_bits() {
    let bits = parse_bits("0xDEADBEEFCAFEF00D").unwrap();
    assert_eq!(bits.len(), 64);
    let msg = BitMessage::new(bits.clone(), 1, 16).unwrap();
    let plan = encode(&msg, BurstSpec::default()).unwrap();
    let trace = simulate_trace(&open_channel().validate().unwrap(), Some(&plan)).unwrap();
    let (_, r) = receive(&trace, &msg, Some(&bits)).unwrap();
    assert!(r.ber.unwrap() <= 0.05, "ber {:?}", r.ber);
}

#[test]
fn closed_channel_calibration_reports_closed() {
    let mut c = open_channel();
    c.speed_exponent = 1;
    let msg = BitMessage::new(Vec::new(), 1, 32).unwrap();
    let plan = encode(&msg, BurstSpec::default()).unwrap();
    let trace = simulate_trace(&c.validate().unwrap(), Some(&plan)).unwrap();
    assert!(matches!(
        calibrate_threshold(&trace, 32, 1, 0),
        Err(ChannelError::ChannelClosed { .. })
    ));
}

#[test]
fn closed_channel_decodes_at_chance() {
    let mut c = open_channel();
    c.speed_exponent = 1;
    let bits = random_bits(1000, 77);
    let msg = BitMessage::new(bits.clone(), 1, 16).unwrap();
    let plan = encode(&msg, BurstSpec::default()).unwrap();
    let trace = simulate_trace(&c.validate().unwrap(), Some(&plan)).unwrap();
    let mean = trace.deltas_f64().iter().sum::<f64>() / trace.len() as f64;
    let params = DecodeParams {
        threshold_ticks: mean,
        frames_per_bit: 1,
        start_sample: 16,
        bit_count: Some(1000),
    };
    let r = decode(&trace, &params, Some(&bits)).unwrap();
    assert!(!r.partial);
    assert!((r.ber.unwrap() - 0.5).abs() <= 0.05, "ber {:?}", r.ber);
}

#[test]
fn repeated_frames_survive_heavier_noise() {
    // Jitter twice the burst shift: single frames err, nine-frame votes mostly do not.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bits = random_bits(64, 4);
    let msg = BitMessage::new(bits.clone(), 9, 8).unwrap();
    let plan = encode(&msg, BurstSpec::default()).unwrap();
    let deltas = (0..plan.len() as u64)
        .map(|i| {
            let on = matches!(plan.action_at(i), SenderAction::Burst { .. });
            1_000_000 + rng.random_range(0..=2_000u64) + if on { 1_000 } else { 0 }
        })
        .collect();
    let trace = synthetic(deltas);
    let (_, r9) = receive(&trace, &msg, Some(&bits)).unwrap();
    let single = BitMessage::new(bits.clone(), 1, 8).unwrap();
    let params = DecodeParams {
        threshold_ticks: 1_001_500.0,
        frames_per_bit: 1,
        start_sample: 8 * 9,
        bit_count: Some(64),
    };
    let r1 = decode(&trace, &params, Some(&single.bits)).unwrap();
    assert!(r9.ber.unwrap() < r1.ber.unwrap());
}
