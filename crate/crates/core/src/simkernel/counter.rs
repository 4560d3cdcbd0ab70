/// Virtual time-base counter (TBU/TBL style).
///
/// Ticks advance with executed instructions, so at speed exponent `N` the
/// counter accrues `counter_freq / 2^N` ticks per wall-clock second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeBase {
    counter_freq: u64,
    speed_exponent: u32,
}

impl TimeBase {
    pub fn new(counter_freq: u64, speed_exponent: u32) -> Self {
        TimeBase {
            counter_freq,
            speed_exponent,
        }
    }

    /// `floor(t_ns * counter_freq / (1e9 * 2^N))`.
    pub fn read(&self, virtual_ns: u64) -> u64 {
        let num = virtual_ns as u128 * self.counter_freq as u128;
        let den = 1_000_000_000u128 << self.speed_exponent;
        (num / den) as u64
    }

    /// Counter ticks per virtual nanosecond.
    pub fn ticks_per_ns(&self) -> f64 {
        self.counter_freq as f64 / (1e9 * (1u64 << self.speed_exponent) as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_millisecond_at_1_5_ghz() {
        assert_eq!(TimeBase::new(1_500_000_000, 0).read(1_000_000), 1_500_000);
    }

    #[test]
    fn repeated_reads_are_equal() {
        let tb = TimeBase::new(1_500_000_000, 0);
        assert_eq!(tb.read(123_456_789), tb.read(123_456_789));
    }

    #[test]
    fn half_speed_accrues_half_the_ticks() {
        let fast = TimeBase::new(1_500_000_000, 0);
        let slow = TimeBase::new(1_500_000_000, 1);
        for t in [2_000_000u64, 900_000_000_000, 440_000_000] {
            assert_eq!(slow.read(t) * 2, fast.read(t));
        }
    }

    #[test]
    fn monotone_over_a_sweep() {
        let tb = TimeBase::new(999_999_937, 2);
        let mut last = 0;
        for t in (0..5_000_000u64).step_by(7919) {
            let v = tb.read(t);
            assert!(v >= last);
            last = v;
        }
    }
}
