//! Time sources shared by the hub, the simulator and the benchmark.
//!
//! Every component that stamps or compares instants takes an
//! `Arc<dyn Clock>`, so a benchmark run can compress wall time by a fixed
//! factor while change timestamps and client receipt timestamps stay on one
//! timeline.

use std::fmt;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;

pub trait Clock: Send + Sync + fmt::Debug {
    /// Current instant on this clock's (possibly virtual) timeline.
    fn now(&self) -> DateTime<Utc>;

    /// Virtual seconds that elapse per real second.
    fn scale(&self) -> f64 {
        1.0
    }
}

/// Monotonic clock anchored to the system wall clock at construction and
/// advancing `scale` times faster than real time.
#[derive(Debug, Clone)]
pub struct ScaledClock {
    wall_anchor: DateTime<Utc>,
    anchor: Instant,
    scale: f64,
}

impl ScaledClock {
    pub fn realtime() -> Self {
        Self::new(1.0)
    }

    /// Panics if `scale` is not a positive finite number.
    pub fn new(scale: f64) -> Self {
        assert!(
            scale.is_finite() && scale > 0.0,
            "time scale must be positive and finite, got {scale}"
        );
        Self {
            wall_anchor: Utc::now(),
            anchor: Instant::now(),
            scale,
        }
    }

    pub fn to_real(&self, virtual_span: Duration) -> Duration {
        virtual_span.div_f64(self.scale)
    }

    pub fn to_virtual(&self, real_span: Duration) -> Duration {
        real_span.mul_f64(self.scale)
    }

    /// Virtual time elapsed since the clock was created.
    pub fn elapsed(&self) -> Duration {
        self.to_virtual(self.anchor.elapsed())
    }

    /// Real instant at which the virtual offset `at` (from the anchor) is reached.
    pub fn real_deadline(&self, at: Duration) -> Instant {
        self.anchor + self.to_real(at)
    }
}

impl Default for ScaledClock {
    fn default() -> Self {
        Self::realtime()
    }
}

impl Clock for ScaledClock {
    fn now(&self) -> DateTime<Utc> {
        let elapsed = self.elapsed();
        self.wall_anchor + chrono::Duration::from_std(elapsed).unwrap_or(chrono::Duration::MAX)
    }

    fn scale(&self) -> f64 {
        self.scale
    }
}

/// Hand-driven clock for deterministic tests.
#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<DateTime<Utc>>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            now: Mutex::new(start),
        }
    }

    pub fn advance(&self, by: Duration) {
        let mut now = self.now.lock();
        *now += chrono::Duration::from_std(by).expect("advance span out of range");
    }

    pub fn set(&self, to: DateTime<Utc>) {
        *self.now.lock() = to;
    }
}

impl Default for ManualClock {
    fn default() -> Self {
        Self::new(DateTime::<Utc>::UNIX_EPOCH)
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock()
    }
}

/// Signed difference `later - earlier` as a std duration, `None` if negative.
pub fn span_between(earlier: DateTime<Utc>, later: DateTime<Utc>) -> Option<Duration> {
    (later - earlier).to_std().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_clock_runs_faster() {
        let clock = ScaledClock::new(50.0);
        let start = clock.now();
        std::thread::sleep(Duration::from_millis(20));
        let elapsed = span_between(start, clock.now()).unwrap();
        assert!(elapsed >= Duration::from_millis(900), "{elapsed:?}");
    }

    #[test]
    fn scaled_clock_conversions() {
        let clock = ScaledClock::new(10.0);
        assert_eq!(clock.to_real(Duration::from_secs(60)), Duration::from_secs(6));
        assert_eq!(clock.to_virtual(Duration::from_millis(5)), Duration::from_millis(50));
    }

    #[test]
    fn manual_clock_advances() {
        let clock = ManualClock::default();
        let t0 = clock.now();
        clock.advance(Duration::from_millis(1500));
        assert_eq!(span_between(t0, clock.now()), Some(Duration::from_millis(1500)));
        assert_eq!(span_between(clock.now(), t0), None);
    }

    #[test]
    #[should_panic]
    fn zero_scale_rejected() {
        let _ = ScaledClock::new(0.0);
    }
}
