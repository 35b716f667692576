//! Session clocks.
//!
//! The engine never reads time on its own; every entry point takes `now`
//! from whichever clock drives the session. Scenario replay uses
//! [`VirtualClock`], which only moves when the harness advances it, so
//! traces are reproducible. Live sessions use [`WallClock`].

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Source of session-relative time.
pub trait Clock {
    fn now(&self) -> Duration;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Virtual,
    Wall,
}

/// Simulation time, advanced explicitly.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Duration,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Moves the clock forward to `t`. Earlier targets are ignored.
    pub fn advance_to(&mut self, t: Duration) {
        if t > self.now {
            self.now = t;
        }
    }

    pub fn advance_by(&mut self, d: Duration) {
        self.now += d;
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        self.now
    }
}

/// Monotonic wall time measured from session creation.
#[derive(Debug, Clone)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn start() -> Self {
        Self {
            origin: Instant::now(),
        }
    }

    pub fn origin(&self) -> Instant {
        self.origin
    }

    /// Converts a session-relative time back to an `Instant`.
    pub fn instant_at(&self, t: Duration) -> Instant {
        self.origin + t
    }
}

impl Clock for WallClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

pub fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Converts user-supplied seconds, rejecting negative and non-finite values.
pub fn duration_from_secs(s: f64) -> Option<Duration> {
    if s.is_finite() && s >= 0.0 {
        Duration::try_from_secs_f64(s).ok()
    } else {
        None
    }
}

/// `Duration` as floating-point seconds.
pub mod serde_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        super::duration_from_secs(v).ok_or_else(|| {
            serde::de::Error::custom(format!("expected non-negative seconds, got {v}"))
        })
    }
}
