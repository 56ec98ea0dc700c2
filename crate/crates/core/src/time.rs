//! Integer-nanosecond time arithmetic.
//!
//! All durations and timestamps in this crate are signed 64-bit nanosecond
//! counts. Workload files express values in milliseconds; conversion happens
//! once at the boundary so that every internal comparison is exact.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// A signed span of time in nanoseconds.
///
/// Signed because slack (`deadline - now`) is a duration that goes negative
/// once the deadline has passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Duration(pub i64);

impl Duration {
    pub const ZERO: Duration = Duration(0);

    pub const fn from_ns(ns: i64) -> Self {
        Duration(ns)
    }

    pub const fn from_micros(us: i64) -> Self {
        Duration(us * 1_000)
    }

    pub const fn from_millis(ms: i64) -> Self {
        Duration(ms * 1_000_000)
    }

    pub const fn from_secs(s: i64) -> Self {
        Duration(s * 1_000_000_000)
    }

    /// Rounds a fractional millisecond value to the nearest nanosecond.
    pub fn from_ms_f64(ms: f64) -> Self {
        Duration((ms * 1e6).round() as i64)
    }

    pub const fn as_ns(self) -> i64 {
        self.0
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn max(self, other: Duration) -> Duration {
        Duration(self.0.max(other.0))
    }

    pub fn min(self, other: Duration) -> Duration {
        Duration(self.0.min(other.0))
    }

    pub fn clamp_min_zero(self) -> Duration {
        Duration(self.0.max(0))
    }

    /// Scales by a float factor, rounding to the nearest nanosecond.
    pub fn scale(self, factor: f64) -> Duration {
        Duration((self.0 as f64 * factor).round() as i64)
    }
}

/// An absolute simulation timestamp in nanoseconds since time zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TimePoint(pub i64);

impl TimePoint {
    pub const ZERO: TimePoint = TimePoint(0);

    pub const fn from_ns(ns: i64) -> Self {
        TimePoint(ns)
    }

    pub fn from_ms_f64(ms: f64) -> Self {
        TimePoint((ms * 1e6).round() as i64)
    }

    pub const fn as_ns(self) -> i64 {
        self.0
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn max(self, other: TimePoint) -> TimePoint {
        TimePoint(self.0.max(other.0))
    }

    /// The next multiple of `quantum` at or after this instant.
    pub fn align_up(self, quantum: Duration) -> TimePoint {
        let q = quantum.0.max(1);
        TimePoint(self.0.div_euclid(q) * q + if self.0.rem_euclid(q) == 0 { 0 } else { q })
    }
}

impl Add<Duration> for TimePoint {
    type Output = TimePoint;
    fn add(self, rhs: Duration) -> TimePoint {
        TimePoint(self.0 + rhs.0)
    }
}

impl Sub<Duration> for TimePoint {
    type Output = TimePoint;
    fn sub(self, rhs: Duration) -> TimePoint {
        TimePoint(self.0 - rhs.0)
    }
}

impl Sub<TimePoint> for TimePoint {
    type Output = Duration;
    fn sub(self, rhs: TimePoint) -> Duration {
        Duration(self.0 - rhs.0)
    }
}

impl AddAssign<Duration> for TimePoint {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl Sub for Duration {
    type Output = Duration;
    fn sub(self, rhs: Duration) -> Duration {
        Duration(self.0 - rhs.0)
    }
}

impl AddAssign for Duration {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Duration {
    fn sub_assign(&mut self, rhs: Duration) {
        self.0 -= rhs.0;
    }
}

impl Neg for Duration {
    type Output = Duration;
    fn neg(self) -> Duration {
        Duration(-self.0)
    }
}

impl Mul<i64> for Duration {
    type Output = Duration;
    fn mul(self, rhs: i64) -> Duration {
        Duration(self.0 * rhs)
    }
}

impl Div<i64> for Duration {
    type Output = Duration;
    fn div(self, rhs: i64) -> Duration {
        Duration(self.0 / rhs)
    }
}

impl Sum for Duration {
    fn sum<I: Iterator<Item = Duration>>(iter: I) -> Duration {
        Duration(iter.map(|d| d.0).sum())
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}
