//! Time sources for budgets and timing reports.

/// Monotonic seconds since an arbitrary origin.
pub trait Clock {
    fn now_s(&self) -> f64;
}

/// A clock that never advances. Budgets then reduce to iteration caps and
/// timing fields report zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now_s(&self) -> f64 {
        (**self).now_s()
    }
}
