use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Monotonic time source measured from an arbitrary origin.
pub trait Clock {
    fn now(&self) -> Duration;

    /// Blocks until `now() >= deadline`. Returns immediately if the deadline
    /// has already passed.
    fn sleep_until(&self, deadline: Duration) -> Result<()>;
}

/// Wall-clock time backed by [`Instant`].
#[derive(Debug, Clone, Copy)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, deadline: Duration) -> Result<()> {
        let target = self
            .origin
            .checked_add(deadline)
            .ok_or_else(|| Error::Clock(format!("deadline {deadline:?} overflows")))?;
        loop {
            let now = Instant::now();
            if now >= target {
                return Ok(());
            }
            std::thread::sleep(target - now);
        }
    }
}

/// Simulated time: sleeping jumps straight to the deadline.
///
/// Clones share the same timeline, so a test sink holding a clone can call
/// [`VirtualClock::advance`] to model slow emission.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Arc<Mutex<Duration>>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock().unwrap() += by;
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, deadline: Duration) -> Result<()> {
        let mut now = self.now.lock().unwrap();
        if *now < deadline {
            *now = deadline;
        }
        Ok(())
    }
}
