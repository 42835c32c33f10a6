//! Simulated consumer timing.

use std::thread;
use std::time::{Duration, Instant};

/// Returns at `deadline`, or immediately if it has passed. No spinning:
/// on a busy machine a spinning consumer steals time from the workers it is
/// waiting on.
pub fn sleep_until(deadline: Instant) {
    loop {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        thread::sleep(deadline - now);
    }
}

/// Stand-in for training compute: `work` runs first and counts against the
/// `busy` budget.
pub fn consume<T>(busy: Duration, work: impl FnOnce() -> T) -> T {
    let deadline = Instant::now() + busy;
    let out = work();
    sleep_until(deadline);
    out
}

/// Per-step intervals measured at the consumer.
#[derive(Debug, Default, Clone)]
pub struct StepClock {
    last: Option<Instant>,
    pub steps: Vec<f64>,
    pub blocked: Vec<f64>,
}

impl StepClock {
    pub fn start(&mut self) {
        self.last = Some(Instant::now());
    }

    /// Records a completed step that spent `blocked` waiting for its batch.
    pub fn tick(&mut self, blocked: Duration) {
        let now = Instant::now();
        let last = self.last.replace(now).unwrap_or(now);
        self.steps.push((now - last).as_secs_f64());
        self.blocked.push(blocked.as_secs_f64());
    }

    pub fn after(&self, warmup: usize) -> (&[f64], &[f64]) {
        let w = warmup.min(self.steps.len());
        (&self.steps[w..], &self.blocked[w..])
    }
}

pub fn millis(ms: f64) -> Duration {
    Duration::from_secs_f64(ms.max(0.0) / 1000.0)
}
