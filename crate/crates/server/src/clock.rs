use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

/// Source of the `at_ms` stamp put on incoming commands.
#[derive(Clone, Debug)]
pub enum Clock {
    /// Milliseconds since the server started.
    Wall(Instant),
    /// Set explicitly; simulations advance it per tick.
    Manual(Arc<AtomicU64>),
}

impl Clock {
    pub fn wall() -> Self {
        Clock::Wall(Instant::now())
    }

    pub fn manual() -> Self {
        Clock::Manual(Arc::new(AtomicU64::new(0)))
    }

    pub fn now_ms(&self) -> u64 {
        match self {
            Clock::Wall(start) => start.elapsed().as_millis() as u64,
            Clock::Manual(ms) => ms.load(Ordering::SeqCst),
        }
    }

    /// Ignored by a wall clock.
    pub fn set_ms(&self, value: u64) {
        if let Clock::Manual(ms) = self {
            ms.store(value, Ordering::SeqCst);
        }
    }
}
