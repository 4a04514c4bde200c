//! Soft wall-time budgets.
//!
//! Long searches poll a [`Budget`] and bail out with [`Error::Budget`] once the
//! deadline passes. `TDLL_BUDGET_MS` sets the default for [`Budget::from_env`].

use crate::error::{Error, Result};
use std::time::{Duration, Instant};

pub const BUDGET_ENV: &str = "TDLL_BUDGET_MS";

#[derive(Debug, Clone, Copy)]
pub struct Budget {
    deadline: Option<Instant>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget::unlimited()
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget { deadline: None }
    }

    pub fn millis(ms: u64) -> Self {
        Budget { deadline: Some(Instant::now() + Duration::from_millis(ms)) }
    }

    /// Reads `TDLL_BUDGET_MS`; unset or unparsable means unlimited.
    pub fn from_env() -> Self {
        match std::env::var(BUDGET_ENV).ok().and_then(|v| v.trim().parse::<u64>().ok()) {
            Some(ms) => Budget::millis(ms),
            None => Budget::unlimited(),
        }
    }

    pub fn exhausted(&self) -> bool {
        matches!(self.deadline, Some(d) if Instant::now() >= d)
    }

    pub fn check(&self, what: &str) -> Result<()> {
        if self.exhausted() {
            Err(Error::budget(format!("wall-time budget exhausted during {what}")))
        } else {
            Ok(())
        }
    }
}
