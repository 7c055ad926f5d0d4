//! Interval algebra on the cake `[0, 1)` and piecewise-constant valuations.

mod piece;
mod valuation;

use serde::{Deserialize, Serialize};

pub use piece::{Piece, SLIVER_WIDTH};
pub use valuation::{RawValuation, Valuation};

use crate::error::{Error, Result};

/// Floating-point slack used throughout the protocols.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Equality comparisons between measured values.
    pub eq: f64,
    /// Allowed shortfall when a division is certified fair.
    pub fair: f64,
    /// Unit-mass check on valuations and strictness threshold.
    pub norm: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eq: 1e-10,
            fair: 1e-9,
            norm: 1e-12,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.eq, self.fair, self.norm]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0);
        if !positive {
            return Err(Error::InvalidTolerances(
                "all tolerances must be finite and strictly positive".into(),
            ));
        }
        if !(self.norm <= self.eq && self.eq <= self.fair) {
            return Err(Error::InvalidTolerances(format!(
                "expected norm <= eq <= fair, got {} / {} / {}",
                self.norm, self.eq, self.fair
            )));
        }
        Ok(())
    }
}
