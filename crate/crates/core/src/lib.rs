//! Fair division of the unit cake `[0, 1)` among players with unequal,
//! possibly irrational, entitlements.
//!
//! Players are piecewise-constant probability measures reached only through
//! counted `eval` and `cut` queries. The solvers are:
//!
//! - [`proportional::solve_cloning`]: rational entitlements via player cloning
//! - [`algo1::algorithm_one`]: recursive cut-and-trim with a rational fallback
//! - [`algo2::algorithm_two`]: Last-Diminisher rounds on improved entitlements
//! - [`strong::strong_fair_division`]: strictly fair shares from any of the above
//! - [`infinite::truncated_infinite_division`]: countably many players, to a given depth
//!
//! [`io`] holds the file formats, the independent verifier and the instance
//! generator used by the `entitle` binary.

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algo1;
pub mod algo2;
pub mod error;
pub mod infinite;
pub mod instance;
pub mod io;
pub mod measure;
pub mod proportional;
pub mod protocol;
pub mod strong;

pub use error::{Error, Result};
pub use instance::{Allocation, Instance, PlayerReport};
pub use measure::{Piece, Tolerances, Valuation};
pub use protocol::{Player, QueryLedger};
