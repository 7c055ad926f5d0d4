//! File formats, the allocation verifier, instance generation and a common
//! solve entry point for the command-line tool.

pub mod expr;
pub mod format;
pub mod generate;
pub mod solve;
pub mod verify;

pub use expr::parse_entitlement;
pub use format::{parse_instance, InstanceFile, ReportFile};
pub use generate::{generate_instance, EntitlementMode};
pub use solve::{solve, Algorithm, Solution};
pub use verify::{verify, verify_allocation, Verdict};
