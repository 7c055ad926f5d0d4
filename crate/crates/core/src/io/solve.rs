//! One entry point for every finite-player solver.

use serde::Serialize;

use crate::algo1;
use crate::algo2;
use crate::error::Result;
use crate::instance::{Allocation, Instance};
use crate::measure::Piece;
use crate::proportional;
use crate::protocol::QueryLedger;
use crate::strong::{self, Inner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    Algo1,
    Algo2 { max_rounds: Option<usize> },
    Cloning,
    Strong { inner: Inner },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Algo1 => "algo1",
            Algorithm::Algo2 { .. } => "algo2",
            Algorithm::Cloning => "cloning",
            Algorithm::Strong { .. } => "strong",
        }
    }

    /// Whether the result must be strictly fair.
    pub fn is_strict(&self) -> bool {
        matches!(self, Algorithm::Strong { .. })
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub allocation: Allocation,
    pub ledger: QueryLedger,
    /// Recursion levels, trimming rounds or Last-Diminisher rounds.
    pub rounds: u64,
    pub trace: serde_json::Value,
}

/// Runs `algorithm` on `instance` over the whole cake with a fresh ledger.
pub fn solve(instance: &Instance, algorithm: Algorithm) -> Result<Solution> {
    let cake = Piece::full();
    let mut ledger = QueryLedger::new(instance.len());
    let (allocation, rounds, trace) = match algorithm {
        Algorithm::Algo1 => {
            let (allocation, trace) = algo1::algorithm_one_traced(instance, &cake, &mut ledger)?;
            (allocation, trace.levels.len() as u64, to_json(&trace))
        }
        Algorithm::Algo2 { max_rounds } => {
            let (allocation, trace) =
                algo2::algorithm_two(instance, &cake, &mut ledger, max_rounds)?;
            (allocation, trace.rounds.len() as u64, to_json(&trace))
        }
        Algorithm::Cloning => {
            let (allocation, rounds) =
                proportional::solve_cloning_counted(instance, &cake, &mut ledger)?;
            (allocation, rounds, serde_json::Value::Null)
        }
        Algorithm::Strong { inner } => {
            let (allocation, plan) =
                strong::strong_fair_division_planned(instance, &cake, inner, &mut ledger)?;
            (allocation, 0, to_json(&plan))
        }
    };
    Ok(Solution {
        allocation,
        ledger,
        rounds,
        trace,
    })
}

fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("traces serialize")
}
