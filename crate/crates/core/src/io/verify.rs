//! Independent allocation checker. It evaluates pieces directly against the
//! valuations and never looks at solver output other than the pieces.

use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::measure::{Piece, Tolerances, Valuation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Fair,
    StronglyFair,
    Violation { problems: Vec<String> },
}

impl Verdict {
    pub fn is_fair(&self) -> bool {
        !matches!(self, Verdict::Violation { .. })
    }
}

/// Fair iff the pieces partition `cake` and every `v_i(S_i) - t_i·v_i(cake)`
/// is at least `-tol.fair`; strongly fair iff every such slack also exceeds
/// `tol.norm`. With `strict`, an allocation that is only fair is a violation.
pub fn verify_allocation(
    valuations: &[Valuation],
    entitlements: &[f64],
    pieces: &[Piece],
    cake: &Piece,
    strict: bool,
    tol: &Tolerances,
) -> Verdict {
    let mut problems = Vec::new();
    if pieces.len() != valuations.len() || entitlements.len() != valuations.len() {
        problems.push(format!(
            "{} valuations, {} entitlements, {} pieces",
            valuations.len(),
            entitlements.len(),
            pieces.len()
        ));
        return Verdict::Violation { problems };
    }

    let mut covered = Piece::empty();
    for (i, piece) in pieces.iter().enumerate() {
        if !piece.is_subset_of(cake) {
            problems.push(format!("piece {i} leaves the cake"));
        }
        for (j, other) in pieces.iter().enumerate().skip(i + 1) {
            let overlap = piece.intersection(other);
            if !overlap.is_empty() {
                problems.push(format!("pieces {i} and {j} overlap on {overlap}"));
            }
        }
        covered = covered.union(piece);
    }
    if covered != *cake {
        let missing = cake.difference(&covered);
        problems.push(format!("pieces do not cover the cake, missing {missing}"));
    }

    let mut strong = true;
    for (i, ((v, &t), piece)) in valuations.iter().zip(entitlements).zip(pieces).enumerate() {
        let slack = v.eval(piece) - t * v.eval(cake);
        if slack < -tol.fair {
            problems.push(format!("player {i} is short by {}", -slack));
        }
        if !(slack > tol.norm) {
            strong = false;
            if strict && slack >= -tol.fair {
                problems.push(format!("player {i} has no strict surplus (slack {slack})"));
            }
        }
    }
    match (problems.is_empty(), strong) {
        (false, _) => Verdict::Violation { problems },
        (true, true) => Verdict::StronglyFair,
        (true, false) => Verdict::Fair,
    }
}

/// [`verify_allocation`] over the whole cake with the instance's tolerances.
pub fn verify(instance: &Instance, pieces: &[Piece], strict: bool) -> Verdict {
    verify_allocation(
        instance.valuations(),
        instance.entitlements(),
        pieces,
        &Piece::full(),
        strict,
        instance.tolerances(),
    )
}
