//! Algorithm II: repeated Last-Diminisher rounds driven by improved
//! entitlements `t_i^m`, with no rational rounding.
//!
//! Each round the unsatisfied player with the smallest deficit ratio
//! `(t_i^m - μ_i(S_i^m)) / μ_i(C_m)` cuts a slice of that relative size from
//! the remainder, the other unsatisfied players diminish it to the same
//! relative size under their own measure, and the slice goes to the cutter
//! if it is still tight for them, otherwise to the smallest tight index. The
//! improved entitlements are then rescaled so that the deficit ratios of the
//! unsatisfied players sum to one again.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};
use crate::measure::{Piece, Tolerances, Valuation};
use crate::protocol::{localize, Player, QueryLedger};

pub fn default_max_rounds(players: usize) -> usize {
    10 * players * players
}

/// State at the beginning of a round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundState {
    pub round: usize,
    /// `S_i^m`.
    pub allocated: Vec<Piece>,
    /// `C_m`.
    pub remainder: Piece,
    /// `t_i^m`, kept for unsatisfied players only.
    pub improved: Vec<Option<f64>>,
    /// `I_m`, ascending.
    pub unsatisfied: Vec<usize>,
    /// `μ_i(S_i^m)` as measured by player `i`.
    pub held: Vec<f64>,
    /// `μ_i(C_m)` for unsatisfied players.
    pub remainder_value: Vec<Option<f64>>,
}

/// Outcome of the cut-and-diminish part of a round.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrimOutcome {
    /// `T_1^m`, the cutter's slice.
    pub cut: Piece,
    /// `R_m`.
    pub slice: Piece,
    /// `j_m`.
    pub receiver: usize,
    pub trimmers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundRecord {
    pub state: RoundState,
    /// `i_m`.
    pub cutter: usize,
    /// The cutter's deficit ratio, the right-hand side of the trimming bound.
    pub ratio: f64,
    pub outcome: TrimOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trace {
    pub cake: Piece,
    pub entitlements: Vec<f64>,
    pub rounds: Vec<RoundRecord>,
    /// The state in which a single unsatisfied player remained.
    pub terminal: Option<RoundState>,
    pub ledger: QueryLedger,
}

impl RoundState {
    /// Round 0: nothing allocated, `t_i^0 = t_i`.
    pub fn initial(
        players: &[Player],
        entitlements: &[f64],
        cake: &Piece,
        ledger: &mut QueryLedger,
        tol: &Tolerances,
    ) -> Result<Self> {
        let n = players.len();
        let unsatisfied: Vec<usize> = (0..n).filter(|&i| entitlements[i] > tol.eq).collect();
        let mut remainder_value = vec![None; n];
        let mut improved = vec![None; n];
        for &i in &unsatisfied {
            remainder_value[i] = Some(players[i].eval(ledger, cake)?);
            improved[i] = Some(entitlements[i]);
        }
        Ok(RoundState {
            round: 0,
            allocated: vec![Piece::empty(); n],
            remainder: cake.clone(),
            improved,
            unsatisfied,
            held: vec![0.0; n],
            remainder_value,
        })
    }

    fn deficit(&self, i: usize) -> f64 {
        self.improved[i].expect("unsatisfied player") - self.held[i]
    }

    fn rest(&self, i: usize) -> f64 {
        self.remainder_value[i].expect("unsatisfied player")
    }
}

/// `i_m`: the smallest unsatisfied index minimizing the deficit ratio, ties
/// within `tol.eq`. Returns the index and its ratio.
pub fn select_cutter(state: &RoundState, tol: &Tolerances) -> Result<(usize, f64)> {
    if state.unsatisfied.len() < 2 {
        return Err(Error::Precondition(
            "a round needs at least two unsatisfied players".into(),
        ));
    }
    let mut best: Option<(usize, f64)> = None;
    for &i in &state.unsatisfied {
        let rest = state.rest(i);
        if rest <= tol.norm {
            return Err(Error::InfeasibleState(format!(
                "unsatisfied player {i} values the remainder at {rest}"
            )));
        }
        let ratio = state.deficit(i) / rest;
        match best {
            Some((_, r)) if ratio >= r - tol.eq => {}
            _ => best = Some((i, ratio)),
        }
    }
    Ok(best.expect("non-empty"))
}

/// The cutter takes a slice worth its deficit; every other unsatisfied
/// player, in increasing index order, diminishes it while its relative value
/// exceeds `ratio`. Picks the receiver `j_m`.
pub fn trim_round(
    state: &RoundState,
    cutter: usize,
    ratio: f64,
    players: &[Player],
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<TrimOutcome> {
    let breach = |e: Error| match e {
        Error::InsufficientMeasure {
            requested,
            available,
        } => Error::InvariantBreach(format!(
            "slice of {requested} requested from a remainder worth {available}"
        )),
        other => other,
    };
    let cut = players[cutter]
        .cut(ledger, &state.remainder, state.deficit(cutter), tol)
        .map_err(breach)?;
    let mut slice = cut.clone();
    let mut trimmers = Vec::new();
    for &i in state.unsatisfied.iter().filter(|&&i| i != cutter) {
        let rest = state.rest(i);
        if players[i].eval(ledger, &slice)? / rest > ratio + tol.eq {
            slice = players[i]
                .cut(ledger, &slice, ratio * rest, tol)
                .map_err(breach)?;
            trimmers.push(i);
        }
    }

    let receiver = match trimmers.last() {
        None => cutter,
        Some(&last) => {
            let tight = |i: usize, ledger: &mut QueryLedger| -> Result<bool> {
                let value = players[i].eval(ledger, &slice)?;
                Ok((value / state.rest(i) - ratio).abs() <= tol.eq)
            };
            if tight(cutter, ledger)? {
                cutter
            } else {
                let mut receiver = last;
                for &i in state
                    .unsatisfied
                    .iter()
                    .filter(|&&i| i != cutter && i < last)
                {
                    if tight(i, ledger)? {
                        receiver = i;
                        break;
                    }
                }
                receiver
            }
        }
    };
    Ok(TrimOutcome {
        cut,
        slice,
        receiver,
        trimmers,
    })
}

/// Hands `R_m` to `j_m` and rescales the improved entitlements of the
/// players still unsatisfied.
pub fn update_entitlements(
    state: &RoundState,
    outcome: &TrimOutcome,
    entitlements: &[f64],
    players: &[Player],
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<RoundState> {
    let j = outcome.receiver;
    let n = players.len();
    let mut allocated = state.allocated.clone();
    allocated[j] = allocated[j].union(&outcome.slice);
    let remainder = state.remainder.difference(&outcome.slice);
    let mut held = state.held.clone();
    held[j] = players[j].eval(ledger, &allocated[j])?;

    let unsatisfied: Vec<usize> = state
        .unsatisfied
        .iter()
        .copied()
        .filter(|&i| entitlements[i] > held[i] + tol.eq)
        .collect();
    let mut remainder_value = vec![None; n];
    let mut scaled_sum = 0.0;
    for &i in &unsatisfied {
        let rest = players[i].eval(ledger, &remainder)?;
        if rest <= tol.norm {
            return Err(Error::InfeasibleState(format!(
                "unsatisfied player {i} values the remainder at {rest}"
            )));
        }
        remainder_value[i] = Some(rest);
        scaled_sum += (state.improved[i].expect("unsatisfied player") - held[i]) / rest;
    }
    if !unsatisfied.is_empty() && scaled_sum <= tol.norm {
        return Err(Error::InfeasibleState(format!(
            "deficit ratios sum to {scaled_sum}"
        )));
    }
    let mut improved = vec![None; n];
    for &i in &unsatisfied {
        let previous = state.improved[i].expect("unsatisfied player");
        improved[i] = Some(held[i] + (previous - held[i]) / scaled_sum);
    }
    Ok(RoundState {
        round: state.round + 1,
        allocated,
        remainder,
        improved,
        unsatisfied,
        held,
        remainder_value,
    })
}

/// Runs Algorithm II on `instance` over `cake`.
pub fn algorithm_two(
    instance: &Instance,
    cake: &Piece,
    ledger: &mut QueryLedger,
    max_rounds: Option<usize>,
) -> Result<(Allocation, Trace)> {
    let tol = instance.tolerances();
    let players = localize(&instance.players(), cake, ledger, tol)?;
    let max_rounds = max_rounds.unwrap_or_else(|| default_max_rounds(instance.len()));
    let (pieces, trace) = divide(
        &players,
        instance.entitlements(),
        cake,
        ledger,
        tol,
        max_rounds,
    )?;
    Ok((Allocation::for_instance(instance, cake, pieces), trace))
}

/// Algorithm II on players whose measures are normalized on `cake`.
pub(crate) fn divide(
    players: &[Player],
    entitlements: &[f64],
    cake: &Piece,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
    max_rounds: usize,
) -> Result<(Vec<Piece>, Trace)> {
    let mut trace = Trace {
        cake: cake.clone(),
        entitlements: entitlements.to_vec(),
        rounds: Vec::new(),
        terminal: None,
        ledger: QueryLedger::default(),
    };
    let mut state = RoundState::initial(players, entitlements, cake, ledger, tol)?;
    loop {
        if state.unsatisfied.len() <= 1 {
            let mut pieces = state.allocated.clone();
            match state.unsatisfied.first() {
                Some(&last) => pieces[last] = pieces[last].union(&state.remainder),
                None if !state.remainder.is_empty() => {
                    return Err(Error::InvariantBreach(
                        "everybody is satisfied but cake is left over".into(),
                    ))
                }
                None => {}
            }
            trace.terminal = Some(state);
            trace.ledger = ledger.clone();
            return Ok((pieces, trace));
        }
        if state.round >= max_rounds {
            trace.terminal = Some(state);
            trace.ledger = ledger.clone();
            return Err(Error::NonTermination {
                max_rounds,
                trace: Box::new(trace),
            });
        }
        let (cutter, ratio) = select_cutter(&state, tol)?;
        let outcome = trim_round(&state, cutter, ratio, players, ledger, tol)?;
        let next = update_entitlements(&state, &outcome, entitlements, players, ledger, tol)?;
        trace.rounds.push(RoundRecord {
            state,
            cutter,
            ratio,
            outcome,
        });
        state = next;
    }
}

/// Re-checks a trace against the valuations it was produced with, using
/// direct evaluation only. Returns one message per violated property.
///
/// Covered per round: the remainder identity, the definition of `I_m`, the
/// deficit-ratio sum, the trimming bound with tightness of `j_m`, the choice
/// of `i_m`, monotone (and, when `j_m ≠ i_m`, strictly increasing) improved
/// entitlements, strict shrinking of the remainder and the remainder-ratio bound.
pub fn audit(valuations: &[Valuation], trace: &Trace, tol: &Tolerances) -> Vec<String> {
    let n = valuations.len();
    let t = &trace.entitlements;
    let mut problems = Vec::new();
    let mut states: Vec<&RoundState> = trace.rounds.iter().map(|r| &r.state).collect();
    if let Some(terminal) = &trace.terminal {
        states.push(terminal);
    }

    for state in &states {
        let m = state.round;
        let union = state
            .allocated
            .iter()
            .fold(Piece::empty(), |acc, p| acc.union(p));
        if state.remainder != trace.cake.difference(&union) {
            problems.push(format!(
                "round {m}: remainder is not cake minus allocations"
            ));
        }
        let expected: Vec<usize> = (0..n)
            .filter(|&i| t[i] > valuations[i].eval(&state.allocated[i]) + tol.eq)
            .collect();
        if expected != state.unsatisfied {
            problems.push(format!(
                "round {m}: unsatisfied set {:?}, recomputed {expected:?}",
                state.unsatisfied
            ));
        }
        let sum: f64 = state
            .unsatisfied
            .iter()
            .map(|&i| {
                let v = &valuations[i];
                (state.improved[i].unwrap_or(f64::NAN) - v.eval(&state.allocated[i]))
                    / v.eval(&state.remainder)
            })
            .sum();
        if !((sum - 1.0).abs() <= n as f64 * tol.eq) {
            problems.push(format!("round {m}: deficit ratios sum to {sum}"));
        }
    }

    for (idx, record) in trace.rounds.iter().enumerate() {
        let state = &record.state;
        let m = state.round;
        let next = states[idx + 1];
        let slice = &record.outcome.slice;
        let ratio_of = |i: usize| {
            let v = &valuations[i];
            (state.improved[i].unwrap_or(f64::NAN) - v.eval(&state.allocated[i]))
                / v.eval(&state.remainder)
        };
        let min_ratio = state
            .unsatisfied
            .iter()
            .map(|&i| ratio_of(i))
            .fold(f64::INFINITY, f64::min);
        let first_min = state
            .unsatisfied
            .iter()
            .copied()
            .find(|&i| ratio_of(i) <= min_ratio + tol.eq);
        if first_min != Some(record.cutter) {
            problems.push(format!(
                "round {m}: cutter {} but smallest minimizer is {first_min:?}",
                record.cutter
            ));
        }
        let ratio = record.ratio;
        for &i in &state.unsatisfied {
            let v = &valuations[i];
            let relative = v.eval(slice) / v.eval(&state.remainder);
            if relative > ratio + tol.eq {
                problems.push(format!(
                    "round {m}: player {i} values the slice at {relative} > {ratio}"
                ));
            }
            let after = v.eval(&next.remainder);
            if after > tol.norm {
                let growth = v.eval(&state.remainder) / after;
                let bound = 1.0 / (1.0 - ratio - tol.eq);
                if growth > bound + tol.eq {
                    problems.push(format!(
                        "round {m}: player {i} remainder shrank by {growth} > {bound}"
                    ));
                }
            }
        }
        let j = record.outcome.receiver;
        let vj = &valuations[j];
        let relative = vj.eval(slice) / vj.eval(&state.remainder);
        if (relative - ratio).abs() > tol.eq {
            problems.push(format!(
                "round {m}: receiver {j} is not tight ({relative} vs {ratio})"
            ));
        }
        if !(vj.eval(slice) > 0.0) {
            problems.push(format!("round {m}: receiver {j} got a null slice"));
        }
        if !next.remainder.is_subset_of(&state.remainder) || next.remainder == state.remainder {
            problems.push(format!("round {m}: remainder did not shrink"));
        }
        for &i in &next.unsatisfied {
            let (before, after) = match (state.improved[i], next.improved[i]) {
                (Some(b), Some(a)) => (b, a),
                _ => {
                    problems.push(format!("round {m}: improved entitlement of {i} missing"));
                    continue;
                }
            };
            if after < before - tol.eq {
                problems.push(format!(
                    "round {m}: improved entitlement of {i} fell from {before} to {after}"
                ));
            }
            if j != record.cutter && !(after > before) {
                problems.push(format!(
                    "round {m}: improved entitlement of {i} not strictly increasing ({before} -> {after})"
                ));
            }
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heavy_left() -> Valuation {
        Valuation::new(vec![0.0, 0.5, 1.0], vec![2.0, 0.0]).unwrap()
    }

    fn start(vals: &[Valuation], t: &[f64]) -> (Vec<Player>, RoundState, QueryLedger) {
        let players = Player::roster(vals);
        let mut ledger = QueryLedger::new(vals.len());
        let state = RoundState::initial(
            &players,
            t,
            &Piece::full(),
            &mut ledger,
            &Tolerances::default(),
        )
        .unwrap();
        (players, state, ledger)
    }

    #[test]
    fn symmetric_tie_picks_the_smallest_index() {
        let (_, state, _) = start(&[Valuation::uniform(), heavy_left()], &[0.5, 0.5]);
        assert_eq!(
            select_cutter(&state, &Tolerances::default()).unwrap(),
            (0, 0.5)
        );
    }

    #[test]
    fn smallest_ratio_cuts() {
        let (_, state, _) = start(&[heavy_left(), Valuation::uniform()], &[0.8, 0.2]);
        assert_eq!(select_cutter(&state, &Tolerances::default()).unwrap().0, 1);
    }

    #[test]
    fn untrimmed_round_goes_to_the_cutter() {
        let tol = Tolerances::default();
        let t = [0.5, 0.5];
        let (players, state, mut ledger) = start(&[Valuation::uniform(), Valuation::uniform()], &t);
        let outcome = trim_round(&state, 0, 0.5, &players, &mut ledger, &tol).unwrap();
        assert_eq!(outcome.slice, Piece::interval(0.0, 0.5).unwrap());
        assert_eq!(outcome.receiver, 0);
        assert!(outcome.trimmers.is_empty());
        let next = update_entitlements(&state, &outcome, &t, &players, &mut ledger, &tol).unwrap();
        assert_eq!(next.unsatisfied, vec![1]);
    }

    #[test]
    fn trimmed_round_goes_to_the_diminisher() {
        let tol = Tolerances::default();
        let t = [0.5, 0.5];
        let (players, state, mut ledger) = start(&[Valuation::uniform(), heavy_left()], &t);
        let outcome = trim_round(&state, 0, 0.5, &players, &mut ledger, &tol).unwrap();
        assert_eq!(outcome.cut, Piece::interval(0.0, 0.5).unwrap());
        assert_eq!(outcome.slice, Piece::interval(0.0, 0.25).unwrap());
        assert_eq!(outcome.receiver, 1);
        let next = update_entitlements(&state, &outcome, &t, &players, &mut ledger, &tol).unwrap();
        // player 1 holds exactly half of its measure and is satisfied
        assert_eq!(next.unsatisfied, vec![0]);
        let rest = next.remainder_value[0].unwrap();
        assert!(((next.improved[0].unwrap() - next.held[0]) / rest - 1.0).abs() < 1e-12);
    }

    #[test]
    fn halves_for_identical_uniforms() {
        let inst = Instance::new(vec![Valuation::uniform(); 2], vec![0.5, 0.5]).unwrap();
        let mut ledger = QueryLedger::new(2);
        let (alloc, trace) = algorithm_two(&inst, &Piece::full(), &mut ledger, None).unwrap();
        assert_eq!(alloc.pieces()[0], Piece::interval(0.0, 0.5).unwrap());
        assert_eq!(alloc.pieces()[1], Piece::interval(0.5, 1.0).unwrap());
        assert!(audit(inst.valuations(), &trace, inst.tolerances()).is_empty());
    }

    #[test]
    fn single_player_terminates_immediately() {
        let inst = Instance::new(vec![heavy_left()], vec![1.0]).unwrap();
        let mut ledger = QueryLedger::new(1);
        let (alloc, trace) = algorithm_two(&inst, &Piece::full(), &mut ledger, None).unwrap();
        assert_eq!(alloc.pieces(), &[Piece::full()]);
        assert!(trace.rounds.is_empty());
    }

    #[test]
    fn round_limit_carries_the_trace() {
        let inst = Instance::new(vec![Valuation::uniform(), heavy_left()], vec![0.3, 0.7]).unwrap();
        let mut ledger = QueryLedger::new(2);
        let err = algorithm_two(&inst, &Piece::full(), &mut ledger, Some(1)).unwrap_err();
        match err {
            Error::NonTermination { max_rounds, trace } => {
                assert_eq!(max_rounds, 1);
                assert_eq!(trace.rounds.len(), 1);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
