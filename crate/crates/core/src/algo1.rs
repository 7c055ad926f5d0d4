//! Algorithm I: one Last-Diminisher pass at the smallest entitlement, then
//! either a player leaves satisfied and the rest recurse, or the remainder is
//! split by rounding the outstanding shares up to rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{ascending_order, Allocation, Instance};
use crate::measure::{Piece, Tolerances};
use crate::proportional::{rational_fair_division, RationalEntitlement};
use crate::protocol::{localize, Player, QueryLedger};

/// How one level of the recursion ended.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Branch {
    /// One player left; it takes the whole cake.
    Single { player: usize },
    /// The cutter still values the slice at its entitlement and leaves with it.
    CutterSatisfied { player: usize },
    /// The last diminisher has the smallest entitlement and leaves with the slice.
    DiminisherSatisfied { player: usize },
    /// The last diminisher keeps the slice and everybody shares the rest
    /// according to rounded-up rational shares.
    Rational {
        diminisher: usize,
        /// `1 - Σ t'_i` before rounding.
        slack: f64,
        shares: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Level {
    /// Player indices, sorted by entitlement.
    pub players: Vec<usize>,
    /// Entitlements relative to this level's cake, same order.
    pub entitlements: Vec<f64>,
    /// The slice after every player had the chance to diminish it.
    pub slice: Piece,
    /// The cutter's value of the final slice.
    pub cutter_value: f64,
    pub trimmers: Vec<usize>,
    pub branch: Branch,
    /// Queries spent on this level, excluding recursion and the rational subroutine.
    pub queries: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Trace {
    pub levels: Vec<Level>,
}

/// Rationals `t''_i > t'_i` summing to exactly 1.
///
/// Uses the smallest power-of-ten denominator `q` with `n/q` below the slack
/// `1 - Σ t'_i`, rounds every share up to the next multiple of `1/q` and gives
/// the leftover units to the last share.
pub fn round_up_to_rationals(
    t_prime: &[f64],
    tol: &Tolerances,
) -> Result<Vec<RationalEntitlement>> {
    if t_prime.is_empty() {
        return Err(Error::MalformedEntitlements("nothing to round".into()));
    }
    if let Some(t) = t_prime.iter().find(|t| !t.is_finite() || **t <= 0.0) {
        return Err(Error::MalformedEntitlements(format!(
            "shares to round must be positive, got {t}"
        )));
    }
    let slack = 1.0 - t_prime.iter().sum::<f64>();
    if !(slack > tol.eq) {
        return Err(Error::NoSlack { slack });
    }
    let n = t_prime.len() as u64;
    let mut q: u64 = 1;
    while n as f64 / q as f64 >= slack {
        q = q.checked_mul(10).ok_or_else(|| {
            Error::ResourceLimit(format!("slack {slack} needs a denominator beyond u64"))
        })?;
    }
    loop {
        let units: Vec<u64> = t_prime
            .iter()
            .map(|&t| {
                let mut a = (t * q as f64).floor() as u64 + 1;
                // float rounding of t*q must not cost strictness
                while !exceeds(a, q, t) {
                    a += 1;
                }
                a
            })
            .collect();
        let used: u64 = units.iter().sum();
        if used <= q {
            let mut units = units;
            *units.last_mut().expect("non-empty") += q - used;
            return units
                .into_iter()
                .map(|a| RationalEntitlement::new(a, q))
                .collect();
        }
        q = q.checked_mul(10).ok_or_else(|| {
            Error::ResourceLimit(format!("slack {slack} needs a denominator beyond u64"))
        })?;
    }
}

/// Exact test `a/q > t`.
fn exceeds(a: u64, q: u64, t: f64) -> bool {
    let t = BigRational::from_float(t).expect("finite");
    BigRational::new(BigInt::from(a), BigInt::from(q)) > t
}

/// Runs Algorithm I on `instance` over `cake`.
pub fn algorithm_one(
    instance: &Instance,
    cake: &Piece,
    ledger: &mut QueryLedger,
) -> Result<Allocation> {
    Ok(algorithm_one_traced(instance, cake, ledger)?.0)
}

pub fn algorithm_one_traced(
    instance: &Instance,
    cake: &Piece,
    ledger: &mut QueryLedger,
) -> Result<(Allocation, Trace)> {
    let tol = instance.tolerances();
    let players = localize(&instance.players(), cake, ledger, tol)?;
    let mut trace = Trace::default();
    let pieces = divide(
        &players,
        instance.entitlements(),
        cake,
        ledger,
        tol,
        &mut trace,
    )?;
    Ok((Allocation::for_instance(instance, cake, pieces), trace))
}

/// Algorithm I on players whose measures are normalized on `cake`.
/// Entitlements need not be sorted; pieces come back in input order.
pub(crate) fn divide(
    players: &[Player],
    entitlements: &[f64],
    cake: &Piece,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
    trace: &mut Trace,
) -> Result<Vec<Piece>> {
    let n = players.len();
    if n == 1 {
        trace.levels.push(Level {
            players: vec![players[0].id()],
            entitlements: entitlements.to_vec(),
            slice: cake.clone(),
            cutter_value: 1.0,
            trimmers: Vec::new(),
            branch: Branch::Single {
                player: players[0].id(),
            },
            queries: 0,
        });
        return Ok(vec![cake.clone()]);
    }
    let order = ascending_order(entitlements);
    let ps: Vec<&Player> = order.iter().map(|&i| &players[i]).collect();
    let ts: Vec<f64> = order.iter().map(|&i| entitlements[i]).collect();
    let spent_before = ledger.total();

    let smallest = ts[0];
    let mut slice = ps[0].cut(ledger, cake, smallest, tol)?;
    let mut trimmers = Vec::new();
    for (i, p) in ps.iter().enumerate().skip(1) {
        if p.eval(ledger, &slice)? > smallest + tol.eq {
            slice = p.cut(ledger, &slice, smallest, tol)?;
            trimmers.push(i);
        }
    }
    let cutter_value = ps[0].eval(ledger, &slice)?;
    let rest = cake.difference(&slice);

    let leaving = if (cutter_value - smallest).abs() <= tol.eq {
        Ok(0)
    } else {
        let k = *trimmers.last().ok_or_else(|| {
            Error::InvariantBreach("the cutter lost value but nobody diminished".into())
        })?;
        if (ts[k] - smallest).abs() <= tol.eq {
            Ok(k)
        } else {
            Err(k)
        }
    };

    let mut level = Level {
        players: ps.iter().map(|p| p.id()).collect(),
        entitlements: ts.clone(),
        slice: slice.clone(),
        cutter_value,
        trimmers: trimmers.iter().map(|&i| ps[i].id()).collect(),
        branch: Branch::Single { player: 0 },
        queries: 0,
    };

    let mut sorted_pieces = vec![Piece::empty(); n];
    match leaving {
        Ok(e) => {
            let others: Vec<usize> = (0..n).filter(|&i| i != e).collect();
            let sub_players = others
                .iter()
                .map(|&i| ps[i].restricted(ledger, &rest, tol))
                .collect::<Result<Vec<_>>>()?;
            let mass: f64 = others.iter().map(|&i| ts[i]).sum();
            let sub_entitlements: Vec<f64> = others.iter().map(|&i| ts[i] / mass).collect();
            level.branch = if e == 0 {
                Branch::CutterSatisfied { player: ps[0].id() }
            } else {
                Branch::DiminisherSatisfied { player: ps[e].id() }
            };
            level.queries = ledger.total() - spent_before;
            trace.levels.push(level);

            let sub = divide(&sub_players, &sub_entitlements, &rest, ledger, tol, trace)?;
            sorted_pieces[e] = slice;
            for (&i, piece) in others.iter().zip(sub) {
                sorted_pieces[i] = piece;
            }
        }
        Err(k) => {
            let mut shares = Vec::with_capacity(n);
            for (i, p) in ps.iter().enumerate() {
                let mass = p.eval(ledger, &rest)?;
                let owed = if i == k { ts[k] - smallest } else { ts[i] };
                shares.push(owed / mass);
            }
            let slack = 1.0 - shares.iter().sum::<f64>();
            if !(slack > tol.eq) {
                return Err(Error::InvariantBreach(format!(
                    "outstanding shares leave no slack ({slack}) after a strict diminish"
                )));
            }
            let rounded = round_up_to_rationals(&shares, tol)?;
            level.branch = Branch::Rational {
                diminisher: ps[k].id(),
                slack,
                shares: rounded.iter().map(ToString::to_string).collect(),
            };
            level.queries = ledger.total() - spent_before;
            trace.levels.push(level);

            let owned: Vec<Player> = ps.iter().map(|p| (*p).clone()).collect();
            sorted_pieces = rational_fair_division(&owned, &rounded, &rest, ledger, tol)?;
            sorted_pieces[k] = sorted_pieces[k].union(&slice);
        }
    }

    let mut pieces = vec![Piece::empty(); n];
    for (s, piece) in order.into_iter().zip(sorted_pieces) {
        pieces[s] = piece;
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Valuation;

    fn rounded(t: &[f64]) -> Vec<String> {
        round_up_to_rationals(t, &Tolerances::default())
            .unwrap()
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(rounded(&[0.3, 0.45]), ["2/5", "3/5"]);
        assert_eq!(rounded(&[0.1]), ["1/1"]);
        assert_eq!(rounded(&[0.49, 0.49]), ["1/2", "1/2"]);
    }

    #[test]
    fn rounding_needs_slack() {
        let tol = Tolerances::default();
        assert!(matches!(
            round_up_to_rationals(&[0.5, 0.5], &tol),
            Err(Error::NoSlack { .. })
        ));
        assert!(round_up_to_rationals(&[0.5, -0.1], &tol).is_err());
    }

    #[test]
    fn irrational_pair_eliminates_the_cutter() {
        let t0 = 2f64.sqrt() - 1.0;
        let inst = Instance::new(vec![Valuation::uniform(); 2], vec![t0, 1.0 - t0]).unwrap();
        let mut ledger = QueryLedger::new(2);
        let (alloc, trace) = algorithm_one_traced(&inst, &Piece::full(), &mut ledger).unwrap();
        assert_eq!(
            trace.levels[0].branch,
            Branch::CutterSatisfied { player: 0 }
        );
        let (lo, hi) = alloc.pieces()[0].intervals()[0];
        assert_eq!(lo, 0.0);
        assert!((hi - t0).abs() < 1e-15);
        assert!(alloc.min_slack() >= -1e-12);
    }

    #[test]
    fn single_player_takes_the_cake() {
        let inst = Instance::new(vec![Valuation::uniform()], vec![1.0]).unwrap();
        let mut ledger = QueryLedger::new(1);
        let alloc = algorithm_one(&inst, &Piece::full(), &mut ledger).unwrap();
        assert_eq!(alloc.pieces(), &[Piece::full()]);
    }

    #[test]
    fn three_players_with_rational_rounding() {
        let v2 = Valuation::new(vec![0.0, 1.0 / 3.0, 1.0], vec![3.0, 0.0]).unwrap();
        let inst = Instance::new(
            vec![Valuation::uniform(), v2, Valuation::uniform()],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let mut ledger = QueryLedger::new(3);
        let (alloc, trace) = algorithm_one_traced(&inst, &Piece::full(), &mut ledger).unwrap();
        let first = &trace.levels[0];
        assert_eq!(first.trimmers, vec![1]);
        assert!((first.slice.intervals()[0].1 - 1.0 / 15.0).abs() < 1e-15);
        assert!(matches!(
            first.branch,
            Branch::Rational { diminisher: 1, .. }
        ));
        assert!(alloc.pieces()[1].contains_point(0.0));
        for r in alloc.report() {
            assert!(r.slack > 0.0, "{r:?}");
        }
    }
}
