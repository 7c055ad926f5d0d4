//! Last Diminisher for equal shares, and fair division with rational
//! entitlements by cloning each player once per unit of a common denominator.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};
use crate::measure::{Piece, Tolerances};
use crate::protocol::{localize, Player, QueryLedger};

/// Largest common denominator the cloning reduction accepts.
pub const MAX_CLONES: u64 = 1_000_000;

/// An exact entitlement `num / den` in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RationalEntitlement(Ratio<BigUint>);

impl RationalEntitlement {
    pub fn new(num: impl Into<BigUint>, den: impl Into<BigUint>) -> Result<Self> {
        let (num, den) = (num.into(), den.into());
        if den.is_zero() {
            return Err(Error::MalformedEntitlements("zero denominator".into()));
        }
        let ratio = Ratio::new(num, den);
        if ratio.is_zero() || ratio > Ratio::one() {
            return Err(Error::MalformedEntitlements(format!(
                "rational entitlement {ratio} is outside (0, 1]"
            )));
        }
        Ok(RationalEntitlement(ratio))
    }

    pub fn numer(&self) -> &BigUint {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigUint {
        self.0.denom()
    }

    pub fn ratio(&self) -> &Ratio<BigUint> {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        let num = self.numer().to_f64().unwrap_or(f64::INFINITY);
        let den = self.denom().to_f64().unwrap_or(f64::INFINITY);
        num / den
    }

    pub(crate) fn zero_ratio() -> Ratio<BigUint> {
        Ratio::zero()
    }

    pub(crate) fn one_ratio() -> Ratio<BigUint> {
        Ratio::one()
    }
}

impl fmt::Display for RationalEntitlement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

impl FromStr for RationalEntitlement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |part: &str| {
            part.trim().parse::<BigUint>().map_err(|_| {
                Error::MalformedEntitlements(format!("not a rational entitlement: {s:?}"))
            })
        };
        match s.split_once('/') {
            Some((num, den)) => RationalEntitlement::new(parse(num)?, parse(den)?),
            None => RationalEntitlement::new(parse(s)?, BigUint::one()),
        }
    }
}

/// Classical Last Diminisher: every player gets at least `1/n` of their
/// value of `cake`.
pub fn last_diminisher(
    players: &[Player],
    cake: &Piece,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<Vec<Piece>> {
    let copies = vec![1; players.len()];
    Ok(diminish(players, &copies, cake, ledger, tol)?.0)
}

/// Last Diminisher where player `i` takes part with `copies[i]` identical
/// clones, placed consecutively in player order.
///
/// A clone's queries are answered once per block: after one clone has cut
/// or trimmed, its siblings value the slice at exactly their threshold and
/// never trim. Returns the merged pieces and the number of rounds played.
pub(crate) fn diminish(
    players: &[Player],
    copies: &[u64],
    cake: &Piece,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<(Vec<Piece>, u64)> {
    if players.is_empty() {
        return Ok((Vec::new(), 0));
    }
    if cake.is_empty() {
        return Err(Error::InfeasibleInstance(
            "cannot divide an empty cake".into(),
        ));
    }
    let mut pieces = vec![Piece::empty(); players.len()];
    let mut left = copies.to_vec();
    let mut outstanding: u64 = left.iter().sum();
    let mut remaining = cake.clone();
    let mut rounds = 0;

    while outstanding > 0 {
        let active: Vec<usize> = (0..players.len()).filter(|&i| left[i] > 0).collect();
        if let [only] = active[..] {
            // All clones of one player: each round would hand the cutter its
            // own share, so the whole remainder ends up with that player.
            pieces[only] = pieces[only].union(&remaining);
            break;
        }
        rounds += 1;
        let share = outstanding as f64;
        let cutter = active[0];
        let threshold = players[cutter].eval(ledger, &remaining)? / share;
        let mut slice = players[cutter].cut(ledger, &remaining, threshold, tol)?;
        let mut holder = cutter;
        for &i in &active[1..] {
            let threshold = players[i].eval(ledger, &remaining)? / share;
            if players[i].eval(ledger, &slice)? > threshold {
                slice = players[i].cut(ledger, &slice, threshold, tol)?;
                holder = i;
            }
        }
        remaining = remaining.difference(&slice);
        pieces[holder] = pieces[holder].union(&slice);
        left[holder] -= 1;
        outstanding -= 1;
    }
    Ok((pieces, rounds))
}

/// Clone counts `p_i` over the least common denominator `q` of `entitlements`.
pub fn clone_counts(entitlements: &[RationalEntitlement]) -> Result<(u64, Vec<u64>)> {
    if entitlements.is_empty() {
        return Err(Error::MalformedEntitlements("no entitlements".into()));
    }
    let total = entitlements
        .iter()
        .fold(Ratio::<BigUint>::zero(), |acc, r| acc + r.ratio());
    if !total.is_one() {
        return Err(Error::MalformedEntitlements(format!(
            "rational entitlements sum to {total}, expected exactly 1"
        )));
    }
    let q = entitlements
        .iter()
        .fold(BigUint::one(), |acc, r| acc.lcm(r.denom()));
    let q = q.to_u64().filter(|&q| q <= MAX_CLONES).ok_or_else(|| {
        Error::ResourceLimit(format!(
            "common denominator {q} exceeds {MAX_CLONES} clones; use algorithm II instead"
        ))
    })?;
    let counts = entitlements
        .iter()
        .map(|r| {
            let scale = BigUint::from(q) / r.denom();
            (r.numer() * scale).to_u64().expect("bounded by q")
        })
        .collect();
    Ok((q, counts))
}

/// Fair division for exactly rational entitlements: player `i` receives at
/// least `p_i/q` of their value of `cake`.
pub fn rational_fair_division(
    players: &[Player],
    entitlements: &[RationalEntitlement],
    cake: &Piece,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<Vec<Piece>> {
    if players.len() != entitlements.len() {
        return Err(Error::MalformedEntitlements(format!(
            "{} players but {} entitlements",
            players.len(),
            entitlements.len()
        )));
    }
    let (_, copies) = clone_counts(entitlements)?;
    Ok(diminish(players, &copies, cake, ledger, tol)?.0)
}

/// Runs the cloning reduction on an instance whose entitlements are all exact.
pub fn solve_cloning(
    instance: &Instance,
    cake: &Piece,
    ledger: &mut QueryLedger,
) -> Result<Allocation> {
    Ok(solve_cloning_counted(instance, cake, ledger)?.0)
}

/// As [`solve_cloning`], also returning the number of Last-Diminisher rounds.
pub fn solve_cloning_counted(
    instance: &Instance,
    cake: &Piece,
    ledger: &mut QueryLedger,
) -> Result<(Allocation, u64)> {
    let exact = instance.all_exact().ok_or_else(|| {
        Error::MalformedEntitlements("cloning needs exact p/q entitlements for every player".into())
    })?;
    let tol = instance.tolerances();
    let players = localize(&instance.players(), cake, ledger, tol)?;
    let (_, copies) = clone_counts(&exact)?;
    let (pieces, rounds) = diminish(&players, &copies, cake, ledger, tol)?;
    Ok((Allocation::for_instance(instance, cake, pieces), rounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Valuation;

    fn step(bps: &[f64], ds: &[f64]) -> Valuation {
        Valuation::new(bps.to_vec(), ds.to_vec()).unwrap()
    }

    fn rat(s: &str) -> RationalEntitlement {
        s.parse().unwrap()
    }

    #[test]
    fn single_player_gets_everything() {
        let tol = Tolerances::default();
        let players = Player::roster(&[Valuation::uniform()]);
        let mut ledger = QueryLedger::new(1);
        let pieces = last_diminisher(&players, &Piece::full(), &mut ledger, &tol).unwrap();
        assert_eq!(pieces, vec![Piece::full()]);
    }

    #[test]
    fn two_identical_uniforms_split_in_half() {
        let tol = Tolerances::default();
        let players = Player::roster(&[Valuation::uniform(), Valuation::uniform()]);
        let mut ledger = QueryLedger::new(2);
        let pieces = last_diminisher(&players, &Piece::full(), &mut ledger, &tol).unwrap();
        assert_eq!(pieces[0], Piece::interval(0.0, 0.5).unwrap());
        assert_eq!(pieces[1], Piece::interval(0.5, 1.0).unwrap());
    }

    #[test]
    fn three_players_get_a_third() {
        let tol = Tolerances::default();
        let vals = [
            Valuation::uniform(),
            step(&[0.0, 0.5, 1.0], &[2.0, 0.0]),
            step(&[0.0, 0.5, 1.0], &[0.0, 2.0]),
        ];
        let players = Player::roster(&vals);
        let mut ledger = QueryLedger::new(3);
        let pieces = last_diminisher(&players, &Piece::full(), &mut ledger, &tol).unwrap();
        let union = pieces.iter().fold(Piece::empty(), |acc, p| acc.union(p));
        assert_eq!(union, Piece::full());
        for (v, p) in vals.iter().zip(&pieces) {
            assert!(v.eval(p) >= 1.0 / 3.0 - tol.fair, "{p}");
        }
    }

    #[test]
    fn empty_cake_is_infeasible() {
        let tol = Tolerances::default();
        let players = Player::roster(&[Valuation::uniform()]);
        let mut ledger = QueryLedger::new(1);
        let err = last_diminisher(&players, &Piece::empty(), &mut ledger, &tol).unwrap_err();
        assert!(matches!(err, Error::InfeasibleInstance(_)));
    }

    #[test]
    fn third_and_two_thirds_by_cloning() {
        let tol = Tolerances::default();
        let players = Player::roster(&[Valuation::uniform(), Valuation::uniform()]);
        let mut ledger = QueryLedger::new(2);
        let pieces = rational_fair_division(
            &players,
            &[rat("1/3"), rat("2/3")],
            &Piece::full(),
            &mut ledger,
            &tol,
        )
        .unwrap();
        // round 1 (three clones): P1 cuts [0, 1/3) and nobody trims
        let (lo, hi) = pieces[0].intervals()[0];
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(pieces[1].intervals()[0].1, 1.0);
        assert_eq!(pieces[0].intervals()[0].1, pieces[1].intervals()[0].0);
    }

    #[test]
    fn whole_entitlement() {
        let tol = Tolerances::default();
        let players = Player::roster(&[Valuation::uniform()]);
        let mut ledger = QueryLedger::new(1);
        let pieces =
            rational_fair_division(&players, &[rat("1/1")], &Piece::full(), &mut ledger, &tol)
                .unwrap();
        assert_eq!(pieces, vec![Piece::full()]);
    }

    #[test]
    fn entitlements_must_sum_to_one_exactly() {
        let tol = Tolerances::default();
        let players = Player::roster(&[Valuation::uniform(), Valuation::uniform()]);
        let mut ledger = QueryLedger::new(2);
        let err = rational_fair_division(
            &players,
            &[rat("1/3"), rat("1/2")],
            &Piece::full(),
            &mut ledger,
            &tol,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MalformedEntitlements(_)));
    }

    #[test]
    fn clone_counts_use_the_lcm() {
        let (q, counts) = clone_counts(&[rat("1/4"), rat("1/6"), rat("7/12")]).unwrap();
        assert_eq!(q, 12);
        assert_eq!(counts, vec![3, 2, 7]);
    }

    #[test]
    fn huge_denominators_hit_the_clone_cap() {
        let err = clone_counts(&[rat("1/1000003"), rat("1000002/1000003")]).unwrap_err();
        assert!(matches!(err, Error::ResourceLimit(_)));
    }

    #[test]
    fn parse_rationals() {
        assert_eq!(rat("2/4"), rat("1/2"));
        assert_eq!(rat("1").to_string(), "1/1");
        assert!("0/3".parse::<RationalEntitlement>().is_err());
        assert!("4/3".parse::<RationalEntitlement>().is_err());
        assert!("1/0".parse::<RationalEntitlement>().is_err());
        assert!("x/2".parse::<RationalEntitlement>().is_err());
    }
}
