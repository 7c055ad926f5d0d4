//! Strongly fair division from any fair-division routine.
//!
//! If two players value some prefix `C' = [0, x)` differently, the cake is
//! split into `C'` and `C''`, and the entitlements are reassigned on each part
//! so that every player's combined share is worth strictly more than `t_i`.
//! Running a fair solver on both parts and merging then gives `μ_i(S_i) > t_i`.

use serde::Serialize;

use crate::algo1;
use crate::algo2;
use crate::error::{Error, Result};
use crate::instance::{Allocation, Instance};
use crate::measure::{Piece, Tolerances, Valuation};
use crate::proportional;
use crate::protocol::QueryLedger;

/// Fair-division routine used on both halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Inner {
    AlgorithmOne,
    AlgorithmTwo {
        max_rounds: Option<usize>,
    },
    /// Cloning on rational upper roundings of `s'` and `s''`.
    Cloning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitPlan {
    pub c_prime: Piece,
    pub c_dprime: Piece,
    /// Player valuing `C'` less.
    pub j: usize,
    /// Player valuing `C'` more.
    pub k: usize,
    pub s_prime: Vec<f64>,
    pub s_dprime: Vec<f64>,
    pub t_prime: Vec<f64>,
    pub t_dprime: Vec<f64>,
    pub epsilon: f64,
    pub delta: f64,
    /// `μ_i(C')` and `μ_i(C'')` as measured when the plan was built.
    pub mass_prime: Vec<f64>,
    pub mass_dprime: Vec<f64>,
}

impl SplitPlan {
    /// `t'_i·μ_i(C') + t''_i·μ_i(C'') - t_i`: the surplus a fair split on both
    /// parts guarantees to player `i`.
    pub fn margin(&self, i: usize, t: f64) -> f64 {
        self.t_prime[i] * self.mass_prime[i] + self.t_dprime[i] * self.mass_dprime[i] - t
    }
}

/// A pair `(j, k)` and prefix `C' = [0, x)` with `μ_j(C') < μ_k(C') - tol.eq`,
/// at the merged breakpoint with the widest CDF gap. `None` means the
/// valuations are identical.
pub fn find_separating_piece(
    valuations: &[Valuation],
    tol: &Tolerances,
) -> Option<(usize, usize, Piece)> {
    let mut scratch = QueryLedger::new(valuations.len());
    separate(valuations, &mut scratch, tol).expect("scratch ledger covers every player")
}

pub(crate) fn separate(
    valuations: &[Valuation],
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<Option<(usize, usize, Piece)>> {
    let mut grid: Vec<f64> = valuations
        .iter()
        .flat_map(|v| v.breakpoints().iter().copied())
        .filter(|&x| x > 0.0 && x < 1.0)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut best: Option<(f64, usize, usize, f64)> = None;
    for &x in &grid {
        let prefix = Piece::interval(0.0, x)?;
        let mut lo = (f64::INFINITY, 0);
        let mut hi = (f64::NEG_INFINITY, 0);
        for (i, v) in valuations.iter().enumerate() {
            let value = ledger.counted_eval(i, v, &prefix)?;
            if value < lo.0 {
                lo = (value, i);
            }
            if value > hi.0 {
                hi = (value, i);
            }
        }
        let gap = hi.0 - lo.0;
        if gap > tol.eq && best.is_none_or(|b| gap > b.0) {
            best = Some((gap, lo.1, hi.1, x));
        }
    }
    Ok(match best {
        Some((_, j, k, x)) => Some((j, k, Piece::interval(0.0, x)?)),
        None => None,
    })
}

/// `(ε, δ)` with `0 < ε < t_j`, `0 < δ < t_k`, `ε > δ·ρ_k` and `δ > ε/ρ_j`,
/// where `ρ_k = μ_k(C'')/μ_k(C')` and `ρ_j = μ_j(C'')/μ_j(C')`.
pub(crate) fn choose_epsilon_delta(
    t_j: f64,
    t_k: f64,
    (prime_j, dprime_j): (f64, f64),
    (prime_k, dprime_k): (f64, f64),
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let rho_k = dprime_k / prime_k;
    let (epsilon, delta) = if prime_j <= tol.norm {
        let mut delta = t_k / 2.0;
        while delta * rho_k >= t_j / 4.0 {
            delta /= 2.0;
        }
        (t_j / 2.0, delta)
    } else {
        let rho_j = dprime_j / prime_j;
        if !(rho_k < rho_j) {
            return Err(Error::SeparationTooWeak(format!(
                "ratio interval ({rho_k}, {rho_j}) is empty"
            )));
        }
        let ratio = if rho_k > 0.0 {
            (rho_k * rho_j).sqrt()
        } else {
            rho_j / 2.0
        };
        let (mut epsilon, mut delta) = (ratio * t_k, t_k);
        while !(epsilon < t_j / 2.0 && delta < t_k / 2.0) {
            epsilon /= 2.0;
            delta /= 2.0;
        }
        (epsilon, delta)
    };
    let ok = epsilon > 0.0
        && epsilon < t_j
        && delta > 0.0
        && delta < t_k
        && epsilon > delta * rho_k
        && delta > epsilon * prime_j / dprime_j;
    if !ok {
        return Err(Error::SeparationTooWeak(format!(
            "no admissible (ε, δ) found, got ({epsilon}, {delta})"
        )));
    }
    Ok((epsilon, delta))
}

/// Builds the entitlements `t'`, `t''` for the two halves of the cake.
///
/// `valuations` are probability measures on the cake being divided and
/// `c_prime` is a sub-piece of it whose complement is `c_dprime`.
pub fn derive_split_entitlements(
    t: &[f64],
    j: usize,
    k: usize,
    c_prime: &Piece,
    c_dprime: &Piece,
    valuations: &[Valuation],
    tol: &Tolerances,
) -> Result<SplitPlan> {
    let mass_prime: Vec<f64> = valuations.iter().map(|v| v.eval(c_prime)).collect();
    let mass_dprime: Vec<f64> = valuations.iter().map(|v| v.eval(c_dprime)).collect();
    build_plan(t, j, k, c_prime, c_dprime, mass_prime, mass_dprime, tol)
}

#[allow(clippy::too_many_arguments)]
fn build_plan(
    t: &[f64],
    j: usize,
    k: usize,
    c_prime: &Piece,
    c_dprime: &Piece,
    mass_prime: Vec<f64>,
    mass_dprime: Vec<f64>,
    tol: &Tolerances,
) -> Result<SplitPlan> {
    let n = t.len();
    if j >= n || k >= n || j == k {
        return Err(Error::Precondition(format!(
            "separating pair ({j}, {k}) is invalid for {n} players"
        )));
    }
    if !(mass_prime[j] < mass_prime[k] - tol.eq) {
        return Err(Error::Precondition(format!(
            "player {j} values C' at {} which is not below player {k}'s {}",
            mass_prime[j], mass_prime[k]
        )));
    }
    let (epsilon, delta) = choose_epsilon_delta(
        t[j],
        t[k],
        (mass_prime[j], mass_dprime[j]),
        (mass_prime[k], mass_dprime[k]),
        tol,
    )?;

    let mut s_prime = t.to_vec();
    let mut s_dprime = t.to_vec();
    s_prime[j] = t[j] - epsilon;
    s_dprime[j] = t[j] + epsilon * mass_prime[j] / mass_dprime[j];
    s_prime[k] = t[k] + delta * mass_dprime[k] / mass_prime[k];
    s_dprime[k] = t[k] - delta;

    let sum_prime: f64 = s_prime.iter().sum();
    let sum_dprime: f64 = s_dprime.iter().sum();
    if !(sum_prime < 1.0 && sum_dprime < 1.0) {
        return Err(Error::SeparationTooWeak(format!(
            "split weights sum to ({sum_prime}, {sum_dprime}), both must stay below 1"
        )));
    }
    let plan = SplitPlan {
        c_prime: c_prime.clone(),
        c_dprime: c_dprime.clone(),
        j,
        k,
        t_prime: s_prime.iter().map(|s| s / sum_prime).collect(),
        t_dprime: s_dprime.iter().map(|s| s / sum_dprime).collect(),
        s_prime,
        s_dprime,
        epsilon,
        delta,
        mass_prime,
        mass_dprime,
    };
    if let Some(i) = (0..n).find(|&i| !(plan.margin(i, t[i]) > tol.norm)) {
        return Err(Error::SeparationTooWeak(format!(
            "player {i} gains only {} from the split",
            plan.margin(i, t[i])
        )));
    }
    Ok(plan)
}

/// Finds a separating prefix of `cake` and derives the split, charging one
/// eval per player per scanned breakpoint and two per player for the plan.
///
/// `valuations` must be probability measures on `cake`.
pub fn plan_split(
    valuations: &[Valuation],
    t: &[f64],
    cake: &Piece,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<SplitPlan> {
    if valuations.len() < 2 {
        return Err(Error::AllIdentical);
    }
    let (j, k, prefix) = separate(valuations, ledger, tol)?.ok_or(Error::AllIdentical)?;
    let c_prime = cake.intersection(&prefix);
    let c_dprime = cake.difference(&c_prime);
    let mut mass_prime = Vec::with_capacity(t.len());
    let mut mass_dprime = Vec::with_capacity(t.len());
    for (i, v) in valuations.iter().enumerate() {
        mass_prime.push(ledger.counted_eval(i, v, &c_prime)?);
        mass_dprime.push(ledger.counted_eval(i, v, &c_dprime)?);
    }
    build_plan(t, j, k, &c_prime, &c_dprime, mass_prime, mass_dprime, tol)
}

/// Strictly fair division: every player ends with `μ_i(S_i) > t_i·μ_i(cake)`.
pub fn strong_fair_division(
    instance: &Instance,
    cake: &Piece,
    inner: Inner,
    ledger: &mut QueryLedger,
) -> Result<Allocation> {
    Ok(strong_fair_division_planned(instance, cake, inner, ledger)?.0)
}

/// As [`strong_fair_division`], also returning the split that was used.
pub fn strong_fair_division_planned(
    instance: &Instance,
    cake: &Piece,
    inner: Inner,
    ledger: &mut QueryLedger,
) -> Result<(Allocation, SplitPlan)> {
    let tol = instance.tolerances();
    let local: Vec<Valuation> = if *cake == Piece::full() {
        instance.valuations().to_vec()
    } else {
        instance
            .valuations()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                ledger.counted_eval(i, v, cake)?;
                v.restrict_normalize(cake, &Valuation::uniform(), tol)
            })
            .collect::<Result<_>>()?
    };
    let plan = plan_split(&local, instance.entitlements(), cake, ledger, tol)?;

    let first = solve_part(
        &local,
        &plan.t_prime,
        &plan.s_prime,
        &plan.c_prime,
        inner,
        ledger,
        tol,
    )?;
    let second = solve_part(
        &local,
        &plan.t_dprime,
        &plan.s_dprime,
        &plan.c_dprime,
        inner,
        ledger,
        tol,
    )?;
    let pieces = first.iter().zip(&second).map(|(a, b)| a.union(b)).collect();
    Ok((Allocation::for_instance(instance, cake, pieces), plan))
}

fn solve_part(
    valuations: &[Valuation],
    t: &[f64],
    s: &[f64],
    part: &Piece,
    inner: Inner,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<Vec<Piece>> {
    let allocation = match inner {
        Inner::AlgorithmOne => {
            let sub = sub_instance(valuations, t.to_vec(), vec![None; t.len()], tol)?;
            algo1::algorithm_one(&sub, part, ledger)?
        }
        Inner::AlgorithmTwo { max_rounds } => {
            let sub = sub_instance(valuations, t.to_vec(), vec![None; t.len()], tol)?;
            algo2::algorithm_two(&sub, part, ledger, max_rounds)?.0
        }
        Inner::Cloning => {
            let exact = algo1::round_up_to_rationals(s, tol)?;
            let floats = exact.iter().map(|r| r.to_f64()).collect();
            let sub = sub_instance(
                valuations,
                floats,
                exact.into_iter().map(Some).collect(),
                tol,
            )?;
            proportional::solve_cloning(&sub, part, ledger)?
        }
    };
    Ok(allocation.into_pieces())
}

fn sub_instance(
    valuations: &[Valuation],
    t: Vec<f64>,
    exact: Vec<Option<proportional::RationalEntitlement>>,
    tol: &Tolerances,
) -> Result<Instance> {
    // Renormalization leaves float sums a few ulps off 1.
    let sum: f64 = t.iter().sum();
    let t = t.into_iter().map(|x| x / sum).collect();
    Instance::with_parts(valuations.to_vec(), t, exact, *tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(bps: &[f64], ds: &[f64]) -> Valuation {
        Valuation::new(bps.to_vec(), ds.to_vec()).unwrap()
    }

    fn heavy_left() -> Valuation {
        step(&[0.0, 0.5, 1.0], &[2.0, 0.0])
    }

    #[test]
    fn identical_measures_do_not_separate() {
        let tol = Tolerances::default();
        assert!(
            find_separating_piece(&[Valuation::uniform(), Valuation::uniform()], &tol).is_none()
        );
        let v = step(&[0.0, 0.3, 1.0], &[2.0, 4.0 / 7.0]);
        assert!(find_separating_piece(&[v.clone(), v], &tol).is_none());
    }

    #[test]
    fn separates_at_the_density_jump() {
        let tol = Tolerances::default();
        let (j, k, c) = find_separating_piece(&[Valuation::uniform(), heavy_left()], &tol).unwrap();
        assert_eq!((j, k), (0, 1));
        assert_eq!(c, Piece::interval(0.0, 0.5).unwrap());
    }

    #[test]
    fn finds_the_odd_one_out() {
        let tol = Tolerances::default();
        let u = Valuation::uniform;
        let (j, k, _) = find_separating_piece(&[u(), u(), heavy_left()], &tol).unwrap();
        assert!(j == 2 || k == 2);
    }

    #[test]
    fn plan_satisfies_the_split_inequalities() {
        let tol = Tolerances::default();
        let vals = [Valuation::uniform(), heavy_left()];
        let t = [0.5, 0.5];
        let c = Piece::interval(0.0, 0.5).unwrap();
        let cc = Piece::interval(0.5, 1.0).unwrap();
        let plan = derive_split_entitlements(&t, 0, 1, &c, &cc, &vals, &tol).unwrap();
        for i in 0..2 {
            let combined =
                plan.s_prime[i] * vals[i].eval(&c) + plan.s_dprime[i] * vals[i].eval(&cc);
            assert!((combined - t[i]).abs() < 1e-12);
            assert!(plan.margin(i, t[i]) > 0.0);
            assert!(plan.t_prime[i] > 0.0 && plan.t_dprime[i] > 0.0);
        }
        assert!(plan.s_prime.iter().sum::<f64>() < 1.0);
        assert!(plan.s_dprime.iter().sum::<f64>() < 1.0);
    }

    #[test]
    fn plan_when_one_player_ignores_the_prefix() {
        let tol = Tolerances::default();
        let vals = [step(&[0.0, 0.5, 1.0], &[0.0, 2.0]), Valuation::uniform()];
        let t = [0.5, 0.5];
        let c = Piece::interval(0.0, 0.5).unwrap();
        let cc = Piece::interval(0.5, 1.0).unwrap();
        let plan = derive_split_entitlements(&t, 0, 1, &c, &cc, &vals, &tol).unwrap();
        assert!(plan.margin(0, 0.5) > 0.0 && plan.margin(1, 0.5) > 0.0);
    }

    #[test]
    fn equal_prefix_values_violate_the_precondition() {
        let tol = Tolerances::default();
        let vals = [Valuation::uniform(), Valuation::uniform()];
        let c = Piece::interval(0.0, 0.5).unwrap();
        let cc = Piece::interval(0.5, 1.0).unwrap();
        let err = derive_split_entitlements(&[0.5, 0.5], 0, 1, &c, &cc, &vals, &tol).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn identical_instance_is_rejected() {
        let inst = Instance::new(vec![Valuation::uniform(); 2], vec![0.5, 0.5]).unwrap();
        let mut ledger = QueryLedger::new(2);
        let err = strong_fair_division(&inst, &Piece::full(), Inner::AlgorithmOne, &mut ledger)
            .unwrap_err();
        assert!(matches!(err, Error::AllIdentical));
    }

    #[test]
    fn every_inner_routine_gives_strict_shares() {
        let inst = Instance::new(vec![Valuation::uniform(), heavy_left()], vec![0.5, 0.5]).unwrap();
        for inner in [
            Inner::AlgorithmOne,
            Inner::AlgorithmTwo { max_rounds: None },
            Inner::Cloning,
        ] {
            let mut ledger = QueryLedger::new(2);
            let alloc = strong_fair_division(&inst, &Piece::full(), inner, &mut ledger).unwrap();
            assert!(alloc.min_slack() > 1e-12, "{inner:?}: {:?}", alloc.report());
            let union = alloc.pieces()[0].union(&alloc.pieces()[1]);
            assert_eq!(union, Piece::full());
            assert!(alloc.pieces()[0]
                .intersection(&alloc.pieces()[1])
                .is_empty());
        }
    }
}
