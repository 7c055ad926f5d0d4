use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Piece, Tolerances, Valuation};
use crate::proportional::RationalEntitlement;
use crate::protocol::Player;

/// A fair-division problem: one valuation and one entitlement per player.
#[derive(Clone, Debug)]
pub struct Instance {
    valuations: Vec<Valuation>,
    entitlements: Vec<f64>,
    exact: Vec<Option<RationalEntitlement>>,
    tolerances: Tolerances,
}

impl Instance {
    pub fn new(valuations: Vec<Valuation>, entitlements: Vec<f64>) -> Result<Self> {
        let exact = vec![None; entitlements.len()];
        Instance::with_parts(valuations, entitlements, exact, Tolerances::default())
    }

    /// An instance whose entitlements are all exact rationals.
    pub fn rational(
        valuations: Vec<Valuation>,
        entitlements: Vec<RationalEntitlement>,
    ) -> Result<Self> {
        let floats = entitlements
            .iter()
            .map(RationalEntitlement::to_f64)
            .collect();
        let exact = entitlements.into_iter().map(Some).collect();
        Instance::with_parts(valuations, floats, exact, Tolerances::default())
    }

    pub fn with_parts(
        valuations: Vec<Valuation>,
        entitlements: Vec<f64>,
        exact: Vec<Option<RationalEntitlement>>,
        tolerances: Tolerances,
    ) -> Result<Self> {
        tolerances.validate()?;
        if valuations.is_empty() {
            return Err(Error::InfeasibleInstance("no players".into()));
        }
        if valuations.len() != entitlements.len() || exact.len() != entitlements.len() {
            return Err(Error::MalformedEntitlements(format!(
                "{} valuations but {} entitlements",
                valuations.len(),
                entitlements.len()
            )));
        }
        if let Some(i) = entitlements
            .iter()
            .position(|t| !t.is_finite() || *t <= 0.0)
        {
            return Err(Error::MalformedEntitlements(format!(
                "entitlement of player {i} must be positive, got {}",
                entitlements[i]
            )));
        }
        let sum: f64 = entitlements.iter().sum();
        if (sum - 1.0).abs() > tolerances.norm {
            return Err(Error::MalformedEntitlements(format!(
                "entitlements sum to {sum}, expected 1"
            )));
        }
        if exact.iter().all(Option::is_some) {
            let total = exact
                .iter()
                .flatten()
                .fold(RationalEntitlement::zero_ratio(), |acc, r| acc + r.ratio());
            if total != RationalEntitlement::one_ratio() {
                return Err(Error::MalformedEntitlements(format!(
                    "exact entitlements sum to {total}, expected 1"
                )));
            }
        }
        for (i, v) in valuations.iter().enumerate() {
            if (v.total_mass() - 1.0).abs() > tolerances.norm {
                return Err(Error::MalformedValuation(format!(
                    "player {i} has total mass {}",
                    v.total_mass()
                )));
            }
        }
        Ok(Instance {
            valuations,
            entitlements,
            exact,
            tolerances,
        })
    }

    pub fn len(&self) -> usize {
        self.valuations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valuations.is_empty()
    }

    pub fn valuations(&self) -> &[Valuation] {
        &self.valuations
    }

    pub fn entitlements(&self) -> &[f64] {
        &self.entitlements
    }

    pub fn exact_entitlements(&self) -> &[Option<RationalEntitlement>] {
        &self.exact
    }

    /// All exact entitlements, if every player has one.
    pub fn all_exact(&self) -> Option<Vec<RationalEntitlement>> {
        self.exact.iter().cloned().collect()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tolerances
    }

    pub fn players(&self) -> Vec<Player> {
        Player::roster(&self.valuations)
    }
}

/// Value, owed share and surplus of one player's piece.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerReport {
    pub value: f64,
    pub entitlement: f64,
    pub slack: f64,
}

/// Pieces handed to each player, with a per-player report.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pieces: Vec<Piece>,
    report: Vec<PlayerReport>,
}

impl Allocation {
    /// Reports `value = v_i(S_i)` and `slack = value - t_i * v_i(cake)`.
    pub fn evaluate(
        valuations: &[Valuation],
        entitlements: &[f64],
        cake: &Piece,
        pieces: Vec<Piece>,
    ) -> Self {
        let report = valuations
            .iter()
            .zip(entitlements)
            .zip(&pieces)
            .map(|((v, &t), piece)| {
                let value = v.eval(piece);
                PlayerReport {
                    value,
                    entitlement: t,
                    slack: value - t * v.eval(cake),
                }
            })
            .collect();
        Allocation { pieces, report }
    }

    pub fn for_instance(instance: &Instance, cake: &Piece, pieces: Vec<Piece>) -> Self {
        Allocation::evaluate(instance.valuations(), instance.entitlements(), cake, pieces)
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn into_pieces(self) -> Vec<Piece> {
        self.pieces
    }

    pub fn report(&self) -> &[PlayerReport] {
        &self.report
    }

    pub fn min_slack(&self) -> f64 {
        self.report
            .iter()
            .map(|r| r.slack)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Permutation sorting `values` ascending, ties kept in index order.
pub(crate) fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}
