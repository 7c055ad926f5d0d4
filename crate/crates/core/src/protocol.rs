//! Robertson–Webb query accounting.
//!
//! Protocols never see a [`Valuation`] directly. They hold [`Player`] handles
//! and every `eval` or `cut` goes through a [`QueryLedger`], which charges the
//! query to the player's original index. Arithmetic, comparisons and set
//! operations on pieces are free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{Piece, Tolerances, Valuation};

/// Per-player eval and cut counters for one protocol run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryLedger {
    evals: Vec<u64>,
    cuts: Vec<u64>,
}

impl QueryLedger {
    pub fn new(players: usize) -> Self {
        QueryLedger {
            evals: vec![0; players],
            cuts: vec![0; players],
        }
    }

    pub fn players(&self) -> usize {
        self.evals.len()
    }

    pub fn evals(&self) -> &[u64] {
        &self.evals
    }

    pub fn cuts(&self) -> &[u64] {
        &self.cuts
    }

    pub fn total_evals(&self) -> u64 {
        self.evals.iter().sum()
    }

    pub fn total_cuts(&self) -> u64 {
        self.cuts.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.total_evals() + self.total_cuts()
    }

    fn check(&self, player: usize) -> Result<()> {
        if player >= self.evals.len() {
            return Err(Error::InvalidPlayer {
                index: player,
                players: self.evals.len(),
            });
        }
        Ok(())
    }

    /// `v(s)`, charged to `player`.
    pub fn counted_eval(&mut self, player: usize, v: &Valuation, s: &Piece) -> Result<f64> {
        self.check(player)?;
        self.evals[player] += 1;
        Ok(v.eval(s))
    }

    /// Leftmost sub-piece of `s` worth `alpha` under `v`, charged to `player`.
    ///
    /// The query is charged even when it is degenerate or fails.
    pub fn counted_cut(
        &mut self,
        player: usize,
        v: &Valuation,
        s: &Piece,
        alpha: f64,
        tol: &Tolerances,
    ) -> Result<Piece> {
        self.check(player)?;
        self.cuts[player] += 1;
        v.cut_prefix(s, alpha, tol)
    }

    /// Grows the ledger to cover at least `players` indices.
    pub fn ensure_players(&mut self, players: usize) {
        if players > self.players() {
            self.evals.resize(players, 0);
            self.cuts.resize(players, 0);
        }
    }

    /// Adds another ledger's counts into this one, index by index.
    pub fn absorb(&mut self, other: &QueryLedger) {
        self.ensure_players(other.players());
        for (i, (e, c)) in other.evals.iter().zip(&other.cuts).enumerate() {
            self.evals[i] += e;
            self.cuts[i] += c;
        }
    }
}

/// A participant as seen by a protocol: an opaque measure plus the ledger
/// index its queries are charged to.
#[derive(Clone, Debug)]
pub struct Player {
    id: usize,
    valuation: Valuation,
}

impl Player {
    pub fn new(id: usize, valuation: Valuation) -> Self {
        Player { id, valuation }
    }

    /// Handles for every valuation, charged to indices `0..n`.
    pub fn roster(valuations: &[Valuation]) -> Vec<Player> {
        valuations
            .iter()
            .cloned()
            .enumerate()
            .map(|(id, v)| Player::new(id, v))
            .collect()
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn eval(&self, ledger: &mut QueryLedger, s: &Piece) -> Result<f64> {
        ledger.counted_eval(self.id, &self.valuation, s)
    }

    pub fn cut(
        &self,
        ledger: &mut QueryLedger,
        s: &Piece,
        alpha: f64,
        tol: &Tolerances,
    ) -> Result<Piece> {
        ledger.counted_cut(self.id, &self.valuation, s, alpha, tol)
    }

    /// The same player with its measure conditioned on `support`.
    ///
    /// Costs one eval (the normalizing constant). A null support falls back
    /// to Lebesgue measure on it.
    pub fn restricted(
        &self,
        ledger: &mut QueryLedger,
        support: &Piece,
        tol: &Tolerances,
    ) -> Result<Player> {
        ledger.check(self.id)?;
        ledger.evals[self.id] += 1;
        let valuation = self
            .valuation
            .restrict_normalize(support, &Valuation::uniform(), tol)?;
        Ok(Player {
            id: self.id,
            valuation,
        })
    }
}

/// Conditions every player on `cake` unless it is the whole cake already.
pub(crate) fn localize(
    players: &[Player],
    cake: &Piece,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<Vec<Player>> {
    if *cake == Piece::full() {
        return Ok(players.to_vec());
    }
    players
        .iter()
        .map(|p| p.restricted(ledger, cake, tol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_is_counted() {
        let mut ledger = QueryLedger::new(2);
        let v = Valuation::uniform();
        assert_eq!(ledger.counted_eval(0, &v, &Piece::full()).unwrap(), 1.0);
        assert_eq!(ledger.evals(), &[1, 0]);
        ledger.counted_eval(0, &v, &Piece::full()).unwrap();
        assert_eq!(ledger.evals(), &[2, 0]);
    }

    #[test]
    fn counts_are_attributed_per_player() {
        let mut ledger = QueryLedger::new(2);
        let v = Valuation::uniform();
        for p in [0, 1, 0] {
            ledger.counted_eval(p, &v, &Piece::full()).unwrap();
        }
        assert_eq!(ledger.evals(), &[2, 1]);
    }

    #[test]
    fn cut_is_counted_even_when_degenerate() {
        let tol = Tolerances::default();
        let mut ledger = QueryLedger::new(1);
        let v = Valuation::uniform();
        let half = ledger
            .counted_cut(0, &v, &Piece::full(), 0.5, &tol)
            .unwrap();
        assert_eq!(half, Piece::interval(0.0, 0.5).unwrap());
        assert_eq!(ledger.cuts(), &[1]);
        let none = ledger
            .counted_cut(0, &v, &Piece::full(), 0.0, &tol)
            .unwrap();
        assert!(none.is_empty());
        assert_eq!(ledger.cuts(), &[2]);
    }

    #[test]
    fn sequential_trims_are_charged_once_each() {
        // A replayed Last-Diminisher pass: player 0 cuts, players 1..n-1 trim.
        let tol = Tolerances::default();
        let n = 5;
        let mut ledger = QueryLedger::new(n);
        let v = Valuation::uniform();
        let mut slice = ledger
            .counted_cut(0, &v, &Piece::full(), 0.5, &tol)
            .unwrap();
        for p in 1..n {
            slice = ledger
                .counted_cut(p, &v, &slice, 0.5 / (p + 1) as f64, &tol)
                .unwrap();
        }
        assert_eq!(ledger.cuts()[1..].iter().sum::<u64>(), (n - 1) as u64);
        assert_eq!(ledger.total_evals(), 0);
    }

    #[test]
    fn invalid_player_is_rejected() {
        let mut ledger = QueryLedger::new(1);
        let err = ledger
            .counted_eval(3, &Valuation::uniform(), &Piece::full())
            .unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidPlayer {
                index: 3,
                players: 1
            }
        ));
    }

    #[test]
    fn restriction_costs_one_eval() {
        let tol = Tolerances::default();
        let mut ledger = QueryLedger::new(1);
        let p = Player::new(0, Valuation::uniform());
        let half = Piece::interval(0.5, 1.0).unwrap();
        let r = p.restricted(&mut ledger, &half, &tol).unwrap();
        assert_eq!(ledger.evals(), &[1]);
        assert!((r.eval(&mut ledger, &half).unwrap() - 1.0).abs() < 1e-12);
    }
}
