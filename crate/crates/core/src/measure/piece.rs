use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intervals narrower than this are treated as rounding debris. `difference`
/// drops them and `Valuation::cut_prefix` snaps cut points onto an endpoint
/// closer than this, so set operations on cut results never create them.
pub const SLIVER_WIDTH: f64 = 1e-12;

/// A finite union of disjoint half-open subintervals of the cake `[0, 1)`.
///
/// The interval list is kept canonical: sorted, non-empty intervals separated
/// by strict gaps. Two pieces describing the same point set are therefore
/// equal field-wise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct Piece {
    intervals: Vec<(f64, f64)>,
}

impl Piece {
    pub fn empty() -> Self {
        Piece::default()
    }

    /// The whole cake `[0, 1)`.
    pub fn full() -> Self {
        Piece {
            intervals: vec![(0.0, 1.0)],
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Piece::normalize([(lo, hi)])
    }

    /// Builds the canonical piece covering the union of `raw`.
    pub fn normalize(raw: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut intervals = Vec::new();
        for (lo, hi) in raw {
            if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi > 1.0 || lo > hi {
                return Err(Error::MalformedInterval { lo, hi });
            }
            if lo < hi {
                intervals.push((lo, hi));
            }
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Piece {
            intervals: coalesce(intervals),
        })
    }

    /// Wraps an interval list that is already canonical.
    pub(crate) fn from_canonical(intervals: Vec<(f64, f64)>) -> Self {
        debug_assert!(is_canonical(&intervals), "{intervals:?}");
        Piece { intervals }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Lebesgue length.
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    pub fn contains_point(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|&(lo, _)| lo <= x);
        idx > 0 && x < self.intervals[idx - 1].1
    }

    /// Point-set inclusion `self ⊆ other`, decided exactly.
    pub fn is_subset_of(&self, other: &Piece) -> bool {
        let mut j = 0;
        for &(lo, hi) in &self.intervals {
            while j < other.intervals.len() && other.intervals[j].1 <= lo {
                j += 1;
            }
            match other.intervals.get(j) {
                Some(&(olo, ohi)) if olo <= lo && hi <= ohi => {}
                _ => return false,
            }
        }
        true
    }

    pub fn union(&self, other: &Piece) -> Piece {
        if other.is_empty() {
            return self.clone();
        }
        if self.is_empty() {
            return other.clone();
        }
        let mut merged = Vec::with_capacity(self.intervals.len() + other.intervals.len());
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() || j < other.intervals.len() {
            let take_left = match (self.intervals.get(i), other.intervals.get(j)) {
                (Some(a), Some(b)) => a.0 <= b.0,
                (Some(_), None) => true,
                _ => false,
            };
            if take_left {
                merged.push(self.intervals[i]);
                i += 1;
            } else {
                merged.push(other.intervals[j]);
                j += 1;
            }
        }
        Piece {
            intervals: coalesce(merged),
        }
    }

    pub fn intersection(&self, other: &Piece) -> Piece {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (alo, ahi) = self.intervals[i];
            let (blo, bhi) = other.intervals[j];
            let lo = alo.max(blo);
            let hi = ahi.min(bhi);
            if lo < hi {
                out.push((lo, hi));
            }
            if ahi < bhi {
                i += 1;
            } else {
                j += 1;
            }
        }
        Piece { intervals: out }
    }

    /// `self ∖ other`, discarding leftover intervals narrower than [`SLIVER_WIDTH`].
    pub fn difference(&self, other: &Piece) -> Piece {
        let mut out = Vec::new();
        let mut j = 0;
        for &(lo, hi) in &self.intervals {
            let mut start = lo;
            while j < other.intervals.len() && other.intervals[j].1 <= start {
                j += 1;
            }
            let mut k = j;
            while k < other.intervals.len() && other.intervals[k].0 < hi {
                let (blo, bhi) = other.intervals[k];
                if blo > start {
                    push_unless_sliver(&mut out, start, blo);
                }
                start = start.max(bhi);
                if start >= hi {
                    break;
                }
                k += 1;
            }
            if start < hi {
                push_unless_sliver(&mut out, start, hi);
            }
        }
        Piece { intervals: out }
    }

    /// `self ∩ [0, x)`.
    pub fn prefix_until(&self, x: f64) -> Piece {
        let mut out = Vec::new();
        for &(lo, hi) in &self.intervals {
            if lo >= x {
                break;
            }
            out.push((lo, hi.min(x)));
        }
        Piece { intervals: out }
    }

    /// All interval endpoints, in order.
    pub fn endpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().flat_map(|&(lo, hi)| [lo, hi])
    }
}

fn push_unless_sliver(out: &mut Vec<(f64, f64)>, lo: f64, hi: f64) {
    if hi - lo >= SLIVER_WIDTH {
        out.push((lo, hi));
    }
}

/// Merges overlapping and touching intervals of a list sorted by `lo`.
fn coalesce(sorted: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (lo, hi) in sorted {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

fn is_canonical(intervals: &[(f64, f64)]) -> bool {
    intervals
        .iter()
        .all(|&(lo, hi)| 0.0 <= lo && lo < hi && hi <= 1.0)
        && intervals.windows(2).all(|w| w[0].1 < w[1].0)
}

impl TryFrom<Vec<(f64, f64)>> for Piece {
    type Error = Error;

    fn try_from(raw: Vec<(f64, f64)>) -> Result<Self> {
        Piece::normalize(raw)
    }
}

impl From<Piece> for Vec<(f64, f64)> {
    fn from(piece: Piece) -> Self {
        piece.intervals
    }
}

impl fmt::Display for Piece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return f.write_str("∅");
        }
        for (idx, (lo, hi)) in self.intervals.iter().enumerate() {
            if idx > 0 {
                f.write_str(" ∪ ")?;
            }
            write!(f, "[{lo}, {hi})")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn piece(raw: &[(f64, f64)]) -> Piece {
        Piece::normalize(raw.iter().copied()).unwrap()
    }

    #[test]
    fn adjacent_intervals_merge() {
        assert_eq!(piece(&[(0.0, 0.5), (0.5, 1.0)]), Piece::full());
    }

    #[test]
    fn empty_interval_is_dropped() {
        assert!(piece(&[(0.2, 0.2)]).is_empty());
    }

    #[test]
    fn overlapping_intervals_merge() {
        let p = piece(&[(0.3, 0.6), (0.1, 0.4)]);
        assert_eq!(p.intervals(), &[(0.1, 0.6)]);
        // grid membership oracle
        for step in 0..=1000 {
            let x = step as f64 * 1e-3;
            let expected = (0.1..0.4).contains(&x) || (0.3..0.6).contains(&x);
            assert_eq!(p.contains_point(x), expected, "x = {x}");
        }
    }

    #[test]
    fn malformed_intervals_are_rejected() {
        assert!(matches!(
            Piece::interval(0.6, 0.2),
            Err(Error::MalformedInterval { .. })
        ));
        assert!(Piece::interval(-0.1, 0.2).is_err());
        assert!(Piece::interval(0.5, 1.5).is_err());
        assert!(Piece::interval(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn union_with_empty_is_identity() {
        let a = piece(&[(0.0, 0.3)]);
        assert_eq!(a.union(&Piece::empty()), a);
        assert_eq!(Piece::empty().union(&a), a);
    }

    #[test]
    fn difference_of_subinterval() {
        let d = Piece::full().difference(&piece(&[(0.25, 0.5)]));
        assert_eq!(d.intervals(), &[(0.0, 0.25), (0.5, 1.0)]);
    }

    #[test]
    fn intersection_of_overlapping_intervals() {
        let i = piece(&[(0.0, 0.5)]).intersection(&piece(&[(0.4, 0.9)]));
        assert_eq!(i.intervals(), &[(0.4, 0.5)]);
        for step in 0..=1000 {
            let x = step as f64 * 1e-3;
            assert_eq!(i.contains_point(x), (0.4..0.5).contains(&x), "x = {x}");
        }
    }

    #[test]
    fn difference_drops_slivers() {
        let a = piece(&[(0.0, 0.5)]);
        let b = piece(&[(0.0, 0.5 - 1e-14)]);
        assert!(a.difference(&b).is_empty());
    }

    #[test]
    fn difference_with_multiple_holes() {
        let a = piece(&[(0.0, 0.4), (0.6, 1.0)]);
        let b = piece(&[(0.1, 0.2), (0.3, 0.7), (0.9, 1.0)]);
        assert_eq!(
            a.difference(&b).intervals(),
            &[(0.0, 0.1), (0.2, 0.3), (0.7, 0.9)]
        );
    }

    #[test]
    fn subset_and_prefix() {
        let a = piece(&[(0.1, 0.2), (0.5, 0.9)]);
        assert!(piece(&[(0.55, 0.6)]).is_subset_of(&a));
        assert!(!piece(&[(0.15, 0.55)]).is_subset_of(&a));
        assert!(Piece::empty().is_subset_of(&a));
        assert_eq!(a.prefix_until(0.6).intervals(), &[(0.1, 0.2), (0.5, 0.6)]);
        assert_eq!(a.prefix_until(0.1), Piece::empty());
    }

    #[test]
    fn serde_uses_interval_lists() {
        let a = piece(&[(0.0, 0.25), (0.5, 1.0)]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "[[0.0,0.25],[0.5,1.0]]");
        let back: Piece = serde_json::from_str("[[0.5,1.0],[0.0,0.25],[0.25,0.3]]").unwrap();
        assert_eq!(back.intervals(), &[(0.0, 0.3), (0.5, 1.0)]);
        assert!(serde_json::from_str::<Piece>("[[0.5,0.1]]").is_err());
    }
}
