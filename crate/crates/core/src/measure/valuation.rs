use serde::{Deserialize, Serialize};

use super::piece::{Piece, SLIVER_WIDTH};
use super::Tolerances;
use crate::error::{Error, Result};

/// Residual masses below this are treated as exhausted while sweeping a cut.
const EXHAUSTED: f64 = 4.0 * f64::EPSILON;

/// An atomless probability measure on `[0, 1)` with a piecewise-constant density.
///
/// Density `densities[j]` applies on `[breakpoints[j], breakpoints[j + 1])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawValuation", into = "RawValuation")]
pub struct Valuation {
    breakpoints: Vec<f64>,
    densities: Vec<f64>,
    /// `cumulative[j]` is the mass of `[0, breakpoints[j])`.
    cumulative: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawValuation {
    pub breakpoints: Vec<f64>,
    pub densities: Vec<f64>,
}

impl Valuation {
    /// Validates and builds a unit-mass valuation, allowing the default mass tolerance.
    pub fn new(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        Valuation::with_mass_tolerance(breakpoints, densities, Tolerances::default().norm)
    }

    pub fn with_mass_tolerance(
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
        mass_tolerance: f64,
    ) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::MalformedValuation(
                "at least two breakpoints are required".into(),
            ));
        }
        if densities.len() + 1 != breakpoints.len() {
            return Err(Error::MalformedValuation(format!(
                "{} breakpoints need {} densities, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                densities.len()
            )));
        }
        if breakpoints[0] != 0.0 || breakpoints[breakpoints.len() - 1] != 1.0 {
            return Err(Error::MalformedValuation(
                "breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if breakpoints.iter().any(|x| !x.is_finite())
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::MalformedValuation(
                "breakpoints must be finite and strictly increasing".into(),
            ));
        }
        if let Some(j) = densities.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::MalformedValuation(format!(
                "density {j} is negative or not finite: {}",
                densities[j]
            )));
        }
        let v = Valuation::from_parts(breakpoints, densities);
        let mass = v.total_mass();
        if (mass - 1.0).abs() > mass_tolerance {
            return Err(Error::MalformedValuation(format!(
                "total mass is {mass}, expected 1"
            )));
        }
        Ok(v)
    }

    /// Builds a valuation without checking the unit-mass invariant.
    fn from_parts(breakpoints: Vec<f64>, densities: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(breakpoints.len());
        let mut acc = 0.0;
        cumulative.push(acc);
        for (j, d) in densities.iter().enumerate() {
            acc += d * (breakpoints[j + 1] - breakpoints[j]);
            cumulative.push(acc);
        }
        Valuation {
            breakpoints,
            densities,
            cumulative,
        }
    }

    /// Lebesgue measure on the cake.
    pub fn uniform() -> Self {
        Valuation::from_parts(vec![0.0, 1.0], vec![1.0])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn total_mass(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    fn segments(&self) -> usize {
        self.densities.len()
    }

    /// Segment containing `x` from the right: `x_j <= x < x_{j+1}`.
    fn segment_at(&self, x: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        idx.saturating_sub(1).min(self.segments() - 1)
    }

    /// Segment containing `x` from the left: `x_j < x <= x_{j+1}`.
    fn segment_before(&self, x: f64) -> usize {
        let idx = self.breakpoints.partition_point(|&b| b < x);
        idx.saturating_sub(1).min(self.segments() - 1)
    }

    pub fn density_at(&self, x: f64) -> f64 {
        self.densities[self.segment_at(x)]
    }

    /// Mass of `[0, x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return self.total_mass();
        }
        let j = self.segment_at(x);
        self.cumulative[j] + self.densities[j] * (x - self.breakpoints[j])
    }

    /// Mass of `[lo, hi)`.
    pub fn eval_interval(&self, lo: f64, hi: f64) -> f64 {
        if lo >= hi {
            return 0.0;
        }
        let first = self.segment_at(lo);
        let last = self.segment_before(hi);
        if first >= last {
            return self.densities[first] * (hi - lo);
        }
        self.densities[first] * (self.breakpoints[first + 1] - lo)
            + (self.cumulative[last] - self.cumulative[first + 1])
            + self.densities[last] * (hi - self.breakpoints[last])
    }

    /// Measure of a piece.
    pub fn eval(&self, piece: &Piece) -> f64 {
        piece
            .intervals()
            .iter()
            .map(|&(lo, hi)| self.eval_interval(lo, hi))
            .sum()
    }

    /// Smallest `x` in `[lo, hi]` with `mass([lo, x)) >= wanted`, for `wanted > 0`.
    fn inverse_within(&self, lo: f64, hi: f64, wanted: f64) -> f64 {
        let mut remaining = wanted;
        let mut pos = lo;
        let mut j = self.segment_at(lo);
        while j < self.segments() {
            if remaining <= EXHAUSTED {
                return pos;
            }
            let end = self.breakpoints[j + 1].min(hi);
            let density = self.densities[j];
            let mass = density * (end - pos);
            if density > 0.0 && remaining <= mass {
                return (pos + remaining / density).min(end);
            }
            remaining -= mass;
            pos = end;
            if pos >= hi {
                break;
            }
            j += 1;
        }
        hi
    }

    /// The leftmost sub-piece of `slice` worth `alpha`.
    ///
    /// The slice is swept left to right and cut at the inverse-CDF point.
    /// Cut points closer than [`SLIVER_WIDTH`] to an endpoint of `slice` are
    /// snapped onto it.
    pub fn cut_prefix(&self, slice: &Piece, alpha: f64, tol: &Tolerances) -> Result<Piece> {
        if alpha.is_nan() || alpha < 0.0 {
            return Err(Error::MalformedQuery(format!(
                "cut value must be nonnegative, got {alpha}"
            )));
        }
        let available = self.eval(slice);
        if alpha > available + tol.eq {
            return Err(Error::InsufficientMeasure {
                requested: alpha,
                available,
            });
        }
        let mut remaining = alpha;
        let mut out = Vec::new();
        for &(lo, hi) in slice.intervals() {
            if remaining <= EXHAUSTED {
                break;
            }
            let mass = self.eval_interval(lo, hi);
            if remaining <= mass {
                let mut x = self.inverse_within(lo, hi, remaining);
                if x - lo < SLIVER_WIDTH {
                    x = lo;
                } else if hi - x < SLIVER_WIDTH {
                    x = hi;
                }
                if x > lo {
                    out.push((lo, x));
                }
                break;
            }
            out.push((lo, hi));
            remaining -= mass;
        }
        Ok(Piece::from_canonical(out))
    }

    /// The conditional measure `v(· ∩ s) / v(s)` as a valuation supported on `s`.
    ///
    /// When `v` gives `s` (almost) no mass, `fallback` conditioned on `s` is
    /// used instead, and Lebesgue measure on `s` if the fallback is null there too.
    pub fn restrict_normalize(
        &self,
        support: &Piece,
        fallback: &Valuation,
        tol: &Tolerances,
    ) -> Result<Valuation> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        let mass = self.eval(support);
        if mass > tol.eq {
            return Ok(self.conditioned(support, 1.0 / mass));
        }
        let fallback_mass = fallback.eval(support);
        if fallback_mass > tol.eq {
            return Ok(fallback.conditioned(support, 1.0 / fallback_mass));
        }
        Ok(Valuation::uniform().conditioned(support, 1.0 / support.length()))
    }

    fn conditioned(&self, support: &Piece, scale: f64) -> Valuation {
        let mut grid: Vec<f64> = self
            .breakpoints
            .iter()
            .copied()
            .chain(support.endpoints())
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let mut breakpoints = vec![0.0];
        let mut densities: Vec<f64> = Vec::new();
        for w in grid.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let density = if support.contains_point(mid) {
                self.density_at(mid) * scale
            } else {
                0.0
            };
            if densities.last() == Some(&density) {
                *breakpoints.last_mut().unwrap() = w[1];
            } else {
                densities.push(density);
                breakpoints.push(w[1]);
            }
        }
        Valuation::from_parts(breakpoints, densities)
    }
}

impl TryFrom<RawValuation> for Valuation {
    type Error = Error;

    fn try_from(raw: RawValuation) -> Result<Self> {
        Valuation::new(raw.breakpoints, raw.densities)
    }
}

impl From<Valuation> for RawValuation {
    fn from(v: Valuation) -> Self {
        RawValuation {
            breakpoints: v.breakpoints,
            densities: v.densities,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_heavy() -> Valuation {
        Valuation::new(vec![0.0, 0.5, 1.0], vec![2.0, 0.0]).unwrap()
    }

    fn iv(lo: f64, hi: f64) -> Piece {
        Piece::interval(lo, hi).unwrap()
    }

    /// Midpoint Riemann sum of the density over `[lo, hi)`.
    fn riemann(v: &Valuation, lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).round() as usize;
        (0..n)
            .map(|k| v.density_at(lo + (k as f64 + 0.5) * step) * step)
            .sum()
    }

    #[test]
    fn uniform_eval_is_length() {
        assert_eq!(Valuation::uniform().eval(&iv(0.0, 0.5)), 0.5);
    }

    #[test]
    fn step_density_eval() {
        let v = half_heavy();
        assert_eq!(v.eval(&iv(0.0, 0.25)), 0.5);
        let expected = riemann(&v, 0.25, 0.75, 1e-6);
        assert!((expected - 0.5).abs() < 1e-6);
        assert!((v.eval(&iv(0.25, 0.75)) - expected).abs() < 1e-6);
        assert!((v.eval(&Piece::full()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cut_uniform_quarter() {
        let tol = Tolerances::default();
        let c = Valuation::uniform()
            .cut_prefix(&Piece::full(), 0.25, &tol)
            .unwrap();
        assert_eq!(c, iv(0.0, 0.25));
    }

    #[test]
    fn zero_cut_is_empty() {
        let tol = Tolerances::default();
        let c = half_heavy().cut_prefix(&iv(0.3, 0.9), 0.0, &tol).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn cut_inside_heavy_half() {
        let tol = Tolerances::default();
        let v = half_heavy();
        let c = v.cut_prefix(&iv(0.25, 1.0), 0.3, &tol).unwrap();
        // 2 (x - 0.25) = 0.3
        assert_eq!(c.intervals().len(), 1);
        assert!((c.intervals()[0].1 - 0.4).abs() < 1e-15);
        assert!((v.eval(&c) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn full_cut_stops_before_trailing_zero_density() {
        let tol = Tolerances::default();
        let c = half_heavy().cut_prefix(&Piece::full(), 1.0, &tol).unwrap();
        assert_eq!(c, iv(0.0, 0.5));
    }

    #[test]
    fn cut_skips_worthless_intervals() {
        let tol = Tolerances::default();
        let v = Valuation::new(vec![0.0, 0.5, 1.0], vec![0.0, 2.0]).unwrap();
        let slice = Piece::normalize([(0.1, 0.2), (0.6, 0.9)]).unwrap();
        let c = v.cut_prefix(&slice, 0.2, &tol).unwrap();
        assert_eq!(c.intervals()[0], (0.1, 0.2));
        assert!((c.intervals()[1].1 - 0.7).abs() < 1e-15);
    }

    #[test]
    fn cut_errors() {
        let tol = Tolerances::default();
        let v = Valuation::uniform();
        assert!(matches!(
            v.cut_prefix(&iv(0.0, 0.5), 0.6, &tol),
            Err(Error::InsufficientMeasure { .. })
        ));
        assert!(matches!(
            v.cut_prefix(&iv(0.0, 0.5), -0.1, &tol),
            Err(Error::MalformedQuery(_))
        ));
        // within tolerance of the slice value the whole slice is returned
        assert_eq!(
            v.cut_prefix(&iv(0.0, 0.5), 0.5 + 1e-11, &tol).unwrap(),
            iv(0.0, 0.5)
        );
    }

    #[test]
    fn cut_snaps_onto_endpoint() {
        let tol = Tolerances::default();
        let v = Valuation::uniform();
        let slice = Piece::normalize([(0.0, 0.3), (0.5, 1.0)]).unwrap();
        let c = v.cut_prefix(&slice, 0.3 + 1e-13, &tol).unwrap();
        assert_eq!(c, iv(0.0, 0.3));
        let c = v.cut_prefix(&slice, 0.3 - 1e-13, &tol).unwrap();
        assert_eq!(c, iv(0.0, 0.3));
    }

    #[test]
    fn restriction_of_uniform() {
        let tol = Tolerances::default();
        let r = Valuation::uniform()
            .restrict_normalize(&iv(0.0, 0.5), &Valuation::uniform(), &tol)
            .unwrap();
        assert_eq!(r.breakpoints(), &[0.0, 0.5, 1.0]);
        assert_eq!(r.densities(), &[2.0, 0.0]);
    }

    #[test]
    fn restriction_falls_back_on_null_support() {
        let tol = Tolerances::default();
        let r = half_heavy()
            .restrict_normalize(&iv(0.6, 0.8), &Valuation::uniform(), &tol)
            .unwrap();
        assert_eq!(r.breakpoints(), &[0.0, 0.6, 0.8, 1.0]);
        assert!((r.densities()[1] - 5.0).abs() < 1e-12);
        assert!((r.eval(&iv(0.6, 0.8)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restriction_of_step_density() {
        let tol = Tolerances::default();
        let r = half_heavy()
            .restrict_normalize(&iv(0.25, 0.75), &Valuation::uniform(), &tol)
            .unwrap();
        assert_eq!(r.breakpoints(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(r.densities(), &[0.0, 4.0, 0.0]);
        assert!((r.eval(&iv(0.25, 0.75)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restriction_to_empty_piece_fails() {
        let tol = Tolerances::default();
        assert!(matches!(
            Valuation::uniform().restrict_normalize(&Piece::empty(), &Valuation::uniform(), &tol),
            Err(Error::EmptySupport)
        ));
    }

    #[test]
    fn degenerate_valuations_are_rejected() {
        assert!(Valuation::new(vec![0.0, 1.0], vec![0.9]).is_err());
        assert!(Valuation::new(vec![0.0, 0.5, 1.0], vec![3.0, -1.0]).is_err());
        assert!(Valuation::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 1.0, 1.0]).is_err());
        assert!(Valuation::new(vec![0.1, 1.0], vec![1.0]).is_err());
        assert!(Valuation::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
    }
}
