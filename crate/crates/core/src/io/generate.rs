use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::format::{EntitlementSpec, InstanceFile, PlayerEntry, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::measure::Valuation;

/// Breakpoints of generated valuations lie on this grid.
pub const GRID: u32 = 4096;

/// A random step density with at most `breakpoint_budget` breakpoints
/// (counting 0 and 1). Each step is null with probability 0.2.
pub fn random_valuation<R: Rng + ?Sized>(rng: &mut R, breakpoint_budget: usize) -> Valuation {
    let max_steps = breakpoint_budget.clamp(2, GRID as usize) - 1;
    let steps = rng.random_range(1..=max_steps);
    let mut cuts: Vec<u32> = index::sample(rng, GRID as usize - 1, steps - 1)
        .into_iter()
        .map(|c| c as u32 + 1)
        .collect();
    cuts.sort_unstable();
    let mut breakpoints = vec![0.0];
    breakpoints.extend(cuts.iter().map(|&c| f64::from(c) / f64::from(GRID)));
    breakpoints.push(1.0);

    let mut weights: Vec<f64> = (0..steps)
        .map(|_| {
            if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(0.05..=1.0)
            }
        })
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        let pick = rng.random_range(0..steps);
        weights[pick] = 1.0;
    }
    let mass: f64 = weights
        .iter()
        .zip(breakpoints.windows(2))
        .map(|(w, b)| w * (b[1] - b[0]))
        .sum();
    let densities = weights.into_iter().map(|w| w / mass).collect();
    Valuation::new(breakpoints, densities).expect("generated valuation is well formed")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntitlementMode {
    /// Every entitlement an exact `p/q` with `q ≤ 50`.
    Rational,
    /// Quadratic surds `sqrt(k)/m`, closed by `1 - …`.
    Irrational,
    /// Fractions and surds, closed by `1 - …`.
    Mixed,
}

impl FromStr for EntitlementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rational" => Ok(EntitlementMode::Rational),
            "irrational" => Ok(EntitlementMode::Irrational),
            "mixed" => Ok(EntitlementMode::Mixed),
            other => Err(Error::input("mode", format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for EntitlementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntitlementMode::Rational => "rational",
            EntitlementMode::Irrational => "irrational",
            EntitlementMode::Mixed => "mixed",
        })
    }
}

const MAX_DENOMINATOR: u64 = 50;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn fraction(p: u64, q: u64) -> String {
    let g = gcd(p, q);
    format!("{}/{}", p / g, q / g)
}

/// `p/q` compositions of 1 with a random common denominator.
fn rational_entitlements<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<String> {
    let q = rng.random_range(n as u64..=MAX_DENOMINATOR.max(n as u64));
    let mut cuts: Vec<u64> = index::sample(rng, q as usize - 1, n - 1)
        .into_iter()
        .map(|c| c as u64 + 1)
        .collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(q);
    cuts.windows(2).map(|w| fraction(w[1] - w[0], q)).collect()
}

/// A surd `sqrt(k)/m` with non-square `k` and value at most `cap`.
fn surd_below<R: Rng + ?Sized>(rng: &mut R, cap: f64) -> String {
    let k = loop {
        let k: u64 = rng.random_range(2..100);
        let r = (k as f64).sqrt().round() as u64;
        if r * r != k {
            break k;
        }
    };
    let m = ((k as f64).sqrt() / cap).ceil() as u64;
    format!("sqrt({k})/{m}")
}

/// A fraction `p/q` with `q ≤ 50` and value in `(0, cap]`.
fn fraction_below<R: Rng + ?Sized>(rng: &mut R, cap: f64) -> String {
    let q = rng.random_range(2..=MAX_DENOMINATOR);
    match (cap * q as f64).floor() as u64 {
        0 => fraction(1, (1.0 / cap).ceil() as u64),
        p => fraction(p, q),
    }
}

fn closed_entitlements<R: Rng + ?Sized>(rng: &mut R, n: usize, surds_only: bool) -> Vec<String> {
    if n == 1 {
        return vec!["1".into()];
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n - 1 {
        let cap = rng.random_range(0.5..1.0) / n as f64;
        let atom = if surds_only || rng.random_bool(0.5) {
            surd_below(rng, cap)
        } else {
            fraction_below(rng, cap)
        };
        out.push(atom);
    }
    let last = std::iter::once("1".to_string())
        .chain(out.iter().cloned())
        .collect::<Vec<_>>()
        .join(" - ");
    out.push(last);
    out
}

/// A random instance, fully determined by its arguments.
pub fn generate_instance(
    n: usize,
    seed: u64,
    mode: EntitlementMode,
    breakpoint_budget: usize,
) -> InstanceFile {
    assert!(n >= 1, "at least one player");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let valuations: Vec<Valuation> = (0..n)
        .map(|_| random_valuation(&mut rng, breakpoint_budget))
        .collect();
    let entitlements = match mode {
        EntitlementMode::Rational => rational_entitlements(&mut rng, n),
        EntitlementMode::Irrational => closed_entitlements(&mut rng, n, true),
        EntitlementMode::Mixed => closed_entitlements(&mut rng, n, false),
    };
    InstanceFile {
        format: FORMAT_VERSION,
        players: valuations
            .into_iter()
            .zip(entitlements)
            .map(|(v, e)| PlayerEntry {
                entitlement: EntitlementSpec::Expression(e),
                valuation: v.into(),
            })
            .collect(),
        tolerances: None,
        seed: Some(seed),
    }
}
