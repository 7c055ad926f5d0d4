#![allow(dead_code)]

use entitle::io::generate::random_valuation;
use entitle::proportional::RationalEntitlement;
use entitle::{Instance, Piece, Valuation};
use rand::seq::index;
use rand::Rng;

/// A union of up to `max_intervals` random intervals.
pub fn random_piece<R: Rng>(rng: &mut R, max_intervals: usize) -> Piece {
    let k = rng.random_range(1..=max_intervals);
    let mut ends: Vec<f64> = (0..2 * k).map(|_| rng.random::<f64>()).collect();
    ends.sort_by(f64::total_cmp);
    Piece::normalize(ends.chunks(2).map(|c| (c[0], c[1]))).unwrap()
}

/// `n` players with entitlements `p_i/q`, `q ≤ max_den`. With `identical`,
/// every player shares one valuation.
pub fn rational_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    max_den: u64,
    identical: bool,
) -> (Instance, Vec<(u64, u64)>) {
    let q = rng.random_range(n as u64..=max_den);
    let mut cuts: Vec<u64> = index::sample(rng, q as usize - 1, n - 1)
        .into_iter()
        .map(|c| c as u64 + 1)
        .collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(q);
    let parts: Vec<(u64, u64)> = cuts.windows(2).map(|w| (w[1] - w[0], q)).collect();
    let shared = random_valuation(rng, 12);
    let valuations: Vec<Valuation> = (0..n)
        .map(|_| {
            if identical {
                shared.clone()
            } else {
                random_valuation(rng, 12)
            }
        })
        .collect();
    let ents = parts
        .iter()
        .map(|&(p, q)| RationalEntitlement::new(p, q).unwrap())
        .collect();
    (Instance::rational(valuations, ents).unwrap(), parts)
}
