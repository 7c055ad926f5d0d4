//! Fair division among countably many players, truncated at a finite depth.
//!
//! At depth `n` the players `0..=n` hold a partition `S_0^n, …, S_n^n` of the
//! cake that is fair for the rescaled entitlements `t_i^n = t_i / Σ_{j≤n} t_j`.
//! Going to depth `n + 1`, every piece `S_i^n` is split between its owner and
//! the newcomer `n + 1` with entitlements `(1 - t_{n+1}^{n+1}, t_{n+1}^{n+1})`;
//! the newcomer collects all the split-off parts. Pieces only ever shrink, so
//! each player's holdings form a decreasing chain.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algo2;
use crate::error::{Error, Result};
use crate::io::generate::random_valuation;
use crate::measure::{Piece, Tolerances, Valuation};
use crate::protocol::{Player, QueryLedger};
use crate::strong;

/// Entitlements `t_i` of an infinite player sequence, with an analytic
/// partial-sum formula so that `Σ t_i = 1` holds exactly in the limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailRule {
    /// `t_i = r (1 - r)^i`.
    Geometric { ratio: f64 },
    /// `t_i = 6 / (π² (i + 1)²)`.
    Zeta2,
    /// Listed leading entitlements, then a geometric tail with ratio `r`
    /// sharing the remaining mass.
    PrefixGeometric { prefix: Vec<f64>, ratio: f64 },
    /// `t_i = scale · (override_i or base_i)`.
    Adjusted {
        base: Box<TailRule>,
        overrides: Vec<(usize, f64)>,
        scale: f64,
    },
}

impl TailRule {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedEntitlements(msg));
        match self {
            TailRule::Geometric { ratio } if !(*ratio > 0.0 && *ratio < 1.0) => {
                bad(format!("geometric ratio {ratio} must lie in (0, 1)"))
            }
            TailRule::Geometric { .. } | TailRule::Zeta2 => Ok(()),
            TailRule::PrefixGeometric { prefix, ratio } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return bad(format!("geometric ratio {ratio} must lie in (0, 1)"));
                }
                if prefix.iter().any(|p| !(*p > 0.0)) {
                    return bad("leading entitlements must be positive".into());
                }
                let head: f64 = prefix.iter().sum();
                if !(head < 1.0) {
                    return bad(format!(
                        "leading entitlements sum to {head}, must be below 1"
                    ));
                }
                Ok(())
            }
            TailRule::Adjusted {
                base,
                overrides,
                scale,
            } => {
                base.validate()?;
                if !(*scale > 0.0) || overrides.iter().any(|(_, v)| !(*v > 0.0)) {
                    return bad("adjusted entitlements must be positive".into());
                }
                let shift: f64 = overrides
                    .iter()
                    .map(|&(i, v)| v - base.entitlement(i))
                    .sum();
                let total = scale * (1.0 + shift);
                if (total - 1.0).abs() > Tolerances::default().norm {
                    return bad(format!("adjusted entitlements sum to {total}"));
                }
                Ok(())
            }
        }
    }

    pub fn entitlement(&self, i: usize) -> f64 {
        match self {
            TailRule::Geometric { ratio } => ratio * (1.0 - ratio).powi(i as i32),
            TailRule::Zeta2 => 6.0 / (PI * PI * ((i + 1) as f64).powi(2)),
            TailRule::PrefixGeometric { prefix, ratio } => match prefix.get(i) {
                Some(&p) => p,
                None => {
                    let rest = 1.0 - prefix.iter().sum::<f64>();
                    rest * ratio * (1.0 - ratio).powi((i - prefix.len()) as i32)
                }
            },
            TailRule::Adjusted {
                base,
                overrides,
                scale,
            } => {
                let raw = overrides
                    .iter()
                    .find(|(j, _)| *j == i)
                    .map_or_else(|| base.entitlement(i), |&(_, v)| v);
                scale * raw
            }
        }
    }

    /// `Σ_{j ≤ n} t_j`.
    pub fn prefix_sum(&self, n: usize) -> f64 {
        match self {
            TailRule::Geometric { ratio } => geometric_head(*ratio, n + 1),
            TailRule::Zeta2 => {
                let sum: f64 = (1..=n + 1).rev().map(|k| 1.0 / (k as f64).powi(2)).sum();
                6.0 / (PI * PI) * sum
            }
            TailRule::PrefixGeometric { prefix, ratio } => {
                if n < prefix.len() {
                    prefix[..=n].iter().sum()
                } else {
                    let head: f64 = prefix.iter().sum();
                    head + (1.0 - head) * geometric_head(*ratio, n + 1 - prefix.len())
                }
            }
            TailRule::Adjusted {
                base,
                overrides,
                scale,
            } => {
                let shift: f64 = overrides
                    .iter()
                    .filter(|(j, _)| *j <= n)
                    .map(|&(j, v)| v - base.entitlement(j))
                    .sum();
                scale * (base.prefix_sum(n) + shift)
            }
        }
    }
}

/// `1 - (1 - r)^terms`, accurate for small `r`.
fn geometric_head(ratio: f64, terms: usize) -> f64 {
    -((terms as f64) * (-ratio).ln_1p()).exp_m1()
}

impl fmt::Display for TailRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailRule::Geometric { ratio } => write!(f, "geometric:r={ratio}"),
            TailRule::Zeta2 => write!(f, "zeta2"),
            TailRule::PrefixGeometric { prefix, ratio } => {
                let head: Vec<String> = prefix.iter().map(f64::to_string).collect();
                write!(f, "prefix:{}:r={ratio}", head.join(","))
            }
            TailRule::Adjusted { base, scale, .. } => write!(f, "adjusted({base}, scale={scale})"),
        }
    }
}

/// Parses `geometric:r=R`, `zeta2` or `prefix:T0,T1,…:r=R`.
impl FromStr for TailRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::MalformedEntitlements(format!("unknown stream `{s}`"));
        let ratio = |part: &str| -> Result<f64> {
            part.trim()
                .strip_prefix("r=")
                .and_then(|r| r.parse().ok())
                .ok_or_else(bad)
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        let rule = match parts.as_slice() {
            ["zeta2"] => TailRule::Zeta2,
            ["geometric", r] => TailRule::Geometric { ratio: ratio(r)? },
            ["prefix", head, r] => TailRule::PrefixGeometric {
                prefix: head
                    .split(',')
                    .map(|x| x.trim().parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?,
                ratio: ratio(r)?,
            },
            _ => return Err(bad()),
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// Valuations `μ_i` of an infinite player sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValuationRule {
    Uniform,
    /// `μ_i = valuations[i mod len]`.
    Cycle {
        valuations: Vec<Valuation>,
    },
    /// Random step densities, reproducible per index.
    Seeded {
        seed: u64,
        breakpoint_budget: usize,
    },
    /// `base` conditioned on `support`, Lebesgue on `support` where `base` is null.
    Restricted {
        base: Box<ValuationRule>,
        support: Piece,
    },
}

impl ValuationRule {
    pub fn valuation(&self, i: usize) -> Result<Valuation> {
        match self {
            ValuationRule::Uniform => Ok(Valuation::uniform()),
            ValuationRule::Cycle { valuations } if valuations.is_empty() => {
                Err(Error::MalformedValuation("valuation cycle is empty".into()))
            }
            ValuationRule::Cycle { valuations } => Ok(valuations[i % valuations.len()].clone()),
            ValuationRule::Seeded {
                seed,
                breakpoint_budget,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(i as u64);
                Ok(random_valuation(&mut rng, *breakpoint_budget))
            }
            ValuationRule::Restricted { base, support } => base.valuation(i)?.restrict_normalize(
                support,
                &Valuation::uniform(),
                &Tolerances::default(),
            ),
        }
    }
}

/// Players `0, 1, 2, …` with entitlements from `tail` and measures from `valuations`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerStream {
    pub tail: TailRule,
    pub valuations: ValuationRule,
}

impl PlayerStream {
    pub fn new(tail: TailRule, valuations: ValuationRule) -> Result<Self> {
        tail.validate()?;
        Ok(PlayerStream { tail, valuations })
    }

    pub fn entitlement(&self, i: usize) -> f64 {
        self.tail.entitlement(i)
    }

    pub fn valuation(&self, i: usize) -> Result<Valuation> {
        self.valuations.valuation(i)
    }
}

/// `t_i^n = t_i / Σ_{j ≤ n} t_j`.
pub fn scaled_entitlement(stream: &PlayerStream, i: usize, n: usize) -> Result<f64> {
    if i > n {
        return Err(Error::InvalidPlayer {
            index: i,
            players: n + 1,
        });
    }
    Ok(stream.entitlement(i) / stream.tail.prefix_sum(n))
}

/// The partition `S_0^n, …, S_n^n` of `cake` at depth `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementState {
    pub depth: usize,
    pub cake: Piece,
    pub pieces: Vec<Piece>,
}

impl RefinementState {
    /// Depth 0: player 0 holds the whole cake.
    pub fn root(cake: Piece) -> Self {
        RefinementState {
            depth: 0,
            pieces: vec![cake.clone()],
            cake,
        }
    }
}

/// Admits player `n + 1`: each `S_i^n` the newcomer values is split between
/// its owner and the newcomer by a two-player Algorithm II run.
pub fn refine_step(
    state: &RefinementState,
    stream: &PlayerStream,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<RefinementState> {
    let n = state.depth;
    let share = scaled_entitlement(stream, n + 1, n + 1)?;
    ledger.ensure_players(n + 2);
    let newcomer = Player::new(n + 1, stream.valuation(n + 1)?);
    let mut pieces = Vec::with_capacity(n + 2);
    let mut collected = Piece::empty();
    for (i, held) in state.pieces.iter().enumerate() {
        let context = |source: Error| Error::Refinement {
            player: i,
            depth: n,
            source: Box::new(source),
        };
        if held.is_empty() || newcomer.eval(ledger, held)? <= tol.norm {
            pieces.push(held.clone());
            continue;
        }
        let owner = Player::new(i, stream.valuation(i)?);
        let pair = [
            owner.restricted(ledger, held, tol)?,
            newcomer.restricted(ledger, held, tol)?,
        ];
        let (split, _) = algo2::divide(
            &pair,
            &[1.0 - share, share],
            held,
            ledger,
            tol,
            refinement_round_cap(share),
        )
        .map_err(context)?;
        let [kept, given]: [Piece; 2] = split.try_into().expect("two players");
        collected = collected.union(&given);
        pieces.push(kept);
    }
    pieces.push(collected);
    Ok(RefinementState {
        depth: n + 1,
        cake: state.cake.clone(),
        pieces,
    })
}

/// Round guard for a two-player split with newcomer share `share`.
///
/// While the owner keeps trimming, each round moves about a `share` fraction
/// of what remains, so termination can take on the order of
/// `ln(1/share)/share` rounds; the finite-player default is far too small.
pub fn refinement_round_cap(share: f64) -> usize {
    let skew = (1.0 / share).ln().max(1.0) / share;
    algo2::default_max_rounds(2) + (4.0 * skew).ceil() as usize
}

/// Every state from depth 0 to `depth`, starting from `S_0^0 = cake`.
pub fn refine_to_depth(
    stream: &PlayerStream,
    cake: &Piece,
    depth: usize,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<Vec<RefinementState>> {
    ledger.ensure_players(depth + 1);
    let mut history = vec![RefinementState::root(cake.clone())];
    for _ in 0..depth {
        let next = refine_step(history.last().expect("non-empty"), stream, ledger, tol)?;
        history.push(next);
    }
    Ok(history)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateEntry {
    pub player: usize,
    /// `t_i`.
    pub entitlement: f64,
    /// `t_i^N`.
    pub scaled: f64,
    /// `μ_i(S_i^N)`.
    pub value: f64,
    /// `value - t_i^N`.
    pub slack: f64,
    /// `t_i - t_i^N`, from the tail rule.
    pub tail_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub depth: usize,
    pub strict: bool,
    pub entries: Vec<CertificateEntry>,
    /// Every `value ≥ t_i^N - tol.fair`.
    pub fair_at_depth: bool,
    /// Strict mode only: every `value > t_i`.
    pub strictly_above_limit: Option<bool>,
}

/// One truncated recursion, on the whole cake or on one side of a strict split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Branch {
    pub stream: PlayerStream,
    pub history: Vec<RefinementState>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfiniteRun {
    pub stream: PlayerStream,
    pub branches: Vec<Branch>,
    /// Strict mode only.
    pub plan: Option<strong::SplitPlan>,
    /// `S_i` for `i ≤ N`, merged over the branches.
    pub pieces: Vec<Piece>,
    pub certificate: Certificate,
}

/// The depth-`N` state of the recursion and its certificate.
pub fn truncated_infinite_division(
    stream: &PlayerStream,
    depth: usize,
    strict: bool,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<(RefinementState, Certificate)> {
    let run = truncated_infinite_division_traced(stream, depth, strict, ledger, tol)?;
    let state = RefinementState {
        depth,
        cake: Piece::full(),
        pieces: run.pieces,
    };
    Ok((state, run.certificate))
}

/// As [`truncated_infinite_division`], keeping every intermediate depth.
///
/// In strict mode the cake is first split as for finitely many players, with
/// the entitlement adjustment applied to the whole infinite sequence, and the
/// recursion runs on both parts with the conditioned measures.
pub fn truncated_infinite_division_traced(
    stream: &PlayerStream,
    depth: usize,
    strict: bool,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<InfiniteRun> {
    stream.tail.validate()?;
    ledger.ensure_players(depth + 1);
    let (branches, plan) = if strict {
        let (prime, dprime, plan) = split_stream(stream, depth, ledger, tol)?;
        let first = refine_to_depth(&prime, &plan.c_prime, depth, ledger, tol)?;
        let second = refine_to_depth(&dprime, &plan.c_dprime, depth, ledger, tol)?;
        (
            vec![
                Branch {
                    stream: prime,
                    history: first,
                },
                Branch {
                    stream: dprime,
                    history: second,
                },
            ],
            Some(plan),
        )
    } else {
        let history = refine_to_depth(stream, &Piece::full(), depth, ledger, tol)?;
        (
            vec![Branch {
                stream: stream.clone(),
                history,
            }],
            None,
        )
    };

    let mut pieces = vec![Piece::empty(); depth + 1];
    for branch in &branches {
        let last = branch.history.last().expect("non-empty");
        for (piece, part) in pieces.iter_mut().zip(&last.pieces) {
            *piece = piece.union(part);
        }
    }

    let mut entries = Vec::with_capacity(depth + 1);
    for (i, piece) in pieces.iter().enumerate() {
        let t = stream.entitlement(i);
        let scaled = scaled_entitlement(stream, i, depth)?;
        let value = stream.valuation(i)?.eval(piece);
        entries.push(CertificateEntry {
            player: i,
            entitlement: t,
            scaled,
            value,
            slack: value - scaled,
            tail_gap: t - scaled,
        });
    }
    let certificate = Certificate {
        depth,
        strict,
        fair_at_depth: entries.iter().all(|e| e.slack >= -tol.fair),
        strictly_above_limit: strict.then(|| entries.iter().all(|e| e.value > e.entitlement)),
        entries,
    };
    Ok(InfiniteRun {
        stream: stream.clone(),
        branches,
        plan,
        pieces,
        certificate,
    })
}

/// Splits the cake at a prefix two of the players `0..=depth` value
/// differently, and returns the streams for both sides.
fn split_stream(
    stream: &PlayerStream,
    depth: usize,
    ledger: &mut QueryLedger,
    tol: &Tolerances,
) -> Result<(PlayerStream, PlayerStream, strong::SplitPlan)> {
    let valuations: Vec<Valuation> = (0..=depth)
        .map(|i| stream.valuation(i))
        .collect::<Result<_>>()?;
    if valuations.len() < 2 {
        return Err(Error::AllIdentical);
    }
    let (j, k, c_prime) = strong::separate(&valuations, ledger, tol)?.ok_or(Error::AllIdentical)?;
    let c_dprime = Piece::full().difference(&c_prime);
    let mut mass_prime = Vec::with_capacity(valuations.len());
    let mut mass_dprime = Vec::with_capacity(valuations.len());
    for (i, v) in valuations.iter().enumerate() {
        mass_prime.push(ledger.counted_eval(i, v, &c_prime)?);
        mass_dprime.push(ledger.counted_eval(i, v, &c_dprime)?);
    }
    let (t_j, t_k) = (stream.entitlement(j), stream.entitlement(k));
    let (epsilon, delta) = strong::choose_epsilon_delta(
        t_j,
        t_k,
        (mass_prime[j], mass_dprime[j]),
        (mass_prime[k], mass_dprime[k]),
        tol,
    )?;
    let s_prime_j = t_j - epsilon;
    let s_dprime_j = t_j + epsilon * mass_prime[j] / mass_dprime[j];
    let s_prime_k = t_k + delta * mass_dprime[k] / mass_prime[k];
    let s_dprime_k = t_k - delta;
    // Sums over the whole infinite sequence, where Σ t_i = 1.
    let sum_prime = 1.0 + (s_prime_j - t_j) + (s_prime_k - t_k);
    let sum_dprime = 1.0 + (s_dprime_j - t_j) + (s_dprime_k - t_k);

    let side = |overrides: Vec<(usize, f64)>, sum: f64, support: &Piece| -> Result<PlayerStream> {
        PlayerStream::new(
            TailRule::Adjusted {
                base: Box::new(stream.tail.clone()),
                overrides,
                scale: 1.0 / sum,
            },
            ValuationRule::Restricted {
                base: Box::new(stream.valuations.clone()),
                support: support.clone(),
            },
        )
    };
    let prime = side(vec![(j, s_prime_j), (k, s_prime_k)], sum_prime, &c_prime)?;
    let dprime = side(
        vec![(j, s_dprime_j), (k, s_dprime_k)],
        sum_dprime,
        &c_dprime,
    )?;

    let t: Vec<f64> = (0..=depth).map(|i| stream.entitlement(i)).collect();
    let mut s_prime = t.clone();
    let mut s_dprime = t.clone();
    s_prime[j] = s_prime_j;
    s_prime[k] = s_prime_k;
    s_dprime[j] = s_dprime_j;
    s_dprime[k] = s_dprime_k;
    let plan = strong::SplitPlan {
        t_prime: (0..=depth).map(|i| prime.entitlement(i)).collect(),
        t_dprime: (0..=depth).map(|i| dprime.entitlement(i)).collect(),
        c_prime,
        c_dprime,
        j,
        k,
        s_prime,
        s_dprime,
        epsilon,
        delta,
        mass_prime,
        mass_dprime,
    };
    if let Some(i) = (0..=depth).find(|&i| !(plan.margin(i, t[i]) > tol.norm)) {
        return Err(Error::SeparationTooWeak(format!(
            "player {i} gains only {} from the split",
            plan.margin(i, t[i])
        )));
    }
    Ok((prime, dprime, plan))
}

/// Re-checks a refinement history with direct evaluation: exact partition
/// at every depth, fairness against `t_i^n`, shrinking pieces, the newcomer's
/// share of every split piece, the rescaling identities and monotone values.
pub fn audit_history(
    stream: &PlayerStream,
    history: &[RefinementState],
    tol: &Tolerances,
) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    let depth = history.last().map_or(0, |s| s.depth);
    let valuations: Vec<Valuation> = (0..=depth)
        .map(|i| stream.valuation(i))
        .collect::<Result<_>>()?;

    for state in history {
        let n = state.depth;
        let mut union = Piece::empty();
        for (i, piece) in state.pieces.iter().enumerate() {
            if !union.intersection(piece).is_empty() {
                problems.push(format!("depth {n}: piece {i} overlaps earlier pieces"));
            }
            union = union.union(piece);
            let scaled = scaled_entitlement(stream, i, n)?;
            let value = valuations[i].eval(piece);
            if value < scaled - tol.fair {
                problems.push(format!("depth {n}: player {i} holds {value} < {scaled}"));
            }
        }
        if union != state.cake {
            problems.push(format!("depth {n}: pieces do not cover the cake"));
        }
        let total: f64 = (0..=n)
            .map(|i| scaled_entitlement(stream, i, n))
            .sum::<Result<f64>>()?;
        if (total - 1.0).abs() > tol.norm {
            problems.push(format!("depth {n}: scaled entitlements sum to {total}"));
        }
    }

    for pair in history.windows(2) {
        let (before, after) = (&pair[0], &pair[1]);
        let n = before.depth;
        let newcomer_share = scaled_entitlement(stream, n + 1, n + 1)?;
        for i in 0..=n {
            let lhs = (1.0 - newcomer_share) * scaled_entitlement(stream, i, n)?;
            let rhs = scaled_entitlement(stream, i, n + 1)?;
            if (lhs - rhs).abs() > tol.norm {
                problems.push(format!(
                    "depth {n}: rescaling identity fails for {i}: {lhs} vs {rhs}"
                ));
            }
            let (old, new) = (&before.pieces[i], &after.pieces[i]);
            if !new.is_subset_of(old) {
                problems.push(format!("depth {n}: piece {i} grew"));
            }
            let v = &valuations[i];
            if v.eval(new) > v.eval(old) + tol.eq {
                problems.push(format!("depth {n}: value of player {i} increased"));
            }
            let newcomer = &valuations[n + 1];
            let given = newcomer.eval(&old.difference(new));
            let owed = newcomer.eval(old) * newcomer_share;
            if given < owed - tol.fair {
                problems.push(format!(
                    "depth {n}: newcomer got {given} < {owed} out of piece {i}"
                ));
            }
        }
    }
    Ok(problems)
}
