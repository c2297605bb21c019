//! Information projection of a post-change law onto the pre-change class
//! `{P : E_P[X] ≤ m}`.
//!
//! `KL_inf(Q; m) = sup_{λ ∈ [0,1]} g_Q(λ)` with `g_Q(λ) = E_Q[ln L_λ(X)]`.
//! `g_Q` is concave with `g_Q(0) = 0`, so the maximiser is found by
//! golden-section search. [`klinf_primal_oracle`] solves the raw two-multiplier
//! Lagrange dual by brute force instead and reconstructs the primal optimum,
//! which makes it an independent check on the one-dimensional solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{BoundedDistribution, QUADRATURE_TOLERANCE};
use crate::numeric::{xlogx_over_y, CompensatedSum};

/// Right end of the search interval for the betting fraction.
pub const LAMBDA_EDGE: f64 = 1.0 - 1e-9;

/// Default width of the final λ-bracket.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Most atoms the primal oracle will enumerate.
pub const ORACLE_MAX_ATOMS: usize = 100;

/// Smallest per-axis resolution of the oracle's dual grid.
pub const ORACLE_MIN_RESOLUTION: usize = 1000;

/// Constraint slack within which the oracle's primal point counts as feasible.
pub const ORACLE_FEASIBILITY_SLACK: f64 = 1e-6;

/// Constraint violation beyond which the oracle reports an inconsistency.
pub const ORACLE_INCONSISTENCY_LIMIT: f64 = 1e-4;

const COARSE_POINTS: usize = 33;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KlInfError {
    #[error("baseline mean {0} must lie strictly inside (0, 1)")]
    InvalidBaseline(f64),
    #[error("betting fraction {0} outside [0, 1]")]
    InvalidLambda(f64),
    #[error("tolerance {0} must be positive")]
    InvalidTolerance(f64),
    #[error("g is not finite anywhere on the search interval")]
    NonFiniteObjective,
    #[error("the primal oracle needs a discrete law")]
    NotDiscrete,
    #[error("law has {0} atoms; the oracle handles at most {ORACLE_MAX_ATOMS}")]
    TooManyAtoms(usize),
    #[error("grid resolution {0} below the minimum {ORACLE_MIN_RESOLUTION}")]
    ResolutionTooLow(usize),
    #[error("reconstructed primal point violates a constraint by {0:e}")]
    OracleInconsistency(f64),
}

fn check_baseline(m: f64) -> Result<(), KlInfError> {
    if m > 0.0 && m < 1.0 {
        Ok(())
    } else {
        Err(KlInfError::InvalidBaseline(m))
    }
}

/// `g_Q(λ) = E_Q[ln(1 + λ(X/m - 1))]`. Exact for discrete laws; quadrature
/// to [`QUADRATURE_TOLERANCE`] otherwise. `-inf` at `λ = 1` when `Q({0}) > 0`.
pub fn g_of_lambda(q: &BoundedDistribution, m: f64, lambda: f64) -> Result<f64, KlInfError> {
    check_baseline(m)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(KlInfError::InvalidLambda(lambda));
    }
    Ok(g_unchecked(q, m, lambda))
}

fn g_unchecked(q: &BoundedDistribution, m: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    q.expectation(
        |x| (1.0 + lambda * (x / m - 1.0)).max(0.0).ln(),
        QUADRATURE_TOLERANCE,
    )
}

/// Solution of the one-dimensional dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlInfResult {
    /// `KL_inf(Q; m)` in nats.
    pub value: f64,
    pub lambda_star: f64,
    /// Golden-section iterations after bracketing.
    pub iterations: u32,
    pub bracket_width: f64,
    /// `g_Q(λ) → -inf` as `λ → 1`, i.e. `Q({0}) > 0`.
    pub diverges_at_one: bool,
    /// `mean(Q) > m`; when false the projection is trivially zero.
    pub separated: bool,
    /// The maximum sits at the right edge of the search interval.
    pub edge_maximum: bool,
}

/// Maximises the concave `g_Q` over `[0, LAMBDA_EDGE]`: a coarse scan brackets
/// the maximiser, then golden-section search shrinks the bracket below `tol`.
pub fn klinf_dual_solve(q: &BoundedDistribution, m: f64, tol: f64) -> Result<KlInfResult, KlInfError> {
    check_baseline(m)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(KlInfError::InvalidTolerance(tol));
    }
    let diverges_at_one = q.mass_at(0.0) > 0.0;
    if q.mean() <= m {
        return Ok(KlInfResult {
            value: 0.0,
            lambda_star: 0.0,
            iterations: 0,
            bracket_width: 0.0,
            diverges_at_one,
            separated: false,
            edge_maximum: false,
        });
    }
    let g = |lambda: f64| g_unchecked(q, m, lambda);

    let step = LAMBDA_EDGE / (COARSE_POINTS - 1) as f64;
    let coarse: Vec<(f64, f64)> = (0..COARSE_POINTS)
        .map(|i| {
            let lambda = if i == COARSE_POINTS - 1 { LAMBDA_EDGE } else { i as f64 * step };
            (lambda, g(lambda))
        })
        .collect();
    let (best_idx, _) = coarse
        .iter()
        .enumerate()
        .filter(|(_, p)| p.1.is_finite())
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .ok_or(KlInfError::NonFiniteObjective)?;
    let mut lo = coarse[best_idx.saturating_sub(1)].0;
    let mut hi = coarse[(best_idx + 1).min(COARSE_POINTS - 1)].0;
    let mut best = coarse[best_idx];

    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    let mut iterations = 0u32;
    while hi - lo > tol && iterations < 500 {
        iterations += 1;
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = g(x2);
        }
        for cand in [(x1, f1), (x2, f2)] {
            if cand.1 > best.1 {
                best = cand;
            }
        }
    }
    let bracket_width = hi - lo;
    Ok(KlInfResult {
        value: best.1.max(0.0),
        lambda_star: best.0,
        iterations,
        bracket_width,
        diverges_at_one,
        separated: true,
        edge_maximum: hi >= LAMBDA_EDGE && best.0 >= LAMBDA_EDGE - 2.0 * tol.max(bracket_width),
    })
}

/// A multiplier pair of the raw dual with its objective
/// `1 + E_Q[ln(α + βX)] - α - βm` (`-inf` if `α + βx ≤ 0` on the support).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
}

impl DualPoint {
    /// Evaluates the raw dual objective for a discrete `Q`.
    pub fn evaluate(q: &BoundedDistribution, m: f64, alpha: f64, beta: f64) -> Result<Self, KlInfError> {
        check_baseline(m)?;
        let atoms = q.atoms().ok_or(KlInfError::NotDiscrete)?;
        Ok(Self {
            alpha,
            beta,
            objective: dual_objective(&atoms, m, alpha, beta),
        })
    }
}

/// Output of the brute-force dual/primal oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Dual value at the best point found.
    pub value: f64,
    pub point: DualPoint,
    /// Primal objective `E_Q[-ln p(X)]` at `p = 1/(α + βx)`.
    pub primal_value: f64,
    /// `E_Q[p(X)]`, constrained to be at most 1.
    pub mass_constraint: f64,
    /// `E_Q[X p(X)]`, constrained to be at most `m`.
    pub mean_constraint: f64,
    /// Largest constraint violation (zero when feasible).
    pub max_violation: f64,
    /// `max_violation ≤ ORACLE_FEASIBILITY_SLACK`.
    pub feasible: bool,
}

fn dual_objective(atoms: &[(f64, f64)], m: f64, alpha: f64, beta: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for &(x, q) in atoms {
        let c = alpha + beta * x;
        if c <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc.add(q * c.ln());
    }
    1.0 + acc.value() - alpha - beta * m
}

/// Independent estimate of `KL_inf(Q; m)` for a discrete `Q`.
///
/// Searches the raw dual `sup_{α,β ≥ 0} 1 + E_Q[ln(α + βX)] - α - βm` on a
/// `resolution × resolution` grid over `[0, 1.5] × [0, 1.5/m]`, refines the
/// best cell by compass search, and then rebuilds the primal candidate
/// `p(x) = 1/(α + βx)` to confirm `E_Q[p] ≤ 1` and `E_Q[Xp] ≤ m`.
pub fn klinf_primal_oracle(
    q: &BoundedDistribution,
    m: f64,
    resolution: usize,
) -> Result<OracleResult, KlInfError> {
    check_baseline(m)?;
    let atoms = q.atoms().ok_or(KlInfError::NotDiscrete)?;
    if atoms.len() > ORACLE_MAX_ATOMS {
        return Err(KlInfError::TooManyAtoms(atoms.len()));
    }
    if resolution < ORACLE_MIN_RESOLUTION {
        return Err(KlInfError::ResolutionTooLow(resolution));
    }
    let alpha_max = 1.5;
    let beta_max = 1.5 / m;
    let da = alpha_max / resolution as f64;
    let db = beta_max / resolution as f64;

    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=resolution {
        let alpha = i as f64 * da;
        for j in 0..=resolution {
            let beta = j as f64 * db;
            let v = dual_objective(&atoms, m, alpha, beta);
            if v > best.0 {
                best = (v, alpha, beta);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(KlInfError::NonFiniteObjective);
    }

    // Compass search with diagonal directions; steps halve on failure.
    let (mut value, mut alpha, mut beta) = best;
    let mut sa = da;
    let mut sb = db;
    const DIRECTIONS: [(f64, f64); 8] = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (1.0, 1.0),
        (-1.0, -1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
    ];
    let mut evaluations = 0usize;
    while (sa > 1e-15 || sb > 1e-15) && evaluations < 2_000_000 {
        let mut moved = false;
        for (ua, ub) in DIRECTIONS {
            let a = (alpha + ua * sa).max(0.0);
            let b = (beta + ub * sb).max(0.0);
            evaluations += 1;
            let v = dual_objective(&atoms, m, a, b);
            if v > value {
                value = v;
                alpha = a;
                beta = b;
                moved = true;
                break;
            }
        }
        if !moved {
            sa /= 2.0;
            sb /= 2.0;
        }
    }

    let mut mass = CompensatedSum::new();
    let mut mean = CompensatedSum::new();
    let mut primal = CompensatedSum::new();
    for &(x, qi) in &atoms {
        let c = alpha + beta * x;
        mass.add(qi / c);
        mean.add(qi * x / c);
        primal.add(qi * c.ln());
    }
    let mass_constraint = mass.value();
    let mean_constraint = mean.value();
    let max_violation = (mass_constraint - 1.0).max(mean_constraint - m).max(0.0);
    if max_violation > ORACLE_INCONSISTENCY_LIMIT {
        return Err(KlInfError::OracleInconsistency(max_violation));
    }
    Ok(OracleResult {
        value,
        point: DualPoint {
            alpha,
            beta,
            objective: value,
        },
        primal_value: primal.value(),
        mass_constraint,
        mean_constraint,
        max_violation,
        feasible: max_violation <= ORACLE_FEASIBILITY_SLACK,
    })
}

/// Uniform lower bound `2Δ²` on `KL_inf(Q; m)` over laws with mean at least
/// `m + Δ`.
pub fn pinsker_floor(delta: f64) -> f64 {
    let d = delta.max(0.0);
    2.0 * d * d
}

/// Bernoulli relative entropy `d(q || m)` for `q > m`, zero otherwise. For a
/// law on `{0, 1}` this equals `KL_inf`.
pub fn klinf_bernoulli_closed_form(q: f64, m: f64) -> f64 {
    if q <= m {
        return 0.0;
    }
    xlogx_over_y(q, m) + xlogx_over_y(1.0 - q, 1.0 - m)
}

/// `KL(Q || P)` for discrete laws, `+inf` unless `Q ≪ P`.
pub fn kl_divergence(q: &BoundedDistribution, p: &BoundedDistribution) -> Result<f64, KlInfError> {
    let qa = q.atoms().ok_or(KlInfError::NotDiscrete)?;
    if p.atoms().is_none() {
        return Err(KlInfError::NotDiscrete);
    }
    let mut acc = CompensatedSum::new();
    for (x, qi) in qa {
        let term = xlogx_over_y(qi, p.mass_at(x));
        if term.is_infinite() {
            return Ok(f64::INFINITY);
        }
        acc.add(term);
    }
    Ok(acc.value().max(0.0))
}
