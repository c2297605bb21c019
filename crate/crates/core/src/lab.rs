//! Executable checks of the lower-bound machinery on small instances: the
//! block decomposition of an alarm-time law, the `(f_γ, c_γ)` schedule, exact
//! change-of-measure and prefix-law identities by path enumeration, a maximal
//! law-of-large-numbers probe, and projections onto finite candidate classes.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectorConfig, MixtureState};
use crate::dist::BoundedDistribution;
use crate::klinf::{kl_divergence, KlInfError};
use crate::numeric::CompensatedSum;
use crate::rng::SeedSpec;

/// Largest number of paths an enumeration check will visit.
pub const MAX_PATHS: usize = 65_536;
pub const MAX_ALPHABET: usize = 4;
pub const MAX_ENUMERATION_HORIZON: usize = 8;

/// Default `(ε, δ, b)` for the schedule checks.
pub const DEFAULT_SCHEDULE_EPSILON: f64 = 0.1;
pub const DEFAULT_SCHEDULE_DELTA: f64 = 0.5;
pub const DEFAULT_SCHEDULE_B: f64 = 0.5;

/// Thresholds at which the schedule ratios are compared with their limits.
pub const SCHEDULE_GAMMAS: [f64; 4] = [1e3, 1e6, 1e9, 1e12];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid stopping law: {0}")]
    InvalidLaw(String),
    #[error("block length must be at least 1")]
    ZeroBlockLength,
    #[error("mean alarm time {mean} is below the threshold {gamma}")]
    MeanBelowThreshold { mean: f64, gamma: f64 },
    #[error("schedule parameter out of range: {0}")]
    InvalidSchedule(String),
    #[error("law must be discrete")]
    NotDiscrete,
    #[error("alphabet has {0} letters; at most {MAX_ALPHABET} are supported")]
    AlphabetTooLarge(usize),
    #[error("horizon {0} outside 1..={MAX_ENUMERATION_HORIZON}")]
    InvalidHorizon(usize),
    #[error("change time must be at least 1")]
    InvalidChangeTime,
    #[error("post-change law puts mass {mass} on {x}, where the pre-change law has none")]
    NotAbsolutelyContinuous { x: f64, mass: f64 },
    #[error("excess drift must be positive, got {0}")]
    InvalidExcess(f64),
    #[error("at least one replication is required")]
    ZeroReplications,
    #[error("empty list of {0}")]
    Empty(&'static str),
    #[error(transparent)]
    KlInf(#[from] KlInfError),
}

/// Geometric continuation `P(T = start + j) = mass (1 - ratio) ratio^j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricTail {
    pub start: u64,
    pub mass: f64,
    pub ratio: f64,
}

/// Law of an alarm time on `{1, 2, ...}`: finitely many atoms plus an
/// optional geometric tail beyond them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoppingLawRecord", into = "StoppingLawRecord")]
pub struct StoppingLaw {
    points: Vec<(u64, f64)>,
    tail: Option<GeometricTail>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoppingLawRecord {
    #[serde(default)]
    points: Vec<(u64, f64)>,
    #[serde(default)]
    tail: Option<GeometricTail>,
}

impl TryFrom<StoppingLawRecord> for StoppingLaw {
    type Error = LabError;

    fn try_from(r: StoppingLawRecord) -> Result<Self, Self::Error> {
        StoppingLaw::new(&r.points, r.tail)
    }
}

impl From<StoppingLaw> for StoppingLawRecord {
    fn from(l: StoppingLaw) -> Self {
        StoppingLawRecord {
            points: l.points,
            tail: l.tail,
        }
    }
}

impl StoppingLaw {
    /// Validates and normalises. Total mass must be 1 within `1e-9`.
    pub fn new(points: &[(u64, f64)], tail: Option<GeometricTail>) -> Result<Self, LabError> {
        let mut merged: Vec<(u64, f64)> = Vec::with_capacity(points.len());
        let mut sorted = points.to_vec();
        sorted.sort_by_key(|p| p.0);
        for (n, p) in sorted {
            if n == 0 {
                return Err(LabError::InvalidLaw("alarm times start at 1".into()));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(LabError::InvalidLaw(format!("probability {p} at {n}")));
            }
            match merged.last_mut() {
                Some(last) if last.0 == n => last.1 += p,
                _ => merged.push((n, p)),
            }
        }
        merged.retain(|p| p.1 > 0.0);
        let mut total: f64 = merged.iter().map(|p| p.1).collect::<CompensatedSum>().value();
        if let Some(t) = tail {
            if !(t.mass > 0.0 && t.mass <= 1.0) {
                return Err(LabError::InvalidLaw(format!("tail mass {}", t.mass)));
            }
            if !(0.0..1.0).contains(&t.ratio) {
                return Err(LabError::InvalidLaw(format!("tail ratio {}", t.ratio)));
            }
            if t.start == 0 || merged.last().is_some_and(|p| p.0 >= t.start) {
                return Err(LabError::InvalidLaw("tail must start after the last atom".into()));
            }
            total += t.mass;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(LabError::InvalidLaw(format!("total mass {total}")));
        }
        merged.iter_mut().for_each(|p| p.1 /= total);
        let tail = tail.map(|t| GeometricTail {
            mass: t.mass / total,
            ..t
        });
        Ok(Self { points: merged, tail })
    }

    pub fn finite(points: &[(u64, f64)]) -> Result<Self, LabError> {
        Self::new(points, None)
    }

    /// Geometric law on `{1, 2, ...}` with the given mean.
    pub fn geometric(mean: f64) -> Result<Self, LabError> {
        if !(mean >= 1.0 && mean.is_finite()) {
            return Err(LabError::InvalidLaw(format!("geometric mean {mean}")));
        }
        Self::new(
            &[],
            Some(GeometricTail {
                start: 1,
                mass: 1.0,
                ratio: 1.0 - 1.0 / mean,
            }),
        )
    }

    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    pub fn tail(&self) -> Option<GeometricTail> {
        self.tail
    }

    pub fn mean(&self) -> f64 {
        let mut acc: CompensatedSum = self.points.iter().map(|&(n, p)| n as f64 * p).collect();
        if let Some(t) = self.tail {
            acc.add(t.mass * (t.start as f64 + t.ratio / (1.0 - t.ratio)));
        }
        acc.value()
    }

    /// `P(T ≥ n)`.
    pub fn survival(&self, n: u64) -> f64 {
        let mut acc: CompensatedSum = self.points.iter().filter(|p| p.0 >= n).map(|p| p.1).collect();
        if let Some(t) = self.tail {
            acc.add(if n <= t.start {
                t.mass
            } else {
                t.mass * t.ratio.powf((n - t.start) as f64)
            });
        }
        acc.value()
    }

    /// `P(lo ≤ T ≤ hi)`.
    pub fn mass_between(&self, lo: u64, hi: u64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        let mut acc: CompensatedSum = self
            .points
            .iter()
            .filter(|p| p.0 >= lo && p.0 <= hi)
            .map(|p| p.1)
            .collect();
        if let Some(t) = self.tail {
            let a = lo.max(t.start);
            if a <= hi {
                let first = t.mass * t.ratio.powf((a - t.start) as f64);
                acc.add(first * (1.0 - t.ratio.powf((hi - a + 1) as f64)));
            }
        }
        acc.value()
    }

    /// Last time after which only the geometric tail (or nothing) remains.
    fn finite_end(&self) -> u64 {
        let last = self.points.last().map_or(0, |p| p.0);
        self.tail.map_or(last, |t| last.max(t.start))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub r: u64,
    /// `P(T ∈ {(r-1)f + 1, ..., rf})`.
    pub x: f64,
    /// `P(T ≥ (r-1)f + 1)`.
    pub y: f64,
    /// `x / y`, absent when `y = 0`.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    /// Enumerated blocks. Past the last one every block lies in the geometric
    /// tail and repeats its ratio.
    pub blocks: Vec<Block>,
    pub r_star: u64,
    pub ratio_star: f64,
    /// The guaranteed bound `f / γ`.
    pub bound: f64,
    pub x_sum: f64,
    pub y_sum: f64,
    pub mean: f64,
    pub holds: bool,
}

/// Cuts the alarm time's support into blocks of length `f` and finds the
/// block minimising `x_r / y_r`.
pub fn block_stats(law: &StoppingLaw, f: u64, gamma: f64) -> Result<BlockStats, LabError> {
    if f == 0 {
        return Err(LabError::ZeroBlockLength);
    }
    let mean = law.mean();
    // Relative slack so that laws built to have mean exactly γ qualify.
    if !(mean >= gamma * (1.0 - 1e-12)) {
        return Err(LabError::MeanBelowThreshold { mean, gamma });
    }
    let last_block = law.finite_end().div_ceil(f).max(1) + 1;
    let mut blocks = Vec::with_capacity(last_block as usize);
    for r in 1..=last_block {
        let lo = (r - 1) * f + 1;
        let y = law.survival(lo);
        let x = law.mass_between(lo, r * f);
        blocks.push(Block {
            r,
            x,
            y,
            ratio: (y > 0.0).then(|| x / y),
        });
    }
    let mut x_sum: CompensatedSum = blocks.iter().map(|b| b.x).collect();
    let mut y_sum: CompensatedSum = blocks.iter().map(|b| b.y).collect();
    // Remaining blocks sit entirely in the tail: survival decays by ratio^f per block.
    if let Some(t) = law.tail {
        let next = law.survival(last_block * f + 1);
        x_sum.add(next);
        y_sum.add(next / (1.0 - t.ratio.powf(f as f64)));
    }
    let best = blocks
        .iter()
        .filter_map(|b| b.ratio.map(|v| (b.r, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("the first block always has y = 1");
    let bound = f as f64 / gamma;
    Ok(BlockStats {
        r_star: best.0,
        ratio_star: best.1,
        bound,
        x_sum: x_sum.value(),
        y_sum: y_sum.value(),
        mean,
        holds: best.1 <= bound * (1.0 + 1e-12),
        blocks,
    })
}

/// A random alarm-time law for property checks: up to 20 atoms on `1..=200`
/// and, half of the time, a geometric tail.
pub fn random_stopping_law<R: Rng + ?Sized>(rng: &mut R) -> StoppingLaw {
    let atoms = rng.random_range(1..=20);
    let mut points: Vec<(u64, f64)> = (0..atoms)
        .map(|_| (rng.random_range(1..=200), rng.random_range(0.01..1.0)))
        .collect();
    let tail = if rng.random_bool(0.5) {
        Some(GeometricTail {
            start: 201,
            mass: rng.random_range(0.01..1.0),
            ratio: rng.random_range(0.0..0.999),
        })
    } else {
        None
    };
    let total: f64 = points.iter().map(|p| p.1).sum::<f64>() + tail.map_or(0.0, |t| t.mass);
    points.iter_mut().for_each(|p| p.1 /= total);
    let tail = tail.map(|t| GeometricTail {
        mass: t.mass / total,
        ..t
    });
    StoppingLaw::new(&points, tail).expect("normalised by construction")
}

/// The lower-bound proof schedule at a single threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundParams {
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// `I + δ`.
    pub i_delta: f64,
    pub mu_delta: f64,
    pub b: f64,
    /// `floor((1 - ε) ln γ / I_δ)`.
    pub f_gamma: u64,
    /// `b ln γ`.
    pub c_gamma: f64,
    pub eta: f64,
    /// From here on `f_γ ≥ 1` and `c_γ / f_γ ≥ μ_δ + η`.
    pub gamma0: f64,
}

impl LowerBoundParams {
    /// `f_γ / ln γ`, tending to `(1 - ε) / I_δ`.
    pub fn block_ratio(&self) -> f64 {
        self.f_gamma as f64 / self.gamma.ln()
    }

    /// `c_γ / f_γ`, tending to `b I_δ / (1 - ε)`.
    pub fn level_ratio(&self) -> f64 {
        self.c_gamma / self.f_gamma as f64
    }

    /// `e^{c_γ} f_γ / γ`, tending to 0.
    pub fn tail_term(&self) -> f64 {
        ((self.b - 1.0) * self.gamma.ln()).exp() * self.f_gamma as f64
    }

    pub fn block_ratio_limit(&self) -> f64 {
        (1.0 - self.epsilon) / self.i_delta
    }

    pub fn level_ratio_limit(&self) -> f64 {
        self.b * self.i_delta / (1.0 - self.epsilon)
    }
}

pub fn schedule_params(
    gamma: f64,
    epsilon: f64,
    delta: f64,
    i: f64,
    mu: f64,
    b: f64,
) -> Result<LowerBoundParams, LabError> {
    let bad = |msg: String| Err(LabError::InvalidSchedule(msg));
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return bad(format!("epsilon {epsilon} not in (0, 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return bad(format!("delta {delta} not in (0, 1)"));
    }
    if !(i >= 0.0 && i.is_finite()) {
        return bad(format!("projection value {i}"));
    }
    let i_delta = i + delta;
    if !(mu > 0.0 && mu <= i_delta) {
        return bad(format!("mu {mu} not in (0, {i_delta}]"));
    }
    let b_min = (1.0 - epsilon) * mu / i_delta;
    if !(b > b_min && b < 1.0) {
        return bad(format!("b {b} not in ({b_min}, 1)"));
    }
    if !(gamma > 1.0 && gamma.is_finite()) {
        return bad(format!("gamma {gamma} must exceed 1"));
    }
    let log_gamma = gamma.ln();
    // The relative nudge keeps exact quotients such as 45.0 from flooring to 44.
    let f_gamma = ((1.0 - epsilon) * log_gamma / i_delta * (1.0 + 1e-12)).floor() as u64;
    let limit = b * i_delta / (1.0 - epsilon);
    Ok(LowerBoundParams {
        gamma,
        epsilon,
        delta,
        i_delta,
        mu_delta: mu,
        b,
        f_gamma,
        c_gamma: b * log_gamma,
        eta: (limit - mu) / 2.0,
        gamma0: (i_delta / (1.0 - epsilon)).exp(),
    })
}

/// The three schedule ratios at one threshold with their deviations from the
/// limits, relative to `max(|limit|, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRatios {
    pub gamma: f64,
    pub block_ratio: f64,
    pub level_ratio: f64,
    pub tail_term: f64,
    pub deviations: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConvergence {
    pub block_ratio_limit: f64,
    pub level_ratio_limit: f64,
    pub rows: Vec<ScheduleRatios>,
    /// Every deviation is nonincreasing along the threshold grid.
    pub monotone: bool,
    /// Largest deviation at the last threshold.
    pub final_deviation: f64,
}

/// Evaluates the schedule on increasing thresholds and compares the ratios
/// with their limits.
pub fn schedule_convergence(
    gammas: &[f64],
    epsilon: f64,
    delta: f64,
    i: f64,
    mu: f64,
    b: f64,
) -> Result<ScheduleConvergence, LabError> {
    if gammas.is_empty() {
        return Err(LabError::Empty("thresholds"));
    }
    let rel = |v: f64, limit: f64| (v - limit).abs() / limit.abs().max(1.0);
    let mut rows = Vec::with_capacity(gammas.len());
    let mut limits = (0.0, 0.0);
    for &gamma in gammas {
        let s = schedule_params(gamma, epsilon, delta, i, mu, b)?;
        limits = (s.block_ratio_limit(), s.level_ratio_limit());
        let (br, lr, tt) = (s.block_ratio(), s.level_ratio(), s.tail_term());
        rows.push(ScheduleRatios {
            gamma,
            block_ratio: br,
            level_ratio: lr,
            tail_term: tt,
            deviations: [rel(br, limits.0), rel(lr, limits.1), rel(tt, 0.0)],
        });
    }
    let monotone = rows
        .windows(2)
        .all(|w| (0..3).all(|j| w[1].deviations[j] <= w[0].deviations[j] + 1e-15));
    let final_deviation = rows.last().unwrap().deviations.iter().copied().fold(0.0, f64::max);
    Ok(ScheduleConvergence {
        block_ratio_limit: limits.0,
        level_ratio_limit: limits.1,
        rows,
        monotone,
        final_deviation,
    })
}

/// An adapted alarm rule: the decision at time `t` may only look at the
/// first `t` observations.
pub trait StoppingRule {
    /// First alarm time (1-based) along `path`, if any.
    fn first_alarm(&self, path: &[f64]) -> Option<usize>;
}

/// Alarms once the running sum reaches `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSumRule {
    pub threshold: f64,
}

impl StoppingRule for ThresholdSumRule {
    fn first_alarm(&self, path: &[f64]) -> Option<usize> {
        let mut s = 0.0;
        for (t, &x) in path.iter().enumerate() {
            s += x;
            if s >= self.threshold {
                return Some(t + 1);
            }
        }
        None
    }
}

/// The mixture detector as an alarm rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorRule(pub DetectorConfig);

impl StoppingRule for DetectorRule {
    fn first_alarm(&self, path: &[f64]) -> Option<usize> {
        let mut state = MixtureState::new(&self.0);
        for &x in path {
            state.advance(&self.0, x);
            if let Some(t) = state.alarmed_at() {
                return Some(t as usize);
            }
        }
        None
    }
}

/// Pre- and post-change probabilities on a shared alphabet.
struct Alphabet {
    letters: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
}

impl Alphabet {
    fn new(p: &BoundedDistribution, q: &BoundedDistribution) -> Result<Self, LabError> {
        if p.atoms().is_none() || q.atoms().is_none() {
            return Err(LabError::NotDiscrete);
        }
        let mut letters: Vec<f64> = p
            .atoms()
            .unwrap()
            .into_iter()
            .chain(q.atoms().unwrap())
            .map(|a| a.0)
            .collect();
        letters.sort_by(f64::total_cmp);
        letters.dedup();
        if letters.len() > MAX_ALPHABET {
            return Err(LabError::AlphabetTooLarge(letters.len()));
        }
        Ok(Self {
            pre: letters.iter().map(|&x| p.mass_at(x)).collect(),
            post: letters.iter().map(|&x| q.mass_at(x)).collect(),
            letters,
        })
    }

    fn require_absolute_continuity(&self) -> Result<(), LabError> {
        for (i, &x) in self.letters.iter().enumerate() {
            if self.post[i] > 0.0 && self.pre[i] == 0.0 {
                return Err(LabError::NotAbsolutelyContinuous { x, mass: self.post[i] });
            }
        }
        Ok(())
    }

    fn path_count(&self, n: usize) -> Result<usize, LabError> {
        if n == 0 || n > MAX_ENUMERATION_HORIZON {
            return Err(LabError::InvalidHorizon(n));
        }
        let count = self.letters.len().pow(n as u32);
        if count > MAX_PATHS {
            return Err(LabError::InvalidHorizon(n));
        }
        Ok(count)
    }

    /// Letter indices of path number `idx`, first coordinate most significant.
    fn decode(&self, mut idx: usize, digits: &mut [usize]) {
        let a = self.letters.len();
        for d in digits.iter_mut().rev() {
            *d = idx % a;
            idx /= a;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCheck {
    pub event: String,
    /// Direct probability under the changepoint law.
    pub lhs: f64,
    /// No-change expectation of the likelihood ratio at the alarm time.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfMeasureCheck {
    pub paths: usize,
    pub events: Vec<EventCheck>,
    pub max_abs_gap: f64,
}

/// Verifies `P_{k,Q}(A) = E_∞[Λ_{k,T} 1_A]` for events `A` decided by the
/// alarm time, where `Λ_{k,t} = Π_{i=k}^{t} q(X_i)/p(X_i)` (1 for `t < k`).
/// The events are `{lo ≤ T ≤ hi}` for every window inside the horizon, and
/// the same windows intersected with `{X_T = a}` for each letter.
pub fn exact_change_of_measure_check(
    p: &BoundedDistribution,
    q: &BoundedDistribution,
    k: usize,
    n: usize,
    rule: &dyn StoppingRule,
) -> Result<ChangeOfMeasureCheck, LabError> {
    if k == 0 {
        return Err(LabError::InvalidChangeTime);
    }
    let alphabet = Alphabet::new(p, q)?;
    alphabet.require_absolute_continuity()?;
    let paths = alphabet.path_count(n)?;
    let a = alphabet.letters.len();

    // Per (alarm time, letter at alarm) accumulators.
    let mut direct = vec![vec![CompensatedSum::new(); a]; n + 1];
    let mut weighted = vec![vec![CompensatedSum::new(); a]; n + 1];
    let mut digits = vec![0usize; n];
    let mut values = vec![0.0; n];
    for idx in 0..paths {
        alphabet.decode(idx, &mut digits);
        for (v, &d) in values.iter_mut().zip(&digits) {
            *v = alphabet.letters[d];
        }
        let Some(t) = rule.first_alarm(&values) else {
            continue;
        };
        let mut changed = 1.0;
        let mut null = 1.0;
        for (i, &d) in digits.iter().enumerate() {
            null *= alphabet.pre[d];
            changed *= if i + 1 >= k { alphabet.post[d] } else { alphabet.pre[d] };
        }
        let mut ratio = 1.0;
        for &d in &digits[(k - 1).min(t)..t] {
            ratio *= alphabet.post[d] / alphabet.pre[d];
        }
        direct[t][digits[t - 1]].add(changed);
        if null > 0.0 {
            weighted[t][digits[t - 1]].add(null * ratio);
        }
    }

    let mut events = Vec::new();
    for lo in 1..=n {
        for hi in lo..=n {
            let window = |acc: &[Vec<CompensatedSum>], letter: Option<usize>| {
                let mut s = CompensatedSum::new();
                for row in &acc[lo..=hi] {
                    for (j, c) in row.iter().enumerate() {
                        if letter.map_or(true, |l| l == j) {
                            s.add(c.value());
                        }
                    }
                }
                s.value()
            };
            events.push(EventCheck {
                event: format!("{lo} <= T <= {hi}"),
                lhs: window(&direct, None),
                rhs: window(&weighted, None),
            });
            for (j, x) in alphabet.letters.iter().enumerate() {
                events.push(EventCheck {
                    event: format!("{lo} <= T <= {hi}, X_T = {x}"),
                    lhs: window(&direct, Some(j)),
                    rhs: window(&weighted, Some(j)),
                });
            }
        }
    }
    let max_abs_gap = events.iter().map(|e| (e.lhs - e.rhs).abs()).fold(0.0, f64::max);
    Ok(ChangeOfMeasureCheck {
        paths,
        events,
        max_abs_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalIndependence {
    /// `P_{k,Q}(T ≥ k)`.
    pub survival: f64,
    /// Post-change cylinders `{X_k..X_n = s}` compared.
    pub events: usize,
    pub max_abs_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixCheck {
    pub prefix_len: usize,
    /// Atoms of the prefix sigma-field; every prefix event is a union of these.
    pub atoms: usize,
    pub max_abs_gap: f64,
    /// Absent when no coordinate is post-change or survival has probability 0.
    pub independence: Option<SurvivalIndependence>,
}

/// Compares the law of `X_1..X_{k-1}` under the changepoint law with the
/// no-change law, and checks that survival to `k` is independent of the
/// post-change coordinates. Everything is marginalised from full-path
/// enumeration.
pub fn prefix_equality_check(
    p: &BoundedDistribution,
    q: &BoundedDistribution,
    k: usize,
    n: usize,
    rule: &dyn StoppingRule,
) -> Result<PrefixCheck, LabError> {
    if k == 0 {
        return Err(LabError::InvalidChangeTime);
    }
    let alphabet = Alphabet::new(p, q)?;
    let paths = alphabet.path_count(n)?;
    let a = alphabet.letters.len();
    let prefix_len = (k - 1).min(n);
    let suffix_len = n - prefix_len;
    let atoms = a.pow(prefix_len as u32);
    let cylinders = a.pow(suffix_len as u32);

    let mut prefix_changed = vec![CompensatedSum::new(); atoms];
    let mut prefix_null = vec![CompensatedSum::new(); atoms];
    let mut cyl = vec![CompensatedSum::new(); cylinders];
    let mut cyl_survived = vec![CompensatedSum::new(); cylinders];
    let mut survival = CompensatedSum::new();
    let mut digits = vec![0usize; n];
    let mut values = vec![0.0; n];
    for idx in 0..paths {
        alphabet.decode(idx, &mut digits);
        for (v, &d) in values.iter_mut().zip(&digits) {
            *v = alphabet.letters[d];
        }
        let mut changed = 1.0;
        let mut null = 1.0;
        for (i, &d) in digits.iter().enumerate() {
            null *= alphabet.pre[d];
            changed *= if i + 1 >= k { alphabet.post[d] } else { alphabet.pre[d] };
        }
        prefix_changed[idx / cylinders].add(changed);
        prefix_null[idx / cylinders].add(null);
        let survived = rule.first_alarm(&values[..prefix_len]).is_none();
        cyl[idx % cylinders].add(changed);
        if survived {
            cyl_survived[idx % cylinders].add(changed);
            survival.add(changed);
        }
    }
    let max_abs_gap = prefix_changed
        .iter()
        .zip(&prefix_null)
        .map(|(c, z)| (c.value() - z.value()).abs())
        .fold(0.0, f64::max);
    let survival = survival.value();
    let independence = (suffix_len > 0 && k <= n && survival > 0.0).then(|| SurvivalIndependence {
        survival,
        events: cylinders,
        max_abs_gap: cyl
            .iter()
            .zip(&cyl_survived)
            .map(|(c, s)| (s.value() / survival - c.value()).abs())
            .fold(0.0, f64::max),
    });
    Ok(PrefixCheck {
        prefix_len,
        atoms,
        max_abs_gap,
        independence,
    })
}

/// Finitely supported law on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealDiscreteLaw {
    atoms: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl RealDiscreteLaw {
    pub fn new(atoms: &[(f64, f64)]) -> Result<Self, LabError> {
        if atoms.is_empty() {
            return Err(LabError::Empty("atoms"));
        }
        if atoms.iter().any(|&(x, w)| !(x.is_finite() && w.is_finite() && w >= 0.0)) {
            return Err(LabError::InvalidLaw("atoms need finite values and nonnegative weights".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).collect::<CompensatedSum>().value();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LabError::InvalidLaw(format!("total mass {total}")));
        }
        let atoms: Vec<(f64, f64)> = atoms.iter().map(|&(x, w)| (x, w / total)).collect();
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|a| {
                acc += a.1;
                acc
            })
            .collect();
        Ok(Self { atoms, cumulative })
    }

    pub fn point(x: f64) -> Result<Self, LabError> {
        Self::new(&[(x, 1.0)])
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(x, w)| x * w).collect::<CompensatedSum>().value()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.atoms.len() - 1);
        self.atoms[i].0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SllnPoint {
    pub n: u64,
    /// Estimate of `P(max_{m ≤ n} S_m > (μ + η) n)`.
    pub probability: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SllnProbe {
    pub mean: f64,
    pub eta: f64,
    pub points: Vec<SllnPoint>,
    /// Estimates are nonincreasing in `n` within 2 standard errors.
    pub nonincreasing: bool,
    /// The last estimate is at most 0.05.
    pub final_small: bool,
}

/// Estimates the probability that the running maximum of the partial sums
/// exceeds the excess-drift line `(μ + η) n`, at each `n` of `n_grid`.
pub fn maximal_slln_probe(
    law: &RealDiscreteLaw,
    eta: f64,
    n_grid: &[u64],
    reps: usize,
    seed: SeedSpec,
) -> Result<SllnProbe, LabError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(LabError::InvalidExcess(eta));
    }
    if reps == 0 {
        return Err(LabError::ZeroReplications);
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() || grid[0] == 0 {
        return Err(LabError::Empty("positive horizons"));
    }
    let mu = law.mean();
    let horizon = *grid.last().unwrap();
    let exceed: Vec<Vec<bool>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.with_stream(i).rng();
            let mut s = 0.0;
            let mut running_max = f64::NEG_INFINITY;
            let mut out = Vec::with_capacity(grid.len());
            let mut next = 0;
            for t in 1..=horizon {
                s += law.draw(&mut rng);
                running_max = running_max.max(s);
                if t == grid[next] {
                    out.push(running_max > (mu + eta) * t as f64);
                    next += 1;
                }
            }
            out
        })
        .collect();
    let points: Vec<SllnPoint> = grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let hits = exceed.iter().filter(|row| row[j]).count();
            let p = hits as f64 / reps as f64;
            SllnPoint {
                n,
                probability: p,
                std_error: (p * (1.0 - p) / reps as f64).sqrt(),
            }
        })
        .collect();
    let nonincreasing = points.windows(2).all(|w| {
        let se = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].probability <= w[0].probability + 2.0 * se
    });
    let final_small = points.last().unwrap().probability <= 0.05;
    Ok(SllnProbe {
        mean: mu,
        eta,
        points,
        nonincreasing,
        final_small,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteClassProjection {
    /// `min_P KL(Q || P)`, `+inf` when `Q` is singular to every candidate.
    pub value: f64,
    /// Index of the minimising candidate.
    pub argmin: Option<usize>,
    pub divergences: Vec<f64>,
}

/// Exact projection of `Q` onto a finite list of discrete candidates.
pub fn finite_class_klinf(
    q: &BoundedDistribution,
    candidates: &[BoundedDistribution],
) -> Result<FiniteClassProjection, LabError> {
    if candidates.is_empty() {
        return Err(LabError::Empty("candidates"));
    }
    let divergences = candidates
        .iter()
        .map(|p| kl_divergence(q, p))
        .collect::<Result<Vec<f64>, _>>()?;
    let best = divergences
        .iter()
        .enumerate()
        .filter(|d| d.1.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1));
    Ok(FiniteClassProjection {
        value: best.map_or(f64::INFINITY, |b| *b.1),
        argmin: best.map(|b| b.0),
        divergences,
    })
}
