//! The bounded-mean mixture Shiryaev–Roberts e-detector.
//!
//! For a baseline mean `m` and betting fraction `λ ∈ [0, 1]` the one-step
//! e-value is `L_λ(x) = 1 + λ(x/m - 1)`. Each grid point keeps a
//! Shiryaev–Roberts statistic `R_n = (1 + R_{n-1}) L_λ(X_n)`, `R_0 = 0`, and
//! the detector alarms at the first `n` with `M_n = Σ_j w_j R^(λ_j)_n ≥ γ`.
//! Under any pre-change law with mean at most `m`, `M_n - n` is a
//! supermartingale, which gives `E[T] ≥ γ`.

mod grid;
mod snapshot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::CompensatedSum;

pub use grid::{
    design_uniform_grid, LambdaGrid, UniformDesign, DEFAULT_DYADIC_DEPTH, MAX_DYADIC_DEPTH,
    MAX_GRID_POINTS,
};
pub use snapshot::{deserialize_state, serialize_state, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

/// Per-λ statistics are clamped here; any sane threshold fired long before.
pub const SATURATION_LIMIT: f64 = 1e300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("observation {0} outside [0, 1]; rescale raw data first")]
    OutOfRange(f64),
    #[error("observation is not finite: {0}")]
    NonFinite(f64),
    #[error("betting fraction {0} outside the allowed range")]
    InvalidLambda(f64),
    #[error("baseline mean {0} must lie strictly inside (0, 1)")]
    InvalidBaseline(f64),
    #[error("threshold {0} must be finite and at least 1")]
    InvalidThreshold(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid of {0} points exceeds the configured maximum")]
    GridTooLarge(usize),
    #[error("stream ended after {got} observations, expected {expected}")]
    StreamTooShort { expected: u64, got: u64 },
    #[error("maximum horizon must be at least 1")]
    ZeroHorizon,
    #[error("state holds {state} statistics but the grid has {grid} points")]
    StateMismatch { state: usize, grid: usize },
    #[error("cannot decode detector state: {0}")]
    Decode(String),
}

/// `L_λ(x) = 1 + λ(x/m - 1)`, checked. The result lies in `[1 - λ, 1/m]`.
pub fn betting_factor(lambda: f64, m: f64, x: f64) -> Result<f64, DetectorError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DetectorError::InvalidLambda(lambda));
    }
    if !(m > 0.0 && m < 1.0) {
        return Err(DetectorError::InvalidBaseline(m));
    }
    check_observation(x)?;
    Ok(factor(lambda, x / m - 1.0))
}

/// `1 + λ·centred` where `centred = x/m - 1`; exactly 1 when `x = m`.
#[inline]
pub(crate) fn factor(lambda: f64, centred: f64) -> f64 {
    (1.0 + lambda * centred).max(0.0)
}

#[inline]
fn check_observation(x: f64) -> Result<(), DetectorError> {
    if !x.is_finite() {
        Err(DetectorError::NonFinite(x))
    } else if !(0.0..=1.0).contains(&x) {
        Err(DetectorError::OutOfRange(x))
    } else {
        Ok(())
    }
}

/// Baseline, grid and threshold of one detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    m: f64,
    grid: LambdaGrid,
    gamma: f64,
}

impl DetectorConfig {
    pub fn new(m: f64, grid: LambdaGrid, gamma: f64) -> Result<Self, DetectorError> {
        if !(m > 0.0 && m < 1.0) {
            return Err(DetectorError::InvalidBaseline(m));
        }
        // γ > 1 is the meaningful regime; γ = 1 is accepted as the degenerate
        // "alarm once M_n ≥ 1" rule.
        if !(gamma.is_finite() && gamma >= 1.0) {
            return Err(DetectorError::InvalidThreshold(gamma));
        }
        Ok(Self { m, grid, gamma })
    }

    /// Default dyadic grid of the given depth.
    pub fn dyadic(m: f64, depth: u32, gamma: f64) -> Result<Self, DetectorError> {
        Self::new(m, LambdaGrid::dyadic(depth)?, gamma)
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn grid(&self) -> &LambdaGrid {
        &self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Same baseline and grid, different threshold.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self, DetectorError> {
        Self::new(self.m, self.grid.clone(), gamma)
    }
}

/// Running statistics of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    pub(crate) n: u64,
    pub(crate) r: Vec<f64>,
    pub(crate) mixture: f64,
    pub(crate) alarmed_at: Option<u64>,
    pub(crate) saturated: bool,
}

impl MixtureState {
    /// `R_0 = 0` for every grid point.
    pub fn new(config: &DetectorConfig) -> Self {
        Self {
            n: 0,
            r: vec![0.0; config.grid.len()],
            mixture: 0.0,
            alarmed_at: None,
            saturated: false,
        }
    }

    pub fn steps(&self) -> u64 {
        self.n
    }

    /// Per-λ statistics `R^(λ_j)_n`.
    pub fn statistics(&self) -> &[f64] {
        &self.r
    }

    /// Mixture statistic `M_n`.
    pub fn mixture(&self) -> f64 {
        self.mixture
    }

    pub fn alarmed_at(&self) -> Option<u64> {
        self.alarmed_at
    }

    /// True once some statistic hit [`SATURATION_LIMIT`].
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    fn reset(&mut self) {
        self.n = 0;
        self.r.iter_mut().for_each(|r| *r = 0.0);
        self.mixture = 0.0;
        self.alarmed_at = None;
        self.saturated = false;
    }

    /// One recursion step without input validation. `x` must lie in `[0, 1]`.
    #[inline]
    pub(crate) fn advance(&mut self, config: &DetectorConfig, x: f64) {
        let centred = x / config.m - 1.0;
        let mass = config.grid.mass();
        let mut acc = CompensatedSum::new();
        for ((r, &lambda), &w) in self.r.iter_mut().zip(config.grid.lambdas()).zip(mass) {
            let mut next = (1.0 + *r) * factor(lambda, centred);
            if next > SATURATION_LIMIT {
                next = SATURATION_LIMIT;
                self.saturated = true;
            }
            *r = next;
            acc.add(w * next);
        }
        self.n += 1;
        self.mixture = acc.value() / config.grid.normalizer();
        if self.alarmed_at.is_none() && self.mixture >= config.gamma {
            self.alarmed_at = Some(self.n);
        }
    }

    /// Validated recursion step. Updating after an alarm is allowed (for
    /// diagnostics); the recorded alarm time never changes.
    pub fn update(&mut self, config: &DetectorConfig, x: f64) -> Result<(), DetectorError> {
        check_observation(x)?;
        if self.r.len() != config.grid.len() {
            return Err(DetectorError::StateMismatch {
                state: self.r.len(),
                grid: config.grid.len(),
            });
        }
        self.advance(config, x);
        Ok(())
    }
}

/// Functional form of [`MixtureState::update`].
pub fn sr_update(
    state: &MixtureState,
    config: &DetectorConfig,
    x: f64,
) -> Result<MixtureState, DetectorError> {
    let mut next = state.clone();
    next.update(config, x)?;
    Ok(next)
}

/// A configured detector consuming one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    config: DetectorConfig,
    state: MixtureState,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Self {
        let state = MixtureState::new(&config);
        Self { config, state }
    }

    /// Continue from a saved state.
    pub fn resume(config: DetectorConfig, state: MixtureState) -> Result<Self, DetectorError> {
        if state.r.len() != config.grid.len() {
            return Err(DetectorError::StateMismatch {
                state: state.r.len(),
                grid: config.grid.len(),
            });
        }
        Ok(Self { config, state })
    }

    /// Feed one observation; returns the alarm time once it has fired.
    pub fn observe(&mut self, x: f64) -> Result<Option<u64>, DetectorError> {
        self.state.update(&self.config, x)?;
        Ok(self.state.alarmed_at)
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn state(&self) -> &MixtureState {
        &self.state
    }

    pub fn into_state(self) -> MixtureState {
        self.state
    }
}

/// Result of [`run_until_alarm`]; `alarm_time` is `None` for a censored run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub alarm_time: Option<u64>,
    pub final_state: MixtureState,
}

/// Runs a fresh detector over `stream` until `M_n ≥ γ` or `max_horizon`
/// observations have been consumed.
pub fn run_until_alarm<I>(
    config: &DetectorConfig,
    stream: I,
    max_horizon: u64,
) -> Result<RunOutcome, DetectorError>
where
    I: IntoIterator<Item = f64>,
{
    if max_horizon == 0 {
        return Err(DetectorError::ZeroHorizon);
    }
    let mut state = MixtureState::new(config);
    let mut iter = stream.into_iter();
    while state.n < max_horizon {
        let Some(x) = iter.next() else {
            return Err(DetectorError::StreamTooShort {
                expected: max_horizon,
                got: state.n,
            });
        };
        state.update(config, x)?;
        if state.alarmed_at.is_some() {
            break;
        }
    }
    Ok(RunOutcome {
        alarm_time: state.alarmed_at,
        final_state: state,
    })
}

/// Reusable scratch for simulation loops over trusted samples.
pub(crate) struct RunScratch {
    state: MixtureState,
}

impl RunScratch {
    pub(crate) fn new(config: &DetectorConfig) -> Self {
        Self {
            state: MixtureState::new(config),
        }
    }

    /// Alarm time of a fresh detector on `stream`, or `None` after
    /// `max_horizon` steps.
    pub(crate) fn alarm_time<I: Iterator<Item = f64>>(
        &mut self,
        config: &DetectorConfig,
        stream: I,
        max_horizon: u64,
    ) -> Option<u64> {
        self.state.reset();
        for x in stream {
            if self.state.n >= max_horizon {
                break;
            }
            self.state.advance(config, x);
            if let Some(t) = self.state.alarmed_at {
                return Some(t);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests;
