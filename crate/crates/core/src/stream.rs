//! Changepoint streams and affine rescaling of raw observations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::BoundedDistribution;
use crate::rng::{SeedSpec, StreamRng};

const PRE_CHANGE_LANE: u64 = 0x5052_45;
const POST_CHANGE_LANE: u64 = 0x504f_5354;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("change time must be at least 1")]
    ZeroChangeTime,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("interval endpoints must satisfy a < b, got a={a}, b={b}")]
    InvalidInterval { a: f64, b: f64 },
    #[error("value {x} lies outside [{a}, {b}]")]
    OutOfInterval { x: f64, a: f64, b: f64 },
}

/// First post-change index, or no change at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeTime {
    At(u64),
    Never,
}

impl ChangeTime {
    pub fn at(k: u64) -> Result<Self, StreamError> {
        if k == 0 {
            Err(StreamError::ZeroChangeTime)
        } else {
            Ok(ChangeTime::At(k))
        }
    }

    /// Whether observation `n` (1-based) is drawn from the post-change law.
    #[inline]
    pub fn is_post(self, n: u64) -> bool {
        match self {
            ChangeTime::At(k) => n >= k,
            ChangeTime::Never => false,
        }
    }
}

/// Observations `1..k-1` i.i.d. from `pre`, `k..=horizon` i.i.d. from `post`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointScenario {
    pub pre: BoundedDistribution,
    pub post: BoundedDistribution,
    pub change_time: ChangeTime,
    pub horizon: u64,
}

impl ChangepointScenario {
    pub fn new(
        pre: BoundedDistribution,
        post: BoundedDistribution,
        change_time: ChangeTime,
        horizon: u64,
    ) -> Result<Self, StreamError> {
        if horizon == 0 {
            return Err(StreamError::ZeroHorizon);
        }
        if change_time == ChangeTime::At(0) {
            return Err(StreamError::ZeroChangeTime);
        }
        Ok(Self {
            pre,
            post,
            change_time,
            horizon,
        })
    }

    /// Unbounded iterator over the scenario's observations (the horizon is
    /// ignored). Simulations use this to run until alarm.
    pub fn observations(&self, seed: SeedSpec) -> ChangepointStream<'_> {
        ChangepointStream::new(&self.pre, &self.post, self.change_time, seed)
    }
}

/// Lazily generated changepoint stream. The pre- and post-change segments
/// read from independent substreams of `seed`, so the prefix does not depend
/// on the post-change law and vice versa.
#[derive(Debug, Clone)]
pub struct ChangepointStream<'a> {
    pre: &'a BoundedDistribution,
    post: &'a BoundedDistribution,
    change_time: ChangeTime,
    n: u64,
    pre_rng: StreamRng,
    post_rng: StreamRng,
}

impl<'a> ChangepointStream<'a> {
    pub fn new(
        pre: &'a BoundedDistribution,
        post: &'a BoundedDistribution,
        change_time: ChangeTime,
        seed: SeedSpec,
    ) -> Self {
        Self {
            pre,
            post,
            change_time,
            n: 0,
            pre_rng: seed.derive(PRE_CHANGE_LANE).rng(),
            post_rng: seed.derive(POST_CHANGE_LANE).rng(),
        }
    }
}

impl Iterator for ChangepointStream<'_> {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        self.n += 1;
        let x = if self.change_time.is_post(self.n) {
            self.post.draw(&mut self.post_rng)
        } else {
            self.pre.draw(&mut self.pre_rng)
        };
        Some(x)
    }
}

/// Materialise `horizon` observations of the scenario.
pub fn generate_changepoint_stream(sc: &ChangepointScenario, seed: SeedSpec) -> Vec<f64> {
    sc.observations(seed).take(sc.horizon as usize).collect()
}

/// Maps `x ∈ [a, b]` onto `[0, 1]` via `(x - a) / (b - a)`.
pub fn rescale_affine(x: f64, a: f64, b: f64) -> Result<f64, StreamError> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(StreamError::InvalidInterval { a, b });
    }
    if !(x >= a && x <= b) {
        return Err(StreamError::OutOfInterval { x, a, b });
    }
    Ok(((x - a) / (b - a)).clamp(0.0, 1.0))
}

/// The baseline mean expressed on the rescaled unit interval.
pub fn rescale_baseline(m: f64, a: f64, b: f64) -> Result<f64, StreamError> {
    rescale_affine(m, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(x: f64) -> BoundedDistribution {
        BoundedDistribution::point(x).unwrap()
    }

    #[test]
    fn point_masses_switch_at_change_time() {
        let sc = ChangepointScenario::new(point(0.2), point(0.9), ChangeTime::at(3).unwrap(), 5).unwrap();
        assert_eq!(
            generate_changepoint_stream(&sc, SeedSpec::new(0, 0)),
            vec![0.2, 0.2, 0.9, 0.9, 0.9]
        );
    }

    #[test]
    fn immediate_change_is_all_post() {
        let sc = ChangepointScenario::new(point(0.2), point(0.9), ChangeTime::At(1), 4).unwrap();
        assert!(generate_changepoint_stream(&sc, SeedSpec::new(0, 0))
            .iter()
            .all(|&x| x == 0.9));
    }

    #[test]
    fn no_change_stream_mean() {
        let sc = ChangepointScenario::new(
            BoundedDistribution::bernoulli(0.5).unwrap(),
            point(1.0),
            ChangeTime::Never,
            100_000,
        )
        .unwrap();
        let xs = generate_changepoint_stream(&sc, SeedSpec::new(77, 0));
        assert_eq!(xs.len(), 100_000);
        assert!((crate::numeric::mean(&xs) - 0.5).abs() < 0.01);
    }

    #[test]
    fn prefix_does_not_depend_on_post_law() {
        let pre = BoundedDistribution::bernoulli(0.5).unwrap();
        let a = ChangepointScenario::new(pre.clone(), point(1.0), ChangeTime::At(40), 60).unwrap();
        let b = ChangepointScenario::new(pre.clone(), BoundedDistribution::beta(2.0, 2.0).unwrap(), ChangeTime::At(40), 60)
            .unwrap();
        let c = ChangepointScenario::new(pre, point(1.0), ChangeTime::Never, 60).unwrap();
        let seed = SeedSpec::new(5, 11);
        let (xa, xb, xc) = (
            generate_changepoint_stream(&a, seed),
            generate_changepoint_stream(&b, seed),
            generate_changepoint_stream(&c, seed),
        );
        assert_eq!(xa[..39], xb[..39]);
        assert_eq!(xa[..39], xc[..39]);
        assert!(xa[39..].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn invalid_scenarios() {
        assert_eq!(ChangeTime::at(0), Err(StreamError::ZeroChangeTime));
        assert!(ChangepointScenario::new(point(0.1), point(0.2), ChangeTime::At(1), 0).is_err());
        assert!(ChangepointScenario::new(point(0.1), point(0.2), ChangeTime::At(0), 3).is_err());
    }

    #[test]
    fn affine_rescale() {
        assert_eq!(rescale_affine(2.0, 2.0, 6.0).unwrap(), 0.0);
        assert_eq!(rescale_affine(6.0, 2.0, 6.0).unwrap(), 1.0);
        assert_eq!(rescale_affine(3.0, 2.0, 6.0).unwrap(), 0.25);
        assert_eq!(rescale_baseline(4.0, 2.0, 6.0).unwrap(), 0.5);
        assert!(matches!(rescale_affine(1.0, 2.0, 2.0), Err(StreamError::InvalidInterval { .. })));
        assert!(matches!(rescale_affine(7.0, 2.0, 6.0), Err(StreamError::OutOfInterval { .. })));
        assert!(rescale_affine(f64::NAN, 0.0, 1.0).is_err());
    }

    #[test]
    fn rescale_is_monotone() {
        let xs: Vec<f64> = (0..=100).map(|i| (-3.0 + 0.07 * i as f64).min(4.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| rescale_affine(x, -3.0, 4.0).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] <= w[1]));
    }
}
