//! Bounded-mean changepoint detection with a mixture of Shiryaev–Roberts
//! e-processes, plus the numerical and Monte Carlo tooling needed to check
//! its calibration and delay.
//!
//! Observations live in `[0, 1]` (use [`stream::rescale_affine`] for other
//! bounded ranges). The detector alarms once the mixture statistic reaches
//! the threshold `γ`, which keeps the mean time to a false alarm at least `γ`
//! whenever the pre-change mean is at most the baseline `m`.
//!
//! ```
//! use bmdetect::{Detector, DetectorConfig};
//!
//! let config = DetectorConfig::dyadic(0.5, 6, 100.0).unwrap();
//! let mut detector = Detector::new(config);
//! let mut alarm = None;
//! for _ in 0..1000 {
//!     if let Some(t) = detector.observe(0.9).unwrap() {
//!         alarm = Some(t);
//!         break;
//!     }
//! }
//! assert!(alarm.is_some());
//! ```

pub mod detector;
pub mod dist;
pub mod klinf;
pub mod lab;
pub mod numeric;
pub mod rng;
pub mod sim;
pub mod stream;
pub mod verify;

pub use detector::{
    run_until_alarm, Detector, DetectorConfig, DetectorError, LambdaGrid, MixtureState, RunOutcome,
};
pub use dist::{BoundedDistribution, DistributionError, DistributionSpec};
pub use klinf::{klinf_dual_solve, klinf_primal_oracle, KlInfResult};
pub use rng::SeedSpec;
pub use stream::{ChangeTime, ChangepointScenario};
