//! Monte Carlo estimation of run lengths, detection delays and first-passage
//! times.
//!
//! Replication `i` always draws from `seed.with_stream(i)` (after any lane
//! derivation), replications run on the rayon pool and are collected in index
//! order, and every reduction is compensated. Estimates are therefore
//! bit-identical for a given seed regardless of the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{factor, DetectorConfig, DetectorError, RunScratch};
use crate::dist::BoundedDistribution;
use crate::klinf::{g_of_lambda, KlInfError};
use crate::numeric::{batch_means, CompensatedSum, DEFAULT_BATCHES};
use crate::rng::SeedSpec;
use crate::stream::{ChangeTime, ChangepointStream};

pub const DEFAULT_ARL_REPLICATIONS: usize = 2000;
pub const DEFAULT_CADD_REPLICATIONS: usize = 5000;
pub const DEFAULT_HITTING_REPLICATIONS: usize = 100_000;

/// Censoring horizon for run-length estimates, as a multiple of `γ`.
pub const ARL_HORIZON_FACTOR: f64 = 50.0;

/// Change times used to approximate the supremum over `k`.
pub const DEFAULT_K_LIST: [u64; 4] = [1, 10, 50, 200];

/// Post-change steps after which a delay run is censored.
pub const POST_CHANGE_CAP: u64 = 10_000_000;

const ARL_LANE: u64 = 0x41_524c;
const CADD_LANE: u64 = 0x43_4144_44;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("at least one replication is required")]
    ZeroReplications,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("pre-change mean {mean} exceeds the baseline {m}; this would not test the null class")]
    NullViolated { mean: f64, m: f64 },
    #[error("post-change mean {mean} does not exceed the baseline {m}")]
    NotSeparated { mean: f64, m: f64 },
    #[error("change times must be at least 1")]
    InvalidChangeTime,
    #[error("no change times given")]
    EmptyChangeTimes,
    #[error("drift {0} is not positive; the walk need not cross")]
    NonPositiveDrift(f64),
    #[error("crossing level {0} must be positive and finite")]
    InvalidLevel(f64),
    #[error("slope fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("slope fit needs at least 3 distinct thresholds")]
    DegenerateDesign,
    #[error("thresholds span {0:.2} decades; at least 2 are needed")]
    NarrowRange(f64),
    #[error("thresholds must be finite and greater than 1, got {0}")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    KlInf(#[from] KlInfError),
}

/// Censoring-aware estimate of the no-change mean run length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlEstimate {
    /// Censored runs count as `horizon`, so this is biased low.
    pub mean_run_length: f64,
    pub std_error: f64,
    pub censor_rate: f64,
    pub horizon: u64,
    pub replications: usize,
    pub gamma: f64,
}

/// Default censoring horizon `ceil(50 γ)`.
pub fn default_arl_horizon(gamma: f64) -> u64 {
    (ARL_HORIZON_FACTOR * gamma).ceil().max(1.0) as u64
}

fn check_replications(reps: usize) -> Result<(), SimError> {
    if reps == 0 {
        Err(SimError::ZeroReplications)
    } else {
        Ok(())
    }
}

/// Runs `reps` no-change streams from `p` until alarm or `horizon`.
pub fn estimate_arl(
    config: &DetectorConfig,
    p: &BoundedDistribution,
    reps: usize,
    horizon: u64,
    seed: SeedSpec,
) -> Result<ArlEstimate, SimError> {
    check_replications(reps)?;
    if horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    if p.mean() > config.m() {
        return Err(SimError::NullViolated {
            mean: p.mean(),
            m: config.m(),
        });
    }
    let runs: Vec<Option<u64>> = (0..reps as u64)
        .into_par_iter()
        .map_init(
            || RunScratch::new(config),
            |scratch, i| {
                let stream = ChangepointStream::new(p, p, ChangeTime::Never, seed.with_stream(i));
                scratch.alarm_time(config, stream, horizon)
            },
        )
        .collect();
    let censored = runs.iter().filter(|t| t.is_none()).count();
    let lengths: Vec<f64> = runs.iter().map(|t| t.unwrap_or(horizon) as f64).collect();
    let (mean, se) = batch_means(&lengths, DEFAULT_BATCHES);
    Ok(ArlEstimate {
        mean_run_length: mean,
        std_error: se,
        censor_rate: censored as f64 / reps as f64,
        horizon,
        replications: reps,
        gamma: config.gamma(),
    })
}

/// Conditional delay at a single change time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayAtK {
    pub k: u64,
    /// Mean of `T - k + 1` over runs with `T ≥ k`; `None` without survivors.
    pub conditional_mean_delay: Option<f64>,
    pub std_error: Option<f64>,
    pub survivors: usize,
    /// Survivors still silent after [`POST_CHANGE_CAP`] post-change steps,
    /// counted at the cap.
    pub censored: usize,
}

impl DelayAtK {
    pub fn is_available(&self) -> bool {
        self.conditional_mean_delay.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaddEstimate {
    pub per_k: Vec<DelayAtK>,
    /// Largest available conditional delay; `None` if every `k` lacked survivors.
    pub pooled: Option<f64>,
    /// Standard error of the entry attaining `pooled`.
    pub pooled_std_error: Option<f64>,
    pub gamma: f64,
    pub replications: usize,
}

/// Estimates the worst conditional delay over `k_list`. Change time `k` uses
/// the substreams of `seed.derive(k)`.
pub fn estimate_cadd(
    config: &DetectorConfig,
    p: &BoundedDistribution,
    q: &BoundedDistribution,
    k_list: &[u64],
    reps: usize,
    seed: SeedSpec,
) -> Result<CaddEstimate, SimError> {
    check_replications(reps)?;
    if k_list.is_empty() {
        return Err(SimError::EmptyChangeTimes);
    }
    if k_list.contains(&0) {
        return Err(SimError::InvalidChangeTime);
    }
    let m = config.m();
    if p.mean() > m {
        return Err(SimError::NullViolated { mean: p.mean(), m });
    }
    if q.mean() <= m {
        return Err(SimError::NotSeparated { mean: q.mean(), m });
    }

    let mut per_k = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let lane = seed.derive(k);
        let horizon = (k - 1).saturating_add(POST_CHANGE_CAP);
        let runs: Vec<Option<u64>> = (0..reps as u64)
            .into_par_iter()
            .map_init(
                || RunScratch::new(config),
                |scratch, i| {
                    let stream = ChangepointStream::new(p, q, ChangeTime::At(k), lane.with_stream(i));
                    scratch.alarm_time(config, stream, horizon)
                },
            )
            .collect();
        let mut censored = 0;
        let delays: Vec<f64> = runs
            .iter()
            .filter_map(|t| match t {
                Some(t) if *t >= k => Some((t - k + 1) as f64),
                Some(_) => None,
                None => {
                    censored += 1;
                    Some(POST_CHANGE_CAP as f64)
                }
            })
            .collect();
        let (mean, se) = if delays.is_empty() {
            (None, None)
        } else {
            let (mean, se) = batch_means(&delays, DEFAULT_BATCHES);
            (Some(mean), Some(se))
        };
        per_k.push(DelayAtK {
            k,
            conditional_mean_delay: mean,
            std_error: se,
            survivors: delays.len(),
            censored,
        });
    }
    let worst = per_k
        .iter()
        .filter(|d| d.is_available())
        .max_by(|a, b| a.conditional_mean_delay.unwrap().total_cmp(&b.conditional_mean_delay.unwrap()));
    Ok(CaddEstimate {
        pooled: worst.and_then(|d| d.conditional_mean_delay),
        pooled_std_error: worst.and_then(|d| d.std_error),
        per_k,
        gamma: config.gamma(),
        replications: reps,
    })
}

/// First-passage estimate for the walk `S_t = Σ ln L_λ(X_i)`, `X_i ~ Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub u: f64,
    pub mean_tau: f64,
    pub std_error: f64,
    /// Drift `E_Q[ln L_λ(X)]` in nats per step.
    pub mu: f64,
    /// Upper bound `ln(1/m)` on a single increment.
    pub b: f64,
    /// `u / μ`.
    pub lower_bracket: f64,
    /// `(u + b) / μ`.
    pub upper_bracket: f64,
    pub replications: usize,
}

impl HittingEstimate {
    /// Whether the estimate lies in the analytic bracket widened by `z` standard errors.
    pub fn within_bracket(&self, z: f64) -> bool {
        self.mean_tau >= self.lower_bracket - z * self.std_error
            && self.mean_tau <= self.upper_bracket + z * self.std_error
    }
}

pub fn estimate_hitting_time(
    q: &BoundedDistribution,
    lambda: f64,
    m: f64,
    u: f64,
    reps: usize,
    seed: SeedSpec,
) -> Result<HittingEstimate, SimError> {
    check_replications(reps)?;
    if !(u > 0.0 && u.is_finite()) {
        return Err(SimError::InvalidLevel(u));
    }
    let mu = g_of_lambda(q, m, lambda)?;
    if !(mu > 0.0) {
        return Err(SimError::NonPositiveDrift(mu));
    }
    let b = (1.0 / m).ln();
    let taus: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.with_stream(i).rng();
            let mut walk = 0.0;
            let mut t = 0u64;
            while walk < u {
                let x: f64 = q.draw(&mut rng);
                walk += factor(lambda, x / m - 1.0).ln();
                t += 1;
            }
            t as f64
        })
        .collect();
    let (mean_tau, std_error) = batch_means(&taus, DEFAULT_BATCHES);
    Ok(HittingEstimate {
        u,
        mean_tau,
        std_error,
        mu,
        b,
        lower_bracket: u / mu,
        upper_bracket: (u + b) / mu,
        replications: reps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares fit of delay against `ln γ` over `(γ, delay)` points.
pub fn slope_fit(points: &[(f64, f64)]) -> Result<SlopeFit, SimError> {
    if points.len() < 3 {
        return Err(SimError::TooFewPoints(points.len()));
    }
    if let Some(&(g, _)) = points.iter().find(|(g, _)| !(g.is_finite() && *g > 1.0)) {
        return Err(SimError::InvalidThreshold(g));
    }
    let mut gammas: Vec<f64> = points.iter().map(|p| p.0).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    if gammas.len() < 3 {
        return Err(SimError::DegenerateDesign);
    }
    let decades = (gammas[gammas.len() - 1] / gammas[0]).log10();
    if decades < 2.0 - 1e-12 {
        return Err(SimError::NarrowRange(decades));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let x_bar = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    let y_bar = points.iter().map(|p| p.1).collect::<CompensatedSum>().value() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_bar).powi(2)).collect::<CompensatedSum>().value();
    let sxy: f64 = xs
        .iter()
        .zip(points)
        .map(|(x, p)| (x - x_bar) * (p.1 - y_bar))
        .collect::<CompensatedSum>()
        .value();
    let slope = sxy / sxx;
    let intercept = y_bar - slope * x_bar;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - y_bar).powi(2)).collect::<CompensatedSum>().value();
    let ss_res: f64 = xs
        .iter()
        .zip(points)
        .map(|(x, p)| (p.1 - intercept - slope * x).powi(2))
        .collect::<CompensatedSum>()
        .value();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Parameters of a threshold sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub gammas: Vec<f64>,
    pub k_list: Vec<u64>,
    /// Zero skips the run-length estimate.
    pub arl_replications: usize,
    pub cadd_replications: usize,
    /// Censoring horizon as a multiple of `γ`.
    pub horizon_factor: f64,
}

impl SweepPlan {
    pub fn new(gammas: Vec<f64>) -> Self {
        Self {
            gammas,
            k_list: DEFAULT_K_LIST.to_vec(),
            arl_replications: DEFAULT_ARL_REPLICATIONS,
            cadd_replications: DEFAULT_CADD_REPLICATIONS,
            horizon_factor: ARL_HORIZON_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub arl: Option<ArlEstimate>,
    pub arl_seed: SeedSpec,
    pub cadd: CaddEstimate,
    pub cadd_seed: SeedSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Fit of pooled delay against `ln γ`; absent when the thresholds do not
    /// support a fit.
    pub slope: Option<SlopeFit>,
    pub slope_error: Option<String>,
}

/// ARL and CADD at every threshold of `plan`. Threshold `γ` reads from lanes
/// derived from its bit pattern, so a row does not depend on its neighbours.
pub fn sweep(
    config: &DetectorConfig,
    p: &BoundedDistribution,
    q: &BoundedDistribution,
    plan: &SweepPlan,
    seed: SeedSpec,
) -> Result<SweepResult, SimError> {
    let mut rows = Vec::with_capacity(plan.gammas.len());
    for &gamma in &plan.gammas {
        let cfg = config.with_gamma(gamma)?;
        let arl_seed = seed.derive(ARL_LANE).derive(gamma.to_bits());
        let cadd_seed = seed.derive(CADD_LANE).derive(gamma.to_bits());
        let arl = if plan.arl_replications > 0 {
            let horizon = (plan.horizon_factor * gamma).ceil().max(1.0) as u64;
            Some(estimate_arl(&cfg, p, plan.arl_replications, horizon, arl_seed)?)
        } else {
            None
        };
        let cadd = estimate_cadd(&cfg, p, q, &plan.k_list, plan.cadd_replications, cadd_seed)?;
        rows.push(SweepRow {
            gamma,
            arl,
            arl_seed,
            cadd,
            cadd_seed,
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.cadd.pooled.map(|d| (r.gamma, d)))
        .collect();
    let (slope, slope_error) = match slope_fit(&points) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SweepResult {
        rows,
        slope,
        slope_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::run_until_alarm;
    use crate::klinf::{klinf_bernoulli_closed_form, klinf_dual_solve, DEFAULT_TOLERANCE};

    fn bern(p: f64) -> BoundedDistribution {
        BoundedDistribution::bernoulli(p).unwrap()
    }

    fn cfg(gamma: f64) -> DetectorConfig {
        DetectorConfig::dyadic(0.5, 6, gamma).unwrap()
    }

    #[test]
    fn arl_of_constant_stream_is_exact() {
        let p = BoundedDistribution::point(0.5).unwrap();
        let est = estimate_arl(&cfg(2.0), &p, 100, 100, SeedSpec::new(1, 0)).unwrap();
        assert_eq!(est.mean_run_length, 2.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.censor_rate, 0.0);
    }

    #[test]
    fn arl_is_calibrated() {
        let est = estimate_arl(&cfg(100.0), &bern(0.5), 2000, default_arl_horizon(100.0), SeedSpec::new(2, 0)).unwrap();
        assert!(est.mean_run_length >= 100.0 - 2.0 * est.std_error, "{est:?}");
        assert!(est.censor_rate < 0.01);
    }

    #[test]
    fn arl_censoring_counts_horizon() {
        let p = BoundedDistribution::point(0.5).unwrap();
        let est = estimate_arl(&cfg(50.0), &p, 10, 20, SeedSpec::new(3, 0)).unwrap();
        assert_eq!(est.mean_run_length, 20.0);
        assert_eq!(est.censor_rate, 1.0);
    }

    #[test]
    fn arl_errors() {
        let c = cfg(10.0);
        assert_eq!(estimate_arl(&c, &bern(0.5), 0, 10, SeedSpec::new(0, 0)), Err(SimError::ZeroReplications));
        assert!(matches!(
            estimate_arl(&c, &bern(0.6), 10, 10, SeedSpec::new(0, 0)),
            Err(SimError::NullViolated { .. })
        ));
        assert_eq!(estimate_arl(&c, &bern(0.5), 10, 0, SeedSpec::new(0, 0)), Err(SimError::ZeroHorizon));
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let arl = estimate_arl(&cfg(30.0), &bern(0.4), 300, 1500, SeedSpec::new(9, 0)).unwrap();
                let cadd = estimate_cadd(&cfg(30.0), &bern(0.5), &bern(0.8), &[1, 20], 300, SeedSpec::new(9, 0)).unwrap();
                let hit = estimate_hitting_time(&bern(0.75), 0.5, 0.5, 2.0, 300, SeedSpec::new(9, 0)).unwrap();
                (arl, cadd, hit)
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn cadd_at_one_is_pure_post_change_delay() {
        let c = cfg(100.0);
        let p = bern(0.5);
        let q = bern(0.75);
        let seed = SeedSpec::new(4, 0);
        let est = estimate_cadd(&c, &p, &q, &[1], 200, seed).unwrap();
        assert_eq!(est.per_k[0].survivors, 200);
        let direct: Vec<f64> = (0..200u64)
            .map(|i| {
                let stream = ChangepointStream::new(&p, &q, ChangeTime::At(1), seed.derive(1).with_stream(i));
                run_until_alarm(&c, stream, u64::MAX).unwrap().alarm_time.unwrap() as f64
            })
            .collect();
        assert!((est.per_k[0].conditional_mean_delay.unwrap() - crate::numeric::mean(&direct)).abs() < 1e-12);
        assert_eq!(est.pooled, est.per_k[0].conditional_mean_delay);
    }

    #[test]
    fn cadd_flags_change_times_without_survivors() {
        // M_n = n under the constant stream, so every run alarms at 2.
        let p = BoundedDistribution::point(0.5).unwrap();
        let est = estimate_cadd(&cfg(2.0), &p, &bern(0.9), &[1, 5], 20, SeedSpec::new(5, 0)).unwrap();
        assert!(est.per_k[0].is_available());
        assert!(!est.per_k[1].is_available());
        assert_eq!(est.per_k[1].survivors, 0);
        assert_eq!(est.pooled, est.per_k[0].conditional_mean_delay);
    }

    #[test]
    fn cadd_errors() {
        let c = cfg(10.0);
        let s = SeedSpec::new(0, 0);
        assert_eq!(estimate_cadd(&c, &bern(0.5), &bern(0.7), &[0], 10, s), Err(SimError::InvalidChangeTime));
        assert_eq!(estimate_cadd(&c, &bern(0.5), &bern(0.7), &[], 10, s), Err(SimError::EmptyChangeTimes));
        assert!(matches!(
            estimate_cadd(&c, &bern(0.5), &bern(0.5), &[1], 10, s),
            Err(SimError::NotSeparated { .. })
        ));
        assert!(matches!(
            estimate_cadd(&c, &bern(0.6), &bern(0.7), &[1], 10, s),
            Err(SimError::NullViolated { .. })
        ));
    }

    #[test]
    fn delay_constant_at_moderate_threshold() {
        let est = estimate_cadd(&cfg(1e4), &bern(0.5), &bern(0.75), &DEFAULT_K_LIST, 2000, SeedSpec::new(6, 0)).unwrap();
        let target = 1.0 / klinf_bernoulli_closed_form(0.75, 0.5);
        let ratio = est.pooled.unwrap() / 1e4f64.ln();
        assert!((ratio / target - 1.0).abs() < 0.25, "ratio {ratio}, target {target}");
    }

    #[test]
    fn later_changes_are_caught_no_slower() {
        // A surviving pre-change history leaves a positive statistic behind,
        // so the conditional delay can only shrink as the change moves later.
        let est = estimate_cadd(&cfg(1e3), &bern(0.5), &bern(0.75), &[1, 50, 200], 4000, SeedSpec::new(7, 0)).unwrap();
        let d: Vec<(f64, f64)> = est
            .per_k
            .iter()
            .map(|e| (e.conditional_mean_delay.unwrap(), e.std_error.unwrap()))
            .collect();
        for w in d.windows(2) {
            let pooled_se = (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
            assert!(w[1].0 <= w[0].0 + 2.0 * pooled_se, "{d:?}");
        }
        assert_eq!(est.pooled, Some(d[0].0));
    }

    #[test]
    fn hitting_time_examples() {
        let q = BoundedDistribution::point(1.0).unwrap();
        let est = estimate_hitting_time(&q, 0.5, 0.5, 1.5f64.ln(), 50, SeedSpec::new(0, 0)).unwrap();
        assert_eq!(est.mean_tau, 1.0);

        let est = estimate_hitting_time(&bern(0.75), 0.5, 0.5, 4.6, 20_000, SeedSpec::new(8, 0)).unwrap();
        assert!((est.lower_bracket - 35.165).abs() < 0.01);
        assert!((est.upper_bracket - 40.464).abs() < 0.01);
        assert!(est.within_bracket(2.0), "{est:?}");

        let est = estimate_hitting_time(&bern(0.75), 0.5, 0.5, 1e-9, 100, SeedSpec::new(0, 0)).unwrap();
        assert!(est.mean_tau >= 1.0);
    }

    #[test]
    fn hitting_time_errors() {
        let s = SeedSpec::new(0, 0);
        assert!(matches!(
            estimate_hitting_time(&bern(0.4), 0.5, 0.5, 1.0, 10, s),
            Err(SimError::NonPositiveDrift(_))
        ));
        assert!(matches!(
            estimate_hitting_time(&bern(0.75), 1.0, 0.5, 1.0, 10, s),
            Err(SimError::NonPositiveDrift(_))
        ));
        assert_eq!(estimate_hitting_time(&bern(0.75), 0.5, 0.5, 0.0, 10, s), Err(SimError::InvalidLevel(0.0)));
    }

    #[test]
    fn slope_fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = [1e2, 1e3, 1e4, 1e5].iter().map(|&g: &f64| (g, 7.645 * g.ln() + 3.0)).collect();
        let fit = slope_fit(&pts).unwrap();
        assert!((fit.slope - 7.645).abs() < 1e-10);
        assert!((fit.intercept - 3.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slope_fit_errors() {
        assert_eq!(slope_fit(&[(1e2, 1.0), (1e4, 2.0)]), Err(SimError::TooFewPoints(2)));
        assert_eq!(
            slope_fit(&[(1e2, 1.0), (1e2, 2.0), (1e4, 2.0)]),
            Err(SimError::DegenerateDesign)
        );
        assert!(matches!(
            slope_fit(&[(10.0, 1.0), (20.0, 2.0), (50.0, 2.0)]),
            Err(SimError::NarrowRange(_))
        ));
    }

    #[test]
    fn sweep_rows_are_order_independent() {
        let plan = SweepPlan {
            arl_replications: 200,
            cadd_replications: 200,
            k_list: vec![1, 10],
            ..SweepPlan::new(vec![20.0, 200.0])
        };
        let seed = SeedSpec::new(10, 0);
        let a = sweep(&cfg(20.0), &bern(0.5), &bern(0.75), &plan, seed).unwrap();
        let reversed = SweepPlan {
            gammas: vec![200.0, 20.0],
            ..plan.clone()
        };
        let b = sweep(&cfg(20.0), &bern(0.5), &bern(0.75), &reversed, seed).unwrap();
        assert_eq!(a.rows[0], b.rows[1]);
        assert_eq!(a.rows[1], b.rows[0]);
        assert!(a.slope.is_none() && a.slope_error.is_some());
        assert!(a.rows[1].cadd.pooled >= a.rows[0].cadd.pooled);
    }

    #[test]
    fn reference_slope_is_reciprocal_projection() {
        let r = klinf_dual_solve(&bern(0.75), 0.5, DEFAULT_TOLERANCE).unwrap();
        assert!((1.0 / r.value - 7.645).abs() < 1e-3);
    }
}
