//! Self-check suites run by `bmdetect verify`.
//!
//! `fast` covers the exact and cheap randomized invariants; `full` adds the
//! Monte Carlo calibration and delay checks at their reference sizes.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{
    betting_factor, deserialize_state, serialize_state, DetectorConfig, MixtureState,
};
use crate::dist::BoundedDistribution;
use crate::klinf::{
    klinf_bernoulli_closed_form, klinf_dual_solve, klinf_primal_oracle, pinsker_floor, DEFAULT_TOLERANCE,
};
use crate::lab::{
    block_stats, exact_change_of_measure_check, prefix_equality_check, random_stopping_law, schedule_convergence,
    DetectorRule, ThresholdSumRule, DEFAULT_SCHEDULE_B, DEFAULT_SCHEDULE_DELTA, DEFAULT_SCHEDULE_EPSILON,
    SCHEDULE_GAMMAS,
};
use crate::numeric::batch_means;
use crate::rng::SeedSpec;
use crate::sim::{default_arl_horizon, estimate_arl, estimate_cadd, estimate_hitting_time, slope_fit};
use crate::stream::{ChangeTime, ChangepointStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Fast,
    Full,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Suite::Fast),
            "full" => Ok(Suite::Full),
            other => Err(format!("unknown suite `{other}` (expected fast or full)")),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Fast => "fast",
            Suite::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seed: SeedSpec,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl VerifyReport {
    /// Plain-text table, one line per check; seeds are shown for failures.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status}  {:width$}  {:>8.2}s  {}", c.name, c.seconds, c.detail));
            if !c.passed {
                out.push_str(&format!("  [seed {} stream {}]", c.seed.master_seed, c.seed.stream_id));
            }
            out.push('\n');
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{} checks, {} failed\n", self.checks.len(), failed));
        out
    }
}

type CheckFn = fn(SeedSpec) -> Result<String, String>;

pub fn run_suite(suite: Suite, seed: SeedSpec) -> VerifyReport {
    let mut checks: Vec<(&str, CheckFn)> = vec![
        ("betting factor scale bound", check_factor_bounds),
        ("recursion matches definition", check_recursion),
        ("snapshot round trip", check_snapshot),
        ("two-point projection exactness", check_two_point),
        ("dual and oracle agree", check_duality),
        ("pinsker floor", check_pinsker),
        ("change of measure by enumeration", check_change_of_measure),
        ("prefix law by enumeration", check_prefix_law),
        ("block lemma", check_blocks),
        ("schedule limits", check_schedule),
        ("null drift of the mixture", check_drift),
    ];
    if suite == Suite::Full {
        checks.extend([
            ("arl calibration", check_arl as CheckFn),
            ("hitting-time bracket", check_hitting),
            ("delay constant trend", check_slope),
            ("conditional delay across change times", check_k_invariance),
        ]);
    }
    let outcomes: Vec<CheckOutcome> = checks
        .into_iter()
        .enumerate()
        .map(|(i, (name, f))| {
            let seed = seed.derive(i as u64);
            let start = Instant::now();
            let result = f(seed);
            let seconds = start.elapsed().as_secs_f64();
            let (passed, detail) = match result {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckOutcome {
                name: name.to_string(),
                passed,
                detail,
                seed,
                seconds,
            }
        })
        .collect();
    VerifyReport {
        suite,
        passed: outcomes.iter().all(|c| c.passed),
        checks: outcomes,
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bern(p: f64) -> BoundedDistribution {
    BoundedDistribution::bernoulli(p).expect("valid bernoulli")
}

fn random_discrete<R: Rng>(rng: &mut R) -> BoundedDistribution {
    let atoms = rng.random_range(1..=6);
    let raw: Vec<(f64, f64)> = (0..atoms).map(|_| (rng.random::<f64>(), rng.random_range(0.05..1.0))).collect();
    let total: f64 = raw.iter().map(|a| a.1).sum();
    let atoms: Vec<(f64, f64)> = raw.iter().map(|&(x, w)| (x, w / total)).collect();
    BoundedDistribution::discrete(&atoms).expect("valid atoms")
}

fn check_factor_bounds(seed: SeedSpec) -> Result<String, String> {
    let mut rng = seed.rng();
    for _ in 0..100_000 {
        let lambda: f64 = rng.random();
        let m = rng.random_range(0.01..0.99);
        let x: f64 = rng.random();
        let l = betting_factor(lambda, m, x).map_err(|e| e.to_string())?;
        ensure(l >= 1.0 - lambda - 1e-12 && l <= 1.0 / m + 1e-12, || {
            format!("L = {l} outside [{}, {}] at λ={lambda}, m={m}, x={x}", 1.0 - lambda, 1.0 / m)
        })?;
    }
    Ok("100000 random triples".into())
}

fn check_recursion(seed: SeedSpec) -> Result<String, String> {
    let mut rng = seed.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(0.05..0.95);
        let config = DetectorConfig::dyadic(m, 4, 1e300).map_err(|e| e.to_string())?;
        let len = rng.random_range(1..=12);
        let xs: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let mut state = MixtureState::new(&config);
        for (n, &x) in xs.iter().enumerate() {
            state.update(&config, x).map_err(|e| e.to_string())?;
            for (j, &lambda) in config.grid().lambdas().iter().enumerate() {
                let direct: f64 = (0..=n)
                    .map(|k| {
                        xs[k..=n]
                            .iter()
                            .map(|&x| 1.0 + lambda * (x / m - 1.0))
                            .product::<f64>()
                    })
                    .sum();
                let got = state.statistics()[j];
                let rel = (got - direct).abs() / direct.abs().max(f64::MIN_POSITIVE);
                worst = worst.max(if direct == 0.0 { got.abs() } else { rel });
            }
        }
    }
    ensure(worst <= 1e-10, || format!("relative error {worst:e}"))?;
    Ok(format!("100 streams, worst relative error {worst:.1e}"))
}

fn check_snapshot(seed: SeedSpec) -> Result<String, String> {
    let config = DetectorConfig::dyadic(0.4, 6, 1e6).map_err(|e| e.to_string())?;
    let p = bern(0.4);
    let mut state = MixtureState::new(&config);
    for x in ChangepointStream::new(&p, &p, ChangeTime::Never, seed).take(10_000) {
        state.update(&config, x).map_err(|e| e.to_string())?;
    }
    let bytes = serialize_state(&state);
    let back = deserialize_state(&bytes).map_err(|e| e.to_string())?;
    ensure(back == state, || "decoded state differs".into())?;
    ensure(deserialize_state(&bytes[..bytes.len() - 1]).is_err(), || "truncation accepted".into())?;
    Ok(format!("{} bytes after 10000 updates", bytes.len()))
}

fn check_two_point(seed: SeedSpec) -> Result<String, String> {
    let mut rng = seed.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = rng.random_range(0.05..0.9);
        let q = rng.random_range(m + 0.02..0.99);
        let r = klinf_dual_solve(&bern(q), m, DEFAULT_TOLERANCE).map_err(|e| e.to_string())?;
        worst = worst.max((r.value - klinf_bernoulli_closed_form(q, m)).abs());
    }
    ensure(worst <= 1e-9, || format!("max error {worst:e}"))?;
    Ok(format!("20 pairs, max error {worst:.1e}"))
}

fn check_duality(seed: SeedSpec) -> Result<String, String> {
    let mut rng = seed.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let q = random_discrete(&mut rng);
        let m = rng.random_range(0.1..0.9);
        let dual = klinf_dual_solve(&q, m, DEFAULT_TOLERANCE).map_err(|e| e.to_string())?;
        let oracle = klinf_primal_oracle(&q, m, 1000).map_err(|e| e.to_string())?;
        ensure(oracle.feasible, || format!("oracle point infeasible for {q}, m={m}"))?;
        worst = worst.max((dual.value - oracle.value).abs());
    }
    ensure(worst <= 1e-5, || format!("max gap {worst:e}"))?;
    Ok(format!("10 random laws, max gap {worst:.1e}"))
}

fn check_pinsker(seed: SeedSpec) -> Result<String, String> {
    let mut rng = seed.rng();
    let mut solved = 0;
    while solved < 50 {
        let q = random_discrete(&mut rng);
        let m = rng.random_range(0.01..0.99);
        if q.mean() <= m {
            continue;
        }
        let v = klinf_dual_solve(&q, m, DEFAULT_TOLERANCE).map_err(|e| e.to_string())?.value;
        let floor = pinsker_floor(q.mean() - m);
        ensure(v >= floor, || format!("{v} < {floor} for {q}, m={m}"))?;
        solved += 1;
    }
    Ok("50 random laws".into())
}

fn check_change_of_measure(_seed: SeedSpec) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let laws = [bern(0.5), bern(0.3), bern(0.75), bern(0.9)];
    for p in &laws[..2] {
        for q in &laws {
            for n in 1..=8 {
                for k in 1..=n + 1 {
                    for threshold in [1.0, 2.0, 3.0] {
                        let rule = ThresholdSumRule { threshold };
                        let c = exact_change_of_measure_check(p, q, k, n, &rule).map_err(|e| e.to_string())?;
                        worst = worst.max(c.max_abs_gap);
                        instances += 1;
                    }
                }
            }
        }
    }
    let rule = DetectorRule(DetectorConfig::dyadic(0.5, 3, 5.0).map_err(|e| e.to_string())?);
    for k in 1..=8 {
        let c = exact_change_of_measure_check(&bern(0.5), &bern(0.8), k, 8, &rule).map_err(|e| e.to_string())?;
        worst = worst.max(c.max_abs_gap);
        instances += 1;
    }
    ensure(worst <= 1e-12, || format!("max gap {worst:e}"))?;
    Ok(format!("{instances} instances, max gap {worst:.1e}"))
}

fn check_prefix_law(_seed: SeedSpec) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let rule = ThresholdSumRule { threshold: 2.0 };
    for (p, q) in [(0.5, 0.75), (0.3, 0.9), (0.5, 0.5)] {
        for n in 1..=8 {
            for k in 1..=n + 1 {
                let c = prefix_equality_check(&bern(p), &bern(q), k, n, &rule).map_err(|e| e.to_string())?;
                worst = worst.max(c.max_abs_gap);
                if let Some(ind) = c.independence {
                    worst = worst.max(ind.max_abs_gap);
                }
                instances += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max gap {worst:e}"))?;
    Ok(format!("{instances} instances, max gap {worst:.1e}"))
}

fn check_blocks(seed: SeedSpec) -> Result<String, String> {
    let mut rng = seed.rng();
    for i in 0..1000 {
        let law = random_stopping_law(&mut rng);
        let f = rng.random_range(1..=50u64);
        let gamma = law.mean() * rng.random_range(0.2..=1.0);
        let s = block_stats(&law, f, gamma).map_err(|e| e.to_string())?;
        ensure(s.holds, || format!("law {i}: ratio {} > {}", s.ratio_star, s.bound))?;
        ensure((s.x_sum - 1.0).abs() <= 1e-12, || format!("law {i}: block masses sum to {}", s.x_sum))?;
    }
    Ok("1000 random laws".into())
}

fn check_schedule(_seed: SeedSpec) -> Result<String, String> {
    let i = klinf_bernoulli_closed_form(0.75, 0.5);
    let c = schedule_convergence(
        &SCHEDULE_GAMMAS,
        DEFAULT_SCHEDULE_EPSILON,
        DEFAULT_SCHEDULE_DELTA,
        i,
        i,
        DEFAULT_SCHEDULE_B,
    )
    .map_err(|e| e.to_string())?;
    ensure(c.monotone, || "deviations not shrinking".into())?;
    ensure(c.final_deviation < 0.05, || format!("deviation {} at 1e12", c.final_deviation))?;
    Ok(format!("deviation {:.2}% at 1e12", 100.0 * c.final_deviation))
}

fn check_drift(seed: SeedSpec) -> Result<String, String> {
    let config = DetectorConfig::dyadic(0.5, 6, 1e300).map_err(|e| e.to_string())?;
    let p = bern(0.5);
    let reps = 2000u64;
    let n = 100;
    let excess: Vec<f64> = (0..reps)
        .map(|i| {
            let mut state = MixtureState::new(&config);
            for x in ChangepointStream::new(&p, &p, ChangeTime::Never, seed.with_stream(i)).take(n) {
                state.update(&config, x).expect("valid sample");
            }
            state.mixture() - n as f64
        })
        .collect();
    let (mean, se) = batch_means(&excess, 50);
    ensure(mean <= 4.0 * se, || format!("mean excess {mean} > 4 se ({se})"))?;
    Ok(format!("E[M_100 - 100] = {mean:.3} (se {se:.3})"))
}

fn check_arl(seed: SeedSpec) -> Result<String, String> {
    let laws = [
        bern(0.5),
        BoundedDistribution::point(0.5).expect("valid point"),
        BoundedDistribution::beta(2.0, 2.0).expect("valid beta"),
    ];
    let mut worst = f64::INFINITY;
    for (gi, gamma) in [50.0, 100.0, 500.0].into_iter().enumerate() {
        let config = DetectorConfig::dyadic(0.5, 6, gamma).map_err(|e| e.to_string())?;
        for (pi, p) in laws.iter().enumerate() {
            let est = estimate_arl(&config, p, 2000, default_arl_horizon(gamma), seed.derive((gi * 3 + pi) as u64))
                .map_err(|e| e.to_string())?;
            let margin = (est.mean_run_length + 2.0 * est.std_error) / gamma;
            worst = worst.min(margin);
            ensure(est.mean_run_length >= gamma - 2.0 * est.std_error, || {
                format!("γ={gamma}, {p}: ARL {} (se {})", est.mean_run_length, est.std_error)
            })?;
        }
    }
    Ok(format!("9 cases, smallest (ARL + 2se)/γ = {worst:.3}"))
}

fn check_hitting(seed: SeedSpec) -> Result<String, String> {
    for (i, u) in [2.3, 4.6, 9.2].into_iter().enumerate() {
        let est = estimate_hitting_time(&bern(0.75), 0.5, 0.5, u, 100_000, seed.derive(i as u64))
            .map_err(|e| e.to_string())?;
        ensure(est.within_bracket(2.0), || {
            format!(
                "u={u}: {} not in [{}, {}] ± 2·{}",
                est.mean_tau, est.lower_bracket, est.upper_bracket, est.std_error
            )
        })?;
    }
    Ok("u ∈ {2.3, 4.6, 9.2}".into())
}

fn check_slope(seed: SeedSpec) -> Result<String, String> {
    let (p, q) = (bern(0.5), bern(0.75));
    let target = 1.0 / klinf_bernoulli_closed_form(0.75, 0.5);
    let gammas = [1e2, 1e3, 1e4, 1e5];
    let mut points = Vec::new();
    for (i, &gamma) in gammas.iter().enumerate() {
        let config = DetectorConfig::dyadic(0.5, 6, gamma).map_err(|e| e.to_string())?;
        let est = estimate_cadd(&config, &p, &q, &[1, 10, 50, 200], 5000, seed.derive(i as u64))
            .map_err(|e| e.to_string())?;
        points.push((gamma, est.pooled.ok_or("no survivors")?));
    }
    let fit = slope_fit(&points).map_err(|e| e.to_string())?;
    let last = points[3].1 / 1e5f64.ln();
    ensure((fit.slope / target - 1.0).abs() <= 0.15, || {
        format!("slope {:.3} vs {target:.3}", fit.slope)
    })?;
    ensure(last >= 0.7 * target, || format!("delay/ln γ = {last:.3} at 1e5"))?;
    Ok(format!("slope {:.3} (target {target:.3}), delay/ln γ at 1e5 = {last:.3}", fit.slope))
}

fn check_k_invariance(seed: SeedSpec) -> Result<String, String> {
    let config = DetectorConfig::dyadic(0.5, 6, 1e3).map_err(|e| e.to_string())?;
    let est = estimate_cadd(&config, &bern(0.5), &bern(0.75), &[1, 50], 5000, seed).map_err(|e| e.to_string())?;
    let a = &est.per_k[0];
    let b = &est.per_k[1];
    let (da, db) = (a.conditional_mean_delay.ok_or("k=1 unavailable")?, b.conditional_mean_delay.ok_or("k=50 unavailable")?);
    let pooled = (a.std_error.unwrap().powi(2) + b.std_error.unwrap().powi(2)).sqrt();
    let detail = format!("k=1: {da:.2}, k=50: {db:.2}, pooled se {pooled:.3}");
    ensure((da - db).abs() <= 3.0 * pooled, || detail.clone())?;
    Ok(detail)
}
