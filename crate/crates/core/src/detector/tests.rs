use proptest::prelude::*;

use super::*;
use crate::dist::BoundedDistribution;
use crate::rng::SeedSpec;
use crate::stream::{ChangeTime, ChangepointStream};

fn single(lambda: f64, m: f64, gamma: f64) -> DetectorConfig {
    DetectorConfig::new(m, LambdaGrid::new(vec![lambda], vec![1.0]).unwrap(), gamma).unwrap()
}

/// `Σ_{k=1}^n Π_{i=k}^n L_λ(x_i)` evaluated term by term.
fn sr_by_definition(lambda: f64, m: f64, xs: &[f64]) -> f64 {
    let n = xs.len();
    (0..n)
        .map(|k| {
            xs[k..]
                .iter()
                .map(|&x| 1.0 + lambda * (x / m - 1.0))
                .product::<f64>()
        })
        .sum()
}

#[test]
fn betting_factor_examples() {
    assert_eq!(betting_factor(0.0, 0.5, 0.9).unwrap(), 1.0);
    assert_eq!(betting_factor(1.0, 0.5, 0.0).unwrap(), 0.0);
    assert_eq!(betting_factor(0.5, 0.5, 1.0).unwrap(), 1.5);
    assert_eq!(betting_factor(0.37, 0.3, 0.3).unwrap(), 1.0);
}

#[test]
fn betting_factor_errors() {
    assert_eq!(betting_factor(0.5, 0.5, 1.2), Err(DetectorError::OutOfRange(1.2)));
    assert!(matches!(betting_factor(0.5, 0.5, f64::NAN), Err(DetectorError::NonFinite(_))));
    assert!(betting_factor(1.5, 0.5, 0.5).is_err());
    assert!(betting_factor(0.5, 0.0, 0.5).is_err());
}

#[test]
fn recursion_examples() {
    let cfg = single(0.5, 0.5, 1e9);
    let s0 = MixtureState::new(&cfg);
    let s1 = sr_update(&s0, &cfg, 1.0).unwrap();
    assert_eq!(s1.statistics(), &[1.5]);
    let s2 = sr_update(&s1, &cfg, 0.5).unwrap();
    assert_eq!(s2.statistics(), &[2.5]);
    assert_eq!(s2.steps(), 2);
}

#[test]
fn baseline_stream_counts_steps() {
    let cfg = single(0.3, 0.4, 1e9);
    let mut det = Detector::new(cfg);
    for n in 1..=500u32 {
        det.observe(0.4).unwrap();
        assert_eq!(det.state().statistics()[0], f64::from(n));
    }
}

#[test]
fn baseline_stream_alarms_exactly_at_gamma() {
    let cfg = DetectorConfig::new(0.5, LambdaGrid::dyadic(2).unwrap(), 10.0).unwrap();
    let out = run_until_alarm(&cfg, std::iter::repeat(0.5), 1000).unwrap();
    assert_eq!(out.alarm_time, Some(10));
    assert_eq!(out.final_state.mixture(), 10.0);

    for depth in [1, 3, 6, 8] {
        let cfg = DetectorConfig::dyadic(0.5, depth, 50.0).unwrap();
        let out = run_until_alarm(&cfg, std::iter::repeat(0.5), 1000).unwrap();
        assert_eq!(out.alarm_time, Some(50), "depth {depth}");
    }
}

#[test]
fn threshold_one_fires_on_first_step() {
    let cfg = DetectorConfig::dyadic(0.5, 3, 1.0).unwrap();
    // x = m gives M_1 = 1 exactly.
    let out = run_until_alarm(&cfg, [0.5, 0.5], 2).unwrap();
    assert_eq!(out.alarm_time, Some(1));
    // x = 0 gives M_1 = mean of (1 - λ) = 1/2 < 1.
    let out = run_until_alarm(&cfg, [0.0, 0.5, 0.5], 3).unwrap();
    assert_eq!(out.alarm_time, Some(2));
}

#[test]
fn run_errors_and_censoring() {
    let cfg = DetectorConfig::dyadic(0.5, 2, 100.0).unwrap();
    assert_eq!(
        run_until_alarm(&cfg, [0.5, 0.5], 5),
        Err(DetectorError::StreamTooShort { expected: 5, got: 2 })
    );
    assert_eq!(run_until_alarm(&cfg, [0.5], 0), Err(DetectorError::ZeroHorizon));
    assert!(matches!(
        run_until_alarm(&cfg, [0.5, f64::INFINITY], 2),
        Err(DetectorError::NonFinite(_))
    ));
    let out = run_until_alarm(&cfg, std::iter::repeat(0.5), 20).unwrap();
    assert_eq!(out.alarm_time, None);
    assert_eq!(out.final_state.steps(), 20);
}

#[test]
fn config_validation() {
    let g = LambdaGrid::dyadic(2).unwrap();
    assert!(DetectorConfig::new(0.0, g.clone(), 10.0).is_err());
    assert!(DetectorConfig::new(1.0, g.clone(), 10.0).is_err());
    assert!(DetectorConfig::new(0.5, g.clone(), 0.5).is_err());
    assert!(DetectorConfig::new(0.5, g, f64::NAN).is_err());
}

#[test]
fn alarm_time_never_changes() {
    let cfg = single(0.5, 0.5, 3.0);
    let mut det = Detector::new(cfg);
    for _ in 0..3 {
        det.observe(1.0).unwrap();
    }
    let t = det.state().alarmed_at().unwrap();
    assert!(det.state().mixture() >= 3.0);
    for _ in 0..50 {
        det.observe(0.0).unwrap();
    }
    assert_eq!(det.state().alarmed_at(), Some(t));
}

#[test]
fn saturation_is_recorded() {
    let cfg = single(0.99, 0.01, 1e308);
    let mut det = Detector::new(cfg);
    for _ in 0..400 {
        det.observe(1.0).unwrap();
    }
    assert!(det.state().saturated());
    assert_eq!(det.state().statistics()[0], SATURATION_LIMIT);
    assert!(det.state().mixture().is_finite());
}

#[test]
fn resume_checks_grid_length() {
    let cfg = DetectorConfig::dyadic(0.5, 2, 10.0).unwrap();
    let other = DetectorConfig::dyadic(0.5, 3, 10.0).unwrap();
    let state = MixtureState::new(&cfg);
    assert!(Detector::resume(other, state.clone()).is_err());
    assert!(Detector::resume(cfg, state).is_ok());
}

#[test]
fn snapshot_round_trips() {
    let cfg = DetectorConfig::dyadic(0.5, 6, 1e12).unwrap();
    let fresh = MixtureState::new(&cfg);
    assert_eq!(deserialize_state(&serialize_state(&fresh)).unwrap(), fresh);

    let post = BoundedDistribution::bernoulli(0.55).unwrap();
    let stream = ChangepointStream::new(&post, &post, ChangeTime::At(1), SeedSpec::new(3, 0));
    let mut det = Detector::new(cfg.clone());
    for x in stream.take(10_000) {
        det.observe(x).unwrap();
    }
    let state = det.into_state();
    let bytes = serialize_state(&state);
    assert_eq!(&bytes[..4], b"BMSR");
    assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), SNAPSHOT_VERSION);
    let back = deserialize_state(&bytes).unwrap();
    assert_eq!(back, state);
    for (a, b) in back.statistics().iter().zip(state.statistics()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    // A resumed detector continues bit-identically.
    let mut resumed = Detector::resume(cfg.clone(), back).unwrap();
    let mut original = Detector::resume(cfg, state).unwrap();
    for x in [0.0, 1.0, 1.0, 0.0] {
        resumed.observe(x).unwrap();
        original.observe(x).unwrap();
    }
    assert_eq!(resumed.state(), original.state());
}

#[test]
fn snapshot_decode_errors() {
    let cfg = DetectorConfig::dyadic(0.5, 3, 10.0).unwrap();
    let bytes = serialize_state(&MixtureState::new(&cfg));
    for cut in [0, 3, 10, bytes.len() - 1] {
        assert!(matches!(deserialize_state(&bytes[..cut]), Err(DetectorError::Decode(_))));
    }
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 9;
    assert!(deserialize_state(&wrong_version).is_err());
    let mut wrong_magic = bytes.clone();
    wrong_magic[0] = b'X';
    assert!(deserialize_state(&wrong_magic).is_err());
    let mut extra = bytes;
    extra.push(0);
    assert!(deserialize_state(&extra).is_err());
}

#[test]
fn supermartingale_drift_under_null() {
    let cfg = DetectorConfig::dyadic(0.5, 6, 1e300).unwrap();
    let reps = 2000u64;
    let laws = [
        BoundedDistribution::bernoulli(0.5).unwrap(),
        BoundedDistribution::bernoulli(0.3).unwrap(),
        BoundedDistribution::beta(2.0, 2.0).unwrap(),
    ];
    for (li, law) in laws.iter().enumerate() {
        let mut at = [Vec::new(), Vec::new(), Vec::new()];
        for rep in 0..reps {
            let seed = SeedSpec::new(900 + li as u64, rep);
            let stream = ChangepointStream::new(law, law, ChangeTime::Never, seed);
            let mut state = MixtureState::new(&cfg);
            for (i, x) in stream.take(1000).enumerate() {
                state.advance(&cfg, x);
                let n = i + 1;
                let slot = match n {
                    10 => 0,
                    100 => 1,
                    1000 => 2,
                    _ => continue,
                };
                at[slot].push(state.mixture() - n as f64);
            }
        }
        for (slot, vals) in at.iter().enumerate() {
            let (mean, se) = crate::numeric::batch_means(vals, 50);
            assert!(mean <= 4.0 * se, "{law} slot {slot}: mean {mean}, se {se}");
        }
    }
}

#[test]
fn post_change_alarm_within_hitting_bound() {
    let gamma = 100.0;
    let cfg = DetectorConfig::dyadic(0.5, 6, gamma).unwrap();
    let q = BoundedDistribution::bernoulli(0.75).unwrap();
    let mut scratch = RunScratch::new(&cfg);
    let times: Vec<f64> = (0..10_000u64)
        .map(|rep| {
            let stream = ChangepointStream::new(&q, &q, ChangeTime::At(1), SeedSpec::new(17, rep));
            scratch.alarm_time(&cfg, stream, 1_000_000).unwrap() as f64
        })
        .collect();
    let (mean, se) = crate::numeric::batch_means(&times, 50);
    // λ = 1/2 is on the grid with weight 1/63 and drift d(0.75 || 0.5).
    let mu = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
    let u = (gamma * 63.0).ln();
    let upper = (u + 2f64.ln()) / mu;
    assert!(mean >= 1.0);
    assert!(mean <= upper + 2.0 * se, "mean {mean} vs bound {upper}");
}

fn unit_stream(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0],
        1..=max_len,
    )
}

proptest! {
    #[test]
    fn factor_scale_bound(lambda in 0.0f64..=1.0, m in 0.01f64..0.99, x in 0.0f64..=1.0) {
        let l = betting_factor(lambda, m, x).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert!(l >= 1.0 - lambda - 1e-15);
        prop_assert!(l <= 1.0 / m + 1e-12);
    }

    #[test]
    fn recursion_matches_definition(xs in unit_stream(12), m in 0.05f64..0.95) {
        let cfg = DetectorConfig::dyadic(m, 4, 1e300).unwrap();
        let mut state = MixtureState::new(&cfg);
        for &x in &xs {
            state.update(&cfg, x).unwrap();
        }
        for (j, &lambda) in cfg.grid().lambdas().iter().enumerate() {
            let direct = sr_by_definition(lambda, m, &xs);
            let rec = state.statistics()[j];
            prop_assert!((rec - direct).abs() <= 1e-10 * direct.abs().max(1e-300) + 1e-300,
                "λ={} rec={} direct={}", lambda, rec, direct);
        }
    }

    #[test]
    fn nonnegativity_and_domination(xs in unit_stream(200), m in 0.05f64..0.95) {
        let cfg = DetectorConfig::dyadic(m, 5, 1e300).unwrap();
        let weights = cfg.grid().weights();
        let mut state = MixtureState::new(&cfg);
        for &x in &xs {
            state.update(&cfg, x).unwrap();
            prop_assert!(state.mixture() >= 0.0);
            let direct: f64 = weights.iter().zip(state.statistics()).map(|(w, r)| w * r).sum();
            prop_assert!((state.mixture() - direct).abs() <= 1e-9 * (1.0 + state.mixture()));
            for (w, &r) in weights.iter().zip(state.statistics()) {
                prop_assert!(r >= 0.0);
                prop_assert!(state.mixture() >= w * r * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn alarm_monotone_in_threshold(xs in unit_stream(300), g1 in 1.0f64..200.0, extra in 0.0f64..500.0) {
        let g2 = g1 + extra;
        let c1 = DetectorConfig::dyadic(0.4, 4, g1).unwrap();
        let c2 = c1.with_gamma(g2).unwrap();
        let n = xs.len() as u64;
        let t1 = run_until_alarm(&c1, xs.iter().copied(), n).unwrap().alarm_time;
        let t2 = run_until_alarm(&c2, xs.iter().copied(), n).unwrap().alarm_time;
        match (t1, t2) {
            (Some(a), Some(b)) => prop_assert!(a <= b),
            (None, Some(_)) => prop_assert!(false, "lower threshold censored but higher fired"),
            _ => {}
        }
    }

    #[test]
    fn snapshot_round_trip_arbitrary(xs in unit_stream(100)) {
        let cfg = DetectorConfig::dyadic(0.5, 3, 20.0).unwrap();
        let mut state = MixtureState::new(&cfg);
        for &x in &xs {
            state.update(&cfg, x).unwrap();
        }
        prop_assert_eq!(deserialize_state(&serialize_state(&state)).unwrap(), state);
    }
}
