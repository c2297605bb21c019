//! Distributions on the unit interval.
//!
//! A [`BoundedDistribution`] is validated once at construction; afterwards it
//! is immutable, cheap to clone and safe to share between threads. Sampling
//! never fails.

use std::fmt;

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::CompensatedSum;
use crate::rng::SeedSpec;

/// Tolerance on user-supplied probability vectors before renormalisation.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Absolute tolerance of quadrature-based expectations.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("bernoulli parameter {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("support point {0} outside [0, 1]")]
    SupportOutOfRange(f64),
    #[error("weight {0} must be positive and finite")]
    InvalidWeight(f64),
    #[error("weights sum to {0}, expected 1")]
    WeightsDoNotSumToOne(f64),
    #[error("{0} has no atoms/components")]
    Empty(&'static str),
    #[error("beta shape parameters must be positive and finite, got a={a}, b={b}")]
    InvalidBetaShape { a: f64, b: f64 },
}

/// Serialisable literal describing a distribution, e.g.
/// `{"kind":"bernoulli","p":0.75}` or
/// `{"kind":"discrete","atoms":[[0.0,0.25],[1.0,0.75]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Bernoulli { p: f64 },
    Point { x: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
    Beta { a: f64, b: f64 },
    Mixture { components: Vec<(f64, DistributionSpec)> },
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistributionSpec::Bernoulli { p } => write!(f, "bernoulli({p})"),
            DistributionSpec::Point { x } => write!(f, "point({x})"),
            DistributionSpec::Discrete { atoms } => {
                write!(f, "discrete{{")?;
                for (i, (x, q)) in atoms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}:{q}")?;
                }
                write!(f, "}}")
            }
            DistributionSpec::Beta { a, b } => write!(f, "beta({a},{b})"),
            DistributionSpec::Mixture { components } => {
                write!(f, "mixture[")?;
                for (i, (w, d)) in components.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{w}*{d}")?;
                }
                write!(f, "]")
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    Bernoulli(f64),
    Discrete { values: Vec<f64>, cdf: Vec<f64> },
    Beta(rand_distr::Beta<f64>),
    Mixture { cdf: Vec<f64>, parts: Vec<Sampler> },
}

impl Sampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Bernoulli(p) => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Sampler::Discrete { values, cdf } => {
                if values.len() == 1 {
                    return values[0];
                }
                let u = rng.random::<f64>();
                let i = cdf.partition_point(|&c| c <= u).min(values.len() - 1);
                values[i]
            }
            Sampler::Beta(beta) => beta.sample(rng).clamp(0.0, 1.0),
            Sampler::Mixture { cdf, parts } => {
                let u = rng.random::<f64>();
                let i = cdf.partition_point(|&c| c <= u).min(parts.len() - 1);
                parts[i].draw(rng)
            }
        }
    }
}

/// A validated law on `[0, 1]` with its exact mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DistributionSpec", into = "DistributionSpec")]
pub struct BoundedDistribution {
    spec: DistributionSpec,
    mean: f64,
    #[serde(skip)]
    sampler: Sampler,
}

impl PartialEq for BoundedDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl From<BoundedDistribution> for DistributionSpec {
    fn from(d: BoundedDistribution) -> Self {
        d.spec
    }
}

impl TryFrom<DistributionSpec> for BoundedDistribution {
    type Error = DistributionError;

    fn try_from(spec: DistributionSpec) -> Result<Self, Self::Error> {
        match spec {
            DistributionSpec::Bernoulli { p } => Self::bernoulli(p),
            DistributionSpec::Point { x } => Self::point(x),
            DistributionSpec::Discrete { atoms } => Self::discrete(&atoms),
            DistributionSpec::Beta { a, b } => Self::beta(a, b),
            DistributionSpec::Mixture { components } => {
                let parts = components
                    .into_iter()
                    .map(|(w, s)| Ok((w, Self::try_from(s)?)))
                    .collect::<Result<Vec<_>, DistributionError>>()?;
                Self::mixture(parts)
            }
        }
    }
}

impl fmt::Display for BoundedDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.spec.fmt(f)
    }
}

fn check_unit(x: f64) -> Result<(), DistributionError> {
    if x.is_finite() && (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(DistributionError::SupportOutOfRange(x))
    }
}

fn normalised_weights(weights: &[f64]) -> Result<Vec<f64>, DistributionError> {
    for &w in weights {
        if !(w.is_finite() && w > 0.0) {
            return Err(DistributionError::InvalidWeight(w));
        }
    }
    let total = weights.iter().copied().collect::<CompensatedSum>().value();
    if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(DistributionError::WeightsDoNotSumToOne(total));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    let mut cdf: Vec<f64> = weights
        .iter()
        .map(|&w| {
            acc.add(w);
            acc.value()
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

impl BoundedDistribution {
    pub fn bernoulli(p: f64) -> Result<Self, DistributionError> {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(DistributionError::InvalidProbability(p));
        }
        Ok(Self {
            spec: DistributionSpec::Bernoulli { p },
            mean: p,
            sampler: Sampler::Bernoulli(p),
        })
    }

    /// Point mass at `x`.
    pub fn point(x: f64) -> Result<Self, DistributionError> {
        check_unit(x)?;
        Ok(Self {
            spec: DistributionSpec::Point { x },
            mean: x,
            sampler: Sampler::Discrete {
                values: vec![x],
                cdf: vec![1.0],
            },
        })
    }

    /// Finite law from `(support point, probability)` pairs. Repeated support
    /// points are merged and the weights are renormalised to sum to one.
    pub fn discrete(atoms: &[(f64, f64)]) -> Result<Self, DistributionError> {
        if atoms.is_empty() {
            return Err(DistributionError::Empty("discrete distribution"));
        }
        for &(x, _) in atoms {
            check_unit(x)?;
        }
        let weights: Vec<f64> = atoms.iter().map(|a| a.1).collect();
        let weights = normalised_weights(&weights)?;
        let mut merged: Vec<(f64, f64)> = atoms
            .iter()
            .zip(weights)
            .map(|(&(x, _), w)| (x, w))
            .collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        merged.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        let mean = merged
            .iter()
            .map(|&(x, q)| x * q)
            .collect::<CompensatedSum>()
            .value();
        let values = merged.iter().map(|a| a.0).collect();
        let cdf = cumulative(&merged.iter().map(|a| a.1).collect::<Vec<_>>());
        Ok(Self {
            spec: DistributionSpec::Discrete { atoms: merged },
            mean,
            sampler: Sampler::Discrete { values, cdf },
        })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self, DistributionError> {
        let valid = a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0;
        let sampler = match rand_distr::Beta::new(a, b) {
            Ok(beta) if valid => beta,
            _ => return Err(DistributionError::InvalidBetaShape { a, b }),
        };
        Ok(Self {
            spec: DistributionSpec::Beta { a, b },
            mean: a / (a + b),
            sampler: Sampler::Beta(sampler),
        })
    }

    /// Finite mixture `sum_i w_i D_i`; the mean follows by linearity.
    pub fn mixture(components: Vec<(f64, BoundedDistribution)>) -> Result<Self, DistributionError> {
        if components.is_empty() {
            return Err(DistributionError::Empty("mixture"));
        }
        let weights: Vec<f64> = components.iter().map(|c| c.0).collect();
        let weights = normalised_weights(&weights)?;
        let mean = components
            .iter()
            .zip(&weights)
            .map(|((_, d), w)| w * d.mean)
            .collect::<CompensatedSum>()
            .value();
        let cdf = cumulative(&weights);
        let parts = components.iter().map(|(_, d)| d.sampler.clone()).collect();
        let spec = DistributionSpec::Mixture {
            components: components
                .into_iter()
                .zip(weights)
                .map(|((_, d), w)| (w, d.spec))
                .collect(),
        };
        Ok(Self {
            spec,
            mean,
            sampler: Sampler::Mixture { cdf, parts },
        })
    }

    /// Parse a JSON distribution literal.
    pub fn from_json(literal: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(literal)
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// True when the law has finitely many atoms.
    pub fn is_discrete(&self) -> bool {
        fn discrete(spec: &DistributionSpec) -> bool {
            match spec {
                DistributionSpec::Beta { .. } => false,
                DistributionSpec::Mixture { components } => {
                    components.iter().all(|(_, s)| discrete(s))
                }
                _ => true,
            }
        }
        discrete(&self.spec)
    }

    /// Atoms `(x, q)` with `q > 0`, sorted by `x`, or `None` for laws with a
    /// continuous part.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        fn collect(spec: &DistributionSpec, scale: f64, out: &mut Vec<(f64, f64)>) -> bool {
            match spec {
                DistributionSpec::Bernoulli { p } => {
                    if *p < 1.0 {
                        out.push((0.0, scale * (1.0 - p)));
                    }
                    if *p > 0.0 {
                        out.push((1.0, scale * p));
                    }
                    true
                }
                DistributionSpec::Point { x } => {
                    out.push((*x, scale));
                    true
                }
                DistributionSpec::Discrete { atoms } => {
                    out.extend(atoms.iter().map(|&(x, q)| (x, scale * q)));
                    true
                }
                DistributionSpec::Beta { .. } => false,
                DistributionSpec::Mixture { components } => components
                    .iter()
                    .all(|(w, s)| collect(s, scale * w, out)),
            }
        }
        let mut out = Vec::new();
        if !collect(&self.spec, 1.0, &mut out) {
            return None;
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        Some(out)
    }

    /// Probability of the single point `x` (zero for continuous parts).
    pub fn mass_at(&self, x: f64) -> f64 {
        fn mass(spec: &DistributionSpec, x: f64) -> f64 {
            match spec {
                DistributionSpec::Bernoulli { p } => {
                    if x == 1.0 {
                        *p
                    } else if x == 0.0 {
                        1.0 - p
                    } else {
                        0.0
                    }
                }
                DistributionSpec::Point { x: at } => f64::from(u8::from(*at == x)),
                DistributionSpec::Discrete { atoms } => atoms
                    .iter()
                    .filter(|a| a.0 == x)
                    .map(|a| a.1)
                    .sum(),
                DistributionSpec::Beta { .. } => 0.0,
                DistributionSpec::Mixture { components } => {
                    components.iter().map(|(w, s)| w * mass(s, x)).sum()
                }
            }
        }
        mass(&self.spec, x)
    }

    /// `E[f(X)]`: an exact finite sum over atoms, and tanh-sinh quadrature
    /// (absolute tolerance `abs_tol`) for beta components. Atoms carry positive
    /// mass, so `f = -inf` at an atom yields `-inf`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, abs_tol: f64) -> f64 {
        fn expect<F: Fn(f64) -> f64>(spec: &DistributionSpec, f: &F, tol: f64) -> f64 {
            match spec {
                DistributionSpec::Bernoulli { p } => {
                    let mut acc = 0.0;
                    if *p < 1.0 {
                        acc += (1.0 - p) * f(0.0);
                    }
                    if *p > 0.0 {
                        acc += p * f(1.0);
                    }
                    acc
                }
                DistributionSpec::Point { x } => f(*x),
                DistributionSpec::Discrete { atoms } => atoms
                    .iter()
                    .map(|&(x, q)| q * f(x))
                    .collect::<CompensatedSum>()
                    .value(),
                DistributionSpec::Beta { a, b } => beta_expectation(*a, *b, f, tol),
                DistributionSpec::Mixture { components } => components
                    .iter()
                    .map(|(w, s)| w * expect(s, f, tol))
                    .collect::<CompensatedSum>()
                    .value(),
            }
        }
        expect(&self.spec, &f, abs_tol)
    }

    /// One draw from the law.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = self.sampler.draw(rng);
        debug_assert!((0.0..=1.0).contains(&x), "sample {x} left [0, 1]");
        x
    }
}

impl Distribution<f64> for BoundedDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw(rng)
    }
}

fn beta_expectation<F: Fn(f64) -> f64>(a: f64, b: f64, f: &F, tol: f64) -> f64 {
    let log_norm = statrs::function::beta::ln_beta(a, b);
    tanh_sinh_unit(
        |x, complement| {
            let log_pdf = (a - 1.0) * x.ln() + (b - 1.0) * complement.ln() - log_norm;
            f(x) * log_pdf.exp()
        },
        tol,
    )
}

/// Tanh-sinh quadrature of `g` over `[0, 1]`.
///
/// `g` receives both `x` and `1 - x`, each computed without cancellation, so
/// integrable endpoint singularities such as `x^(a-1)` are resolved to full
/// relative precision. Levels are refined until successive estimates differ
/// by less than `tol`.
pub fn tanh_sinh_unit<G: Fn(f64, f64) -> f64>(g: G, tol: f64) -> f64 {
    use std::f64::consts::PI;
    // Beyond |t| = 6.1 the abscissae are within 1e-300 of an endpoint.
    const T_MAX: f64 = 6.1;
    const MAX_LEVEL: u32 = 14;
    let term = |t: f64| -> f64 {
        let s = PI * t.sinh();
        let x = 1.0 / (1.0 + (-s).exp());
        let y = 1.0 / (1.0 + s.exp());
        let weight = x * y * PI * t.cosh();
        if weight == 0.0 || x == 0.0 || y == 0.0 {
            return 0.0;
        }
        let v = g(x, y) * weight;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut h = 0.5;
    let mut total = term(0.0);
    let mut k = 1;
    while k as f64 * h <= T_MAX {
        let t = k as f64 * h;
        total += term(t) + term(-t);
        k += 1;
    }
    let mut estimate = h * total;
    for level in 1..=MAX_LEVEL {
        h /= 2.0;
        let mut k = 1u64;
        while k as f64 * h <= T_MAX {
            let t = k as f64 * h;
            total += term(t) + term(-t);
            k += 2;
        }
        let refined = h * total;
        let change = (refined - estimate).abs();
        estimate = refined;
        if level >= 3 && change <= tol {
            break;
        }
    }
    estimate
}

/// `n` reproducible draws from `dist` on the substream `seed`.
pub fn sample(dist: &BoundedDistribution, seed: SeedSpec, n: usize) -> Vec<f64> {
    let mut rng = seed.rng();
    (0..n).map(|_| dist.draw(&mut rng)).collect()
}
