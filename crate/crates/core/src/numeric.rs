//! Small numerical helpers shared across modules: compensated summation and
//! batch-means standard errors.

/// Neumaier-compensated running sum.
///
/// Sums accumulated in the same order are bit-identical, which is what the
/// simulation layer relies on for thread-count independent results.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.sum.is_finite() {
            self.sum + self.compensation
        } else {
            self.sum
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<CompensatedSum>().value()
}

/// Compensated arithmetic mean; `NaN` for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    sum(values) / values.len() as f64
}

/// Default number of batches used for batch-means standard errors.
pub const DEFAULT_BATCHES: usize = 50;

/// Mean and batch-means standard error of `values`, taken in order.
///
/// The sample is cut into at most `batches` contiguous batches of nearly equal
/// size; the standard error is the standard deviation of the batch means over
/// `sqrt(batch count)`. With fewer than two observations the error is `NaN`.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let n = values.len();
    let overall = mean(values);
    if n < 2 {
        return (overall, f64::NAN);
    }
    let b = batches.clamp(2, n);
    let mut batch_means = Vec::with_capacity(b);
    for i in 0..b {
        let lo = i * n / b;
        let hi = (i + 1) * n / b;
        batch_means.push(mean(&values[lo..hi]));
    }
    let centre = mean(&batch_means);
    let ss = batch_means
        .iter()
        .map(|&v| (v - centre) * (v - centre))
        .collect::<CompensatedSum>()
        .value();
    let var = ss / (b as f64 - 1.0);
    (overall, (var / b as f64).sqrt())
}

/// `x * ln(x / y)` with the conventions `0 ln(0/y) = 0` and `x > 0, y = 0 => +inf`.
pub fn xlogx_over_y(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinities_propagate() {
        assert_eq!(sum(&[1.0, f64::NEG_INFINITY, 2.0]), f64::NEG_INFINITY);
        assert_eq!(sum(&[f64::INFINITY, 1.0]), f64::INFINITY);
        assert!(sum(&[f64::INFINITY, f64::NEG_INFINITY]).is_nan());
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum(&values), 2.0);
    }

    #[test]
    fn batch_means_of_constant_sample_has_zero_error() {
        let values = vec![3.5; 1000];
        let (m, se) = batch_means(&values, DEFAULT_BATCHES);
        assert_eq!(m, 3.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn batch_means_close_to_classical_error_for_iid_sample() {
        // Deterministic pseudo-random sample from a linear congruential map.
        let mut state = 12345u64;
        let values: Vec<f64> = (0..20_000)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let (m, se) = batch_means(&values, DEFAULT_BATCHES);
        let classical = (1.0 / 12.0f64).sqrt() / (values.len() as f64).sqrt();
        assert!((m - 0.5).abs() < 0.01);
        assert!((se / classical - 1.0).abs() < 0.35, "se {se} vs {classical}");
    }

    #[test]
    fn single_observation_has_undefined_error() {
        let (m, se) = batch_means(&[2.0], 10);
        assert_eq!(m, 2.0);
        assert!(se.is_nan());
    }

    #[test]
    fn kl_term_conventions() {
        assert_eq!(xlogx_over_y(0.0, 0.0), 0.0);
        assert_eq!(xlogx_over_y(0.3, 0.0), f64::INFINITY);
        assert!((xlogx_over_y(0.5, 0.25) - 0.5 * 2f64.ln()).abs() < 1e-15);
    }
}
