//! Betting-fraction grids and their mixture weights.

use serde::{Deserialize, Serialize};

use super::DetectorError;

/// Largest grid the detector will build.
pub const MAX_GRID_POINTS: usize = 1 << 24;

/// Finest dyadic resolution used when snapping grid points.
pub const MAX_DYADIC_DEPTH: u32 = 52;

/// Default depth of the dyadic grid (63 points).
pub const DEFAULT_DYADIC_DEPTH: u32 = 6;

/// Strictly increasing betting fractions in `(0, 1)` with positive weights.
///
/// Weights are stored as `mass_j / normalizer` so that uniform grids mix
/// with exact integer arithmetic: under `x = m` every `r_j` equals `n` and
/// the mixture is exactly `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRecord", into = "GridRecord")]
pub struct LambdaGrid {
    lambdas: Vec<f64>,
    mass: Vec<f64>,
    normalizer: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridRecord {
    lambdas: Vec<f64>,
    mass: Vec<f64>,
    #[serde(default = "one")]
    normalizer: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<GridRecord> for LambdaGrid {
    type Error = DetectorError;

    fn try_from(r: GridRecord) -> Result<Self, Self::Error> {
        LambdaGrid::with_mass(r.lambdas, r.mass, r.normalizer)
    }
}

impl From<LambdaGrid> for GridRecord {
    fn from(g: LambdaGrid) -> Self {
        GridRecord {
            lambdas: g.lambdas,
            mass: g.mass,
            normalizer: g.normalizer,
        }
    }
}

impl LambdaGrid {
    /// Grid with explicit weights; they must be positive with sum at most one.
    pub fn new(lambdas: Vec<f64>, weights: Vec<f64>) -> Result<Self, DetectorError> {
        Self::with_mass(lambdas, weights, 1.0)
    }

    /// Equal weights summing to one.
    pub fn uniform(lambdas: Vec<f64>) -> Result<Self, DetectorError> {
        let k = lambdas.len();
        Self::with_mass(lambdas, vec![1.0; k], k as f64)
    }

    fn with_mass(lambdas: Vec<f64>, mass: Vec<f64>, normalizer: f64) -> Result<Self, DetectorError> {
        if lambdas.is_empty() {
            return Err(DetectorError::InvalidGrid("grid is empty".into()));
        }
        if lambdas.len() > MAX_GRID_POINTS {
            return Err(DetectorError::GridTooLarge(lambdas.len()));
        }
        if lambdas.len() != mass.len() {
            return Err(DetectorError::InvalidGrid(format!(
                "{} betting fractions but {} weights",
                lambdas.len(),
                mass.len()
            )));
        }
        if let Some(&bad) = lambdas.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
            return Err(DetectorError::InvalidLambda(bad));
        }
        if lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DetectorError::InvalidGrid(
                "betting fractions must be strictly increasing".into(),
            ));
        }
        if !(normalizer.is_finite() && normalizer > 0.0) {
            return Err(DetectorError::InvalidGrid(format!("normalizer {normalizer}")));
        }
        if let Some(&bad) = mass.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(DetectorError::InvalidGrid(format!("weight {bad} is not positive")));
        }
        let total = crate::numeric::sum(&mass) / normalizer;
        if total > 1.0 + 1e-12 {
            return Err(DetectorError::InvalidGrid(format!("weights sum to {total} > 1")));
        }
        Ok(Self {
            lambdas,
            mass,
            normalizer,
        })
    }

    /// `{ j / 2^depth : j = 1, ..., 2^depth - 1 }` with uniform weights.
    pub fn dyadic(depth: u32) -> Result<Self, DetectorError> {
        if depth == 0 {
            return Err(DetectorError::InvalidGrid("dyadic depth must be at least 1".into()));
        }
        if depth > MAX_DYADIC_DEPTH || (1usize << depth) - 1 > MAX_GRID_POINTS {
            return Err(DetectorError::GridTooLarge(
                1usize.checked_shl(depth).unwrap_or(usize::MAX),
            ));
        }
        let denom = (1u64 << depth) as f64;
        let lambdas = (1..(1u64 << depth)).map(|j| j as f64 / denom).collect();
        Self::uniform(lambdas)
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Normalised mixture weights `w_j`.
    pub fn weights(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m / self.normalizer).collect()
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.mass[j] / self.normalizer
    }

    pub fn weight_sum(&self) -> f64 {
        crate::numeric::sum(&self.mass) / self.normalizer
    }

    pub(crate) fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub(crate) fn normalizer(&self) -> f64 {
        self.normalizer
    }
}

/// A finite grid that is uniformly good over every post-change law whose mean
/// exceeds the baseline by at least `delta`, together with the quantities that
/// determine it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformDesign {
    pub grid: LambdaGrid,
    /// Lower bound on any near-optimal betting fraction, `(1 - ε/2) 2Δ² / (1/m - 1)`.
    pub lambda_floor: f64,
    /// Mesh size `(ε/2) · lambda_floor / 4`.
    pub mesh: f64,
    /// Number of mesh cells `floor(1 / mesh)`.
    pub cells: usize,
    /// Dyadic depth the points were snapped to.
    pub dyadic_depth: u32,
}

/// Builds the finite mesh grid for separation `delta`, accuracy `epsilon` and
/// baseline `m`: one dyadic point in each cell `(jδ - δ/2, jδ]`, `j = 1..=J`,
/// plus one point in `(1 - δ/2, 1)`, uniformly weighted. For every
/// post-change law with mean at least `m + delta` some grid point attains at
/// least `(1 - epsilon)` of `KL_inf`.
pub fn design_uniform_grid(delta: f64, epsilon: f64, m: f64) -> Result<UniformDesign, DetectorError> {
    if !(m > 0.0 && m < 1.0) {
        return Err(DetectorError::InvalidBaseline(m));
    }
    if !(delta > 0.0 && delta < 1.0 - m) {
        return Err(DetectorError::InvalidGrid(format!(
            "separation {delta} must lie in (0, {})",
            1.0 - m
        )));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(DetectorError::InvalidGrid(format!(
            "accuracy {epsilon} must lie in (0, 1/2)"
        )));
    }
    let eps_half = epsilon / 2.0;
    let lambda_floor = (1.0 - eps_half) * 2.0 * delta * delta / (1.0 / m - 1.0);
    let mesh = eps_half * lambda_floor / 4.0;
    if !(mesh > 0.0 && mesh < 1.0) {
        return Err(DetectorError::InvalidGrid(format!("degenerate mesh size {mesh}")));
    }
    // Relative slack absorbs rounding in `mesh`, e.g. 0.2 * 0.1 / 4 > 0.005.
    let cells = ((1.0 / mesh) * (1.0 + 1e-12)).floor() as usize;
    if cells + 1 > MAX_GRID_POINTS {
        return Err(DetectorError::GridTooLarge(cells + 1));
    }
    // Resolution 2^-d < mesh/4 leaves room for two distinct points inside
    // (1 - mesh/2, 1).
    let mut depth = 1u32;
    while (-(depth as f64)).exp2() >= mesh / 4.0 {
        depth += 1;
        if depth > MAX_DYADIC_DEPTH {
            return Err(DetectorError::GridTooLarge(usize::MAX));
        }
    }
    let scale = (depth as f64).exp2();
    let step = 1.0 / scale;
    let ceiling = 1.0 - 2.0 * step;
    let mut lambdas: Vec<f64> = (1..=cells)
        .map(|j| {
            let right = (j as f64 * mesh).min(ceiling);
            (right * scale).floor() / scale
        })
        .collect();
    lambdas.push(1.0 - step);
    debug_assert!(lambdas.windows(2).all(|w| w[0] < w[1]));
    let grid = LambdaGrid::uniform(lambdas)?;
    Ok(UniformDesign {
        grid,
        lambda_floor,
        mesh,
        cells,
        dyadic_depth: depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_grids() {
        let g = LambdaGrid::dyadic(1).unwrap();
        assert_eq!(g.lambdas(), &[0.5]);
        assert_eq!(g.weights(), vec![1.0]);

        let g = LambdaGrid::dyadic(2).unwrap();
        assert_eq!(g.lambdas(), &[0.25, 0.5, 0.75]);
        for w in g.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-16);
        }

        let g = LambdaGrid::dyadic(3).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g.weight_sum(), 1.0);
        assert_eq!(LambdaGrid::dyadic(DEFAULT_DYADIC_DEPTH).unwrap().len(), 63);
    }

    #[test]
    fn dyadic_depth_limits() {
        assert!(LambdaGrid::dyadic(0).is_err());
        assert!(matches!(LambdaGrid::dyadic(40), Err(DetectorError::GridTooLarge(_))));
    }

    #[test]
    fn explicit_grid_validation() {
        assert!(LambdaGrid::new(vec![0.2, 0.4], vec![0.5, 0.5]).is_ok());
        assert!(LambdaGrid::new(vec![0.2, 0.4], vec![0.25, 0.25]).is_ok());
        assert!(LambdaGrid::new(vec![0.4, 0.2], vec![0.5, 0.5]).is_err());
        assert!(LambdaGrid::new(vec![0.2, 0.2], vec![0.5, 0.5]).is_err());
        assert!(LambdaGrid::new(vec![0.0, 0.2], vec![0.5, 0.5]).is_err());
        assert!(LambdaGrid::new(vec![0.5, 1.0], vec![0.5, 0.5]).is_err());
        assert!(LambdaGrid::new(vec![0.2, 0.4], vec![0.7, 0.5]).is_err());
        assert!(LambdaGrid::new(vec![0.2, 0.4], vec![0.0, 0.5]).is_err());
        assert!(LambdaGrid::new(vec![0.2], vec![0.5, 0.5]).is_err());
        assert!(LambdaGrid::new(vec![], vec![]).is_err());
    }

    #[test]
    fn grid_json_round_trip() {
        let g = LambdaGrid::dyadic(4).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: LambdaGrid = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        let bad = r#"{"lambdas":[0.5,1.5],"mass":[0.5,0.5]}"#;
        assert!(serde_json::from_str::<LambdaGrid>(bad).is_err());
    }

    #[test]
    fn uniform_design_matches_hand_arithmetic() {
        let d = design_uniform_grid(0.25, 0.4, 0.5).unwrap();
        assert!((d.lambda_floor - 0.1).abs() < 1e-15);
        assert!((d.mesh - 0.005).abs() < 1e-16);
        assert_eq!(d.cells, 200);
        assert_eq!(d.grid.len(), 201);
        assert!((d.grid.weight_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_design_points_lie_in_their_cells() {
        for &(delta, eps, m) in &[(0.25, 0.4, 0.5), (0.1, 0.2, 0.3), (0.05, 0.1, 0.8), (0.6, 0.3, 0.2)] {
            let d = design_uniform_grid(delta, eps, m).unwrap();
            let l = d.grid.lambdas();
            assert_eq!(l.len(), d.cells + 1);
            for j in 1..=d.cells {
                let lam = l[j - 1];
                let right = j as f64 * d.mesh;
                assert!(lam <= right && lam > right - d.mesh / 2.0, "cell {j}: {lam}");
                let scaled = lam * (d.dyadic_depth as f64).exp2();
                assert_eq!(scaled, scaled.floor(), "not dyadic");
            }
            let last = *l.last().unwrap();
            assert!(last > 1.0 - d.mesh / 2.0 && last < 1.0);
        }
    }

    #[test]
    fn uniform_design_shrinks_with_separation() {
        let m = 0.5;
        let mut prev = usize::MAX;
        for i in 1..10 {
            let delta = 0.05 * i as f64;
            let d = design_uniform_grid(delta, 0.3, m).unwrap();
            assert!(!d.grid.is_empty());
            assert!(d.grid.len() <= prev);
            prev = d.grid.len();
        }
        assert!(design_uniform_grid(0.4999, 0.3, m).unwrap().grid.len() >= 2);
    }

    #[test]
    fn uniform_design_rejects_bad_arguments() {
        assert!(design_uniform_grid(0.0, 0.2, 0.5).is_err());
        assert!(design_uniform_grid(0.5, 0.2, 0.5).is_err());
        assert!(design_uniform_grid(0.2, 0.5, 0.5).is_err());
        assert!(design_uniform_grid(0.2, 0.2, 1.0).is_err());
    }
}
