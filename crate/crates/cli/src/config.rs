//! Resolved run configurations. Values come from built-in defaults, then the
//! JSON config file, then command-line flags, each layer overriding the last.

use std::collections::hash_map::RandomState;
use std::hash::BuildHasher;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bmdetect::detector::design_uniform_grid;
use bmdetect::lab::StoppingLaw;
use bmdetect::{DetectorConfig, DistributionSpec, LambdaGrid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Loads a config file. A previously written report is accepted too; its
/// embedded `config` object is used, minus its output destination, which
/// makes reports replayable without overwriting them.
pub fn load_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Value::Object(mut map) = value else {
        bail!("{} must contain a JSON object", path.display());
    };
    if map.contains_key("schema_version") {
        if let Some(Value::Object(mut cfg)) = map.remove("config") {
            cfg.remove("output_path");
            cfg.remove("output_format");
            return Ok(Value::Object(cfg));
        }
    }
    Ok(Value::Object(map))
}

fn overlay(base: &mut Map<String, Value>, layer: &Value) {
    if let Value::Object(layer) = layer {
        for (k, v) in layer {
            if !v.is_null() {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Merges defaults, the file (its top level, then a section named after the
/// command if present) and the flags, then deserialises the result.
pub fn resolve<T, A>(command: &str, file: Option<&Value>, flags: &A) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
    A: Serialize,
{
    let Value::Object(mut merged) = serde_json::to_value(T::default())? else {
        unreachable!("configs serialise to objects");
    };
    if let Some(file) = file {
        overlay(&mut merged, file);
        if let Some(section) = file.get(command) {
            overlay(&mut merged, section);
        }
    }
    overlay(&mut merged, &serde_json::to_value(flags)?);
    serde_json::from_value(Value::Object(merged)).with_context(|| format!("invalid configuration for `{command}`"))
}

/// Returns the configured seed or a fresh one, reporting the latter on stderr.
pub fn settle_seed(seed: &mut Option<u64>) -> u64 {
    *seed.get_or_insert_with(|| {
        let fresh = RandomState::new().hash_one(std::time::SystemTime::now());
        eprintln!("seed: {fresh}");
        fresh
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputSettings {
    pub output_path: Option<PathBuf>,
    pub output_format: Format,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridDesign {
    pub delta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorSettings {
    pub m: f64,
    pub gamma: f64,
    pub depth: u32,
    /// Explicit grid; takes precedence over `design` and `depth`.
    pub grid: Option<LambdaGrid>,
    /// Finite grid for a separated alternative class; takes precedence over `depth`.
    pub design: Option<GridDesign>,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        Self {
            m: 0.5,
            gamma: 100.0,
            depth: 6,
            grid: None,
            design: None,
        }
    }
}

impl DetectorSettings {
    pub fn build(&self) -> Result<DetectorConfig> {
        let grid = if let Some(g) = &self.grid {
            g.clone()
        } else if let Some(d) = self.design {
            design_uniform_grid(d.delta, d.epsilon, self.m)?.grid
        } else {
            LambdaGrid::dyadic(self.depth)?
        };
        Ok(DetectorConfig::new(self.m, grid, self.gamma)?)
    }

    /// Pre-change law, defaulting to a Bernoulli law with mean `m`.
    pub fn pre_or_default(&self, pre: &Option<DistributionSpec>) -> DistributionSpec {
        pre.clone().unwrap_or(DistributionSpec::Bernoulli { p: self.m })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DetectConfig {
    #[serde(flatten)]
    pub detector: DetectorSettings,
    /// Input file; standard input when absent or `-`.
    pub input: Option<PathBuf>,
    /// Raw observations live in `[lo, hi]`; `m` is then read on that scale.
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub state_in: Option<PathBuf>,
    pub state_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArlConfig {
    #[serde(flatten)]
    pub detector: DetectorSettings,
    pub pre: Option<DistributionSpec>,
    pub reps: usize,
    /// Censoring horizon; `50 γ` when absent.
    pub horizon: Option<u64>,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub output: OutputSettings,
}

impl Default for ArlConfig {
    fn default() -> Self {
        Self {
            detector: DetectorSettings::default(),
            pre: None,
            reps: bmdetect::sim::DEFAULT_ARL_REPLICATIONS,
            horizon: None,
            seed: None,
            output: OutputSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaddConfig {
    #[serde(flatten)]
    pub detector: DetectorSettings,
    pub pre: Option<DistributionSpec>,
    pub post: Option<DistributionSpec>,
    pub k: Vec<u64>,
    pub reps: usize,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub output: OutputSettings,
}

impl Default for CaddConfig {
    fn default() -> Self {
        Self {
            detector: DetectorSettings::default(),
            pre: None,
            post: None,
            k: bmdetect::sim::DEFAULT_K_LIST.to_vec(),
            reps: bmdetect::sim::DEFAULT_CADD_REPLICATIONS,
            seed: None,
            output: OutputSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KlinfConfig {
    pub q: Option<DistributionSpec>,
    pub m: f64,
    pub tol: f64,
    /// Also run the brute-force oracle (discrete laws only).
    pub oracle: bool,
    pub resolution: usize,
    #[serde(flatten)]
    pub output: OutputSettings,
}

impl Default for KlinfConfig {
    fn default() -> Self {
        Self {
            q: None,
            m: 0.5,
            tol: bmdetect::klinf::DEFAULT_TOLERANCE,
            oracle: false,
            resolution: bmdetect::klinf::ORACLE_MIN_RESOLUTION,
            output: OutputSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(flatten)]
    pub detector: DetectorSettings,
    pub gammas: Vec<f64>,
    pub pre: Option<DistributionSpec>,
    pub post: Option<DistributionSpec>,
    pub k: Vec<u64>,
    /// Zero skips the run-length estimates.
    pub arl_reps: usize,
    pub cadd_reps: usize,
    pub horizon_factor: f64,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub output: OutputSettings,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            detector: DetectorSettings::default(),
            gammas: vec![1e2, 1e3, 1e4],
            pre: None,
            post: None,
            k: bmdetect::sim::DEFAULT_K_LIST.to_vec(),
            arl_reps: bmdetect::sim::DEFAULT_ARL_REPLICATIONS,
            cadd_reps: bmdetect::sim::DEFAULT_CADD_REPLICATIONS,
            horizon_factor: bmdetect::sim::ARL_HORIZON_FACTOR,
            seed: None,
            output: OutputSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub output: OutputSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlocksConfig {
    pub law: Option<StoppingLaw>,
    /// Geometric alarm-time law with this mean, used when `law` is absent.
    pub geometric_mean: Option<f64>,
    pub f: u64,
    pub gamma: f64,
    #[serde(flatten)]
    pub output: OutputSettings,
}

impl Default for BlocksConfig {
    fn default() -> Self {
        Self {
            law: None,
            geometric_mean: None,
            f: 10,
            gamma: 100.0,
            output: OutputSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Projection value; defaults to that of Bernoulli(0.75) against mean 0.5.
    pub i: Option<f64>,
    /// Divergence to the near-minimiser; defaults to `i`.
    pub mu: Option<f64>,
    pub b: f64,
    pub gammas: Vec<f64>,
    #[serde(flatten)]
    pub output: OutputSettings,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            gamma: 1e6,
            epsilon: bmdetect::lab::DEFAULT_SCHEDULE_EPSILON,
            delta: bmdetect::lab::DEFAULT_SCHEDULE_DELTA,
            i: None,
            mu: None,
            b: bmdetect::lab::DEFAULT_SCHEDULE_B,
            gammas: bmdetect::lab::SCHEDULE_GAMMAS.to_vec(),
            output: OutputSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    /// Alarm when the running sum reaches `threshold`.
    #[default]
    Sum,
    /// The mixture detector built from `m`, `gamma` and `depth`.
    Detector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComCheckConfig {
    pub pre: Option<DistributionSpec>,
    pub post: Option<DistributionSpec>,
    pub k: usize,
    pub n: usize,
    pub rule: RuleKind,
    pub threshold: f64,
    #[serde(flatten)]
    pub detector: DetectorSettings,
    #[serde(flatten)]
    pub output: OutputSettings,
}

impl Default for ComCheckConfig {
    fn default() -> Self {
        Self {
            pre: None,
            post: None,
            k: 2,
            n: 4,
            rule: RuleKind::Sum,
            threshold: 2.0,
            detector: DetectorSettings {
                gamma: 5.0,
                depth: 3,
                ..DetectorSettings::default()
            },
            output: OutputSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SllnConfig {
    /// Atoms `[value, weight]` of the increment law.
    pub law: Vec<(f64, f64)>,
    pub eta: f64,
    pub n: Vec<u64>,
    pub reps: usize,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub output: OutputSettings,
}

impl Default for SllnConfig {
    fn default() -> Self {
        Self {
            law: vec![(-1.0, 0.5), (1.0, 0.5)],
            eta: 0.5,
            n: vec![10, 100, 1000],
            reps: 10_000,
            seed: None,
            output: OutputSettings::default(),
        }
    }
}
