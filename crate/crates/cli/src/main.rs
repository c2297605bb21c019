mod config;
mod detect;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use bmdetect::klinf::{klinf_primal_oracle, OracleResult};
use bmdetect::lab::{
    block_stats, exact_change_of_measure_check, finite_class_klinf, maximal_slln_probe, prefix_equality_check,
    schedule_convergence, schedule_params, DetectorRule, RealDiscreteLaw, StoppingLaw, StoppingRule,
    ThresholdSumRule,
};
use bmdetect::sim::{default_arl_horizon, estimate_arl, estimate_cadd, sweep, SweepPlan};
use bmdetect::verify::{run_suite, Suite};
use bmdetect::{klinf_dual_solve, BoundedDistribution, DistributionSpec, KlInfResult, SeedSpec};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use config::{
    resolve, settle_seed, ArlConfig, BlocksConfig, CaddConfig, ComCheckConfig, DetectConfig, Format, KlinfConfig,
    RuleKind, ScheduleConfig, SllnConfig, SweepConfig, VerifyConfig,
};
use output::{emit, CsvRow, Report, SCHEMA_VERSION};

const EXIT_INPUT: u8 = 1;
const EXIT_NO_ALARM: u8 = 2;
const EXIT_VERIFY_FAILED: u8 = 3;

/// Bounded-mean changepoint detection, calibration and delay experiments.
#[derive(Debug, Parser)]
#[command(name = "bmdetect", version)]
struct Cli {
    /// JSON config file; flags override its values. A saved report also works.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the detector over newline-separated observations.
    Detect(DetectArgs),
    /// Estimate the mean time to false alarm.
    Arl(ArlArgs),
    /// Estimate the conditional detection delay.
    Cadd(CaddArgs),
    /// Compute the information projection of a law onto {mean <= m}.
    Klinf(KlinfArgs),
    /// Delay and run length across thresholds, with the delay-vs-ln(γ) slope.
    Sweep(SweepArgs),
    /// Run a self-check suite.
    Verify(VerifyArgs),
    /// Small exact and Monte Carlo checks of the lower-bound machinery.
    Lab {
        #[command(subcommand)]
        action: LabAction,
    },
}

#[derive(Debug, Subcommand)]
enum LabAction {
    /// Block decomposition of an alarm-time law.
    Blocks(BlocksArgs),
    /// Block length and level schedule, and its convergence.
    Schedule(ScheduleArgs),
    /// Change of measure and prefix law by path enumeration.
    ComCheck(ComCheckArgs),
    /// Running maximum of a random walk against an excess-drift line.
    Slln(SllnArgs),
}

fn parse_json(s: &str) -> Result<Value, String> {
    serde_json::from_str(s).map_err(|e| format!("invalid JSON: {e}"))
}

fn parse_design(s: &str) -> Result<Value, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [delta, epsilon] = parts[..] else {
        return Err("expected DELTA,EPSILON".into());
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t}: {e}"));
    Ok(serde_json::json!({ "delta": num(delta)?, "epsilon": num(epsilon)? }))
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Args, Serialize)]
struct DetectorArgs {
    /// Baseline mean; the pre-change class has mean at most this.
    #[arg(long)]
    m: Option<f64>,
    /// Alarm threshold.
    #[arg(long)]
    gamma: Option<f64>,
    /// Depth of the dyadic betting-fraction grid.
    #[arg(long)]
    depth: Option<u32>,
    /// Explicit grid as JSON: {"lambdas": [...], "mass": [...]}.
    #[arg(long, value_parser = parse_json)]
    grid: Option<Value>,
    /// Finite grid for alternatives with mean at least m + DELTA, within a
    /// factor 1 - EPSILON of the optimal delay.
    #[arg(long, value_name = "DELTA,EPSILON", value_parser = parse_design)]
    design: Option<Value>,
}

#[derive(Debug, Args, Serialize)]
struct OutputArgs {
    /// Write the result here instead of standard output.
    #[arg(long = "output", value_name = "FILE")]
    output_path: Option<PathBuf>,
    #[arg(long = "format", value_enum)]
    output_format: Option<Format>,
}

#[derive(Debug, Args, Serialize)]
struct DetectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    detector: DetectorArgs,
    /// Observation file; standard input when omitted or `-`.
    input: Option<PathBuf>,
    /// Lower end of the raw observation range.
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    /// Upper end of the raw observation range.
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    /// Resume from a saved detector state.
    #[arg(long)]
    state_in: Option<PathBuf>,
    /// Save the detector state on exit.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ArlArgs {
    #[command(flatten)]
    #[serde(flatten)]
    detector: DetectorArgs,
    /// Pre-change law as JSON, e.g. {"kind":"bernoulli","p":0.5}.
    #[arg(long, value_parser = parse_json)]
    pre: Option<Value>,
    #[arg(long)]
    reps: Option<usize>,
    /// Censoring horizon (default 50 γ).
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct CaddArgs {
    #[command(flatten)]
    #[serde(flatten)]
    detector: DetectorArgs,
    #[arg(long, value_parser = parse_json)]
    pre: Option<Value>,
    /// Post-change law as JSON.
    #[arg(long, value_parser = parse_json)]
    post: Option<Value>,
    /// Change times, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct KlinfArgs {
    /// Law to project, as JSON.
    #[arg(long, value_parser = parse_json)]
    q: Option<Value>,
    #[arg(long)]
    m: Option<f64>,
    /// Width of the final bracket on the betting fraction.
    #[arg(long)]
    tol: Option<f64>,
    /// Cross-check with the brute-force dual oracle (discrete laws).
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    oracle: bool,
    /// Oracle grid points per axis.
    #[arg(long)]
    resolution: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    detector: DetectorArgs,
    /// Thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_json)]
    pre: Option<Value>,
    #[arg(long, value_parser = parse_json)]
    post: Option<Value>,
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u64>>,
    /// Run-length replications per threshold; 0 skips them.
    #[arg(long)]
    arl_reps: Option<usize>,
    #[arg(long)]
    cadd_reps: Option<usize>,
    #[arg(long)]
    horizon_factor: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    #[arg(value_parser = ["fast", "full"])]
    #[serde(skip)]
    suite: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the JSON report to this file.
    #[arg(long = "output", value_name = "FILE")]
    output_path: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct BlocksArgs {
    /// Alarm-time law as JSON: {"points": [[n, p], ...], "tail": {...}}.
    #[arg(long, value_parser = parse_json)]
    law: Option<Value>,
    /// Use a geometric alarm time with this mean.
    #[arg(long)]
    geometric_mean: Option<f64>,
    /// Block length.
    #[arg(long)]
    f: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct ScheduleArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Projection value of the alternative.
    #[arg(long)]
    i: Option<f64>,
    /// Divergence to the near-minimising pre-change law.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Thresholds for the convergence table, comma separated.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct ComCheckArgs {
    #[arg(long, value_parser = parse_json)]
    pre: Option<Value>,
    #[arg(long, value_parser = parse_json)]
    post: Option<Value>,
    /// Change time.
    #[arg(long)]
    k: Option<usize>,
    /// Path length (at most 8).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    rule: Option<RuleKind>,
    /// Running-sum level for the sum rule.
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
struct SllnArgs {
    /// Increment law as JSON atoms: [[value, weight], ...].
    #[arg(long, value_parser = parse_json)]
    law: Option<Value>,
    /// Excess drift above the mean.
    #[arg(long)]
    eta: Option<f64>,
    /// Horizons, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

fn law(spec: &DistributionSpec) -> Result<BoundedDistribution> {
    BoundedDistribution::try_from(spec.clone()).map_err(|e| anyhow!("{spec}: {e}"))
}

fn required<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value.as_ref().with_context(|| format!("missing `{name}` (flag or config key)"))
}

fn publish<C: Serialize, R: Serialize>(
    command: &str,
    config: &C,
    result: &R,
    start: Instant,
    settings: &config::OutputSettings,
    rows: Option<Vec<CsvRow>>,
) -> Result<()> {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command,
        config,
        result,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    emit(settings, &report, rows)
}

fn cmd_arl(file: Option<&Value>, args: &ArlArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg: ArlConfig = resolve("arl", file, args)?;
    let seed = settle_seed(&mut cfg.seed);
    let detector = cfg.detector.build()?;
    let p = law(&cfg.detector.pre_or_default(&cfg.pre))?;
    let horizon = cfg.horizon.unwrap_or_else(|| default_arl_horizon(detector.gamma()));
    let est = estimate_arl(&detector, &p, cfg.reps, horizon, SeedSpec::new(seed, 0))?;
    let rows = vec![CsvRow {
        metric: "arl".into(),
        gamma: est.gamma,
        estimate: est.mean_run_length,
        se: est.std_error,
        censor_rate: est.censor_rate,
        seed,
    }];
    publish("arl", &cfg, &est, start, &cfg.output, Some(rows))
}

fn cadd_rows(est: &bmdetect::sim::CaddEstimate, seed: u64) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    if let (Some(pooled), Some(se)) = (est.pooled, est.pooled_std_error) {
        let censored: usize = est.per_k.iter().map(|d| d.censored).sum();
        let survivors: usize = est.per_k.iter().map(|d| d.survivors).sum();
        rows.push(CsvRow {
            metric: "cadd".into(),
            gamma: est.gamma,
            estimate: pooled,
            se,
            censor_rate: censored as f64 / survivors.max(1) as f64,
            seed,
        });
    }
    for d in &est.per_k {
        if let (Some(mean), Some(se)) = (d.conditional_mean_delay, d.std_error) {
            rows.push(CsvRow {
                metric: format!("delay_k{}", d.k),
                gamma: est.gamma,
                estimate: mean,
                se,
                censor_rate: d.censored as f64 / d.survivors.max(1) as f64,
                seed,
            });
        }
    }
    rows
}

fn cmd_cadd(file: Option<&Value>, args: &CaddArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg: CaddConfig = resolve("cadd", file, args)?;
    let seed = settle_seed(&mut cfg.seed);
    let detector = cfg.detector.build()?;
    let p = law(&cfg.detector.pre_or_default(&cfg.pre))?;
    let q = law(required(&cfg.post, "post")?)?;
    let est = estimate_cadd(&detector, &p, &q, &cfg.k, cfg.reps, SeedSpec::new(seed, 0))?;
    let rows = cadd_rows(&est, seed);
    publish("cadd", &cfg, &est, start, &cfg.output, Some(rows))
}

#[derive(Debug, Serialize)]
struct KlinfOutput {
    #[serde(flatten)]
    solution: KlInfResult,
    oracle_value: Option<f64>,
    gap: Option<f64>,
    oracle: Option<OracleResult>,
}

fn cmd_klinf(file: Option<&Value>, args: &KlinfArgs) -> Result<()> {
    let start = Instant::now();
    let cfg: KlinfConfig = resolve("klinf", file, args)?;
    let q = law(required(&cfg.q, "q")?)?;
    let solution = klinf_dual_solve(&q, cfg.m, cfg.tol)?;
    let oracle = if cfg.oracle {
        Some(klinf_primal_oracle(&q, cfg.m, cfg.resolution)?)
    } else {
        None
    };
    let out = KlinfOutput {
        oracle_value: oracle.as_ref().map(|o| o.value),
        gap: oracle.as_ref().map(|o| (o.value - solution.value).abs()),
        solution,
        oracle,
    };
    publish("klinf", &cfg, &out, start, &cfg.output, None)
}

#[derive(Debug, Serialize)]
struct SweepOutput {
    #[serde(flatten)]
    sweep: bmdetect::sim::SweepResult,
    /// Asymptotic slope `1 / KL_inf(post; m)`.
    reference_slope: f64,
}

fn cmd_sweep(file: Option<&Value>, args: &SweepArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg: SweepConfig = resolve("sweep", file, args)?;
    let seed = settle_seed(&mut cfg.seed);
    if cfg.gammas.is_empty() {
        bail!("no thresholds given");
    }
    let mut settings = cfg.detector.clone();
    settings.gamma = cfg.gammas[0];
    let detector = settings.build()?;
    let p = law(&cfg.detector.pre_or_default(&cfg.pre))?;
    let q = law(required(&cfg.post, "post")?)?;
    let plan = SweepPlan {
        gammas: cfg.gammas.clone(),
        k_list: cfg.k.clone(),
        arl_replications: cfg.arl_reps,
        cadd_replications: cfg.cadd_reps,
        horizon_factor: cfg.horizon_factor,
    };
    let result = sweep(&detector, &p, &q, &plan, SeedSpec::new(seed, 0))?;
    let reference = klinf_dual_solve(&q, cfg.detector.m, bmdetect::klinf::DEFAULT_TOLERANCE)?;
    let mut rows = Vec::new();
    for row in &result.rows {
        if let Some(arl) = &row.arl {
            rows.push(CsvRow {
                metric: "arl".into(),
                gamma: row.gamma,
                estimate: arl.mean_run_length,
                se: arl.std_error,
                censor_rate: arl.censor_rate,
                seed,
            });
        }
        rows.extend(cadd_rows(&row.cadd, seed).into_iter().take(1));
    }
    let out = SweepOutput {
        sweep: result,
        reference_slope: 1.0 / reference.value,
    };
    publish("sweep", &cfg, &out, start, &cfg.output, Some(rows))
}

fn cmd_verify(file: Option<&Value>, args: &VerifyArgs) -> Result<bool> {
    let start = Instant::now();
    let mut cfg: VerifyConfig = resolve("verify", file, args)?;
    let suite: Suite = args.suite.parse().map_err(|e: String| anyhow!(e))?;
    let seed = settle_seed(&mut cfg.seed);
    eprintln!("config: {}", serde_json::to_string(&cfg)?);
    let report = run_suite(suite, SeedSpec::new(seed, 0));
    print!("{}", report.table());
    if cfg.output.output_path.is_some() {
        publish("verify", &cfg, &report, start, &cfg.output, None)?;
    }
    Ok(report.passed)
}

fn cmd_blocks(file: Option<&Value>, args: &BlocksArgs) -> Result<()> {
    let start = Instant::now();
    let cfg: BlocksConfig = resolve("blocks", file, args)?;
    let law = match (&cfg.law, cfg.geometric_mean) {
        (Some(l), _) => l.clone(),
        (None, Some(mean)) => StoppingLaw::geometric(mean)?,
        (None, None) => bail!("give a stopping law (`law`) or `geometric_mean`"),
    };
    let stats = block_stats(&law, cfg.f, cfg.gamma)?;
    publish("lab blocks", &cfg, &stats, start, &cfg.output, None)
}

#[derive(Debug, Serialize)]
struct ScheduleOutput {
    params: bmdetect::lab::LowerBoundParams,
    block_ratio: f64,
    level_ratio: f64,
    tail_term: f64,
    convergence: bmdetect::lab::ScheduleConvergence,
}

fn cmd_schedule(file: Option<&Value>, args: &ScheduleArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg: ScheduleConfig = resolve("schedule", file, args)?;
    let i = *cfg
        .i
        .get_or_insert_with(|| bmdetect::klinf::klinf_bernoulli_closed_form(0.75, 0.5));
    let mu = *cfg.mu.get_or_insert(i);
    let params = schedule_params(cfg.gamma, cfg.epsilon, cfg.delta, i, mu, cfg.b)?;
    let convergence = schedule_convergence(&cfg.gammas, cfg.epsilon, cfg.delta, i, mu, cfg.b)?;
    let out = ScheduleOutput {
        block_ratio: params.block_ratio(),
        level_ratio: params.level_ratio(),
        tail_term: params.tail_term(),
        params,
        convergence,
    };
    publish("lab schedule", &cfg, &out, start, &cfg.output, None)
}

#[derive(Debug, Serialize)]
struct ComCheckOutput {
    change_of_measure: bmdetect::lab::ChangeOfMeasureCheck,
    prefix: bmdetect::lab::PrefixCheck,
    /// Projection of the post-change law onto the single pre-change law.
    divergence: f64,
}

fn cmd_com_check(file: Option<&Value>, args: &ComCheckArgs) -> Result<()> {
    let start = Instant::now();
    let cfg: ComCheckConfig = resolve("com_check", file, args)?;
    let p = law(&cfg.pre.clone().unwrap_or(DistributionSpec::Bernoulli { p: 0.5 }))?;
    let q = law(&cfg.post.clone().unwrap_or(DistributionSpec::Bernoulli { p: 0.75 }))?;
    let rule: Box<dyn StoppingRule> = match cfg.rule {
        RuleKind::Sum => Box::new(ThresholdSumRule {
            threshold: cfg.threshold,
        }),
        RuleKind::Detector => Box::new(DetectorRule(cfg.detector.build()?)),
    };
    let out = ComCheckOutput {
        change_of_measure: exact_change_of_measure_check(&p, &q, cfg.k, cfg.n, rule.as_ref())?,
        prefix: prefix_equality_check(&p, &q, cfg.k, cfg.n, rule.as_ref())?,
        divergence: finite_class_klinf(&q, std::slice::from_ref(&p))?.value,
    };
    publish("lab com-check", &cfg, &out, start, &cfg.output, None)
}

fn cmd_slln(file: Option<&Value>, args: &SllnArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg: SllnConfig = resolve("slln", file, args)?;
    let seed = settle_seed(&mut cfg.seed);
    let law = RealDiscreteLaw::new(&cfg.law)?;
    let probe = maximal_slln_probe(&law, cfg.eta, &cfg.n, cfg.reps, SeedSpec::new(seed, 0))?;
    publish("lab slln", &cfg, &probe, start, &cfg.output, None)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = cli.config.as_deref().map(config::load_file).transpose()?;
    let file = file.as_ref();
    match &cli.command {
        Command::Detect(args) => {
            let cfg: DetectConfig = resolve("detect", file, args)?;
            eprintln!("config: {}", serde_json::to_string(&cfg)?);
            return Ok(match detect::run(&cfg)? {
                detect::DetectOutcome::Alarm => ExitCode::SUCCESS,
                detect::DetectOutcome::NoAlarm => ExitCode::from(EXIT_NO_ALARM),
            });
        }
        Command::Arl(args) => cmd_arl(file, args)?,
        Command::Cadd(args) => cmd_cadd(file, args)?,
        Command::Klinf(args) => cmd_klinf(file, args)?,
        Command::Sweep(args) => cmd_sweep(file, args)?,
        Command::Verify(args) => {
            if !cmd_verify(file, args)? {
                return Ok(ExitCode::from(EXIT_VERIFY_FAILED));
            }
        }
        Command::Lab { action } => match action {
            LabAction::Blocks(args) => cmd_blocks(file, args)?,
            LabAction::Schedule(args) => cmd_schedule(file, args)?,
            LabAction::ComCheck(args) => cmd_com_check(file, args)?,
            LabAction::Slln(args) => cmd_slln(file, args)?,
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
