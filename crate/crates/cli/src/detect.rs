use std::fs::File;
use std::io::{BufRead, BufReader, Write};

use anyhow::{bail, Context, Result};
use bmdetect::detector::{deserialize_state, serialize_state};
use bmdetect::stream::{rescale_affine, rescale_baseline};
use bmdetect::Detector;

use crate::config::DetectConfig;

pub enum DetectOutcome {
    Alarm,
    NoAlarm,
}

/// Feeds the stream line by line and prints `n`, `M_n` (and `ALARM` on the
/// crossing) for every observation. Stops at the first alarm.
pub fn run(cfg: &DetectConfig) -> Result<DetectOutcome> {
    let mut settings = cfg.detector.clone();
    let range = match (cfg.lo, cfg.hi) {
        (Some(lo), Some(hi)) => {
            settings.m = rescale_baseline(settings.m, lo, hi).context("baseline outside [lo, hi]")?;
            Some((lo, hi))
        }
        (None, None) => None,
        _ => bail!("--lo and --hi must be given together"),
    };
    let config = settings.build()?;
    let mut detector = match &cfg.state_in {
        Some(path) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let state = deserialize_state(&bytes).with_context(|| format!("decoding {}", path.display()))?;
            Detector::resume(config, state)?
        }
        None => Detector::new(config),
    };

    let reader: Box<dyn BufRead> = match cfg.input.as_deref() {
        Some(p) if p.as_os_str() != "-" => {
            Box::new(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))
        }
        _ => Box::new(std::io::stdin().lock()),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut outcome = match detector.state().alarmed_at() {
        Some(_) => DetectOutcome::Alarm,
        None => DetectOutcome::NoAlarm,
    };

    if matches!(outcome, DetectOutcome::NoAlarm) {
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.with_context(|| format!("line {lineno}: read failed"))?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let raw: f64 = text
                .parse()
                .map_err(|_| anyhow::anyhow!("line {lineno}: cannot parse `{text}` as a number"))?;
            let x = match range {
                Some((lo, hi)) => rescale_affine(raw, lo, hi).map_err(|e| anyhow::anyhow!("line {lineno}: {e}"))?,
                None => raw,
            };
            let alarm = detector
                .observe(x)
                .map_err(|e| anyhow::anyhow!("line {lineno}: {e}"))?;
            let state = detector.state();
            if alarm.is_some() {
                writeln!(out, "{}\t{}\tALARM", state.steps(), state.mixture())?;
                outcome = DetectOutcome::Alarm;
                break;
            }
            writeln!(out, "{}\t{}", state.steps(), state.mixture())?;
        }
    }
    out.flush()?;

    if let Some(path) = &cfg.state_out {
        std::fs::write(path, serialize_state(detector.state()))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(outcome)
}
