use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::{Format, OutputSettings};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub config: &'a C,
    pub result: &'a R,
    pub wall_time_seconds: f64,
}

/// One line of the tabular output.
#[derive(Debug, Clone, Serialize)]
pub struct CsvRow {
    pub metric: String,
    pub gamma: f64,
    pub estimate: f64,
    pub se: f64,
    pub censor_rate: f64,
    pub seed: u64,
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Writes the report as JSON, or the rows as CSV when requested. Commands
/// without a table pass `None` for `rows` and reject the CSV format.
pub fn emit<C: Serialize, R: Serialize>(
    settings: &OutputSettings,
    report: &Report<'_, C, R>,
    rows: Option<Vec<CsvRow>>,
) -> Result<()> {
    let mut out = sink(settings.output_path.as_deref())?;
    match settings.output_format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let rows = rows.with_context(|| format!("`{}` has no CSV form; use json", report.command))?;
            let mut w = csv::Writer::from_writer(out);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
