//! Run reports and their CSV / JSON serializations.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{RunConfig, Tally};
use crate::channel::Mode;
use crate::equalizer::Precision;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str =
    "mode,B,U,M,channel_kind,snr_db,trials,bit_errors,ber,activity_mean,activity_min,activity_max,tau_w,tau_y,seed";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    /// Receive vectors equalized.
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub activity_mean: f64,
    pub activity_min: f64,
    pub activity_max: f64,
}

impl BerPoint {
    pub fn from_tally(snr_db: f64, t: &Tally, bits_per_vector: usize) -> Self {
        let (min, max) = if t.vectors == 0 {
            (0.0, 0.0)
        } else {
            (t.min_rate, t.max_rate)
        };
        BerPoint {
            snr_db,
            trials: t.vectors,
            bit_errors: t.bit_errors,
            ber: t.ber(bits_per_vector),
            activity_mean: t.activity_mean(),
            activity_min: min,
            activity_max: max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub b: usize,
    pub u: usize,
    pub modulation: u32,
    pub channel_kind: String,
    pub precision: Precision,
    pub tau_w: f64,
    pub tau_y: f64,
    pub seed: u64,
    pub vectors_per_block: usize,
    pub points: Vec<BerPoint>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(cfg: &RunConfig, mode: Mode, points: Vec<BerPoint>, wall_time_s: f64) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            mode,
            b: cfg.system.b,
            u: cfg.system.u,
            modulation: cfg.system.modulation,
            channel_kind: cfg.channel.label().to_string(),
            precision: cfg.equalizer.precision,
            tau_w: cfg.equalizer.tau_w,
            tau_y: cfg.equalizer.tau_y,
            seed: cfg.system.seed,
            vectors_per_block: cfg.vectors_per_block,
            points,
            wall_time_s,
        }
    }

    /// One row per SNR point. Wall time is not part of the CSV, so two runs
    /// of the same configuration produce identical bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_HEADER);
        s.push('\n');
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.mode,
                self.b,
                self.u,
                self.modulation,
                self.channel_kind,
                p.snr_db,
                p.trials,
                p.bit_errors,
                p.ber,
                p.activity_mean,
                p.activity_min,
                p.activity_max,
                self.tau_w,
                self.tau_y,
                self.seed
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Parse(format!("unknown report format '{s}'"))),
        }
    }
}

pub fn render_report(report: &RunReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => Ok(report.to_csv()),
        ReportFormat::Json => report.to_json(),
    }
}

pub fn emit_report(report: &RunReport, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(report, format)?)?;
    Ok(())
}
