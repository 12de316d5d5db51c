//! CSV and JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use intricacy_core::engine::CheckResult;
use serde::Serialize;

use crate::config::RunConfig;
use crate::run::Entry;

pub const CSV_HEADER: &str = "quantity,coeffs,n,V,value,stderr,certified,mode,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Nats,
    Bits,
}

impl Units {
    pub fn scale(self) -> f64 {
        match self {
            Units::Nats => 1.0,
            Units::Bits => 1.0 / std::f64::consts::LN_2,
        }
    }
}

/// Entries with `value` and `stderr` converted to `units`.
pub fn rescale(entries: &[Entry], units: Units) -> Vec<Entry> {
    let k = units.scale();
    entries
        .iter()
        .cloned()
        .map(|mut e| {
            for r in &mut e.series.records {
                r.value *= k;
                r.stderr *= k;
            }
            if let Some(f) = &mut e.series.final_estimate {
                f.last_value *= k;
                f.cauchy_gap = f.cauchy_gap.map(|g| g * k);
            }
            e
        })
        .collect()
}

pub fn csv(entries: &[Entry]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for e in entries {
        for r in &e.series.records {
            let v = r.v.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                e.series.quantity, e.series.coeffs, r.n, v, r.value, r.stderr, r.certified, r.mode, r.seconds
            )
            .unwrap();
        }
    }
    s
}

#[derive(Debug, Serialize)]
pub struct ComputeReport<'a> {
    pub command: &'a str,
    pub units: Units,
    pub status: &'a str,
    pub exit_code: i32,
    pub errors: &'a [String],
    pub results: &'a [Entry],
}

#[derive(Debug, Serialize)]
pub struct VerifyOutput<'a> {
    pub command: &'a str,
    pub passed: bool,
    pub exit_code: i32,
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
    pub error: usize,
    pub checks: &'a [CheckResult],
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}

pub fn write_run(dir: &Path, config: &RunConfig, entries: &[Entry], report: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.csv"), csv(entries))?;
    fs::write(dir.join("report.json"), report)?;
    fs::write(dir.join("run_config.json"), json(config))
}
