//! `intricacy`: compute, verify and sweep subset-averaged complexity series.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid input (nothing
//! written), 3 budget exhausted (partial results written).

mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use intricacy_core::engine::CheckStatus;

use config::{CoeffSpec, ModeSpec, NRange, RunConfig, SweepParameter, SweepSpec};
use output::Units;

const EXIT_OK: u8 = 0;
const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "intricacy", version, about = "Average sample complexity and intricacy of symbolic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every configured quantity and write results.csv and report.json.
    Compute(Common),
    /// Run the invariant suite on the configured systems.
    Verify(Common),
    /// Repeat `compute` once per value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parameter to vary (overrides the configuration's sweep block).
        #[arg(long, value_enum)]
        param: Option<SweepParameter>,
        /// Comma-separated values for `--param`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeSpec>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget_nodes: Option<u64>,
    /// Report values in bits instead of nats.
    #[arg(long)]
    bits: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, String> {
        let mut c = config::load(&self.config)?;
        if let Some(m) = self.mode {
            c.mode = m;
        }
        if let Some(s) = self.samples {
            c.samples = Some(s);
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(b) = self.budget_nodes {
            c.budget_nodes = Some(b);
        }
        Ok(c)
    }

    fn units(&self) -> Units {
        if self.bits {
            Units::Bits
        } else {
            Units::Nats
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Compute(c) | Command::Verify(c) => c,
        Command::Sweep { common, .. } => common,
    };
    if let Some(j) = common.jobs {
        if j == 0 {
            return invalid("--jobs must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            return invalid(&e.to_string());
        }
    }
    let code = match &cli.command {
        Command::Compute(c) => compute(c),
        Command::Verify(c) => verify(c),
        Command::Sweep { common, param, values } => sweep(common, *param, values),
    };
    ExitCode::from(code)
}

fn invalid(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_INVALID)
}

fn fail_invalid(msg: &str) -> u8 {
    eprintln!("error: {msg}");
    EXIT_INVALID
}

fn write_failed(dir: &Path, e: std::io::Error) -> u8 {
    eprintln!("error: writing {}: {e}", dir.display());
    EXIT_INVALID
}

fn compute(args: &Common) -> u8 {
    let start = Instant::now();
    let config = match args.load() {
        Ok(c) => c,
        Err(e) => return fail_invalid(&e),
    };
    let resolved = match config.resolve() {
        Ok(r) => r,
        Err(e) => return fail_invalid(&e),
    };
    let outcome = run::compute(&config, &resolved, start);
    if !outcome.errors.is_empty() {
        return fail_invalid(&outcome.errors.join("; "));
    }
    let code = if outcome.exhausted() { EXIT_BUDGET } else { EXIT_OK };
    let entries = output::rescale(&outcome.entries, args.units());
    let report = output::json(&output::ComputeReport {
        command: "compute",
        units: args.units(),
        status: status_word(code),
        exit_code: code as i32,
        errors: &failures(&entries),
        results: &entries,
    });
    if let Err(e) = output::write_run(&args.out, &config, &entries, &report) {
        return write_failed(&args.out, e);
    }
    summarize(&entries, code);
    code
}

fn failures(entries: &[run::Entry]) -> Vec<String> {
    entries
        .iter()
        .filter_map(|e| e.series.failure.as_ref().map(|f| format!("{} ({}): {f}", e.quantity, e.series.coeffs)))
        .collect()
}

fn status_word(code: u8) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_VERIFY_FAILED => "verify_failed",
        EXIT_BUDGET => "budget_exhausted",
        _ => "invalid",
    }
}

fn summarize(entries: &[run::Entry], code: u8) {
    for e in entries {
        let last = e.series.records.last().map(|r| format!("n={} value={}", r.n, r.value));
        eprintln!(
            "{} [{}] {} rows{}{}",
            e.quantity,
            e.series.coeffs,
            e.series.records.len(),
            last.map(|l| format!(", last {l}")).unwrap_or_default(),
            e.series.failure.as_ref().map(|f| format!(", stopped: {f}")).unwrap_or_default()
        );
    }
    if code == EXIT_BUDGET {
        eprintln!("budget exhausted; partial results written");
    }
}

fn verify(args: &Common) -> u8 {
    let start = Instant::now();
    let config = match args.load() {
        Ok(c) => c,
        Err(e) => return fail_invalid(&e),
    };
    let resolved = match config.resolve() {
        Ok(r) => r,
        Err(e) => return fail_invalid(&e),
    };
    let report = run::verify(&config, &resolved, start);
    let code = if report.passed() { EXIT_OK } else { EXIT_VERIFY_FAILED };
    for c in &report.checks {
        if c.status != CheckStatus::Pass {
            eprintln!("{:?} {}: {}", c.status, c.name, c.detail);
        }
    }
    let body = output::json(&output::VerifyOutput {
        command: "verify",
        passed: report.passed(),
        exit_code: code as i32,
        pass: report.count(CheckStatus::Pass),
        fail: report.count(CheckStatus::Fail),
        skipped: report.count(CheckStatus::Skipped),
        error: report.count(CheckStatus::Error),
        checks: &report.checks,
    });
    let written = std::fs::create_dir_all(&args.out)
        .and_then(|_| std::fs::write(args.out.join("verify_report.json"), body))
        .and_then(|_| std::fs::write(args.out.join("run_config.json"), output::json(&config)));
    if let Err(e) = written {
        return write_failed(&args.out, e);
    }
    eprintln!(
        "{} passed, {} failed, {} skipped, {} errors",
        report.count(CheckStatus::Pass),
        report.count(CheckStatus::Fail),
        report.count(CheckStatus::Skipped),
        report.count(CheckStatus::Error)
    );
    code
}

/// The configuration for one sweep value. Every value reuses the run seed.
fn sweep_variant(base: &RunConfig, param: SweepParameter, value: &serde_json::Value) -> Result<RunConfig, String> {
    let mut c = base.clone();
    c.sweep = None;
    let as_usize = || {
        value
            .as_u64()
            .or_else(|| value.as_str().and_then(|s| s.parse().ok()))
            .map(|v| v as usize)
            .ok_or_else(|| format!("sweep value {value} is not a nonnegative integer"))
    };
    match param {
        SweepParameter::N => c.n = NRange::List(vec![as_usize()?]),
        SweepParameter::V => c.margins = vec![as_usize()?],
        SweepParameter::Samples => {
            c.samples = Some(as_usize()?);
            c.mode = ModeSpec::Mc;
        }
        SweepParameter::Coefficients => {
            let spec: CoeffSpec = serde_json::from_value(value.clone()).map_err(|e| format!("sweep value {value}: {e}"))?;
            c.coefficients = vec![spec];
        }
    }
    Ok(c)
}

fn value_label(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn sweep(args: &Common, param: Option<SweepParameter>, values: &[String]) -> u8 {
    let start = Instant::now();
    let base = match args.load() {
        Ok(c) => c,
        Err(e) => return fail_invalid(&e),
    };
    let spec = match (param, &base.sweep) {
        (Some(p), _) => SweepSpec {
            parameter: p,
            values: values
                .iter()
                .map(|v| serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.clone())))
                .collect(),
        },
        (None, Some(s)) => s.clone(),
        (None, None) => return fail_invalid("sweep needs --param and --values or a sweep block in the configuration"),
    };
    if spec.values.is_empty() {
        return fail_invalid("sweep: no values");
    }
    let mut variants = Vec::new();
    for (i, v) in spec.values.iter().enumerate() {
        let c = match sweep_variant(&base, spec.parameter, v) {
            Ok(c) => c,
            Err(e) => return fail_invalid(&format!("sweep.values[{i}]: {e}")),
        };
        match c.resolve() {
            Ok(r) => variants.push((value_label(v), c, r)),
            Err(e) => return fail_invalid(&format!("sweep.values[{i}]: {e}")),
        }
    }

    let mut all = Vec::new();
    let mut sets = Vec::new();
    for (label, c, r) in &variants {
        let outcome = run::compute(c, r, start);
        if !outcome.errors.is_empty() {
            return fail_invalid(&format!("sweep value {label}: {}", outcome.errors.join("; ")));
        }
        let entries = output::rescale(&outcome.entries, args.units());
        all.extend(entries.iter().cloned());
        sets.push((label.clone(), c, entries, outcome.exhausted()));
    }

    let code = if sets.iter().any(|s| s.3) { EXIT_BUDGET } else { EXIT_OK };
    let param_name = serde_json::to_value(spec.parameter).unwrap();
    let param_name = param_name.as_str().unwrap();
    for (label, c, entries, exhausted) in &sets {
        let dir = args.out.join(format!("{param_name}={label}"));
        let sub = if *exhausted { EXIT_BUDGET } else { EXIT_OK };
        let report = output::json(&output::ComputeReport {
            command: "sweep",
            units: args.units(),
            status: status_word(sub),
            exit_code: sub as i32,
            errors: &failures(entries),
            results: entries,
        });
        if let Err(e) = output::write_run(&dir, c, entries, &report) {
            return write_failed(&dir, e);
        }
    }
    let combined = std::fs::write(args.out.join("sweep.csv"), output::csv(&all))
        .and_then(|_| std::fs::write(args.out.join("run_config.json"), output::json(&base)));
    if let Err(e) = combined {
        return write_failed(&args.out, e);
    }
    summarize(&all, code);
    code
}
