//! Turns a resolved configuration into engine calls.

use std::time::{Duration, Instant};

use intricacy_core::engine::{verify_suite, VerifyCase, VerifyPlan, VerifyReport};
use intricacy_core::{CylinderCover, Engine, EngineOptions, Error, SubsetMode, TruncationSeries};
use serde::Serialize;

use crate::config::{ModeSpec, Resolved, RunConfig};

/// One requested quantity evaluated under one coefficient system.
#[derive(Debug, Clone, Serialize)]
pub struct Entry {
    pub quantity: String,
    pub cover: String,
    pub measure: Option<String>,
    pub conditional: bool,
    pub series: TruncationSeries,
    /// The global partition chosen by `asc_mu_plus`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<CylinderCover>,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub entries: Vec<Entry>,
    /// Hard errors (anything other than running out of budget).
    pub errors: Vec<String>,
}

impl Outcome {
    pub fn exhausted(&self) -> bool {
        self.entries.iter().any(|e| e.series.failure.is_some())
    }
}

pub fn mode(config: &RunConfig) -> SubsetMode {
    match config.mode {
        ModeSpec::Exact => SubsetMode::Exact,
        ModeSpec::Mc => SubsetMode::MonteCarlo {
            samples: config.samples.unwrap_or(0),
            seed: config.seed,
        },
    }
}

pub fn options(config: &RunConfig, start: Instant) -> EngineOptions {
    let mut o = EngineOptions {
        seed: config.seed,
        timings: config.timings,
        deadline: config.max_seconds.map(|s| start + Duration::from_secs_f64(s)),
        ..EngineOptions::default()
    };
    o.entropy.seed = config.seed;
    if let Some(b) = config.budget_nodes {
        o.budget_nodes = b;
    }
    if let Some(l) = config.exact_limit {
        o.exact_limit = l;
    }
    if let Some(w) = config.plus_window {
        o.plus_window = w;
    }
    o
}

pub fn compute(config: &RunConfig, resolved: &Resolved, start: Instant) -> Outcome {
    let mut out = Outcome::default();
    for coeffs in &resolved.coefficients {
        let engine = match Engine::new(resolved.shift.clone(), coeffs.clone(), mode(config), options(config, start)) {
            Ok(e) => e,
            Err(e) => {
                out.errors.push(e.to_string());
                return out;
            }
        };
        for q in &config.quantities {
            let conditional = q.conditional || q.name == "n_conditional";
            let cond = if conditional { resolved.conditioning.as_ref() } else { None };
            let cover = &resolved.covers[&q.cover];
            let measure = q.measure.as_ref().map(|m| &resolved.measures[m]);
            let ns = &resolved.ns;
            let mut partition = None;
            let result = match (q.name.as_str(), measure) {
                ("asc_top", _) => engine.asc_top(cover, ns, cond),
                ("int_top", _) => engine.int_top(cover, ns, cond),
                ("h_cover" | "n_conditional", _) => engine.h_cover(cover, ns, cond),
                ("asc_mu", Some(mu)) => engine.asc_mu(mu, cover, ns, cond),
                ("asc_mu_minus", Some(mu)) => engine.asc_mu_minus(mu, cover, ns, cond, None),
                ("asc_mu_plus", Some(mu)) => engine.asc_mu_plus(mu, cover, ns, cond).map(|(s, alpha)| {
                    partition = Some(alpha);
                    s
                }),
                ("asc_minus_anchored", Some(mu)) => engine.asc_minus_anchored(mu, cover, ns),
                (other, _) => Err(Error::InvalidParameter(format!("quantity {other} cannot be evaluated"))),
            };
            match result {
                Ok(mut series) => {
                    series.quantity = q.name.clone();
                    out.entries.push(Entry {
                        quantity: q.name.clone(),
                        cover: q.cover.clone(),
                        measure: q.measure.clone(),
                        conditional,
                        series,
                        partition,
                    });
                }
                Err(e) if e.is_budget() => {
                    // nothing computed at all: still report it as a partial series
                    let mut series = TruncationSeries::new(q.name.clone(), coeffs.tag());
                    series.failure = Some(e.to_string());
                    out.entries.push(Entry {
                        quantity: q.name.clone(),
                        cover: q.cover.clone(),
                        measure: q.measure.clone(),
                        conditional,
                        series,
                        partition,
                    });
                }
                Err(e) => out.errors.push(format!("{} on {}: {e}", q.name, q.cover)),
            }
        }
    }
    out
}

pub fn verify(config: &RunConfig, resolved: &Resolved, start: Instant) -> VerifyReport {
    let case = VerifyCase {
        name: "config".into(),
        shift: resolved.shift.clone(),
        covers: resolved.covers.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        measures: resolved.measures.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        code: resolved.conditioning.as_ref().map(|c| c.code.clone()),
        margins: config.margins.clone(),
        coeffs: resolved.coefficients.clone(),
        ns: resolved.ns.clone(),
    };
    let plan = VerifyPlan {
        cases: vec![case],
        mode: mode(config),
        options: options(config, start),
        tolerance_scale: config.tolerance_scale,
    };
    verify_suite(&plan)
}
