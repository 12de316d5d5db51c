//! Run configuration: the JSON document read by every subcommand, and its
//! translation into engine objects.

use std::collections::BTreeMap;
use std::path::Path;

use intricacy_core::group_model::LambdaAtom;
use intricacy_core::{CoefficientSystem, Conditioning, CylinderCover, LatticeWindow, ShiftMeasure, ShiftSpace, SlidingBlockCode};
use serde::{Deserialize, Serialize};

pub const MIN_MC_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub covers: BTreeMap<String, CoverSpec>,
    #[serde(default)]
    pub measures: BTreeMap<String, MeasureSpec>,
    #[serde(default)]
    pub code: Option<CodeSpec>,
    #[serde(default = "default_coefficients")]
    pub coefficients: Vec<CoeffSpec>,
    #[serde(default)]
    pub quantities: Vec<QuantitySpec>,
    pub n: NRange,
    /// Conditioning-window margins, used by conditional quantities.
    #[serde(default = "default_margins")]
    pub margins: Vec<usize>,
    #[serde(default)]
    pub mode: ModeSpec,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget_nodes: Option<u64>,
    #[serde(default)]
    pub exact_limit: Option<usize>,
    /// Wall-clock budget for the whole run.
    #[serde(default)]
    pub max_seconds: Option<f64>,
    /// Window index `m` of the global partition searched by `asc_mu_plus`.
    #[serde(default)]
    pub plus_window: Option<usize>,
    /// Fill the `seconds` column (makes outputs differ between reruns).
    #[serde(default)]
    pub timings: bool,
    /// Multiplies every verification tolerance.
    #[serde(default = "default_scale")]
    pub tolerance_scale: f64,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_coefficients() -> Vec<CoeffSpec> {
    vec![CoeffSpec::Named("uniform".into())]
}

fn default_margins() -> Vec<usize> {
    vec![0]
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default = "default_dimension")]
    pub dimension: u8,
    pub alphabet: usize,
    /// Transition matrix rows; omitted for the full shift.
    #[serde(default)]
    pub transitions: Option<Vec<Vec<u8>>>,
    /// Vertical transition rows (two-dimensional systems only).
    #[serde(default)]
    pub vertical: Option<Vec<Vec<u8>>>,
    #[serde(default)]
    pub halo: Option<usize>,
}

fn default_dimension() -> u8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSpec {
    /// Window points: integers in one dimension, `[x, y]` pairs in two.
    pub window: Vec<PointSpec>,
    /// Per element, the list of patterns over the window.
    pub elements: Vec<Vec<PatternSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Offset(i64),
    Pair([i64; 2]),
}

/// A pattern as a digit string (`"011"`) or an explicit symbol list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatternSpec {
    Digits(String),
    Symbols(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MeasureSpec {
    Bernoulli { p: Vec<f64> },
    Markov { stationary: Vec<f64>, transition: Vec<Vec<f64>> },
    Mixture { weights: Vec<f64>, children: Vec<MeasureSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSpec {
    pub radius: usize,
    pub target_alphabet: usize,
    /// Image of each source word, in lexicographic source-word order.
    pub rule: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffSpec {
    Named(String),
    Atoms { atoms: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantitySpec {
    pub name: String,
    pub cover: String,
    #[serde(default)]
    pub measure: Option<String>,
    #[serde(default)]
    pub conditional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NRange {
    Span { from: usize, to: usize },
    List(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    #[default]
    Exact,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    N,
    #[serde(rename = "V")]
    #[value(name = "V")]
    V,
    Samples,
    Coefficients,
}

pub const QUANTITIES: &[&str] = &[
    "asc_top",
    "int_top",
    "h_cover",
    "n_conditional",
    "asc_mu",
    "asc_mu_minus",
    "asc_mu_plus",
    "asc_minus_anchored",
];

/// Quantities that need a measure.
pub fn needs_measure(name: &str) -> bool {
    name.starts_with("asc_mu") || name == "asc_minus_anchored"
}

/// A configuration turned into engine objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub shift: ShiftSpace,
    pub covers: BTreeMap<String, CylinderCover>,
    pub measures: BTreeMap<String, ShiftMeasure>,
    pub conditioning: Option<Conditioning>,
    pub coefficients: Vec<CoefficientSystem>,
    pub ns: Vec<usize>,
}

pub fn load(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

impl RunConfig {
    pub fn ns(&self) -> Vec<usize> {
        match &self.n {
            NRange::Span { from, to } => (*from..=*to).collect(),
            NRange::List(v) => v.clone(),
        }
    }

    /// Checks everything that can be checked without running the engine.
    pub fn resolve(&self) -> Result<Resolved, String> {
        let s = &self.system;
        let shift = match (s.dimension, &s.transitions, &s.vertical) {
            (1, None, None) | (2, None, None) => ShiftSpace::full(s.dimension, s.alphabet),
            (1, Some(rows), None) => ShiftSpace::one_step(rows),
            (2, Some(h), Some(v)) => ShiftSpace::planar(h, v, s.halo.unwrap_or(2)),
            (2, _, _) => return Err("system: a planar SFT needs both transitions and vertical".into()),
            (1, _, Some(_)) => return Err("system: vertical transitions need dimension 2".into()),
            (d, _, _) => return Err(format!("system.dimension: {d} is not 1 or 2")),
        }
        .map_err(|e| format!("system: {e}"))?;
        if shift.alphabet() != s.alphabet {
            return Err(format!(
                "system.alphabet: {} but the transition matrix has {} symbols",
                s.alphabet,
                shift.alphabet()
            ));
        }
        let shift = match s.halo {
            Some(h) => shift.with_halo(h),
            None => shift,
        };

        let mut covers = BTreeMap::new();
        for (name, spec) in &self.covers {
            let cover = build_cover(spec, shift.dimension(), shift.alphabet()).map_err(|e| format!("covers.{name}: {e}"))?;
            intricacy_core::cover_algebra::validate_cover(&shift, &cover).map_err(|e| format!("covers.{name}: {e}"))?;
            covers.insert(name.clone(), cover);
        }

        let mut measures = BTreeMap::new();
        for (name, spec) in &self.measures {
            let m = build_measure(spec).map_err(|e| format!("measures.{name}: {e}"))?;
            m.check_support(&shift).map_err(|e| format!("measures.{name}: {e}"))?;
            measures.insert(name.clone(), m);
        }

        let conditioning = match &self.code {
            None => None,
            Some(c) => {
                let code = SlidingBlockCode::new(shift.alphabet(), c.target_alphabet, c.radius, c.rule.clone())
                    .map_err(|e| format!("code: {e}"))?;
                Some(Conditioning::new(code, self.margins.clone()).map_err(|e| format!("margins: {e}"))?)
            }
        };

        if self.coefficients.is_empty() {
            return Err("coefficients: at least one system is required".into());
        }
        let coefficients = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| build_coeffs(c).map_err(|e| format!("coefficients[{i}]: {e}")))
            .collect::<Result<Vec<_>, _>>()?;

        let ns = self.ns();
        if ns.is_empty() {
            return Err("n: the range is empty".into());
        }
        if ns.contains(&0) {
            return Err("n: values must be positive".into());
        }
        if self.mode == ModeSpec::Mc && self.samples.unwrap_or(0) < MIN_MC_SAMPLES {
            return Err(format!("samples: Monte-Carlo mode needs at least {MIN_MC_SAMPLES}"));
        }
        if let Some(t) = self.max_seconds {
            if !(t > 0.0) {
                return Err("max_seconds: must be positive".into());
            }
        }
        if !(self.tolerance_scale >= 0.0) {
            return Err("tolerance_scale: must be nonnegative".into());
        }

        for (i, q) in self.quantities.iter().enumerate() {
            let at = format!("quantities[{i}]");
            if !QUANTITIES.contains(&q.name.as_str()) {
                return Err(format!("{at}.name: unknown quantity {:?}", q.name));
            }
            if !covers.contains_key(&q.cover) {
                return Err(format!("{at}.cover: no cover named {:?}", q.cover));
            }
            match (&q.measure, needs_measure(&q.name)) {
                (Some(m), true) if !measures.contains_key(m) => {
                    return Err(format!("{at}.measure: no measure named {m:?}"))
                }
                (None, true) => return Err(format!("{at}.measure: {} needs a measure", q.name)),
                (Some(_), false) => return Err(format!("{at}.measure: {} takes no measure", q.name)),
                _ => {}
            }
            let conditional = q.conditional || q.name == "n_conditional";
            if conditional && conditioning.is_none() {
                return Err(format!("{at}: conditional quantity without a code block"));
            }
            if q.name == "asc_minus_anchored" && q.conditional {
                return Err(format!("{at}: the anchored series is unconditional"));
            }
        }

        Ok(Resolved {
            shift,
            covers,
            measures,
            conditioning,
            coefficients,
            ns,
        })
    }
}

fn build_cover(spec: &CoverSpec, dimension: u8, alphabet: usize) -> intricacy_core::Result<CylinderCover> {
    let points = spec
        .window
        .iter()
        .map(|p| match *p {
            PointSpec::Offset(x) => [x, 0],
            PointSpec::Pair(p) => p,
        })
        .collect();
    let window = LatticeWindow::new(dimension, points)?;
    let mut elements = Vec::with_capacity(spec.elements.len());
    for el in &spec.elements {
        let mut pats = Vec::with_capacity(el.len());
        for p in el {
            pats.push(match p {
                PatternSpec::Symbols(v) => v.clone(),
                PatternSpec::Digits(s) => s
                    .chars()
                    .map(|c| {
                        c.to_digit(10).map(|d| d as u8).ok_or_else(|| {
                            intricacy_core::Error::InvalidCover(format!("pattern {s:?} is not a digit string"))
                        })
                    })
                    .collect::<intricacy_core::Result<Vec<u8>>>()?,
            });
        }
        elements.push(pats);
    }
    CylinderCover::new(window, alphabet, elements)
}

fn build_measure(spec: &MeasureSpec) -> intricacy_core::Result<ShiftMeasure> {
    match spec {
        MeasureSpec::Bernoulli { p } => ShiftMeasure::bernoulli(p.clone()),
        MeasureSpec::Markov { stationary, transition } => ShiftMeasure::markov(stationary.clone(), transition.clone()),
        MeasureSpec::Mixture { weights, children } => {
            if weights.len() != children.len() {
                return Err(intricacy_core::Error::InvalidMeasure(
                    "mixture needs one weight per child".into(),
                ));
            }
            let parts = weights
                .iter()
                .zip(children)
                .map(|(&w, c)| Ok((w, build_measure(c)?)))
                .collect::<intricacy_core::Result<Vec<_>>>()?;
            ShiftMeasure::mixture(parts)
        }
    }
}

pub fn build_coeffs(spec: &CoeffSpec) -> Result<CoefficientSystem, String> {
    match spec {
        CoeffSpec::Named(n) => match n.as_str() {
            "uniform" => Ok(CoefficientSystem::Uniform),
            "neural" => Ok(CoefficientSystem::Neural),
            other => Err(format!("unknown coefficient system {other:?}")),
        },
        CoeffSpec::Atoms { atoms } => CoefficientSystem::lambda_atoms(
            atoms.iter().map(|&[x, weight]| LambdaAtom { x, weight }).collect(),
        )
        .map_err(|e| e.to_string()),
    }
}
