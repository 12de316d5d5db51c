//! Truncation series of the average-sample-complexity and intricacy
//! quantities.
//!
//! Every quantity is a weighted average over subsets `S` of the Følner box
//! `F_n` of a per-subset term (a log-count or an entropy), divided by
//! `|F_n|`. Terms are computed once per translation class of `S` and shared
//! across `n`; when the structure is a product of identical coordinates
//! (full shift, single-point cover window, Bernoulli measure) they depend only
//! on `|S|` and are shared by size.

mod joint;
mod verify;

use std::collections::HashMap;
use std::time::Instant;

use serde::Serialize;

pub use joint::{mutual_information, neural_complexity, neural_complexity_by_size, JointTable};
pub use verify::{verify_suite, CheckResult, CheckStatus, VerifyCase, VerifyPlan, VerifyReport};

use crate::cover_algebra::{validate_cover, CylinderCover};
use crate::error::{Error, Result};
use crate::group_model::{
    derive_seed, enumerate_subsets, fnv1a, folner_window, sample_subset, CoefficientSystem, LatticeWindow,
    SubsetMask, DEFAULT_EXACT_LIMIT,
};
use crate::measure_entropy::{
    conditional_partition_entropy, cover_entropy_value, marginal, partition_entropy, EntropySearch,
    ShiftMeasure, WeightedAtoms,
};
use crate::parallel::{map_slice, pairwise_sum, Execution};
use crate::series::{SeriesRecord, TruncationSeries};
use crate::subcover_counting::{n_conditional, n_join, DEFAULT_NODE_BUDGET};
use crate::symbolic_space::{language, ShiftSpace, SlidingBlockCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SubsetMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

impl SubsetMode {
    pub fn tag(&self) -> &'static str {
        match self {
            SubsetMode::Exact => "exact",
            SubsetMode::MonteCarlo { .. } => "mc",
        }
    }
}

/// Conditioning on a factor `Y` given by a sliding block code, over the
/// windows `V_m = [min(F_n ⊕ W) - m, max(F_n ⊕ W) + m]` for each margin `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub code: SlidingBlockCode,
    pub margins: Vec<usize>,
}

impl Conditioning {
    pub fn new(code: SlidingBlockCode, margins: Vec<usize>) -> Result<Self> {
        if margins.is_empty() {
            return Err(Error::InvalidParameter("conditioning needs at least one margin".into()));
        }
        Ok(Self { code, margins })
    }

    pub fn window(&self, n: usize, cover_window: &LatticeWindow, margin: usize) -> Result<LatticeWindow> {
        let hull = folner_window(n, 1)?.minkowski_sum(cover_window);
        let (lo, hi) = (hull.lower_corner()[0], hull.upper_corner()[0]);
        Ok(LatticeWindow::interval(lo - margin as i64, hi + margin as i64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    /// Largest `|F_n|` enumerated exhaustively.
    pub exact_limit: usize,
    /// Branch-and-bound node budget per set-cover instance.
    pub budget_nodes: u64,
    pub execution: Execution,
    pub entropy: EntropySearch,
    /// Largest assignment space searched exhaustively for the global partition.
    pub plus_exhaustive_limit: u128,
    /// The global partition lives on `W ⊕ F_m` for this `m`.
    pub plus_window: usize,
    pub seed: u64,
    pub deadline: Option<Instant>,
    /// Record wall time per row (otherwise 0, keeping reruns byte-identical).
    pub timings: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            exact_limit: DEFAULT_EXACT_LIMIT,
            budget_nodes: DEFAULT_NODE_BUDGET,
            execution: Execution::default(),
            entropy: EntropySearch::default(),
            plus_exhaustive_limit: 1 << 14,
            plus_window: 1,
            seed: 0,
            deadline: None,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Eval {
    value: f64,
    certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Keying {
    /// Terms depend only on `|S|`.
    Size,
    /// Terms are translation invariant.
    Shape,
    /// No sharing between subsets.
    Exact,
}

type TermFn<'a> = Box<dyn Fn(&LatticeWindow, u64) -> Result<Eval> + Sync + 'a>;

struct Evaluator<'a> {
    keying: Keying,
    term: TermFn<'a>,
    cache: HashMap<u128, Eval>,
}

fn shape_key(d: u8, n: usize, mask: SubsetMask) -> u128 {
    let bits = mask.bits();
    if bits == 0 {
        return 0;
    }
    if d == 1 {
        return (1u128 << 100) | (bits >> bits.trailing_zeros()) as u128;
    }
    let (mut minx, mut miny) = (usize::MAX, usize::MAX);
    for i in mask.indices() {
        minx = minx.min(i / n);
        miny = miny.min(i % n);
    }
    let mut key = 0u64;
    for i in mask.indices() {
        key |= 1 << ((i / n - minx) * 8 + (i % n - miny));
    }
    (2u128 << 100) | key as u128
}

impl<'a> Evaluator<'a> {
    fn new(keying: Keying, term: TermFn<'a>) -> Self {
        Self {
            keying,
            term,
            cache: HashMap::new(),
        }
    }

    fn key(&self, d: u8, n: usize, mask: SubsetMask) -> u128 {
        match self.keying {
            Keying::Size => (3u128 << 100) | mask.count() as u128,
            Keying::Shape => shape_key(d, n, mask),
            Keying::Exact => (4u128 << 100) | ((n as u128) << 64) | mask.bits() as u128,
        }
    }

    fn prefetch(&mut self, engine: &Engine, n: usize, base: &LatticeWindow, masks: &[SubsetMask]) -> Result<()> {
        let d = base.dimension();
        let mut seen = std::collections::HashSet::new();
        let mut missing = Vec::new();
        for &m in masks {
            let k = self.key(d, n, m);
            if !self.cache.contains_key(&k) && seen.insert(k) {
                missing.push((k, m));
            }
        }
        let term = &self.term;
        let deadline = engine.options.deadline;
        let results = map_slice(engine.options.execution, &missing, |&(k, m)| {
            if deadline.is_some_and(|t| Instant::now() > t) {
                return Err(Error::BudgetExhausted);
            }
            term(&base.select(m), k as u64 ^ (k >> 64) as u64)
        });
        for (&(k, _), r) in missing.iter().zip(results) {
            self.cache.insert(k, r?);
        }
        Ok(())
    }

    fn get(&self, d: u8, n: usize, mask: SubsetMask) -> Eval {
        self.cache[&self.key(d, n, mask)]
    }
}

/// Which subsets are averaged, and with what weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Selection {
    /// All subsets weighted by the coefficient system.
    Coefficients,
    /// Subsets containing the origin, weighted `2^{-(n-1)}`, normalized by `n`.
    Anchored,
}

/// How per-subset terms combine into the summand.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Combine {
    Single,
    /// `f(S) + f(F∖S) - f(F)`.
    Paired,
}

pub struct Engine {
    shift: ShiftSpace,
    coeffs: CoefficientSystem,
    mode: SubsetMode,
    options: EngineOptions,
}

impl Engine {
    pub fn new(shift: ShiftSpace, coeffs: CoefficientSystem, mode: SubsetMode, options: EngineOptions) -> Result<Self> {
        if let SubsetMode::MonteCarlo { samples, .. } = mode {
            if samples < 2 {
                return Err(Error::InvalidParameter("Monte-Carlo mode needs at least 2 samples".into()));
            }
        }
        Ok(Self {
            shift,
            coeffs,
            mode,
            options,
        })
    }

    pub fn shift(&self) -> &ShiftSpace {
        &self.shift
    }

    pub fn coeffs(&self) -> &CoefficientSystem {
        &self.coeffs
    }

    pub fn mode(&self) -> SubsetMode {
        self.mode
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    fn base_window(&self, n: usize) -> Result<LatticeWindow> {
        let w = folner_window(n, self.shift.dimension())?;
        if w.len() > 64 {
            return Err(Error::TooLarge {
                what: "Følner box",
                size: w.len() as u128,
                limit: 64,
            });
        }
        Ok(w)
    }

    fn product_structure(&self, cover: &CylinderCover, measure: Option<&ShiftMeasure>) -> bool {
        self.shift.is_full()
            && cover.window().len() == 1
            && measure.is_none_or(|m| matches!(m, ShiftMeasure::Bernoulli(_)))
    }

    fn keying(&self, cover: &CylinderCover, measure: Option<&ShiftMeasure>, conditional: bool) -> Keying {
        if conditional {
            Keying::Exact
        } else if self.product_structure(cover, measure) {
            Keying::Size
        } else {
            Keying::Shape
        }
    }

    /// Subsets and weights for one record. Exact weights sum to 1 (or to
    /// `n * 2^{-(n-1)} * 2^{n-1} / n` for anchored); MC weights are `1/M`.
    fn selection(&self, tag: &str, n: usize, len: usize, sel: Selection) -> Result<(Vec<SubsetMask>, Vec<f64>)> {
        match self.mode {
            SubsetMode::Exact => {
                let base = LatticeWindow::interval(0, len as i64 - 1);
                let all = enumerate_subsets(&base, self.options.exact_limit)?;
                match sel {
                    Selection::Coefficients => {
                        let table = self.coeffs.table(len);
                        let masks: Vec<SubsetMask> = all.collect();
                        let w = masks.iter().map(|m| table[m.count()]).collect();
                        Ok((masks, w))
                    }
                    Selection::Anchored => {
                        let masks: Vec<SubsetMask> = all.filter(|m| m.contains(0)).collect();
                        let w = vec![0.5f64.powi(len as i32 - 1); masks.len()];
                        Ok((masks, w))
                    }
                }
            }
            SubsetMode::MonteCarlo { samples, seed } => {
                let stream = derive_seed(&[seed, fnv1a(tag), n as u64]);
                let masks: Vec<SubsetMask> = (0..samples as u64)
                    .map(|i| match sel {
                        Selection::Coefficients => sample_subset(&self.coeffs, len, stream, i),
                        Selection::Anchored => {
                            let m = sample_subset(&CoefficientSystem::Uniform, len, stream, i);
                            SubsetMask::new(len, m.bits() | 1).expect("same length")
                        }
                    })
                    .collect();
                Ok((masks, vec![1.0 / samples as f64; samples]))
            }
        }
    }

    fn record(
        &self,
        tag: &str,
        n: usize,
        v: Option<usize>,
        eval: &mut Evaluator,
        sel: Selection,
        combine: Combine,
    ) -> Result<SeriesRecord> {
        let start = Instant::now();
        let base = self.base_window(n)?;
        let len = base.len();
        let d = base.dimension();
        let (masks, weights) = self.selection(tag, n, len, sel)?;
        let full = SubsetMask::full(len);
        let mut needed = masks.clone();
        if combine == Combine::Paired {
            needed.extend(masks.iter().map(|m| m.complement()));
            needed.push(full);
        }
        eval.prefetch(self, n, &base, &needed)?;
        let mut certified = true;
        let fv = if combine == Combine::Paired {
            let e = eval.get(d, n, full);
            certified &= e.certified;
            e.value
        } else {
            0.0
        };
        let values: Vec<f64> = masks
            .iter()
            .map(|&m| {
                let e = eval.get(d, n, m);
                certified &= e.certified;
                match combine {
                    Combine::Single => e.value,
                    Combine::Paired => {
                        let c = eval.get(d, n, m.complement());
                        certified &= c.certified;
                        e.value + c.value - fv
                    }
                }
            })
            .collect();
        let norm = match sel {
            Selection::Coefficients => len as f64,
            Selection::Anchored => n as f64,
        };
        let (value, stderr) = match self.mode {
            SubsetMode::Exact => {
                let terms: Vec<f64> = values.iter().zip(&weights).map(|(f, w)| f * w).collect();
                (pairwise_sum(&terms) / norm, 0.0)
            }
            SubsetMode::MonteCarlo { samples, .. } => {
                let m = samples as f64;
                let mean = pairwise_sum(&values) / m;
                let dev: Vec<f64> = values.iter().map(|f| (f - mean) * (f - mean)).collect();
                let var = pairwise_sum(&dev) / (m - 1.0);
                (mean / norm, (var / m).sqrt() / norm)
            }
        };
        Ok(SeriesRecord {
            n,
            v,
            value,
            stderr,
            certified,
            mode: self.mode.tag(),
            seconds: if self.options.timings {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        })
    }

    fn new_series(&self, tag: &str) -> TruncationSeries {
        let mut s = TruncationSeries::new(tag, self.coeffs.tag());
        s.upper_approximation = !self.shift.language_is_exact();
        s
    }

    /// Runs `f` for each `n` (and margin), stopping at the first budget error.
    fn fill(
        &self,
        series: &mut TruncationSeries,
        ns: &[usize],
        margins: Option<&[usize]>,
        mut f: impl FnMut(usize, Option<usize>) -> Result<SeriesRecord>,
    ) -> Result<()> {
        if ns.is_empty() {
            return Err(Error::InvalidParameter("n range is empty".into()));
        }
        for &n in ns {
            let vs: Vec<Option<usize>> = match margins {
                None => vec![None],
                Some(ms) => ms.iter().map(|&m| Some(m)).collect(),
            };
            for v in vs {
                match f(n, v) {
                    Ok(r) => series.push(r),
                    Err(e) if e.is_budget() => {
                        series.failure = Some(e.to_string());
                        return Ok(());
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }

    fn check_cover(&self, cover: &CylinderCover) -> Result<()> {
        validate_cover(&self.shift, cover).map(|_| ())
    }

    fn check_conditioning(&self, cond: Option<&Conditioning>) -> Result<()> {
        if let Some(c) = cond {
            if self.shift.dimension() != 1 {
                return Err(Error::Unsupported("conditioning on factors is one-dimensional".into()));
            }
            if c.code.source_alphabet() != self.shift.alphabet() {
                return Err(Error::InvalidCode("code alphabet differs from shift alphabet".into()));
            }
        }
        Ok(())
    }

    fn count_term<'a>(&'a self, cover: &'a CylinderCover, cond: Option<(&'a SlidingBlockCode, LatticeWindow)>) -> TermFn<'a> {
        let budget = self.options.budget_nodes;
        Box::new(move |s, _| {
            let r = match &cond {
                None => n_join(&self.shift, cover, s, budget)?,
                Some((code, v)) => n_conditional(&self.shift, cover, s, code, v, budget)?,
            };
            Ok(Eval {
                value: r.ln(),
                certified: r.certified,
            })
        })
    }

    fn log_count_series(
        &self,
        tag: &str,
        cover: &CylinderCover,
        ns: &[usize],
        cond: Option<&Conditioning>,
        combine: Combine,
    ) -> Result<TruncationSeries> {
        self.check_cover(cover)?;
        self.check_conditioning(cond)?;
        let mut series = self.new_series(tag);
        match cond {
            None => {
                let mut ev = Evaluator::new(self.keying(cover, None, false), self.count_term(cover, None));
                self.fill(&mut series, ns, None, |n, _| {
                    self.record(tag, n, None, &mut ev, Selection::Coefficients, combine)
                })?;
            }
            Some(c) => {
                self.fill(&mut series, ns, Some(&c.margins), |n, m| {
                    let v = c.window(n, cover.window(), m.unwrap())?;
                    let mut ev = Evaluator::new(Keying::Exact, self.count_term(cover, Some((&c.code, v))));
                    self.record(tag, n, m, &mut ev, Selection::Coefficients, combine)
                })?;
            }
        }
        Ok(series)
    }

    /// `(1/|F_n|) Σ_S c_S ln N(U_S [| Y])`.
    pub fn asc_top(&self, cover: &CylinderCover, ns: &[usize], cond: Option<&Conditioning>) -> Result<TruncationSeries> {
        self.log_count_series("asc_top", cover, ns, cond, Combine::Single)
    }

    /// `(1/|F_n|) Σ_S c_S [ln N(U_S) + ln N(U_{F∖S}) - ln N(U_F)]`; MC samples
    /// evaluate `S` and its complement together.
    pub fn int_top(&self, cover: &CylinderCover, ns: &[usize], cond: Option<&Conditioning>) -> Result<TruncationSeries> {
        self.log_count_series("int_top", cover, ns, cond, Combine::Paired)
    }

    /// `(1/|F_n|) ln N(U_{F_n} [| Y])`, with no subset averaging.
    pub fn h_cover(&self, cover: &CylinderCover, ns: &[usize], cond: Option<&Conditioning>) -> Result<TruncationSeries> {
        self.check_cover(cover)?;
        self.check_conditioning(cond)?;
        let mut series = self.new_series("h_cover");
        let margins = cond.map(|c| c.margins.as_slice());
        self.fill(&mut series, ns, margins, |n, m| {
            let start = Instant::now();
            let f = folner_window(n, self.shift.dimension())?;
            let r = match cond {
                None => n_join(&self.shift, cover, &f, self.options.budget_nodes)?,
                Some(c) => {
                    let v = c.window(n, cover.window(), m.unwrap())?;
                    n_conditional(&self.shift, cover, &f, &c.code, &v, self.options.budget_nodes)?
                }
            };
            Ok(SeriesRecord {
                n,
                v: m,
                value: r.ln() / f.len() as f64,
                stderr: 0.0,
                certified: r.certified,
                mode: "exact",
                seconds: if self.options.timings {
                    start.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            })
        })?;
        Ok(series)
    }

    fn entropy_term<'a>(
        &'a self,
        measure: &'a ShiftMeasure,
        partition: &'a CylinderCover,
        cond: Option<(&'a SlidingBlockCode, LatticeWindow)>,
    ) -> TermFn<'a> {
        Box::new(move |s, _| {
            let value = match &cond {
                None => partition_entropy(&self.shift, measure, partition, s)?,
                Some((code, v)) => conditional_partition_entropy(&self.shift, measure, partition, s, code, v)?,
            };
            Ok(Eval {
                value,
                certified: true,
            })
        })
    }

    fn check_measure(&self, measure: &ShiftMeasure) -> Result<()> {
        measure.check_support(&self.shift)
    }

    /// `(1/|F_n|) Σ_S c_S H_μ(α_S [| Y])` for a partition `α`.
    pub fn asc_mu(
        &self,
        measure: &ShiftMeasure,
        partition: &CylinderCover,
        ns: &[usize],
        cond: Option<&Conditioning>,
    ) -> Result<TruncationSeries> {
        self.asc_mu_tagged("asc_mu", measure, partition, ns, cond)
    }

    fn asc_mu_tagged(
        &self,
        tag: &str,
        measure: &ShiftMeasure,
        partition: &CylinderCover,
        ns: &[usize],
        cond: Option<&Conditioning>,
    ) -> Result<TruncationSeries> {
        self.check_cover(partition)?;
        self.check_measure(measure)?;
        self.check_conditioning(cond)?;
        if !partition.is_partition() {
            return Err(Error::InvalidCover("asc_mu needs a partition".into()));
        }
        let mut series = self.new_series(tag);
        match cond {
            None => {
                let keying = self.keying(partition, Some(measure), false);
                let mut ev = Evaluator::new(keying, self.entropy_term(measure, partition, None));
                self.fill(&mut series, ns, None, |n, _| {
                    self.record(tag, n, None, &mut ev, Selection::Coefficients, Combine::Single)
                })?;
            }
            Some(c) => {
                self.fill(&mut series, ns, Some(&c.margins), |n, m| {
                    let v = c.window(n, partition.window(), m.unwrap())?;
                    let mut ev = Evaluator::new(Keying::Exact, self.entropy_term(measure, partition, Some((&c.code, v))));
                    self.record(tag, n, m, &mut ev, Selection::Coefficients, Combine::Single)
                })?;
            }
        }
        Ok(series)
    }

    fn cover_entropy_term<'a>(
        &'a self,
        measure: &'a ShiftMeasure,
        cover: &'a CylinderCover,
        cond: Option<(&'a SlidingBlockCode, LatticeWindow)>,
        hint: Option<&'a CylinderCover>,
    ) -> TermFn<'a> {
        Box::new(move |s, key| {
            let c = cond.as_ref().map(|(code, v)| (*code, v));
            let wa = WeightedAtoms::build(&self.shift, measure, cover, s, c)?;
            let opts = EntropySearch {
                seed: derive_seed(&[self.options.seed, key]),
                ..self.options.entropy.clone()
            };
            let (mut value, mut certified) = cover_entropy_value(&wa, &opts);
            if let Some(alpha) = hint {
                let h = match &cond {
                    None => partition_entropy(&self.shift, measure, alpha, s)?,
                    Some((code, v)) => conditional_partition_entropy(&self.shift, measure, alpha, s, code, v)?,
                };
                if h < value {
                    // a feasible partition beat the search, so the search was not exact
                    value = h;
                    certified = false;
                }
            }
            Ok(Eval { value, certified })
        })
    }

    /// `(1/|F_n|) Σ_S c_S H_μ(U_S [| Y])` with the cover entropy minimized per
    /// subset. `hint` is a partition finer than the cover whose entropy also
    /// bounds each term from above.
    pub fn asc_mu_minus(
        &self,
        measure: &ShiftMeasure,
        cover: &CylinderCover,
        ns: &[usize],
        cond: Option<&Conditioning>,
        hint: Option<&CylinderCover>,
    ) -> Result<TruncationSeries> {
        self.check_cover(cover)?;
        self.check_measure(measure)?;
        self.check_conditioning(cond)?;
        let tag = "asc_mu_minus";
        let mut series = self.new_series(tag);
        match cond {
            None => {
                let keying = match hint {
                    Some(h) if self.keying(h, Some(measure), false) != Keying::Size => Keying::Shape,
                    _ => self.keying(cover, Some(measure), false),
                };
                let mut ev = Evaluator::new(keying, self.cover_entropy_term(measure, cover, None, hint));
                self.fill(&mut series, ns, None, |n, _| {
                    self.record(tag, n, None, &mut ev, Selection::Coefficients, Combine::Single)
                })?;
            }
            Some(c) => {
                self.fill(&mut series, ns, Some(&c.margins), |n, m| {
                    let v = c.window(n, cover.window(), m.unwrap())?;
                    let term = self.cover_entropy_term(measure, cover, Some((&c.code, v)), hint);
                    let mut ev = Evaluator::new(Keying::Exact, term);
                    self.record(tag, n, m, &mut ev, Selection::Coefficients, Combine::Single)
                })?;
            }
        }
        Ok(series)
    }

    /// `(1/n) Σ_{0∈S⊆F_n} 2^{-(n-1)} H_μ(U_S)` (uniform coefficients, `Z` only).
    pub fn asc_minus_anchored(&self, measure: &ShiftMeasure, cover: &CylinderCover, ns: &[usize]) -> Result<TruncationSeries> {
        if self.coeffs != CoefficientSystem::Uniform {
            return Err(Error::Unsupported("the anchored series needs uniform coefficients".into()));
        }
        if self.shift.dimension() != 1 {
            return Err(Error::Unsupported("the anchored series is one-dimensional".into()));
        }
        self.check_cover(cover)?;
        self.check_measure(measure)?;
        let tag = "asc_minus_anchored";
        let mut series = self.new_series(tag);
        let keying = self.keying(cover, Some(measure), false);
        let mut ev = Evaluator::new(keying, self.cover_entropy_term(measure, cover, None, None));
        self.fill(&mut series, ns, None, |n, _| {
            self.record(tag, n, None, &mut ev, Selection::Anchored, Combine::Single)
        })?;
        Ok(series)
    }

    /// The single partition `α ⪰ U` on `W ⊕ F_m` minimizing `asc_mu(α)` at the
    /// largest `n` (and largest margin), then its whole series. Returns the
    /// series and `α`; records are certified only if the search was exhaustive.
    pub fn asc_mu_plus(
        &self,
        measure: &ShiftMeasure,
        cover: &CylinderCover,
        ns: &[usize],
        cond: Option<&Conditioning>,
    ) -> Result<(TruncationSeries, CylinderCover)> {
        self.check_cover(cover)?;
        self.check_measure(measure)?;
        self.check_conditioning(cond)?;
        let n_max = *ns
            .iter()
            .max()
            .ok_or_else(|| Error::InvalidParameter("n range is empty".into()))?;
        let (alpha, exhaustive) = self.optimize_global_partition(measure, cover, n_max, cond)?;
        let mut series = self.asc_mu_tagged("asc_mu_plus", measure, &alpha, ns, cond)?;
        if !exhaustive {
            for r in &mut series.records {
                r.certified = false;
            }
        }
        Ok((series, alpha))
    }

    fn optimize_global_partition(
        &self,
        measure: &ShiftMeasure,
        cover: &CylinderCover,
        n: usize,
        cond: Option<&Conditioning>,
    ) -> Result<(CylinderCover, bool)> {
        let d = self.shift.dimension();
        let window = cover.window().minkowski_sum(&folner_window(self.options.plus_window.max(1), d)?);
        let lifted = if &window == cover.window() {
            cover.clone()
        } else {
            cover.lift(&self.shift, &window)?
        };
        let atoms = language(&self.shift, &window)?;
        let probs = marginal(&self.shift, measure, &window)?.probabilities;
        let choices: Vec<Vec<usize>> = atoms
            .iter()
            .map(|p| {
                let mut m = lifted.membership(p);
                let mut c = Vec::new();
                while m != 0 {
                    c.push(m.trailing_zeros() as usize);
                    m &= m - 1;
                }
                c
            })
            .collect();
        let build = |assign: &[usize]| -> Result<CylinderCover> {
            let mut elements: Vec<Vec<Vec<u8>>> = vec![Vec::new(); lifted.len()];
            for (i, &e) in assign.iter().enumerate() {
                elements[e].push(atoms.pattern(i).to_vec());
            }
            elements.retain(|e| !e.is_empty());
            CylinderCover::new(window.clone(), self.shift.alphabet(), elements)
        };
        let margin = cond.map(|c| *c.margins.iter().max().expect("validated"));
        let objective = |assign: &[usize]| -> Result<f64> {
            let alpha = build(assign)?;
            let value = match cond {
                None => {
                    let keying = self.keying(&alpha, Some(measure), false);
                    let mut ev = Evaluator::new(keying, self.entropy_term(measure, &alpha, None));
                    self.record("asc_mu_plus", n, None, &mut ev, Selection::Coefficients, Combine::Single)?
                }
                Some(c) => {
                    let v = c.window(n, alpha.window(), margin.unwrap())?;
                    let mut ev = Evaluator::new(Keying::Exact, self.entropy_term(measure, &alpha, Some((&c.code, v))));
                    self.record("asc_mu_plus", n, margin, &mut ev, Selection::Coefficients, Combine::Single)?
                }
            }
            .value;
            Ok(value)
        };
        let multi: Vec<usize> = (0..choices.len()).filter(|&i| choices[i].len() > 1).collect();
        let size = multi
            .iter()
            .try_fold(1u128, |acc, &i| acc.checked_mul(choices[i].len() as u128));
        let mut assign: Vec<usize> = choices.iter().map(|c| c[0]).collect();
        if size.is_some_and(|s| s <= self.options.plus_exhaustive_limit) {
            let mut idx = vec![0usize; multi.len()];
            let mut best = (objective(&assign)?, assign.clone());
            'odometer: loop {
                let mut i = 0;
                loop {
                    if i == multi.len() {
                        break 'odometer;
                    }
                    idx[i] = (idx[i] + 1) % choices[multi[i]].len();
                    assign[multi[i]] = choices[multi[i]][idx[i]];
                    if idx[i] != 0 {
                        break;
                    }
                    i += 1;
                }
                let v = objective(&assign)?;
                if v < best.0 {
                    best = (v, assign.clone());
                }
            }
            return Ok((build(&best.1)?, true));
        }
        // greedy by mass, then first-improvement moves on the full objective
        let mut mass = vec![0.0f64; lifted.len()];
        for (i, c) in choices.iter().enumerate() {
            if c.len() == 1 {
                mass[c[0]] += probs[i];
            }
        }
        for &i in &multi {
            let e = *choices[i]
                .iter()
                .min_by(|&&a, &&b| mass[b].partial_cmp(&mass[a]).unwrap().then(a.cmp(&b)))
                .unwrap();
            assign[i] = e;
            mass[e] += probs[i];
        }
        let mut current = objective(&assign)?;
        for _ in 0..self.options.entropy.max_passes {
            let mut improved = false;
            for &i in &multi {
                let keep = assign[i];
                for &e in &choices[i] {
                    if e == keep {
                        continue;
                    }
                    assign[i] = e;
                    let v = objective(&assign)?;
                    if v < current - 1e-12 {
                        current = v;
                        improved = true;
                        break;
                    }
                    assign[i] = keep;
                }
            }
            if !improved {
                break;
            }
        }
        Ok((build(&assign)?, false))
    }
}
