//! Shift-invariant measures, finite-window marginals and entropies.
//!
//! The cover entropy `H_μ(U_S | Y)` is the minimum, over partitions obtained
//! by assigning each admissible pattern on `S ⊕ W` to one join cell containing
//! it, of the (conditional) Shannon entropy of the induced partition.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cover_algebra::{CylinderCover, JoinAtoms};
use crate::error::{Error, Result};
use crate::group_model::{derive_seed, fnv1a, LatticeWindow};
use crate::parallel::{map_range, pairwise_sum, Execution};
use crate::subcover_counting::fiber_groups;
use crate::symbolic_space::{language, Language, ShiftSpace, SlidingBlockCode};

const TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMeasure {
    Bernoulli(Vec<f64>),
    Markov {
        stationary: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
    Mixture(Vec<(f64, ShiftMeasure)>),
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidMeasure(format!("{what} must be a nonnegative vector")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > TOL {
        return Err(Error::InvalidMeasure(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl ShiftMeasure {
    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        check_distribution(&p, "probability vector")?;
        Ok(Self::Bernoulli(p))
    }

    pub fn uniform(k: usize) -> Self {
        Self::Bernoulli(vec![1.0 / k as f64; k])
    }

    pub fn markov(stationary: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let k = stationary.len();
        check_distribution(&stationary, "stationary vector")?;
        if transition.len() != k {
            return Err(Error::InvalidMeasure("transition matrix size differs from stationary vector".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidMeasure(format!("transition row {i} has wrong length")));
            }
            check_distribution(row, &format!("transition row {i}"))?;
        }
        for j in 0..k {
            let v: f64 = (0..k).map(|i| stationary[i] * transition[i][j]).sum();
            if (v - stationary[j]).abs() > TOL {
                return Err(Error::InvalidMeasure(format!(
                    "stationary vector is not invariant at symbol {j}"
                )));
            }
        }
        Ok(Self::Markov {
            stationary,
            transition,
        })
    }

    /// Markov chain on two symbols with `P = [[1-q, q], [1, 0]]`, supported
    /// on the golden-mean shift.
    pub fn golden_mean_chain(q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidMeasure("q must lie in [0, 1]".into()));
        }
        Self::markov(
            vec![1.0 / (1.0 + q), q / (1.0 + q)],
            vec![vec![1.0 - q, q], vec![1.0, 0.0]],
        )
    }

    pub fn mixture(parts: Vec<(f64, ShiftMeasure)>) -> Result<Self> {
        let w: Vec<f64> = parts.iter().map(|(w, _)| *w).collect();
        check_distribution(&w, "mixture weights")?;
        let k = parts[0].1.alphabet();
        if parts.iter().any(|(_, m)| m.alphabet() != k) {
            return Err(Error::InvalidMeasure("mixture components differ in alphabet".into()));
        }
        Ok(Self::Mixture(parts))
    }

    pub fn alphabet(&self) -> usize {
        match self {
            Self::Bernoulli(p) => p.len(),
            Self::Markov { stationary, .. } => stationary.len(),
            Self::Mixture(parts) => parts[0].1.alphabet(),
        }
    }

    /// Checks that the measure lives on `shift`.
    pub fn check_support(&self, shift: &ShiftSpace) -> Result<()> {
        if self.alphabet() != shift.alphabet() {
            return Err(Error::InvalidMeasure(format!(
                "measure alphabet {} differs from shift alphabet {}",
                self.alphabet(),
                shift.alphabet()
            )));
        }
        match self {
            Self::Bernoulli(p) => {
                for i in 0..p.len() {
                    for j in 0..p.len() {
                        if p[i] > 0.0 && p[j] > 0.0 && !shift.allowed(i, j) {
                            return Err(Error::InvalidMeasure(format!(
                                "Bernoulli support contains the forbidden pair {i}{j}"
                            )));
                        }
                    }
                }
                if shift.dimension() == 2 && !shift.is_full() {
                    let planar_ok = match shift.transitions() {
                        crate::symbolic_space::Transitions::Planar { horizontal, vertical } => {
                            (0..p.len()).all(|i| {
                                (0..p.len()).all(|j| {
                                    p[i] == 0.0 || p[j] == 0.0 || (horizontal.get(i, j) && vertical.get(i, j))
                                })
                            })
                        }
                        _ => true,
                    };
                    if !planar_ok {
                        return Err(Error::InvalidMeasure("Bernoulli support violates planar rules".into()));
                    }
                }
                Ok(())
            }
            Self::Markov { transition, .. } => {
                if shift.dimension() != 1 {
                    return Err(Error::InvalidMeasure("Markov measures are one-dimensional".into()));
                }
                for (i, row) in transition.iter().enumerate() {
                    for (j, &x) in row.iter().enumerate() {
                        if x > 0.0 && !shift.allowed(i, j) {
                            return Err(Error::InvalidMeasure(format!(
                                "transition {i}->{j} has positive probability but is forbidden"
                            )));
                        }
                    }
                }
                Ok(())
            }
            Self::Mixture(parts) => parts.iter().try_for_each(|(_, m)| m.check_support(shift)),
        }
    }

    fn evaluator(&self, window: &LatticeWindow) -> Result<Evaluator> {
        Ok(match self {
            Self::Bernoulli(p) => Evaluator::Bernoulli(p.clone()),
            Self::Markov {
                stationary,
                transition,
            } => {
                if window.dimension() != 1 {
                    return Err(Error::InvalidMeasure("Markov measures are one-dimensional".into()));
                }
                let pts = window.points();
                let mut cache: HashMap<i64, Vec<Vec<f64>>> = HashMap::new();
                let steps = pts
                    .windows(2)
                    .map(|w| {
                        let g = w[1][0] - w[0][0];
                        cache
                            .entry(g)
                            .or_insert_with(|| mat_pow(transition, g as u64))
                            .clone()
                    })
                    .collect();
                Evaluator::Markov {
                    stationary: stationary.clone(),
                    steps,
                }
            }
            Self::Mixture(parts) => Evaluator::Mixture(
                parts
                    .iter()
                    .map(|(w, m)| Ok((*w, m.evaluator(window)?)))
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    (0..k)
        .map(|i| (0..k).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

fn mat_pow(m: &[Vec<f64>], mut e: u64) -> Vec<Vec<f64>> {
    let k = m.len();
    let mut result: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut base = m.to_vec();
    while e > 0 {
        if e & 1 == 1 {
            result = mat_mul(&result, &base);
        }
        base = mat_mul(&base, &base);
        e >>= 1;
    }
    result
}

enum Evaluator {
    Bernoulli(Vec<f64>),
    Markov {
        stationary: Vec<f64>,
        steps: Vec<Vec<Vec<f64>>>,
    },
    Mixture(Vec<(f64, Evaluator)>),
}

impl Evaluator {
    fn prob(&self, symbols: &[u8]) -> f64 {
        match self {
            Self::Bernoulli(p) => symbols.iter().map(|&s| p[s as usize]).product(),
            Self::Markov { stationary, steps } => match symbols.first() {
                None => 1.0,
                Some(&first) => {
                    let mut q = stationary[first as usize];
                    for (i, m) in steps.iter().enumerate() {
                        q *= m[symbols[i] as usize][symbols[i + 1] as usize];
                    }
                    q
                }
            },
            Self::Mixture(parts) => parts.iter().map(|(w, e)| w * e.prob(symbols)).sum(),
        }
    }
}

/// Finite-window marginal: probability per pattern of the window's language.
#[derive(Debug, Clone)]
pub struct PatternDistribution {
    pub language: Language,
    pub probabilities: Vec<f64>,
}

impl PatternDistribution {
    pub fn window(&self) -> &LatticeWindow {
        self.language.window()
    }

    pub fn probability(&self, symbols: &[u8]) -> f64 {
        self.language
            .index_of(symbols)
            .map_or(0.0, |i| self.probabilities[i])
    }
}

fn probabilities(measure: &ShiftMeasure, lang: &Language) -> Result<Vec<f64>> {
    let ev = measure.evaluator(lang.window())?;
    let probs: Vec<f64> = lang.iter().map(|p| ev.prob(p)).collect();
    let total = pairwise_sum(&probs);
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidMeasure(format!(
            "marginal on the language sums to {total}; the measure is not supported on the shift"
        )));
    }
    Ok(probs)
}

pub fn marginal(shift: &ShiftSpace, measure: &ShiftMeasure, window: &LatticeWindow) -> Result<PatternDistribution> {
    measure.check_support(shift)?;
    let lang = language(shift, window)?;
    let probabilities = probabilities(measure, &lang)?;
    Ok(PatternDistribution {
        language: lang,
        probabilities,
    })
}

pub fn mixture_combine(measures: Vec<ShiftMeasure>, weights: Vec<f64>) -> Result<ShiftMeasure> {
    if measures.len() != weights.len() || measures.is_empty() {
        return Err(Error::InvalidMeasure("need one weight per measure".into()));
    }
    ShiftMeasure::mixture(weights.into_iter().zip(measures).collect())
}

#[inline]
fn phi(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

/// Shannon entropy `-Σ q ln q` (nats), summed pairwise.
pub fn shannon_entropy(masses: &[f64]) -> f64 {
    let terms: Vec<f64> = masses.iter().map(|&q| phi(q)).collect();
    pairwise_sum(&terms)
}

/// Join atoms with their probability split over factor classes.
pub(crate) struct WeightedAtoms {
    pub atoms: JoinAtoms,
    start: Vec<usize>,
    class: Vec<u32>,
    mass: Vec<f64>,
    classes: usize,
    class_entropy: f64,
}

impl WeightedAtoms {
    pub fn build(
        shift: &ShiftSpace,
        measure: &ShiftMeasure,
        cover: &CylinderCover,
        s: &LatticeWindow,
        cond: Option<(&SlidingBlockCode, &LatticeWindow)>,
    ) -> Result<Self> {
        measure.check_support(shift)?;
        match cond {
            None => {
                let atoms = JoinAtoms::build(shift, cover, s)?;
                let mass = probabilities(measure, &atoms.atoms)?;
                let n = atoms.len();
                Ok(Self {
                    atoms,
                    start: (0..=n).collect(),
                    class: vec![0; n],
                    mass,
                    classes: 1,
                    class_entropy: 0.0,
                })
            }
            Some((code, v)) => {
                let groups = fiber_groups(shift, cover, s, code, v)?;
                let probs = probabilities(measure, &groups.ambient)?;
                let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
                let mut class_mass = vec![0.0; groups.classes];
                for (i, &p) in probs.iter().enumerate() {
                    *joint.entry((groups.atom_of[i], groups.class_of[i])).or_insert(0.0) += p;
                    class_mass[groups.class_of[i]] += p;
                }
                let n = groups.atoms.len();
                let mut start = vec![0usize; n + 1];
                let mut class = Vec::with_capacity(joint.len());
                let mut mass = Vec::with_capacity(joint.len());
                for (&(a, c), &m) in &joint {
                    start[a + 1] += 1;
                    class.push(c as u32);
                    mass.push(m);
                }
                for a in 0..n {
                    start[a + 1] += start[a];
                }
                Ok(Self {
                    atoms: groups.atoms,
                    start,
                    class,
                    mass,
                    classes: groups.classes,
                    class_entropy: shannon_entropy(&class_mass),
                })
            }
        }
    }

    fn occurrences(&self, atom: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let r = self.start[atom]..self.start[atom + 1];
        self.class[r.clone()].iter().copied().zip(self.mass[r].iter().copied())
    }

    fn atom_mass(&self, atom: usize) -> f64 {
        self.mass[self.start[atom]..self.start[atom + 1]].iter().sum()
    }

    /// Conditional entropy of the partition assigning atom `a` to cell `keys[a]`.
    pub fn exact_value(&self, keys: &[u64]) -> f64 {
        let mut cells: BTreeMap<(u64, u32), f64> = BTreeMap::new();
        for (a, &k) in keys.iter().enumerate() {
            for (c, m) in self.occurrences(a) {
                *cells.entry((k, c)).or_insert(0.0) += m;
            }
        }
        let masses: Vec<f64> = cells.into_values().collect();
        (shannon_entropy(&masses) - self.class_entropy).max(0.0)
    }

    pub fn forced_keys(&self) -> Vec<u64> {
        (0..self.atoms.len()).map(|a| self.atoms.first_key(a)).collect()
    }
}

enum MassTable {
    Dense { classes: usize, data: Vec<f64> },
    Sparse(HashMap<(u64, u32), f64>),
}

impl MassTable {
    fn new(atoms: &JoinAtoms, classes: usize) -> Self {
        let cells = (atoms.radix as u128).checked_pow(atoms.positions as u32);
        match cells {
            Some(c) if c * classes as u128 <= 1 << 22 => Self::Dense {
                classes,
                data: vec![0.0; (c as usize) * classes],
            },
            _ => Self::Sparse(HashMap::new()),
        }
    }

    #[inline]
    fn get(&self, key: u64, class: u32) -> f64 {
        match self {
            Self::Dense { classes, data } => data[key as usize * classes + class as usize],
            Self::Sparse(m) => m.get(&(key, class)).copied().unwrap_or(0.0),
        }
    }

    #[inline]
    fn add(&mut self, key: u64, class: u32, x: f64) {
        match self {
            Self::Dense { classes, data } => data[key as usize * *classes + class as usize] += x,
            Self::Sparse(m) => *m.entry((key, class)).or_insert(0.0) += x,
        }
    }
}

/// Search controls for the cover entropy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySearch {
    /// Exhaustive search when the number of assignments is at most this.
    pub exhaustive_limit: u128,
    pub restarts: usize,
    pub max_passes: usize,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for EntropySearch {
    fn default() -> Self {
        Self {
            exhaustive_limit: 1 << 18,
            restarts: 8,
            max_passes: 100,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverEntropy {
    pub value: f64,
    /// Exhaustive (exact) minimum; otherwise an upper bound.
    pub certified: bool,
    pub atoms: Language,
    /// Join cell (element index per point of `S`) chosen for each atom.
    pub assignment: Vec<Vec<usize>>,
}

struct Search<'a> {
    wa: &'a WeightedAtoms,
    table: MassTable,
    keys: Vec<u64>,
}

impl<'a> Search<'a> {
    fn new(wa: &'a WeightedAtoms) -> Self {
        Self {
            wa,
            table: MassTable::new(&wa.atoms, wa.classes),
            keys: vec![0; wa.atoms.len()],
        }
    }

    fn place(&mut self, atom: usize, key: u64) {
        self.keys[atom] = key;
        for (c, m) in self.wa.occurrences(atom) {
            self.table.add(key, c, m);
        }
    }

    fn remove(&mut self, atom: usize) {
        let key = self.keys[atom];
        for (c, m) in self.wa.occurrences(atom) {
            self.table.add(key, c, -m);
        }
    }

    fn add_delta(&self, atom: usize, key: u64) -> f64 {
        self.wa
            .occurrences(atom)
            .map(|(c, m)| {
                let cur = self.table.get(key, c);
                phi(cur + m) - phi(cur)
            })
            .sum()
    }

    fn remove_delta(&self, atom: usize) -> f64 {
        let key = self.keys[atom];
        self.wa
            .occurrences(atom)
            .map(|(c, m)| {
                let cur = self.table.get(key, c);
                phi(cur - m) - phi(cur)
            })
            .sum()
    }

    fn best_cell(&self, atom: usize) -> u64 {
        let mut best = (f64::INFINITY, u64::MAX);
        self.wa.atoms.for_each_cell(atom, |k| {
            let d = self.add_delta(atom, k);
            if d < best.0 || (d == best.0 && k < best.1) {
                best = (d, k);
            }
        });
        best.1
    }
}

fn greedy_local(wa: &WeightedAtoms, multi: &[usize], order: &[usize], passes: usize) -> Vec<u64> {
    let mut st = Search::new(wa);
    for a in 0..wa.atoms.len() {
        if !multi.contains_sorted(a) {
            st.place(a, wa.atoms.first_key(a));
        }
    }
    for &a in order {
        let k = st.best_cell(a);
        st.place(a, k);
    }
    let mut cells = Vec::new();
    for _ in 0..passes {
        let mut improved = false;
        for &a in multi {
            let cur = st.keys[a];
            let out = st.remove_delta(a);
            cells.clear();
            wa.atoms.for_each_cell(a, |k| cells.push(k));
            cells.sort_unstable();
            for &k in &cells {
                if k == cur {
                    continue;
                }
                if out + st.add_delta(a, k) < -1e-13 {
                    st.remove(a);
                    st.place(a, k);
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    st.keys
}

trait SortedContains {
    fn contains_sorted(&self, x: usize) -> bool;
}

impl SortedContains for [usize] {
    fn contains_sorted(&self, x: usize) -> bool {
        self.binary_search(&x).is_ok()
    }
}

fn exhaustive(wa: &WeightedAtoms, multi: &[usize]) -> Vec<u64> {
    let choices: Vec<Vec<u64>> = multi
        .iter()
        .map(|&a| {
            let mut c = Vec::new();
            wa.atoms.for_each_cell(a, |k| c.push(k));
            c.sort_unstable();
            c
        })
        .collect();
    let mut st = Search::new(wa);
    for a in 0..wa.atoms.len() {
        if !multi.contains_sorted(a) {
            st.place(a, wa.atoms.first_key(a));
        }
    }
    for (i, &a) in multi.iter().enumerate() {
        st.place(a, choices[i][0]);
    }
    let mut idx = vec![0usize; multi.len()];
    let mut obj = 0.0f64;
    let mut best = (0.0f64, idx.clone());
    loop {
        let mut i = 0;
        loop {
            if i == multi.len() {
                let keys = st.keys.clone();
                let mut out = keys;
                for (j, &a) in multi.iter().enumerate() {
                    out[a] = choices[j][best.1[j]];
                }
                return out;
            }
            let a = multi[i];
            let next = (idx[i] + 1) % choices[i].len();
            let k = choices[i][next];
            obj += st.remove_delta(a);
            st.remove(a);
            obj += st.add_delta(a, k);
            st.place(a, k);
            idx[i] = next;
            if next != 0 {
                break;
            }
            i += 1;
        }
        if obj < best.0 - 1e-15 {
            best = (obj, idx.clone());
        }
    }
}

fn search_keys(wa: &WeightedAtoms, opts: &EntropySearch) -> (Vec<u64>, bool) {
    let multi: Vec<usize> = (0..wa.atoms.len())
        .filter(|&a| !wa.atoms.is_forced(a) && wa.atom_mass(a) > 0.0)
        .collect();
    if multi.is_empty() {
        return (wa.forced_keys(), true);
    }
    let size = multi
        .iter()
        .try_fold(1u128, |acc, &a| acc.checked_mul(wa.atoms.choice_count(a)));
    if size.is_some_and(|s| s <= opts.exhaustive_limit) {
        return (exhaustive(wa, &multi), true);
    }
    let restarts = opts.restarts.max(1);
    let candidates = map_range(opts.execution, restarts, |r| {
        let mut order = multi.clone();
        if r > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[opts.seed, fnv1a("cover_entropy"), r as u64]));
            order.shuffle(&mut rng);
        }
        let keys = greedy_local(wa, &multi, &order, opts.max_passes);
        (wa.exact_value(&keys), keys)
    });
    let mut best = 0;
    for r in 1..candidates.len() {
        if candidates[r].0 < candidates[best].0 {
            best = r;
        }
    }
    (candidates.into_iter().nth(best).unwrap().1, false)
}

pub(crate) fn cover_entropy_value(wa: &WeightedAtoms, opts: &EntropySearch) -> (f64, bool) {
    let (keys, certified) = search_keys(wa, opts);
    (wa.exact_value(&keys), certified)
}

/// `H_μ(U_S | Y)` over deterministic assignments of atoms to join cells.
/// `cond` is `(code, V)`; `None` gives the unconditional cover entropy.
pub fn cover_entropy(
    shift: &ShiftSpace,
    measure: &ShiftMeasure,
    cover: &CylinderCover,
    s: &LatticeWindow,
    cond: Option<(&SlidingBlockCode, &LatticeWindow)>,
    opts: &EntropySearch,
) -> Result<CoverEntropy> {
    let wa = WeightedAtoms::build(shift, measure, cover, s, cond)?;
    let (keys, certified) = search_keys(&wa, opts);
    Ok(CoverEntropy {
        value: wa.exact_value(&keys),
        certified,
        assignment: keys.iter().map(|&k| wa.atoms.decode(k)).collect(),
        atoms: wa.atoms.atoms.clone(),
    })
}

/// `H_μ(α_S)` for a partition `α`.
pub fn partition_entropy(
    shift: &ShiftSpace,
    measure: &ShiftMeasure,
    partition: &CylinderCover,
    s: &LatticeWindow,
) -> Result<f64> {
    if !partition.is_partition() {
        return Err(Error::InvalidCover("partition entropy needs a partition".into()));
    }
    if s.is_empty() {
        return Ok(0.0);
    }
    let wa = WeightedAtoms::build(shift, measure, partition, s, None)?;
    Ok(wa.exact_value(&wa.forced_keys()))
}

/// `H(α_S, Y_V) - H(Y_V)` from exact joint marginals.
pub fn conditional_partition_entropy(
    shift: &ShiftSpace,
    measure: &ShiftMeasure,
    partition: &CylinderCover,
    s: &LatticeWindow,
    code: &SlidingBlockCode,
    v: &LatticeWindow,
) -> Result<f64> {
    if !partition.is_partition() {
        return Err(Error::InvalidCover("partition entropy needs a partition".into()));
    }
    if s.is_empty() {
        return Ok(0.0);
    }
    let wa = WeightedAtoms::build(shift, measure, partition, s, Some((code, v)))?;
    Ok(wa.exact_value(&wa.forced_keys()))
}
