//! Shift spaces, finite-window languages and sliding block codes.
//!
//! One-dimensional shifts are nearest-neighbour shifts of finite type given by
//! a 0/1 transition matrix; their window languages are exact (every listed
//! pattern extends to a bi-infinite point). Two-dimensional shifts of finite
//! type use local admissibility on a window inflated by a halo, which can only
//! over-approximate the true language.

use std::collections::HashMap;

use num_bigint::BigUint;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group_model::{LatticeWindow, Point};

/// Default cap on the number of patterns a language may materialize.
pub const DEFAULT_LANGUAGE_LIMIT: usize = 1 << 24;

/// Default halo for two-dimensional local admissibility.
pub const DEFAULT_HALO: usize = 2;

/// Square 0/1 matrix; entry `(i, j)` is true iff `j` may follow `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransitionMatrix {
    k: usize,
    entries: Vec<bool>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::InvalidShift("empty transition matrix".into()));
        }
        let mut entries = Vec::with_capacity(k * k);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidShift(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            for &e in row {
                match e {
                    0 => entries.push(false),
                    1 => entries.push(true),
                    _ => {
                        return Err(Error::InvalidShift(format!(
                            "transition entries must be 0 or 1, got {e}"
                        )))
                    }
                }
            }
        }
        Ok(Self { k, entries })
    }

    pub fn full(k: usize) -> Self {
        Self {
            k,
            entries: vec![true; k * k],
        }
    }

    pub fn size(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.entries[i * self.k + j]
    }

    pub fn is_full(&self) -> bool {
        self.entries.iter().all(|&e| e)
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.k)
            .map(|i| (0..self.k).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }

    fn check_no_stranded(&self, direction: &str) -> Result<()> {
        for s in 0..self.k {
            if !(0..self.k).any(|j| self.get(s, j)) {
                return Err(Error::InvalidShift(format!(
                    "symbol {s} has no allowed successor ({direction})"
                )));
            }
            if !(0..self.k).any(|i| self.get(i, s)) {
                return Err(Error::InvalidShift(format!(
                    "symbol {s} has no allowed predecessor ({direction})"
                )));
            }
        }
        Ok(())
    }

    fn bool_mul(&self, other: &Self) -> Self {
        let k = self.k;
        let mut entries = vec![false; k * k];
        for i in 0..k {
            for l in 0..k {
                if self.get(i, l) {
                    for j in 0..k {
                        entries[i * k + j] |= other.get(l, j);
                    }
                }
            }
        }
        Self { k, entries }
    }

    /// Support of the `g`-th power: `(i, j)` is true iff a path of length `g`
    /// leads from `i` to `j`. `g = 0` is the identity.
    pub fn reach(&self, g: u64) -> Self {
        let k = self.k;
        let mut result = Self {
            k,
            entries: (0..k * k).map(|e| e / k == e % k).collect(),
        };
        let mut base = self.clone();
        let mut g = g;
        while g > 0 {
            if g & 1 == 1 {
                result = result.bool_mul(&base);
            }
            base = base.bool_mul(&base);
            g >>= 1;
        }
        result
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Transitions {
    /// Every configuration is allowed (any dimension).
    Full,
    /// Nearest-neighbour shift of finite type on `Z`.
    OneStep(TransitionMatrix),
    /// Nearest-neighbour shift of finite type on `Z^2`: `horizontal(a, b)`
    /// allows `b` directly right of `a`, `vertical(a, b)` allows `b` directly
    /// above `a`.
    Planar {
        horizontal: TransitionMatrix,
        vertical: TransitionMatrix,
    },
}

/// A shift space: full shift or nearest-neighbour SFT over `{0, ..., k-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShiftSpace {
    dimension: u8,
    alphabet: usize,
    transitions: Transitions,
    halo: usize,
}

impl ShiftSpace {
    pub fn full(dimension: u8, alphabet: usize) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidShift(format!("dimension {dimension}")));
        }
        check_alphabet(alphabet)?;
        Ok(Self {
            dimension,
            alphabet,
            transitions: Transitions::Full,
            halo: DEFAULT_HALO,
        })
    }

    /// One-dimensional SFT. An all-ones matrix yields the full shift.
    pub fn one_step(rows: &[Vec<u8>]) -> Result<Self> {
        let m = TransitionMatrix::from_rows(rows)?;
        check_alphabet(m.size())?;
        m.check_no_stranded("horizontal")?;
        let alphabet = m.size();
        let transitions = if m.is_full() {
            Transitions::Full
        } else {
            Transitions::OneStep(m)
        };
        Ok(Self {
            dimension: 1,
            alphabet,
            transitions,
            halo: DEFAULT_HALO,
        })
    }

    /// Two-dimensional SFT with the given halo for local admissibility.
    pub fn planar(horizontal: &[Vec<u8>], vertical: &[Vec<u8>], halo: usize) -> Result<Self> {
        let h = TransitionMatrix::from_rows(horizontal)?;
        let v = TransitionMatrix::from_rows(vertical)?;
        if h.size() != v.size() {
            return Err(Error::InvalidShift(
                "horizontal and vertical matrices differ in size".into(),
            ));
        }
        check_alphabet(h.size())?;
        h.check_no_stranded("horizontal")?;
        v.check_no_stranded("vertical")?;
        let alphabet = h.size();
        let transitions = if h.is_full() && v.is_full() {
            Transitions::Full
        } else {
            Transitions::Planar {
                horizontal: h,
                vertical: v,
            }
        };
        Ok(Self {
            dimension: 2,
            alphabet,
            transitions,
            halo,
        })
    }

    pub fn with_halo(mut self, halo: usize) -> Self {
        self.halo = halo;
        self
    }

    /// The golden-mean shift (binary sequences without `11`).
    pub fn golden_mean() -> Self {
        Self::one_step(&[vec![1, 1], vec![1, 0]]).expect("golden mean matrix")
    }

    pub fn dimension(&self) -> u8 {
        self.dimension
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    pub fn halo(&self) -> usize {
        self.halo
    }

    pub fn is_full(&self) -> bool {
        matches!(self.transitions, Transitions::Full)
    }

    /// False when window languages are only locally admissible
    /// (two-dimensional proper SFTs).
    pub fn language_is_exact(&self) -> bool {
        !matches!(self.transitions, Transitions::Planar { .. })
    }

    /// The one-dimensional transition matrix (all ones for a full shift).
    pub fn matrix(&self) -> Result<TransitionMatrix> {
        match (&self.transitions, self.dimension) {
            (Transitions::Full, 1) => Ok(TransitionMatrix::full(self.alphabet)),
            (Transitions::OneStep(m), _) => Ok(m.clone()),
            _ => Err(Error::Unsupported(
                "transition matrix requested for a two-dimensional shift".into(),
            )),
        }
    }

    /// Whether `j` may directly follow `i` (one-dimensional).
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        match &self.transitions {
            Transitions::Full => true,
            Transitions::OneStep(m) => m.get(i, j),
            Transitions::Planar { horizontal, .. } => horizontal.get(i, j),
        }
    }
}

fn check_alphabet(k: usize) -> Result<()> {
    if k == 0 || k > 255 {
        Err(Error::InvalidShift(format!("alphabet size {k} outside 1..=255")))
    } else {
        Ok(())
    }
}

/// A finite configuration on a window.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Pattern {
    window: LatticeWindow,
    symbols: Vec<u8>,
}

impl Pattern {
    pub fn new(window: LatticeWindow, symbols: Vec<u8>) -> Result<Self> {
        if window.len() != symbols.len() {
            return Err(Error::InvalidParameter(format!(
                "pattern has {} symbols for a window of {} points",
                symbols.len(),
                window.len()
            )));
        }
        Ok(Self { window, symbols })
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn at(&self, p: Point) -> Option<u8> {
        self.window.index_of(p).map(|i| self.symbols[i])
    }
}

/// The admissible patterns on a window, sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Language {
    window: LatticeWindow,
    alphabet: usize,
    exact: bool,
    data: Vec<u8>,
    count: usize,
}

impl Language {
    fn from_sorted(window: LatticeWindow, alphabet: usize, exact: bool, data: Vec<u8>) -> Self {
        let count = if window.is_empty() {
            1
        } else {
            data.len() / window.len()
        };
        Self {
            window,
            alphabet,
            exact,
            data,
            count,
        }
    }

    fn from_unsorted(
        window: LatticeWindow,
        alphabet: usize,
        exact: bool,
        mut patterns: Vec<Vec<u8>>,
    ) -> Self {
        patterns.sort_unstable();
        patterns.dedup();
        let count = patterns.len();
        let data = patterns.concat();
        Self {
            window,
            alphabet,
            exact,
            data,
            count,
        }
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    /// False when the language is a local-admissibility over-approximation.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn pattern(&self, i: usize) -> &[u8] {
        let w = self.window.len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> {
        (0..self.count).map(move |i| self.pattern(i))
    }

    pub fn index_of(&self, symbols: &[u8]) -> Option<usize> {
        let (mut lo, mut hi) = (0, self.count);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.pattern(mid).cmp(symbols) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn patterns(&self) -> Vec<Pattern> {
        self.iter()
            .map(|s| Pattern {
                window: self.window.clone(),
                symbols: s.to_vec(),
            })
            .collect()
    }
}

/// Lexicographic base-`k` key of a symbol string, `None` on overflow.
pub fn pattern_key(symbols: &[u8], k: usize) -> Option<u128> {
    let mut key: u128 = 0;
    for &s in symbols {
        key = key.checked_mul(k as u128)?.checked_add(s as u128)?;
    }
    Some(key)
}

/// Reachability matrices for consecutive gaps of a sorted 1-D window.
fn gap_reach(shift: &ShiftSpace, window: &LatticeWindow) -> Result<Vec<TransitionMatrix>> {
    let m = shift.matrix()?;
    let pts = window.points();
    let mut cache: HashMap<u64, TransitionMatrix> = HashMap::new();
    Ok(pts
        .windows(2)
        .map(|w| {
            let g = (w[1][0] - w[0][0]) as u64;
            cache.entry(g).or_insert_with(|| m.reach(g)).clone()
        })
        .collect())
}

/// The language of `shift` on `window`, capped at [`DEFAULT_LANGUAGE_LIMIT`].
pub fn language(shift: &ShiftSpace, window: &LatticeWindow) -> Result<Language> {
    language_with_limit(shift, window, DEFAULT_LANGUAGE_LIMIT)
}

pub fn language_with_limit(
    shift: &ShiftSpace,
    window: &LatticeWindow,
    limit: usize,
) -> Result<Language> {
    if window.dimension() != shift.dimension() && !window.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "window dimension {} does not match shift dimension {}",
            window.dimension(),
            shift.dimension()
        )));
    }
    let k = shift.alphabet();
    let n = window.len();
    if n == 0 {
        return Ok(Language::from_sorted(window.clone(), k, true, Vec::new()));
    }
    if shift.dimension() == 1 {
        let total = count_words(shift, window)?;
        let total_u = total.to_u64_digits();
        if total_u.len() > 1 || total_u.first().copied().unwrap_or(0) > limit as u64 {
            return Err(Error::TooLarge {
                what: "language",
                size: total.to_string().parse().unwrap_or(u128::MAX),
                limit: limit as u128,
            });
        }
        let reach = gap_reach(shift, window)?;
        let mut data = Vec::with_capacity(total_u.first().copied().unwrap_or(0) as usize * n);
        let mut buf = vec![0u8; n];
        dfs_1d(0, k, &reach, &mut buf, &mut data);
        let lang = Language::from_sorted(window.clone(), k, true, data);
        if lang.is_empty() {
            return Err(Error::EmptyLanguage(n));
        }
        return Ok(lang);
    }
    match shift.transitions() {
        Transitions::Full => {
            let total = (k as u128).checked_pow(n as u32);
            match total {
                Some(t) if t <= limit as u128 => {}
                _ => {
                    return Err(Error::TooLarge {
                        what: "language",
                        size: total.unwrap_or(u128::MAX),
                        limit: limit as u128,
                    })
                }
            }
            let mut data = Vec::with_capacity(k.pow(n as u32) * n);
            let mut buf = vec![0u8; n];
            full_dfs(0, k, &mut buf, &mut data);
            Ok(Language::from_sorted(window.clone(), k, true, data))
        }
        Transitions::Planar {
            horizontal,
            vertical,
        } => planar_language(window, k, horizontal, vertical, shift.halo(), limit),
        Transitions::OneStep(_) => unreachable!("one-step shifts are one-dimensional"),
    }
}

fn dfs_1d(i: usize, k: usize, reach: &[TransitionMatrix], buf: &mut [u8], out: &mut Vec<u8>) {
    for s in 0..k {
        if i > 0 && !reach[i - 1].get(buf[i - 1] as usize, s) {
            continue;
        }
        buf[i] = s as u8;
        if i + 1 == buf.len() {
            out.extend_from_slice(buf);
        } else {
            dfs_1d(i + 1, k, reach, buf, out);
        }
    }
}

fn full_dfs(i: usize, k: usize, buf: &mut [u8], out: &mut Vec<u8>) {
    for s in 0..k {
        buf[i] = s as u8;
        if i + 1 == buf.len() {
            out.extend_from_slice(buf);
        } else {
            full_dfs(i + 1, k, buf, out);
        }
    }
}

const UNSET: u8 = u8::MAX;

struct PlanarGrid<'a> {
    points: Vec<Point>,
    // neighbour indices: left, right, below, above
    neighbours: Vec<[Option<usize>; 4]>,
    horizontal: &'a TransitionMatrix,
    vertical: &'a TransitionMatrix,
}

impl PlanarGrid<'_> {
    fn consistent(&self, assign: &[u8], i: usize, s: usize) -> bool {
        let [left, right, below, above] = self.neighbours[i];
        let check = |nb: Option<usize>, f: &dyn Fn(usize) -> bool| match nb {
            Some(j) if assign[j] != UNSET => f(assign[j] as usize),
            _ => true,
        };
        check(left, &|t| self.horizontal.get(t, s))
            && check(right, &|t| self.horizontal.get(s, t))
            && check(below, &|t| self.vertical.get(t, s))
            && check(above, &|t| self.vertical.get(s, t))
    }

    fn extend(&self, order: &[usize], pos: usize, k: usize, assign: &mut [u8]) -> bool {
        if pos == order.len() {
            return true;
        }
        let i = order[pos];
        for s in 0..k {
            if self.consistent(assign, i, s) {
                assign[i] = s as u8;
                if self.extend(order, pos + 1, k, assign) {
                    assign[i] = UNSET;
                    return true;
                }
            }
        }
        assign[i] = UNSET;
        false
    }
}

fn planar_language(
    window: &LatticeWindow,
    k: usize,
    horizontal: &TransitionMatrix,
    vertical: &TransitionMatrix,
    halo: usize,
    limit: usize,
) -> Result<Language> {
    let h = halo as i64;
    let mut offsets = Vec::new();
    for dx in -h..=h {
        for dy in -h..=h {
            offsets.push([dx, dy]);
        }
    }
    let inflated = window.minkowski_sum(&LatticeWindow::new(2, offsets)?);
    let points = inflated.points().to_vec();
    let neighbours = points
        .iter()
        .map(|p| {
            [
                inflated.index_of([p[0] - 1, p[1]]),
                inflated.index_of([p[0] + 1, p[1]]),
                inflated.index_of([p[0], p[1] - 1]),
                inflated.index_of([p[0], p[1] + 1]),
            ]
        })
        .collect();
    let grid = PlanarGrid {
        points,
        neighbours,
        horizontal,
        vertical,
    };
    let window_idx: Vec<usize> = window
        .points()
        .iter()
        .map(|&p| inflated.index_of(p).expect("window inside inflation"))
        .collect();
    let halo_idx: Vec<usize> = (0..grid.points.len())
        .filter(|i| !window_idx.contains(i))
        .collect();
    let mut assign = vec![UNSET; grid.points.len()];
    let mut data = Vec::new();
    let mut count = 0usize;
    planar_dfs(
        &grid, &window_idx, &halo_idx, 0, k, &mut assign, &mut data, &mut count, limit,
    )?;
    if count == 0 {
        return Err(Error::EmptyLanguage(window.len()));
    }
    Ok(Language::from_sorted(window.clone(), k, false, data))
}

#[allow(clippy::too_many_arguments)]
fn planar_dfs(
    grid: &PlanarGrid,
    window_idx: &[usize],
    halo_idx: &[usize],
    pos: usize,
    k: usize,
    assign: &mut [u8],
    out: &mut Vec<u8>,
    count: &mut usize,
    limit: usize,
) -> Result<()> {
    if pos == window_idx.len() {
        if grid.extend(halo_idx, 0, k, assign) {
            *count += 1;
            if *count > limit {
                return Err(Error::TooLarge {
                    what: "language",
                    size: *count as u128,
                    limit: limit as u128,
                });
            }
            out.extend(window_idx.iter().map(|&i| assign[i]));
        }
        return Ok(());
    }
    let i = window_idx[pos];
    for s in 0..k {
        if grid.consistent(assign, i, s) {
            assign[i] = s as u8;
            planar_dfs(grid, window_idx, halo_idx, pos + 1, k, assign, out, count, limit)?;
        }
    }
    assign[i] = UNSET;
    Ok(())
}

/// Number of admissible patterns on a one-dimensional window, computed as a
/// product of reachability matrices across the gaps (no materialization).
pub fn count_words(shift: &ShiftSpace, window: &LatticeWindow) -> Result<BigUint> {
    if shift.dimension() != 1 {
        return Err(Error::Unsupported(
            "word counting by transfer matrices is one-dimensional; materialize the language"
                .into(),
        ));
    }
    if window.is_empty() {
        return Ok(BigUint::from(1u32));
    }
    let k = shift.alphabet();
    if shift.is_full() {
        return Ok(BigUint::from(k).pow(window.len() as u32));
    }
    let reach = gap_reach(shift, window)?;
    // right-to-left vector products, u128 first, big integers on overflow
    let mut v: Vec<u128> = vec![1; k];
    let mut overflow = false;
    'outer: for r in reach.iter().rev() {
        let mut next = vec![0u128; k];
        for (i, slot) in next.iter_mut().enumerate() {
            for (j, &vj) in v.iter().enumerate() {
                if r.get(i, j) {
                    match slot.checked_add(vj) {
                        Some(x) => *slot = x,
                        None => {
                            overflow = true;
                            break 'outer;
                        }
                    }
                }
            }
        }
        v = next;
    }
    if !overflow {
        let total = v.iter().try_fold(0u128, |acc, &x| acc.checked_add(x));
        if let Some(t) = total {
            return Ok(BigUint::from(t));
        }
    }
    let mut v: Vec<BigUint> = vec![BigUint::from(1u32); k];
    for r in reach.iter().rev() {
        v = (0..k)
            .map(|i| {
                (0..k)
                    .filter(|&j| r.get(i, j))
                    .fold(BigUint::from(0u32), |acc, j| acc + &v[j])
            })
            .collect();
    }
    Ok(v.into_iter().sum())
}

/// Natural logarithm of a positive big integer.
pub fn ln_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 100 {
        let digits = n.to_u64_digits();
        let v = digits
            .iter()
            .rev()
            .fold(0f64, |acc, &d| acc * 18446744073709551616.0 + d as f64);
        return v.ln();
    }
    let shift = bits - 64;
    let top: BigUint = n >> shift;
    (top.to_u64_digits()[0] as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

/// A one-dimensional sliding block code with window `{0, ..., r-1}`.
///
/// `rule[i]` is the image of the source word whose lexicographic base-`k`
/// index is `i` (first symbol most significant).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlidingBlockCode {
    source_alphabet: usize,
    target_alphabet: usize,
    radius: usize,
    rule: Vec<u8>,
}

impl SlidingBlockCode {
    pub fn new(
        source_alphabet: usize,
        target_alphabet: usize,
        radius: usize,
        rule: Vec<u8>,
    ) -> Result<Self> {
        if radius == 0 {
            return Err(Error::InvalidCode("code window must have at least one cell".into()));
        }
        check_alphabet(source_alphabet).map_err(|e| Error::InvalidCode(e.to_string()))?;
        check_alphabet(target_alphabet).map_err(|e| Error::InvalidCode(e.to_string()))?;
        let expected = (source_alphabet as u128)
            .checked_pow(radius as u32)
            .filter(|&n| n <= 1 << 24)
            .ok_or_else(|| Error::InvalidCode("rule table too large".into()))?;
        if rule.len() as u128 != expected {
            return Err(Error::InvalidCode(format!(
                "rule table has {} entries, expected {expected}",
                rule.len()
            )));
        }
        if let Some(&bad) = rule.iter().find(|&&t| t as usize >= target_alphabet) {
            return Err(Error::InvalidCode(format!(
                "rule output {bad} outside target alphabet"
            )));
        }
        Ok(Self {
            source_alphabet,
            target_alphabet,
            radius,
            rule,
        })
    }

    pub fn identity(k: usize) -> Self {
        Self::new(k, k, 1, (0..k as u8).collect()).expect("identity code")
    }

    /// Maps every word of length `radius` to 0.
    pub fn constant(k: usize, radius: usize) -> Self {
        Self::new(k, 1, radius, vec![0; k.pow(radius as u32)]).expect("constant code")
    }

    /// `(a, b) -> a xor b` on two symbols.
    pub fn xor() -> Self {
        Self::new(2, 2, 2, vec![0, 1, 1, 0]).expect("xor code")
    }

    pub fn source_alphabet(&self) -> usize {
        self.source_alphabet
    }

    pub fn target_alphabet(&self) -> usize {
        self.target_alphabet
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn rule(&self) -> &[u8] {
        &self.rule
    }

    /// The code window `{0, ..., r-1}`.
    pub fn window(&self) -> LatticeWindow {
        LatticeWindow::interval(0, self.radius as i64 - 1)
    }

    #[inline]
    pub fn apply_local(&self, word: &[u8]) -> u8 {
        let idx = word
            .iter()
            .fold(0usize, |acc, &s| acc * self.source_alphabet + s as usize);
        self.rule[idx]
    }

    /// For each output point `p` of `output`, the indices of `p, ..., p+r-1`
    /// inside `source`.
    pub(crate) fn output_indices(
        &self,
        source: &LatticeWindow,
        output: &LatticeWindow,
    ) -> Result<Vec<Vec<usize>>> {
        output
            .points()
            .iter()
            .map(|p| {
                (0..self.radius as i64)
                    .map(|d| {
                        source.index_of([p[0] + d, 0]).ok_or_else(|| {
                            Error::InvalidParameter(format!(
                                "source window does not contain {} (needed for output at {})",
                                p[0] + d,
                                p[0]
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    pub(crate) fn image_with(&self, symbols: &[u8], idx: &[Vec<usize>], out: &mut Vec<u8>) {
        out.clear();
        let mut word = Vec::with_capacity(self.radius);
        for cells in idx {
            word.clear();
            word.extend(cells.iter().map(|&i| symbols[i]));
            out.push(self.apply_local(&word));
        }
    }
}

/// Applies a code to a pattern whose window contains `s ⊕ {0, ..., r-1}`.
pub fn apply_code(
    code: &SlidingBlockCode,
    pattern: &Pattern,
    s: &LatticeWindow,
) -> Result<Pattern> {
    if pattern.window().dimension() != 1 && !pattern.window().is_empty() {
        return Err(Error::Unsupported("sliding block codes are one-dimensional".into()));
    }
    let idx = code.output_indices(pattern.window(), s)?;
    let mut out = Vec::new();
    code.image_with(pattern.symbols(), &idx, &mut out);
    Pattern::new(s.clone(), out)
}

fn check_code_shift(code: &SlidingBlockCode, shift: &ShiftSpace) -> Result<()> {
    if shift.dimension() != 1 {
        return Err(Error::Unsupported("factor codes require a one-dimensional shift".into()));
    }
    if code.source_alphabet() != shift.alphabet() {
        return Err(Error::InvalidCode(format!(
            "code source alphabet {} does not match shift alphabet {}",
            code.source_alphabet(),
            shift.alphabet()
        )));
    }
    Ok(())
}

/// The distinct images on `window` of source patterns on `window ⊕ code window`.
pub fn image_language(
    code: &SlidingBlockCode,
    shift: &ShiftSpace,
    window: &LatticeWindow,
) -> Result<Language> {
    check_code_shift(code, shift)?;
    let source_window = window.minkowski_sum(&code.window());
    let source = language(shift, &source_window)?;
    let idx = code.output_indices(&source_window, window)?;
    let mut images = Vec::with_capacity(source.len());
    let mut buf = Vec::new();
    for p in source.iter() {
        code.image_with(p, &idx, &mut buf);
        images.push(buf.clone());
    }
    Ok(Language::from_unsorted(
        window.clone(),
        code.target_alphabet(),
        true,
        images,
    ))
}

/// Source patterns on a window lying over one factor pattern.
#[derive(Debug, Clone)]
pub struct Fiber {
    pub language: Language,
    /// False when the factor pattern is not in the image (the fiber is empty).
    pub in_image: bool,
}

/// Patterns on `source_window` that extend to a point whose image on
/// `y.window()` equals `y`.
pub fn fiber_language(
    code: &SlidingBlockCode,
    shift: &ShiftSpace,
    source_window: &LatticeWindow,
    y: &Pattern,
) -> Result<Fiber> {
    check_code_shift(code, shift)?;
    let ambient = source_window.union(&y.window().minkowski_sum(&code.window()));
    let lang = language(shift, &ambient)?;
    let idx = code.output_indices(&ambient, y.window())?;
    let proj: Vec<usize> = source_window
        .points()
        .iter()
        .map(|&p| ambient.index_of(p).expect("source inside ambient"))
        .collect();
    let mut buf = Vec::new();
    let mut found = Vec::new();
    for p in lang.iter() {
        code.image_with(p, &idx, &mut buf);
        if buf == y.symbols() {
            found.push(proj.iter().map(|&i| p[i]).collect::<Vec<u8>>());
        }
    }
    let in_image = !found.is_empty();
    Ok(Fiber {
        language: Language::from_unsorted(source_window.clone(), shift.alphabet(), true, found),
        in_image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_model::folner_window;
    use proptest::prelude::*;

    /// Brute force: all length-`span` words avoiding forbidden transitions,
    /// projected onto the window offsets.
    fn brute_language(shift: &ShiftSpace, offsets: &[i64]) -> Vec<Vec<u8>> {
        let lo = *offsets.iter().min().unwrap();
        let hi = *offsets.iter().max().unwrap();
        let span = (hi - lo + 1) as u32;
        let k = shift.alphabet();
        let mut out = std::collections::BTreeSet::new();
        for code in 0..(k as u64).pow(span) {
            let mut w = vec![0u8; span as usize];
            let mut c = code;
            for i in (0..span as usize).rev() {
                w[i] = (c % k as u64) as u8;
                c /= k as u64;
            }
            if w.windows(2).all(|p| shift.allowed(p[0] as usize, p[1] as usize)) {
                out.insert(offsets.iter().map(|&o| w[(o - lo) as usize]).collect::<Vec<u8>>());
            }
        }
        out.into_iter().collect()
    }

    #[test]
    fn full_shift_language() {
        let shift = ShiftSpace::full(1, 2).unwrap();
        let lang = language(&shift, &folner_window(3, 1).unwrap()).unwrap();
        assert_eq!(lang.len(), 8);
    }

    #[test]
    fn golden_mean_language() {
        let shift = ShiftSpace::golden_mean();
        let lang = language(&shift, &folner_window(3, 1).unwrap()).unwrap();
        let words: Vec<&[u8]> = lang.iter().collect();
        assert_eq!(
            words,
            vec![&[0, 0, 0][..], &[0, 0, 1], &[0, 1, 0], &[1, 0, 0], &[1, 0, 1]]
        );
        let gap = LatticeWindow::from_offsets(&[0, 2]).unwrap();
        let lang = language(&shift, &gap).unwrap();
        assert_eq!(lang.len(), 4);
        assert!(lang.index_of(&[1, 1]).is_some());
        assert_eq!(brute_language(&shift, &[0, 2]).len(), 4);
    }

    #[test]
    fn count_words_examples() {
        let full = ShiftSpace::full(1, 2).unwrap();
        assert_eq!(count_words(&full, &folner_window(5, 1).unwrap()).unwrap(), BigUint::from(32u32));
        let gm = ShiftSpace::golden_mean();
        assert_eq!(count_words(&gm, &folner_window(3, 1).unwrap()).unwrap(), BigUint::from(5u32));
        let gap = LatticeWindow::from_offsets(&[0, 2]).unwrap();
        assert_eq!(count_words(&gm, &gap).unwrap(), BigUint::from(4u32));
        assert_eq!(count_words(&gm, &LatticeWindow::empty(1)).unwrap(), BigUint::from(1u32));
        let planar = ShiftSpace::full(2, 2).unwrap();
        assert!(count_words(&planar, &folner_window(2, 2).unwrap()).is_err());
    }

    #[test]
    fn golden_mean_entropy_rate_at_thirty() {
        let gm = ShiftSpace::golden_mean();
        let n = count_words(&gm, &folner_window(30, 1).unwrap()).unwrap();
        let rate = ln_biguint(&n) / 30.0;
        let perron = ((1.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((rate - perron).abs() < 0.02, "{rate}");
    }

    #[test]
    fn big_counts_escalate() {
        // 3^100 overflows u128
        let shift = ShiftSpace::one_step(&[vec![1, 1, 1], vec![1, 1, 1], vec![1, 1, 0]]).unwrap();
        let w = folner_window(120, 1).unwrap();
        let n = count_words(&shift, &w).unwrap();
        assert!(n.bits() > 128);
        let rate = ln_biguint(&n) / 120.0;
        // Perron root of [[1,1,1],[1,1,1],[1,1,0]] is 1 + sqrt(3)
        assert!((rate - (1.0 + 3f64.sqrt()).ln()).abs() < 0.02);
    }

    #[test]
    fn stranded_symbols_rejected() {
        assert!(ShiftSpace::one_step(&[vec![1, 0], vec![1, 0]]).is_err());
        assert!(ShiftSpace::one_step(&[vec![1, 2], vec![1, 0]]).is_err());
        assert!(ShiftSpace::one_step(&[vec![1, 1]]).is_err());
    }

    #[test]
    fn planar_full_shift_is_exact() {
        let shift = ShiftSpace::full(2, 2).unwrap();
        let lang = language(&shift, &folner_window(2, 2).unwrap()).unwrap();
        assert_eq!(lang.len(), 16);
        assert!(lang.is_exact());
    }

    #[test]
    fn planar_hard_squares() {
        // no two adjacent 1s horizontally or vertically
        let m = vec![vec![1, 1], vec![1, 0]];
        let shift = ShiftSpace::planar(&m, &m, 1).unwrap();
        let lang = language(&shift, &folner_window(2, 2).unwrap()).unwrap();
        // independent sets of the 4-cycle: empty, 4 singletons, 2 diagonals
        assert_eq!(lang.len(), 7);
        assert!(!lang.is_exact());
    }

    #[test]
    fn code_application() {
        let w = folner_window(3, 1).unwrap();
        let s2 = folner_window(2, 1).unwrap();
        let p = Pattern::new(w.clone(), vec![0, 1, 1]).unwrap();
        let out = apply_code(&SlidingBlockCode::xor(), &p, &s2).unwrap();
        assert_eq!(out.symbols(), &[1, 0]);
        let id = apply_code(&SlidingBlockCode::identity(2), &p, &w).unwrap();
        assert_eq!(id.symbols(), p.symbols());
        let c = apply_code(&SlidingBlockCode::constant(2, 1), &p, &w).unwrap();
        assert_eq!(c.symbols(), &[0, 0, 0]);
        assert!(apply_code(&SlidingBlockCode::xor(), &p, &w).is_err());
    }

    #[test]
    fn code_validation() {
        assert!(SlidingBlockCode::new(2, 2, 2, vec![0, 1, 1]).is_err());
        assert!(SlidingBlockCode::new(2, 2, 1, vec![0, 2]).is_err());
        assert!(SlidingBlockCode::new(2, 2, 0, vec![]).is_err());
    }

    #[test]
    fn image_languages() {
        let full = ShiftSpace::full(1, 2).unwrap();
        let w = folner_window(2, 1).unwrap();
        assert_eq!(image_language(&SlidingBlockCode::xor(), &full, &w).unwrap().len(), 4);
        let gm = ShiftSpace::golden_mean();
        let w3 = folner_window(3, 1).unwrap();
        let id = image_language(&SlidingBlockCode::identity(2), &gm, &w3).unwrap();
        assert_eq!(id, language(&gm, &w3).unwrap());
        let c = image_language(&SlidingBlockCode::constant(2, 2), &gm, &w3).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.pattern(0), &[0, 0, 0]);
    }

    #[test]
    fn fiber_examples() {
        let full = ShiftSpace::full(1, 2).unwrap();
        let w2 = folner_window(2, 1).unwrap();
        let w3 = folner_window(3, 1).unwrap();
        let y = Pattern::new(w2.clone(), vec![1, 0]).unwrap();
        let fiber = fiber_language(&SlidingBlockCode::xor(), &full, &w3, &y).unwrap();
        let words: Vec<&[u8]> = fiber.language.iter().collect();
        assert_eq!(words, vec![&[0, 1, 1][..], &[1, 0, 0]]);

        let y = Pattern::new(w3.clone(), vec![1, 0, 1]).unwrap();
        let gm = ShiftSpace::golden_mean();
        let fiber = fiber_language(&SlidingBlockCode::identity(2), &gm, &w3, &y).unwrap();
        assert_eq!(fiber.language.len(), 1);

        let y = Pattern::new(w3.clone(), vec![0, 0, 0]).unwrap();
        let fiber = fiber_language(&SlidingBlockCode::constant(2, 1), &gm, &w3, &y).unwrap();
        assert_eq!(fiber.language, language(&gm, &w3).unwrap());

        let y = Pattern::new(w2, vec![1, 1]).unwrap();
        let fiber = fiber_language(&SlidingBlockCode::identity(2), &gm, &w3, &y).unwrap();
        assert!(!fiber.in_image && fiber.language.is_empty());
    }

    #[test]
    fn fibers_partition_the_source_language() {
        let gm = ShiftSpace::golden_mean();
        let code = SlidingBlockCode::xor();
        let out = folner_window(3, 1).unwrap();
        let src = folner_window(4, 1).unwrap();
        let image = image_language(&code, &gm, &out).unwrap();
        let mut total = 0;
        for y in image.patterns() {
            let f = fiber_language(&code, &gm, &src, &y).unwrap();
            assert!(f.in_image && !f.language.is_empty());
            total += f.language.len();
        }
        // every source word has exactly one image, so the fibers are disjoint
        assert_eq!(total, language(&gm, &src).unwrap().len());
    }

    fn arb_shift() -> impl Strategy<Value = ShiftSpace> {
        (2usize..=3)
            .prop_flat_map(|k| proptest::collection::vec(proptest::bool::weighted(0.7), k * k))
            .prop_filter_map("stranded symbol", |bits| {
                let k = (bits.len() as f64).sqrt() as usize;
                let rows: Vec<Vec<u8>> = (0..k)
                    .map(|i| (0..k).map(|j| bits[i * k + j] as u8).collect())
                    .collect();
                ShiftSpace::one_step(&rows).ok()
            })
    }

    fn arb_offsets() -> impl Strategy<Value = Vec<i64>> {
        proptest::collection::btree_set(0i64..8, 1..=5).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn count_matches_brute_force(shift in arb_shift(), offsets in arb_offsets()) {
            let w = LatticeWindow::from_offsets(&offsets).unwrap();
            let brute = brute_language(&shift, &offsets);
            let lang = language(&shift, &w).unwrap();
            prop_assert_eq!(lang.iter().map(|p| p.to_vec()).collect::<Vec<_>>(), brute.clone());
            prop_assert_eq!(count_words(&shift, &w).unwrap(), BigUint::from(brute.len()));
        }

        #[test]
        fn count_is_translation_invariant(shift in arb_shift(), offsets in arb_offsets(), g in -20i64..20) {
            let w = LatticeWindow::from_offsets(&offsets).unwrap();
            prop_assert_eq!(count_words(&shift, &w).unwrap(), count_words(&shift, &w.translate([g, 0])).unwrap());
        }

        #[test]
        fn count_is_submultiplicative(shift in arb_shift(), a in arb_offsets(), b in arb_offsets()) {
            let wa = LatticeWindow::from_offsets(&a).unwrap();
            let wb = LatticeWindow::from_offsets(&b).unwrap().translate([9, 0]);
            let joint = count_words(&shift, &wa.union(&wb)).unwrap();
            prop_assert!(joint <= count_words(&shift, &wa).unwrap() * count_words(&shift, &wb).unwrap());
        }
    }
}
