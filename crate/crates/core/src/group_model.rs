//! Følner boxes in `Z^d`, subsets of them, and systems of coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Lattice point; for `d = 1` the second coordinate is always zero.
pub type Point = [i64; 2];

/// Default largest window for exhaustive subset enumeration (about 10^6 subsets).
pub const DEFAULT_EXACT_LIMIT: usize = 20;

/// Largest window a [`SubsetMask`] can index.
pub const MAX_MASK_LEN: usize = 64;

/// A finite set of lattice points in canonical (lexicographic) order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct LatticeWindow {
    dimension: u8,
    points: Vec<Point>,
}

impl LatticeWindow {
    /// Builds a window from arbitrary points. Points are sorted; duplicates
    /// are rejected.
    pub fn new(dimension: u8, mut points: Vec<Point>) -> Result<Self> {
        check_dimension(dimension)?;
        if dimension == 1 && points.iter().any(|p| p[1] != 0) {
            return Err(Error::InvalidParameter(
                "one-dimensional window with nonzero second coordinate".into(),
            ));
        }
        points.sort_unstable();
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate window point".into()));
        }
        Ok(Self { dimension, points })
    }

    /// One-dimensional window from integer offsets.
    pub fn from_offsets(offsets: &[i64]) -> Result<Self> {
        Self::new(1, offsets.iter().map(|&x| [x, 0]).collect())
    }

    /// The interval `{start, ..., end}` (empty when `end < start`).
    pub fn interval(start: i64, end: i64) -> Self {
        Self {
            dimension: 1,
            points: (start..=end).map(|x| [x, 0]).collect(),
        }
    }

    pub fn empty(dimension: u8) -> Self {
        Self {
            dimension,
            points: Vec::new(),
        }
    }

    pub fn dimension(&self) -> u8 {
        self.dimension
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, p: Point) -> Option<usize> {
        self.points.binary_search(&p).ok()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.index_of(p).is_some()
    }

    pub fn is_subset_of(&self, other: &LatticeWindow) -> bool {
        self.points.iter().all(|&p| other.contains(p))
    }

    pub fn translate(&self, g: Point) -> Self {
        Self {
            dimension: self.dimension,
            points: self.points.iter().map(|p| [p[0] + g[0], p[1] + g[1]]).collect(),
        }
    }

    /// Minkowski sum `self ⊕ other`.
    pub fn minkowski_sum(&self, other: &LatticeWindow) -> Self {
        let mut points = Vec::with_capacity(self.len() * other.len());
        for a in &self.points {
            for b in &other.points {
                points.push([a[0] + b[0], a[1] + b[1]]);
            }
        }
        points.sort_unstable();
        points.dedup();
        Self {
            dimension: self.dimension.max(other.dimension),
            points,
        }
    }

    pub fn union(&self, other: &LatticeWindow) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        points.sort_unstable();
        points.dedup();
        Self {
            dimension: self.dimension.max(other.dimension),
            points,
        }
    }

    /// Coordinate-wise minimum of the points (`[0, 0]` for an empty window).
    pub fn lower_corner(&self) -> Point {
        if self.points.is_empty() {
            return [0, 0];
        }
        let mut lo = self.points[0];
        for p in &self.points {
            lo[0] = lo[0].min(p[0]);
            lo[1] = lo[1].min(p[1]);
        }
        lo
    }

    pub fn upper_corner(&self) -> Point {
        if self.points.is_empty() {
            return [0, 0];
        }
        let mut hi = self.points[0];
        for p in &self.points {
            hi[0] = hi[0].max(p[0]);
            hi[1] = hi[1].max(p[1]);
        }
        hi
    }

    /// Translate so the lower corner sits at the origin.
    pub fn normalized(&self) -> Self {
        let lo = self.lower_corner();
        self.translate([-lo[0], -lo[1]])
    }

    /// Sub-window selected by a mask over this window's canonical points.
    pub fn select(&self, mask: SubsetMask) -> Self {
        debug_assert_eq!(mask.len(), self.len());
        Self {
            dimension: self.dimension,
            points: mask.indices().map(|i| self.points[i]).collect(),
        }
    }
}

fn check_dimension(d: u8) -> Result<()> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "dimension must be 1 or 2, got {d}"
        )))
    }
}

/// The Følner box `{0, ..., n-1}^d`.
pub fn folner_window(n: usize, d: u8) -> Result<LatticeWindow> {
    check_dimension(d)?;
    if n == 0 {
        return Err(Error::InvalidParameter("Følner box side must be >= 1".into()));
    }
    let n = n as i64;
    let points = if d == 1 {
        (0..n).map(|x| [x, 0]).collect()
    } else {
        (0..n).flat_map(|x| (0..n).map(move |y| [x, y])).collect()
    };
    Ok(LatticeWindow { dimension: d, points })
}

/// A subset of a window; bit `i` selects the window's `i`-th canonical point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SubsetMask {
    len: u8,
    bits: u64,
}

impl SubsetMask {
    pub fn new(len: usize, bits: u64) -> Result<Self> {
        if len > MAX_MASK_LEN {
            return Err(Error::TooLarge {
                what: "subset mask window",
                size: len as u128,
                limit: MAX_MASK_LEN as u128,
            });
        }
        if len < 64 && bits >> len != 0 {
            return Err(Error::InvalidParameter("mask bits outside window".into()));
        }
        Ok(Self { len: len as u8, bits })
    }

    pub fn empty(len: usize) -> Self {
        Self::new(len, 0).expect("mask length")
    }

    pub fn full(len: usize) -> Self {
        Self {
            len: len as u8,
            bits: low_bits(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len() && self.bits >> i & 1 == 1
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> {
        let mut b = self.bits;
        std::iter::from_fn(move || {
            if b == 0 {
                None
            } else {
                let i = b.trailing_zeros() as usize;
                b &= b - 1;
                Some(i)
            }
        })
    }

    /// Bitwise complement within the window.
    pub fn complement(&self) -> Self {
        Self {
            len: self.len,
            bits: !self.bits & low_bits(self.len()),
        }
    }
}

fn low_bits(len: usize) -> u64 {
    if len >= 64 {
        u64::MAX
    } else {
        (1u64 << len) - 1
    }
}

/// Free function form of [`SubsetMask::complement`].
pub fn complement(mask: SubsetMask) -> SubsetMask {
    mask.complement()
}

/// All `2^|window|` subsets in increasing bit-pattern order.
pub fn enumerate_subsets(
    window: &LatticeWindow,
    exact_limit: usize,
) -> Result<impl Iterator<Item = SubsetMask>> {
    let len = window.len();
    if len > exact_limit || len >= 64 {
        return Err(Error::ExactLimitExceeded {
            size: len,
            limit: exact_limit,
        });
    }
    Ok((0..1u64 << len).map(move |bits| SubsetMask { len: len as u8, bits }))
}

/// One atom `(x, weight)` of a symmetric mixing measure on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaAtom {
    pub x: f64,
    pub weight: f64,
}

/// Weights `c(a, s)` on subsets of size `s` of an `a`-point window, of the
/// form `∫ x^s (1-x)^(a-s) dλ(x)` for a symmetric probability `λ` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CoefficientSystem {
    /// `2^-a` (λ = point mass at 1/2).
    Uniform,
    /// `1 / ((a+1) binom(a, s))` (λ = Lebesgue measure).
    Neural,
    /// Finitely many atoms, symmetric under `x -> 1 - x`.
    LambdaAtoms(Vec<LambdaAtom>),
}

const ATOM_TOL: f64 = 1e-12;

impl CoefficientSystem {
    /// Validated atom-list system. Coinciding atoms are merged.
    pub fn lambda_atoms(atoms: Vec<LambdaAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("empty atom list".into()));
        }
        for a in &atoms {
            if !(0.0..=1.0).contains(&a.x) || !(a.weight >= 0.0) || !a.weight.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "atom ({}, {}) outside [0,1] x [0,inf)",
                    a.x, a.weight
                )));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > ATOM_TOL {
            return Err(Error::InvalidParameter(format!(
                "atom weights sum to {total}, expected 1"
            )));
        }
        let mut sorted = atoms;
        sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
        let mut merged: Vec<LambdaAtom> = Vec::with_capacity(sorted.len());
        for a in sorted {
            match merged.last_mut() {
                Some(last) if (last.x - a.x).abs() <= ATOM_TOL => last.weight += a.weight,
                _ => merged.push(a),
            }
        }
        let m = merged.len();
        for i in 0..m {
            let (a, b) = (merged[i], merged[m - 1 - i]);
            if (a.x + b.x - 1.0).abs() > ATOM_TOL || (a.weight - b.weight).abs() > ATOM_TOL {
                return Err(Error::InvalidParameter(
                    "atom list is not symmetric under x -> 1 - x".into(),
                ));
            }
        }
        Ok(CoefficientSystem::LambdaAtoms(merged))
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CoefficientSystem::Uniform => "uniform",
            CoefficientSystem::Neural => "neural",
            CoefficientSystem::LambdaAtoms(_) => "atoms",
        }
    }

    /// `c(a, s)`: the weight of one particular `s`-subset of an `a`-point window.
    pub fn coefficient(&self, a: usize, s: usize) -> Result<f64> {
        if s > a {
            return Err(Error::InvalidParameter(format!(
                "subset size {s} exceeds window size {a}"
            )));
        }
        Ok(match self {
            CoefficientSystem::Uniform => 0.5f64.powi(a as i32),
            CoefficientSystem::Neural => {
                if a <= 20 {
                    1.0 / ((a as f64 + 1.0) * binomial_exact(a, s) as f64)
                } else {
                    (-((a as f64 + 1.0).ln()) - ln_binomial(a, s)).exp()
                }
            }
            CoefficientSystem::LambdaAtoms(atoms) => atoms
                .iter()
                .map(|at| at.weight * at.x.powi(s as i32) * (1.0 - at.x).powi((a - s) as i32))
                .sum(),
        })
    }

    /// Coefficients for every subset size `0..=a`.
    pub fn table(&self, a: usize) -> Vec<f64> {
        (0..=a)
            .map(|s| self.coefficient(a, s).expect("s <= a"))
            .collect()
    }

    /// Draws the mixing parameter `x` for subset sampling.
    fn draw_x(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            CoefficientSystem::Uniform => 0.5,
            CoefficientSystem::Neural => rng.gen::<f64>(),
            CoefficientSystem::LambdaAtoms(atoms) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for at in atoms {
                    acc += at.weight;
                    if u < acc {
                        return at.x;
                    }
                }
                atoms.last().map(|a| a.x).unwrap_or(0.5)
            }
        }
    }
}

/// `binom(a, s)` exactly for `a <= 62`.
pub fn binomial_exact(a: usize, s: usize) -> u64 {
    if s > a {
        return 0;
    }
    let s = s.min(a - s);
    let mut r: u64 = 1;
    for i in 0..s {
        // exact at every step: r * (a - i) is divisible by (i + 1)
        r = r * (a - i) as u64 / (i + 1) as u64;
    }
    r
}

/// `ln binom(a, s)` accumulated in the log domain; symmetric in `s <-> a - s`.
pub fn ln_binomial(a: usize, s: usize) -> f64 {
    let s = s.min(a - s);
    (0..s)
        .map(|i| ((a - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}

// ---- seeding ----------------------------------------------------------------

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed derivation: a SplitMix64 chain over the parts.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C908u64, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// 64-bit FNV-1a, used to fold string tags into seeds.
pub fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// The `index`-th sampled subset of a seeded stream.
///
/// Draws `x` from the system's mixing measure and then includes each point
/// independently with probability `x`, so `P(S) = c(|window|, |S|)`.
pub fn sample_subset(
    system: &CoefficientSystem,
    window_len: usize,
    seed: u64,
    index: u64,
) -> SubsetMask {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, index]));
    let x = system.draw_x(&mut rng);
    let mut bits = 0u64;
    for i in 0..window_len {
        if rng.gen::<f64>() < x {
            bits |= 1 << i;
        }
    }
    SubsetMask {
        len: window_len as u8,
        bits,
    }
}

/// A deterministic stream of `count` sampled subsets.
pub fn sample_subsets<'a>(
    system: &'a CoefficientSystem,
    window: &LatticeWindow,
    count: usize,
    seed: u64,
) -> Result<impl Iterator<Item = SubsetMask> + 'a> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    if window.len() > MAX_MASK_LEN {
        return Err(Error::TooLarge {
            what: "sampling window",
            size: window.len() as u128,
            limit: MAX_MASK_LEN as u128,
        });
    }
    let len = window.len();
    Ok((0..count as u64).map(move |i| sample_subset(system, len, seed, i)))
}
