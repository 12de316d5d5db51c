//! Finite covers of a shift space by unions of cylinders on a base window,
//! their joins over subsets of the acting group, and refinement.
//!
//! Pullback convention: `g^{-1}U` is the cover whose elements are the
//! cylinders of `U` translated by `+g`, i.e. a pattern `p` on `S ⊕ W` lies in
//! the join cell `(e_g)_{g ∈ S}` iff the restriction of `p` to `g + W` lies in
//! element `e_g` for every `g`.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigUint;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group_model::LatticeWindow;
use crate::symbolic_space::{language, pattern_key, Language, ShiftSpace};

/// Covers may have at most this many elements (membership is a `u64` mask).
pub const MAX_ELEMENTS: usize = 64;

/// A finite cover by unions of cylinders on a common base window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CylinderCover {
    window: LatticeWindow,
    alphabet: usize,
    elements: Vec<Vec<Vec<u8>>>,
    is_partition: bool,
    #[serde(skip)]
    membership: HashMap<u128, u64>,
}

impl CylinderCover {
    /// Builds a cover from explicit pattern lists. Patterns inside an element
    /// are sorted and deduplicated; no element may be empty.
    pub fn new(window: LatticeWindow, alphabet: usize, elements: Vec<Vec<Vec<u8>>>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidCover("cover has no elements".into()));
        }
        if elements.len() > MAX_ELEMENTS {
            return Err(Error::InvalidCover(format!(
                "{} elements exceed the limit of {MAX_ELEMENTS}",
                elements.len()
            )));
        }
        let mut membership: HashMap<u128, u64> = HashMap::new();
        let mut normalized = Vec::with_capacity(elements.len());
        let mut disjoint = true;
        for (e, mut pats) in elements.into_iter().enumerate() {
            if pats.is_empty() {
                return Err(Error::InvalidCover(format!("element {e} is empty")));
            }
            pats.sort_unstable();
            pats.dedup();
            for p in &pats {
                if p.len() != window.len() {
                    return Err(Error::InvalidCover(format!(
                        "element {e}: pattern of length {} on a window of {} points",
                        p.len(),
                        window.len()
                    )));
                }
                if p.iter().any(|&s| s as usize >= alphabet) {
                    return Err(Error::InvalidCover(format!(
                        "element {e}: symbol outside alphabet of size {alphabet}"
                    )));
                }
                let key = pattern_key(p, alphabet)
                    .ok_or_else(|| Error::InvalidCover("base window too large".into()))?;
                let slot = membership.entry(key).or_insert(0);
                if *slot != 0 {
                    disjoint = false;
                }
                *slot |= 1 << e;
            }
            normalized.push(pats);
        }
        Ok(Self {
            window,
            alphabet,
            elements: normalized,
            is_partition: disjoint,
            membership,
        })
    }

    /// The partition into the one-symbol cylinders `[0], ..., [k-1]` at the origin.
    pub fn symbol_partition(dimension: u8, alphabet: usize) -> Self {
        let window = LatticeWindow::new(dimension, vec![[0, 0]]).expect("origin window");
        Self::new(window, alphabet, (0..alphabet as u8).map(|s| vec![vec![s]]).collect())
            .expect("symbol partition")
    }

    /// The trivial cover `{X}`.
    pub fn whole_space(dimension: u8, alphabet: usize) -> Self {
        let window = LatticeWindow::new(dimension, vec![[0, 0]]).expect("origin window");
        Self::new(window, alphabet, vec![(0..alphabet as u8).map(|s| vec![s]).collect()])
            .expect("whole space cover")
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn elements(&self) -> &[Vec<Vec<u8>>] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_partition(&self) -> bool {
        self.is_partition
    }

    /// True for the one-point partition into single-symbol cylinders, which
    /// admits transfer-matrix counting.
    pub fn is_symbol_partition(&self) -> bool {
        self.is_partition
            && self.window.len() == 1
            && self.elements.len() == self.alphabet
            && self.elements.iter().all(|e| e.len() == 1)
    }

    /// Bit `e` is set iff the pattern lies in element `e`.
    pub fn membership(&self, pattern: &[u8]) -> u64 {
        pattern_key(pattern, self.alphabet)
            .and_then(|k| self.membership.get(&k).copied())
            .unwrap_or(0)
    }

    /// The common refinement `{U ∩ V}` of two covers on the same window;
    /// empty and repeated intersections are dropped.
    pub fn join(&self, other: &CylinderCover) -> Result<Self> {
        if self.window != other.window || self.alphabet != other.alphabet {
            return Err(Error::InvalidCover("join requires a common base window".into()));
        }
        let mut elements = Vec::new();
        for a in &self.elements {
            for b in &other.elements {
                let common: Vec<Vec<u8>> = a.iter().filter(|p| b.binary_search(p).is_ok()).cloned().collect();
                if !common.is_empty() && !elements.contains(&common) {
                    elements.push(common);
                }
            }
        }
        Self::new(self.window.clone(), self.alphabet, elements)
    }

    /// The same cover expressed on a larger window containing the base
    /// window: element `e` becomes the admissible patterns whose restriction
    /// to the base window lies in `e`.
    pub fn lift(&self, shift: &ShiftSpace, window: &LatticeWindow) -> Result<Self> {
        if !self.window.is_subset_of(window) {
            return Err(Error::InvalidCover("lift target must contain the base window".into()));
        }
        let proj: Vec<usize> = self
            .window
            .points()
            .iter()
            .map(|&p| window.index_of(p).expect("subset"))
            .collect();
        let lang = language(shift, window)?;
        let mut elements = vec![Vec::new(); self.len()];
        let mut buf = Vec::with_capacity(proj.len());
        for p in lang.iter() {
            buf.clear();
            buf.extend(proj.iter().map(|&i| p[i]));
            let mut m = self.membership(&buf);
            while m != 0 {
                elements[m.trailing_zeros() as usize].push(p.to_vec());
                m &= m - 1;
            }
        }
        elements.retain(|e| !e.is_empty());
        Self::new(window.clone(), self.alphabet, elements)
    }

    /// Some element contains every admissible pattern of the base window.
    pub fn contains_whole_space(&self, shift: &ShiftSpace) -> Result<bool> {
        let lang = language(shift, &self.window)?;
        let mut all = u64::MAX;
        for p in lang.iter() {
            all &= self.membership(p);
        }
        Ok(all != 0)
    }
}

/// Outcome of [`validate_cover`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverReport {
    pub elements: usize,
    pub is_partition: bool,
    pub language_size: usize,
}

/// Checks that every admissible pattern of the base window is covered.
pub fn validate_cover(shift: &ShiftSpace, cover: &CylinderCover) -> Result<CoverReport> {
    if cover.alphabet() != shift.alphabet() {
        return Err(Error::InvalidCover(format!(
            "cover alphabet {} differs from shift alphabet {}",
            cover.alphabet(),
            shift.alphabet()
        )));
    }
    let lang = language(shift, cover.window())?;
    if let Some(p) = lang.iter().find(|p| cover.membership(p) == 0) {
        return Err(Error::Uncovered { pattern: p.to_vec() });
    }
    Ok(CoverReport {
        elements: cover.len(),
        is_partition: cover.is_partition(),
        language_size: lang.len(),
    })
}

/// Whether every element of `a` lies inside some element of `b`. When the
/// windows differ, `b` must sit inside `a`'s window and is compared through
/// restriction.
pub fn refines(a: &CylinderCover, b: &CylinderCover) -> Result<bool> {
    if a.alphabet() != b.alphabet() {
        return Err(Error::InvalidCover("covers over different alphabets".into()));
    }
    if !b.window().is_subset_of(a.window()) {
        return Err(Error::InvalidCover(
            "refinement test needs the coarser cover's window inside the finer one's".into(),
        ));
    }
    let proj: Vec<usize> = b
        .window()
        .points()
        .iter()
        .map(|&p| a.window().index_of(p).expect("subset"))
        .collect();
    let mut buf = Vec::with_capacity(proj.len());
    Ok(a.elements().iter().all(|elem| {
        let mut common = u64::MAX;
        for p in elem {
            buf.clear();
            buf.extend(proj.iter().map(|&i| p[i]));
            common &= b.membership(&buf);
        }
        common != 0
    }))
}

/// Per-atom join structure: for each admissible pattern on `S ⊕ W` and each
/// `g ∈ S`, the mask of cover elements containing its restriction to `g + W`.
///
/// Join cells are keyed by `Σ_j e_j · u^j` where `j` runs over the points of
/// `S` in canonical order and `u` is the number of cover elements.
#[derive(Debug, Clone)]
pub(crate) struct JoinAtoms {
    pub positions: usize,
    pub radix: u64,
    pub atoms: Language,
    masks: Vec<u64>,
}

impl JoinAtoms {
    pub fn build(shift: &ShiftSpace, cover: &CylinderCover, s: &LatticeWindow) -> Result<Self> {
        let combined = s.minkowski_sum(cover.window());
        let atoms = language(shift, &combined)?;
        Self::with_atoms(cover, s, atoms)
    }

    pub fn with_atoms(cover: &CylinderCover, s: &LatticeWindow, atoms: Language) -> Result<Self> {
        let positions = s.len();
        let radix = cover.len() as u64;
        if radix > 1 && (radix as u128).checked_pow(positions as u32).is_none_or(|v| v > u64::MAX as u128) {
            return Err(Error::TooLarge {
                what: "join cell space",
                size: u128::MAX,
                limit: u64::MAX as u128,
            });
        }
        let combined = atoms.window();
        let offsets: Vec<Vec<usize>> = s
            .points()
            .iter()
            .map(|g| {
                cover
                    .window()
                    .translate(*g)
                    .points()
                    .iter()
                    .map(|&p| combined.index_of(p).expect("g + W inside S ⊕ W"))
                    .collect()
            })
            .collect();
        let mut masks = Vec::with_capacity(atoms.len() * positions);
        let mut buf = Vec::with_capacity(cover.window().len());
        for p in atoms.iter() {
            for idx in &offsets {
                buf.clear();
                buf.extend(idx.iter().map(|&i| p[i]));
                let m = cover.membership(&buf);
                if m == 0 {
                    return Err(Error::Uncovered { pattern: buf.clone() });
                }
                masks.push(m);
            }
        }
        Ok(Self {
            positions,
            radix,
            atoms,
            masks,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    #[inline]
    pub fn masks(&self, atom: usize) -> &[u64] {
        &self.masks[atom * self.positions..(atom + 1) * self.positions]
    }

    pub fn is_forced(&self, atom: usize) -> bool {
        self.masks(atom).iter().all(|m| m.count_ones() == 1)
    }

    /// Number of join cells containing the atom (saturating).
    pub fn choice_count(&self, atom: usize) -> u128 {
        self.masks(atom)
            .iter()
            .fold(1u128, |acc, m| acc.saturating_mul(m.count_ones() as u128))
    }

    /// Cell key of a forced atom, or of the lowest-element choice otherwise.
    pub fn first_key(&self, atom: usize) -> u64 {
        let mut key = 0u64;
        let mut mult = 1u64;
        for m in self.masks(atom) {
            key += m.trailing_zeros() as u64 * mult;
            mult = mult.wrapping_mul(self.radix);
        }
        key
    }

    /// Calls `f` with the key of every join cell containing the atom.
    pub fn for_each_cell(&self, atom: usize, mut f: impl FnMut(u64)) {
        fn rec(masks: &[u64], mult: u64, acc: u64, radix: u64, f: &mut dyn FnMut(u64)) {
            match masks.split_first() {
                None => f(acc),
                Some((&m, rest)) => {
                    let mut b = m;
                    while b != 0 {
                        let e = b.trailing_zeros() as u64;
                        rec(rest, mult.wrapping_mul(radix), acc + e * mult, radix, f);
                        b &= b - 1;
                    }
                }
            }
        }
        let masks = self.masks(atom);
        if masks.iter().all(|m| m.count_ones() == 1) {
            f(self.first_key(atom));
        } else {
            rec(masks, 1, 0, self.radix, &mut f);
        }
    }

    pub fn decode(&self, mut key: u64) -> Vec<usize> {
        (0..self.positions)
            .map(|_| {
                let e = (key % self.radix.max(1)) as usize;
                key /= self.radix.max(1);
                e
            })
            .collect()
    }
}

/// The join `U_S` materialized over the language on `S ⊕ W`.
#[derive(Debug, Clone)]
pub struct JoinUniverse {
    pub subset: LatticeWindow,
    pub universe: Language,
    /// `(element index per point of S, sorted universe indices)`, sorted by
    /// tuple; empty cells are omitted.
    pub covered_sets: Vec<(Vec<usize>, Vec<usize>)>,
}

impl JoinUniverse {
    pub fn window(&self) -> &LatticeWindow {
        self.universe.window()
    }
}

/// Materializes `U_S = ⋁_{g ∈ S} g^{-1} U`.
pub fn join_materialize(
    shift: &ShiftSpace,
    cover: &CylinderCover,
    s: &LatticeWindow,
) -> Result<JoinUniverse> {
    let atoms = JoinAtoms::build(shift, cover, s)?;
    let mut cells: HashMap<u64, Vec<usize>> = HashMap::new();
    for a in 0..atoms.len() {
        atoms.for_each_cell(a, |key| cells.entry(key).or_default().push(a));
    }
    let mut covered_sets: Vec<(Vec<usize>, Vec<usize>)> = cells
        .into_iter()
        .map(|(key, members)| (atoms.decode(key), members))
        .collect();
    covered_sets.sort();
    Ok(JoinUniverse {
        subset: s.clone(),
        universe: atoms.atoms,
        covered_sets,
    })
}

/// Atoms of a join and, per atom, the join cells it may be assigned to.
#[derive(Debug, Clone)]
pub struct AssignmentSpace {
    pub atoms: Language,
    pub choices: Vec<Vec<Vec<usize>>>,
}

impl AssignmentSpace {
    /// Number of deterministic assignments `Π_p |choices(p)|`.
    pub fn size(&self) -> BigUint {
        self.choices
            .iter()
            .fold(BigUint::from(1u32), |acc, c| acc * BigUint::from(c.len()))
    }

    /// Partition of the atoms induced by an assignment (one choice index per
    /// atom): groups of atom indices keyed by the chosen cell.
    pub fn induced_partition(&self, assignment: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
        let mut cells: HashMap<&Vec<usize>, Vec<usize>> = HashMap::new();
        for (atom, &c) in assignment.iter().enumerate() {
            cells.entry(&self.choices[atom][c]).or_default().push(atom);
        }
        let mut out: Vec<_> = cells.into_iter().map(|(k, v)| (k.clone(), v)).collect();
        out.sort();
        out
    }
}

/// The deterministic assignments of join atoms on `s ⊕ W` to join cells.
pub fn assignment_space(
    shift: &ShiftSpace,
    cover: &CylinderCover,
    s: &LatticeWindow,
) -> Result<AssignmentSpace> {
    let atoms = JoinAtoms::build(shift, cover, s)?;
    let choices = (0..atoms.len())
        .map(|a| {
            let mut keys = BTreeSet::new();
            atoms.for_each_cell(a, |k| {
                keys.insert(atoms.decode(k));
            });
            keys.into_iter().collect()
        })
        .collect();
    Ok(AssignmentSpace {
        atoms: atoms.atoms,
        choices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_model::folner_window;

    fn three_shift_cover() -> CylinderCover {
        let w = LatticeWindow::from_offsets(&[0]).unwrap();
        CylinderCover::new(w, 3, vec![vec![vec![0], vec![1]], vec![vec![1], vec![2]]]).unwrap()
    }

    #[test]
    fn validation_examples() {
        let full2 = ShiftSpace::full(1, 2).unwrap();
        let rep = validate_cover(&full2, &CylinderCover::symbol_partition(1, 2)).unwrap();
        assert!(rep.is_partition);
        let rep = validate_cover(&full2, &CylinderCover::whole_space(1, 2)).unwrap();
        assert_eq!(rep.elements, 1);
        let w = LatticeWindow::from_offsets(&[0]).unwrap();
        let only_zero = CylinderCover::new(w, 2, vec![vec![vec![0]]]).unwrap();
        assert_eq!(
            validate_cover(&full2, &only_zero),
            Err(Error::Uncovered { pattern: vec![1] })
        );
    }

    #[test]
    fn empty_element_rejected() {
        let w = LatticeWindow::from_offsets(&[0]).unwrap();
        assert!(CylinderCover::new(w.clone(), 2, vec![vec![vec![0]], vec![]]).is_err());
        assert!(CylinderCover::new(w, 2, vec![vec![vec![0, 1]]]).is_err());
    }

    #[test]
    fn join_examples() {
        let full2 = ShiftSpace::full(1, 2).unwrap();
        let j = join_materialize(&full2, &CylinderCover::symbol_partition(1, 2), &folner_window(2, 1).unwrap()).unwrap();
        assert_eq!(j.universe.len(), 4);
        assert_eq!(j.covered_sets.len(), 4);
        assert!(j.covered_sets.iter().all(|(_, m)| m.len() == 1));

        let gm = ShiftSpace::golden_mean();
        let j = join_materialize(&gm, &CylinderCover::symbol_partition(1, 2), &folner_window(3, 1).unwrap()).unwrap();
        let tuples: Vec<Vec<usize>> = j.covered_sets.iter().map(|(t, _)| t.clone()).collect();
        assert_eq!(
            tuples,
            vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0], vec![1, 0, 1]]
        );

        let full3 = ShiftSpace::full(1, 3).unwrap();
        let j = join_materialize(&full3, &three_shift_cover(), &folner_window(1, 1).unwrap()).unwrap();
        assert_eq!(j.universe.len(), 3);
        assert_eq!(j.covered_sets, vec![(vec![0], vec![0, 1]), (vec![1], vec![1, 2])]);
    }

    #[test]
    fn empty_subset_join_is_one_cell() {
        let gm = ShiftSpace::golden_mean();
        let j = join_materialize(&gm, &CylinderCover::symbol_partition(1, 2), &LatticeWindow::empty(1)).unwrap();
        assert_eq!(j.covered_sets.len(), 1);
        assert_eq!(j.covered_sets[0].1, (0..j.universe.len()).collect::<Vec<_>>());
    }

    #[test]
    fn refinement_examples() {
        let part = CylinderCover::symbol_partition(1, 3);
        let cover = three_shift_cover();
        assert!(refines(&part, &cover).unwrap());
        assert!(!refines(&cover, &part).unwrap());
        assert!(refines(&cover, &CylinderCover::whole_space(1, 3)).unwrap());
        // window {0,1} partition against a window {0} cover
        let w2 = folner_window(2, 1).unwrap();
        let full3 = ShiftSpace::full(1, 3).unwrap();
        let lifted = cover.lift(&full3, &w2).unwrap();
        assert!(refines(&lifted, &cover).unwrap());
        assert!(refines(&cover, &lifted).is_err());
    }

    #[test]
    fn assignment_space_examples() {
        let full3 = ShiftSpace::full(1, 3).unwrap();
        let part = assignment_space(&full3, &CylinderCover::symbol_partition(1, 3), &folner_window(1, 1).unwrap()).unwrap();
        assert_eq!(part.size(), BigUint::from(1u32));
        let cover = three_shift_cover();
        let sp = assignment_space(&full3, &cover, &folner_window(1, 1).unwrap()).unwrap();
        assert_eq!(sp.choices.iter().map(|c| c.len()).collect::<Vec<_>>(), vec![1, 2, 1]);
        assert_eq!(sp.size(), BigUint::from(2u32));
    }

    #[test]
    fn assignment_space_two_points_matches_brute_force() {
        // oracle: for each word, count tuples (e0, e1) with word[j] ∈ element e_j
        let elems: [&[u8]; 2] = [&[0, 1], &[1, 2]];
        let mut brute = BigUint::from(1u32);
        for a in 0..3u8 {
            for b in 0..3u8 {
                let mut c = 0u32;
                for e0 in elems {
                    for e1 in elems {
                        if e0.contains(&a) && e1.contains(&b) {
                            c += 1;
                        }
                    }
                }
                brute *= c;
            }
        }
        let full3 = ShiftSpace::full(1, 3).unwrap();
        let sp = assignment_space(&full3, &three_shift_cover(), &folner_window(2, 1).unwrap()).unwrap();
        assert_eq!(sp.atoms.len(), 9);
        assert_eq!(sp.size(), brute);
        assert_eq!(brute, BigUint::from(64u32));
    }

    #[test]
    fn partition_join_stays_disjoint_and_translation_preserves_shape() {
        let gm = ShiftSpace::golden_mean();
        let w = LatticeWindow::from_offsets(&[0, 1]).unwrap();
        let part = CylinderCover::new(
            w,
            2,
            vec![vec![vec![0, 0]], vec![vec![0, 1]], vec![vec![1, 0]]],
        )
        .unwrap();
        assert!(part.is_partition());
        let s = LatticeWindow::from_offsets(&[0, 2, 3]).unwrap();
        let j = join_materialize(&gm, &part, &s).unwrap();
        let mut seen = vec![false; j.universe.len()];
        for (_, members) in &j.covered_sets {
            for &m in members {
                assert!(!seen[m]);
                seen[m] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
        let jt = join_materialize(&gm, &part, &s.translate([5, 0])).unwrap();
        let sizes = |j: &JoinUniverse| {
            let mut v: Vec<usize> = j.covered_sets.iter().map(|(_, m)| m.len()).collect();
            v.sort();
            v
        };
        assert_eq!(j.universe.len(), jt.universe.len());
        assert_eq!(sizes(&j), sizes(&jt));
    }

    #[test]
    fn refined_cover_cells_sit_inside_coarse_cells() {
        let full3 = ShiftSpace::full(1, 3).unwrap();
        let fine = CylinderCover::symbol_partition(1, 3);
        let coarse = three_shift_cover();
        let s = LatticeWindow::from_offsets(&[0, 1, 3]).unwrap();
        let jf = join_materialize(&full3, &fine, &s).unwrap();
        let jc = join_materialize(&full3, &coarse, &s).unwrap();
        for (_, fm) in &jf.covered_sets {
            assert!(jc
                .covered_sets
                .iter()
                .any(|(_, cm)| fm.iter().all(|x| cm.binary_search(x).is_ok())));
        }
    }

    #[test]
    fn whole_space_detection_and_join() {
        let full3 = ShiftSpace::full(1, 3).unwrap();
        assert!(CylinderCover::whole_space(1, 3).contains_whole_space(&full3).unwrap());
        assert!(!three_shift_cover().contains_whole_space(&full3).unwrap());
        let j = three_shift_cover().join(&CylinderCover::symbol_partition(1, 3)).unwrap();
        assert!(j.is_partition());
        assert_eq!(j.len(), 3);
    }
}
