//! Minimal subcover cardinalities `N(U_S)` and `N(U_S | Y)`.
//!
//! Non-partition covers reduce to exact set cover over the join universe,
//! solved by branch and bound from a greedy incumbent. Branching always takes
//! the lowest-index uncovered element and tries the sets containing it in
//! decreasing order of newly covered elements, ties by set index, so results
//! are reproducible bit for bit.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use serde::Serialize;

use crate::cover_algebra::{CylinderCover, JoinAtoms};
use crate::error::{Error, Result};
use crate::group_model::LatticeWindow;
use crate::symbolic_space::{count_words, language, ShiftSpace, SlidingBlockCode};

/// Default node budget per set-cover instance.
pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetCoverInstance {
    universe: usize,
    sets: Vec<Vec<u32>>,
    budget: u64,
}

impl SetCoverInstance {
    pub fn new(universe: usize, sets: Vec<Vec<u32>>, budget: u64) -> Result<Self> {
        let mut covered = vec![false; universe];
        let mut clean = Vec::with_capacity(sets.len());
        for (i, mut s) in sets.into_iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidParameter(format!("set {i} is empty")));
            }
            s.sort_unstable();
            s.dedup();
            if let Some(&bad) = s.iter().find(|&&e| e as usize >= universe) {
                return Err(Error::InvalidParameter(format!(
                    "set {i} contains {bad} outside a universe of {universe}"
                )));
            }
            for &e in &s {
                covered[e as usize] = true;
            }
            clean.push(s);
        }
        if let Some(e) = covered.iter().position(|&c| !c) {
            return Err(Error::InvalidParameter(format!("element {e} is not coverable")));
        }
        Ok(Self {
            universe,
            sets: clean,
            budget,
        })
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn sets(&self) -> &[Vec<u32>] {
        &self.sets
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Drops sets contained in another set (the lower index survives among
    /// equal sets). The minimum cover size is unchanged.
    pub fn prune_dominated(&self) -> Self {
        let mut by_elem: Vec<Vec<u32>> = vec![Vec::new(); self.universe];
        for (i, s) in self.sets.iter().enumerate() {
            for &e in s {
                by_elem[e as usize].push(i as u32);
            }
        }
        let keep: Vec<bool> = (0..self.sets.len())
            .map(|i| {
                let a = &self.sets[i];
                !by_elem[a[0] as usize].iter().any(|&j| {
                    let j = j as usize;
                    if j == i {
                        return false;
                    }
                    let b = &self.sets[j];
                    if b.len() < a.len() || (b.len() == a.len() && j > i) {
                        return false;
                    }
                    is_sorted_subset(a, b)
                })
            })
            .collect();
        Self {
            universe: self.universe,
            sets: self
                .sets
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(s, _)| s.clone())
                .collect(),
            budget: self.budget,
        }
    }
}

fn is_sorted_subset(a: &[u32], b: &[u32]) -> bool {
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j == b.len() || b[j] != x {
            return false;
        }
        j += 1;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountResult {
    pub value: u128,
    /// The value is the exact minimum; otherwise it is a greedy upper bound.
    pub certified: bool,
    pub nodes: u64,
}

impl CountResult {
    pub fn exact(value: u128) -> Self {
        Self {
            value,
            certified: true,
            nodes: 0,
        }
    }

    pub fn ln(&self) -> f64 {
        (self.value as f64).ln()
    }
}

struct SearchState<'a> {
    sets: &'a [Vec<u32>],
    cover_count: Vec<u32>,
    uncovered: usize,
}

impl SearchState<'_> {
    fn apply(&mut self, s: usize) {
        for &e in &self.sets[s] {
            let c = &mut self.cover_count[e as usize];
            if *c == 0 {
                self.uncovered -= 1;
            }
            *c += 1;
        }
    }

    fn undo(&mut self, s: usize) {
        for &e in &self.sets[s] {
            let c = &mut self.cover_count[e as usize];
            *c -= 1;
            if *c == 0 {
                self.uncovered += 1;
            }
        }
    }

    fn gain(&self, s: usize) -> usize {
        self.sets[s]
            .iter()
            .filter(|&&e| self.cover_count[e as usize] == 0)
            .count()
    }
}

fn greedy_cover(instance: &SetCoverInstance) -> Vec<usize> {
    let mut state = SearchState {
        sets: &instance.sets,
        cover_count: vec![0; instance.universe],
        uncovered: instance.universe,
    };
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = instance
        .sets
        .iter()
        .enumerate()
        .map(|(i, s)| (s.len(), Reverse(i)))
        .collect();
    let mut chosen = Vec::new();
    while state.uncovered > 0 {
        let (stale, Reverse(i)) = heap.pop().expect("coverable instance");
        let g = state.gain(i);
        if g == 0 {
            continue;
        }
        if g == stale {
            state.apply(i);
            chosen.push(i);
        } else {
            heap.push((g, Reverse(i)));
        }
    }
    chosen
}

struct Frame {
    candidates: Vec<usize>,
    next: usize,
    applied: bool,
    element: usize,
}

/// Exact minimum set cover within the node budget.
pub fn min_set_cover(instance: &SetCoverInstance) -> CountResult {
    if instance.universe == 0 {
        return CountResult::exact(0);
    }
    let greedy = greedy_cover(instance);
    let mut best = greedy.len();
    if best <= 1 {
        return CountResult::exact(best as u128);
    }
    let max_size = instance.sets.iter().map(|s| s.len()).max().unwrap_or(1);
    let mut by_elem: Vec<Vec<u32>> = vec![Vec::new(); instance.universe];
    for (i, s) in instance.sets.iter().enumerate() {
        for &e in s {
            by_elem[e as usize].push(i as u32);
        }
    }
    let mut state = SearchState {
        sets: &instance.sets,
        cover_count: vec![0; instance.universe],
        uncovered: instance.universe,
    };
    let mut depth = 0usize;
    let mut nodes = 1u64;
    let mut aborted = false;

    let branch = |state: &SearchState, from: usize| -> Frame {
        let mut e = from;
        while state.cover_count[e] != 0 {
            e += 1;
        }
        let mut cands: Vec<(usize, usize)> = by_elem[e]
            .iter()
            .map(|&s| (state.gain(s as usize), s as usize))
            .collect();
        cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Frame {
            candidates: cands.into_iter().map(|(_, s)| s).collect(),
            next: 0,
            applied: false,
            element: e,
        }
    };

    let mut stack = vec![branch(&state, 0)];
    while let Some(top) = stack.last_mut() {
        if top.applied {
            state.undo(top.candidates[top.next - 1]);
            top.applied = false;
            depth -= 1;
        }
        if aborted || top.next >= top.candidates.len() || depth + 1 >= best {
            stack.pop();
            continue;
        }
        let s = top.candidates[top.next];
        top.next += 1;
        top.applied = true;
        let from = top.element;
        state.apply(s);
        depth += 1;
        nodes += 1;
        if nodes > instance.budget {
            aborted = true;
            continue;
        }
        if state.uncovered == 0 {
            best = best.min(depth);
            continue;
        }
        if depth + state.uncovered.div_ceil(max_size) >= best {
            continue;
        }
        let child = branch(&state, from);
        stack.push(child);
    }
    CountResult {
        value: best as u128,
        certified: !aborted,
        nodes,
    }
}

fn check_cover_shift(shift: &ShiftSpace, cover: &CylinderCover) -> Result<()> {
    if cover.alphabet() != shift.alphabet() {
        return Err(Error::InvalidCover(format!(
            "cover alphabet {} differs from shift alphabet {}",
            cover.alphabet(),
            shift.alphabet()
        )));
    }
    if cover.window().dimension() != shift.dimension() {
        return Err(Error::InvalidCover("cover window dimension differs from shift".into()));
    }
    Ok(())
}

/// Minimum cover of the given atoms by the join cells of `atoms`.
fn count_atoms(atoms: &JoinAtoms, members: &[usize], partition: bool, budget: u64) -> Result<CountResult> {
    if partition {
        let keys: HashSet<u64> = members.iter().map(|&a| atoms.first_key(a)).collect();
        return Ok(CountResult::exact(keys.len() as u128));
    }
    let mut cells: HashMap<u64, Vec<u32>> = HashMap::new();
    for (local, &a) in members.iter().enumerate() {
        atoms.for_each_cell(a, |key| cells.entry(key).or_default().push(local as u32));
    }
    let mut sorted: Vec<(u64, Vec<u32>)> = cells.into_iter().collect();
    sorted.sort_unstable_by_key(|(k, _)| *k);
    let instance = SetCoverInstance::new(
        members.len(),
        sorted.into_iter().map(|(_, v)| v).collect(),
        budget,
    )?;
    Ok(min_set_cover(&instance.prune_dominated()))
}

/// `N(U_S)`: the minimal number of join cells covering the language on `S ⊕ W`.
pub fn n_join(
    shift: &ShiftSpace,
    cover: &CylinderCover,
    s: &LatticeWindow,
    budget: u64,
) -> Result<CountResult> {
    check_cover_shift(shift, cover)?;
    if s.is_empty() {
        return Ok(CountResult::exact(1));
    }
    if cover.is_symbol_partition() && shift.dimension() == 1 {
        let words = count_words(shift, &s.minkowski_sum(cover.window()))?;
        let digits = words.to_u64_digits();
        if digits.len() > 2 {
            return Err(Error::TooLarge {
                what: "subcover count",
                size: u128::MAX,
                limit: u128::MAX,
            });
        }
        let value = digits
            .iter()
            .rev()
            .fold(0u128, |acc, &d| (acc << 64) | d as u128);
        return Ok(CountResult::exact(value));
    }
    let atoms = JoinAtoms::build(shift, cover, s)?;
    let members: Vec<usize> = (0..atoms.len()).collect();
    count_atoms(&atoms, &members, cover.is_partition(), budget)
}

/// Atom indices of the source language on `S ⊕ W` grouped by factor pattern
/// on `v`, in lexicographic order of the factor pattern.
pub(crate) struct FiberGroups {
    pub atoms: JoinAtoms,
    /// Language on `(S ⊕ W) ∪ (V ⊕ C)`; `atom_of` and `class_of` are indexed by it.
    pub ambient: crate::symbolic_space::Language,
    pub atom_of: Vec<usize>,
    pub class_of: Vec<usize>,
    pub classes: usize,
}

pub(crate) fn fiber_groups(
    shift: &ShiftSpace,
    cover: &CylinderCover,
    s: &LatticeWindow,
    code: &SlidingBlockCode,
    v: &LatticeWindow,
) -> Result<FiberGroups> {
    if shift.dimension() != 1 {
        return Err(Error::Unsupported("conditioning on factors is one-dimensional".into()));
    }
    if code.source_alphabet() != shift.alphabet() {
        return Err(Error::InvalidCode("code alphabet differs from shift alphabet".into()));
    }
    let atom_window = s.minkowski_sum(cover.window());
    let ambient_window = atom_window.union(&v.minkowski_sum(&code.window()));
    let ambient = language(shift, &ambient_window)?;
    let atom_lang = language(shift, &atom_window)?;
    let proj: Vec<usize> = atom_window
        .points()
        .iter()
        .map(|&p| ambient_window.index_of(p).expect("inside ambient"))
        .collect();
    let idx = code.output_indices(&ambient_window, v)?;
    let mut class_ids: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    let mut raw_class = Vec::with_capacity(ambient.len());
    let mut atom_of = Vec::with_capacity(ambient.len());
    let mut buf = Vec::new();
    let mut restr = Vec::with_capacity(proj.len());
    for p in ambient.iter() {
        code.image_with(p, &idx, &mut buf);
        let next = class_ids.len();
        let id = *class_ids.entry(buf.clone()).or_insert(next);
        raw_class.push(id);
        restr.clear();
        restr.extend(proj.iter().map(|&i| p[i]));
        atom_of.push(atom_lang.index_of(&restr).expect("projection of an admissible pattern"));
    }
    // renumber classes in lexicographic order of the factor pattern
    let mut rank = vec![0usize; class_ids.len()];
    for (r, (_, &id)) in class_ids.iter().enumerate() {
        rank[id] = r;
    }
    let class_of = raw_class.into_iter().map(|c| rank[c]).collect();
    let atoms = JoinAtoms::with_atoms(cover, s, atom_lang)?;
    Ok(FiberGroups {
        atoms,
        ambient,
        atom_of,
        class_of,
        classes: class_ids.len(),
    })
}

/// `N(U_S | Y)` approximated on a finite conditioning window `v ⊇ S ⊕ W`:
/// the maximum over factor patterns `y` on `v` of the minimal subcover of the
/// fiber over `y`.
pub fn n_conditional(
    shift: &ShiftSpace,
    cover: &CylinderCover,
    s: &LatticeWindow,
    code: &SlidingBlockCode,
    v: &LatticeWindow,
    budget: u64,
) -> Result<CountResult> {
    check_cover_shift(shift, cover)?;
    if !s.minkowski_sum(cover.window()).is_subset_of(v) {
        return Err(Error::InvalidParameter(
            "conditioning window must contain S ⊕ W".into(),
        ));
    }
    if s.is_empty() {
        return Ok(CountResult::exact(1));
    }
    let groups = fiber_groups(shift, cover, s, code, v)?;
    let mut fibers: Vec<Vec<usize>> = vec![Vec::new(); groups.classes];
    for (i, &c) in groups.class_of.iter().enumerate() {
        fibers[c].push(groups.atom_of[i]);
    }
    let mut result = CountResult {
        value: 0,
        certified: true,
        nodes: 0,
    };
    for mut members in fibers {
        members.sort_unstable();
        members.dedup();
        let r = count_atoms(&groups.atoms, &members, cover.is_partition(), budget)?;
        result.value = result.value.max(r.value);
        result.certified &= r.certified;
        result.nodes += r.nodes;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group_model::folner_window;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_cover(universe: usize, sets: &[Vec<u32>]) -> usize {
        let m = sets.len();
        let full: u64 = if universe == 64 { u64::MAX } else { (1 << universe) - 1 };
        let masks: Vec<u64> = sets
            .iter()
            .map(|s| s.iter().fold(0u64, |acc, &e| acc | 1 << e))
            .collect();
        (0u64..1 << m)
            .filter(|pick| {
                (0..m)
                    .filter(|i| pick >> i & 1 == 1)
                    .fold(0u64, |acc, i| acc | masks[i])
                    == full
            })
            .map(|pick| pick.count_ones() as usize)
            .min()
            .unwrap()
    }

    #[test]
    fn small_examples() {
        let inst = SetCoverInstance::new(3, vec![vec![0, 1], vec![1, 2], vec![2]], 1000).unwrap();
        let r = min_set_cover(&inst);
        assert_eq!((r.value, r.certified), (2, true));

        let inst = SetCoverInstance::new(5, vec![vec![0, 1], vec![2], vec![3, 4]], 1000).unwrap();
        assert_eq!(min_set_cover(&inst).value, 3);

        let mut pairs = Vec::new();
        for a in 0..6u32 {
            for b in a + 1..6 {
                pairs.push(vec![a, b]);
            }
        }
        assert_eq!(brute_force_cover(6, &pairs), 3);
        let inst = SetCoverInstance::new(6, pairs, 1000).unwrap();
        assert_eq!(min_set_cover(&inst).value, 3);
    }

    #[test]
    fn instance_validation() {
        assert!(SetCoverInstance::new(3, vec![vec![0, 1]], 10).is_err());
        assert!(SetCoverInstance::new(2, vec![vec![0, 1], vec![]], 10).is_err());
        assert!(SetCoverInstance::new(2, vec![vec![0, 2]], 10).is_err());
    }

    #[test]
    fn exhausted_budget_is_uncertified_upper_bound() {
        // greedy picks the big middle set and needs 3; optimum is 2
        let sets = vec![
            vec![0, 1, 2, 3, 4, 5, 6],
            vec![7, 8, 9, 10, 11, 12, 13],
            vec![3, 4, 5, 6, 10, 11, 12, 13],
            vec![0, 1, 2],
            vec![7, 8, 9],
        ];
        let inst = SetCoverInstance::new(14, sets.clone(), 1).unwrap();
        let r = min_set_cover(&inst);
        assert!(!r.certified);
        assert!(r.value >= 2);
        let r = min_set_cover(&SetCoverInstance::new(14, sets, 1000).unwrap());
        assert_eq!((r.value, r.certified), (2, true));
    }

    #[test]
    fn solver_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..200 {
            let universe = rng.gen_range(1..=12);
            let nsets = rng.gen_range(1..=12);
            let mut sets: Vec<Vec<u32>> = (0..nsets)
                .map(|_| {
                    let mut s: Vec<u32> = (0..universe as u32).filter(|_| rng.gen_bool(0.3)).collect();
                    if s.is_empty() {
                        s.push(rng.gen_range(0..universe as u32));
                    }
                    s
                })
                .collect();
            for e in 0..universe as u32 {
                if !sets.iter().any(|s| s.contains(&e)) {
                    let i = rng.gen_range(0..sets.len());
                    sets[i].push(e);
                }
            }
            let inst = SetCoverInstance::new(universe, sets.clone(), DEFAULT_NODE_BUDGET).unwrap();
            let r = min_set_cover(&inst);
            assert!(r.certified);
            assert_eq!(r.value as usize, brute_force_cover(universe, &sets));
            assert_eq!(min_set_cover(&inst.prune_dominated()).value, r.value);
        }
    }

    fn three_shift_cover() -> CylinderCover {
        let w = LatticeWindow::from_offsets(&[0]).unwrap();
        CylinderCover::new(w, 3, vec![vec![vec![0], vec![1]], vec![vec![1], vec![2]]]).unwrap()
    }

    #[test]
    fn n_join_examples() {
        let full2 = ShiftSpace::full(1, 2).unwrap();
        let part = CylinderCover::symbol_partition(1, 2);
        let w3 = folner_window(3, 1).unwrap();
        assert_eq!(n_join(&full2, &part, &w3, 1000).unwrap().value, 8);
        let gm = ShiftSpace::golden_mean();
        assert_eq!(n_join(&gm, &part, &w3, 1000).unwrap().value, 5);
        let full3 = ShiftSpace::full(1, 3).unwrap();
        let w1 = folner_window(1, 1).unwrap();
        assert_eq!(n_join(&full3, &three_shift_cover(), &w1, 1000).unwrap().value, 2);
        assert_eq!(n_join(&full3, &CylinderCover::whole_space(1, 3), &w3, 1000).unwrap().value, 1);
        // N(U_S) = 2^|S| for the product cover on the full 3-shift
        let w4 = folner_window(4, 1).unwrap();
        assert_eq!(n_join(&full3, &three_shift_cover(), &w4, 1000).unwrap().value, 16);
    }

    #[test]
    fn symbol_partition_fast_path_agrees_with_materialization() {
        let gm = ShiftSpace::golden_mean();
        let part = CylinderCover::symbol_partition(1, 2);
        let s = LatticeWindow::from_offsets(&[0, 1, 3, 4, 7]).unwrap();
        let atoms = JoinAtoms::build(&gm, &part, &s).unwrap();
        let members: Vec<usize> = (0..atoms.len()).collect();
        let slow = count_atoms(&atoms, &members, true, 1000).unwrap();
        assert_eq!(n_join(&gm, &part, &s, 1000).unwrap().value, slow.value);
    }

    #[test]
    fn conditional_examples() {
        let full2 = ShiftSpace::full(1, 2).unwrap();
        let part = CylinderCover::symbol_partition(1, 2);
        let w2 = folner_window(2, 1).unwrap();
        let r = n_conditional(&full2, &part, &w2, &SlidingBlockCode::xor(), &w2, 1000).unwrap();
        assert_eq!(r.value, 2);

        let gm = ShiftSpace::golden_mean();
        let s = LatticeWindow::from_offsets(&[0, 2]).unwrap();
        let v = folner_window(4, 1).unwrap();
        let id = n_conditional(&gm, &part, &s, &SlidingBlockCode::identity(2), &v, 1000).unwrap();
        assert_eq!(id.value, 1);
        let c = n_conditional(&gm, &part, &s, &SlidingBlockCode::constant(2, 2), &v, 1000).unwrap();
        assert_eq!(c.value, n_join(&gm, &part, &s, 1000).unwrap().value);

        let full3 = ShiftSpace::full(1, 3).unwrap();
        let w3 = folner_window(3, 1).unwrap();
        let c = n_conditional(&full3, &three_shift_cover(), &w3, &SlidingBlockCode::constant(3, 1), &w3, 1000).unwrap();
        assert_eq!(c.value, 8);
        assert!(n_conditional(&full2, &part, &w3, &SlidingBlockCode::xor(), &w2, 1000).is_err());
    }

    #[test]
    fn conditional_counts_shrink_as_the_window_grows() {
        let gm = ShiftSpace::golden_mean();
        let part = CylinderCover::symbol_partition(1, 2);
        let code = SlidingBlockCode::xor();
        let s = folner_window(3, 1).unwrap();
        let mut last = u128::MAX;
        for m in 0..4i64 {
            let v = LatticeWindow::interval(-m, 2 + m);
            let r = n_conditional(&gm, &part, &s, &code, &v, 1000).unwrap();
            assert!(r.value <= last);
            assert!(r.value <= n_join(&gm, &part, &s, 1000).unwrap().value);
            last = r.value;
        }
    }

    proptest! {
        #[test]
        fn n_join_translation_and_submultiplicativity(
            a in proptest::collection::btree_set(0i64..5, 1..=3),
            b in proptest::collection::btree_set(0i64..5, 1..=3),
            g in -6i64..6,
        ) {
            let full3 = ShiftSpace::full(1, 3).unwrap();
            let cover = three_shift_cover();
            let sa = LatticeWindow::from_offsets(&a.iter().copied().collect::<Vec<_>>()).unwrap();
            let sb = LatticeWindow::from_offsets(&b.iter().copied().collect::<Vec<_>>()).unwrap().translate([6, 0]);
            let na = n_join(&full3, &cover, &sa, 100_000).unwrap();
            let nb = n_join(&full3, &cover, &sb, 100_000).unwrap();
            let nab = n_join(&full3, &cover, &sa.union(&sb), 100_000).unwrap();
            prop_assert!(na.certified && nb.certified && nab.certified);
            prop_assert!(nab.value <= na.value * nb.value);
            prop_assert_eq!(n_join(&full3, &cover, &sa.translate([g, 0]), 100_000).unwrap().value, na.value);
        }
    }
}
