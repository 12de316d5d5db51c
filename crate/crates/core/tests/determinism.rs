use intricacy_core::*;
use proptest::prelude::*;

fn engine(shift: ShiftSpace, mode: SubsetMode, execution: Execution) -> Engine {
    let options = EngineOptions { execution, ..EngineOptions::default() };
    Engine::new(shift, CoefficientSystem::Neural, mode, options).unwrap()
}

fn same_series(a: &TruncationSeries, b: &TruncationSeries) {
    assert_eq!(a.records.len(), b.records.len());
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.value.to_bits(), y.value.to_bits(), "n={}", x.n);
        assert_eq!(x.stderr.to_bits(), y.stderr.to_bits());
        assert_eq!(x.certified, y.certified);
    }
}

#[test]
fn execution_mode_does_not_change_bits() {
    let cover = CylinderCover::symbol_partition(1, 2);
    let cond = Conditioning::new(SlidingBlockCode::xor(), vec![0, 2]).unwrap();
    let mu = ShiftMeasure::golden_mean_chain(0.35).unwrap();
    for mode in [SubsetMode::Exact, SubsetMode::MonteCarlo { samples: 300, seed: 5 }] {
        let seq = engine(ShiftSpace::golden_mean(), mode, Execution::Sequential);
        let par = engine(ShiftSpace::golden_mean(), mode, Execution::Parallel);
        let ns: Vec<usize> = (1..=7).collect();
        same_series(&seq.asc_top(&cover, &ns, Some(&cond)).unwrap(), &par.asc_top(&cover, &ns, Some(&cond)).unwrap());
        same_series(&seq.int_top(&cover, &ns, None).unwrap(), &par.int_top(&cover, &ns, None).unwrap());
        same_series(&seq.asc_mu(&mu, &cover, &ns, Some(&cond)).unwrap(), &par.asc_mu(&mu, &cover, &ns, Some(&cond)).unwrap());
    }
}

#[test]
fn monte_carlo_depends_only_on_the_seed() {
    let cover = CylinderCover::symbol_partition(1, 2);
    let run = |seed| {
        engine(ShiftSpace::full(1, 2).unwrap(), SubsetMode::MonteCarlo { samples: 200, seed }, Execution::Parallel)
            .asc_top(&cover, &[6, 10], None)
            .unwrap()
    };
    same_series(&run(3), &run(3));
    assert_ne!(run(3).records[1].value, run(4).records[1].value);
}

fn transition_rows() -> impl Strategy<Value = Vec<Vec<u8>>> {
    (2usize..=3)
        .prop_flat_map(|k| prop::collection::vec(prop::collection::vec(0u8..=1, k), k))
        .prop_filter("every symbol needs a successor and a predecessor", |rows| {
            let k = rows.len();
            (0..k).all(|i| rows[i].iter().any(|&x| x == 1) && (0..k).any(|j| rows[j][i] == 1))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sequential_and_parallel_agree_on_random_sfts(rows in transition_rows()) {
        let shift = ShiftSpace::one_step(&rows).unwrap();
        let cover = CylinderCover::symbol_partition(1, shift.alphabet());
        let ns: Vec<usize> = (1..=6).collect();
        let a = engine(shift.clone(), SubsetMode::Exact, Execution::Sequential).asc_top(&cover, &ns, None).unwrap();
        let b = engine(shift, SubsetMode::Exact, Execution::Parallel).asc_top(&cover, &ns, None).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            prop_assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }

    #[test]
    fn int_identity_on_random_sfts(rows in transition_rows()) {
        let shift = ShiftSpace::one_step(&rows).unwrap();
        let cover = CylinderCover::symbol_partition(1, shift.alphabet());
        let ns: Vec<usize> = (1..=6).collect();
        let e = engine(shift, SubsetMode::Exact, Execution::Parallel);
        let asc = e.asc_top(&cover, &ns, None).unwrap();
        let int = e.int_top(&cover, &ns, None).unwrap();
        let h = e.h_cover(&cover, &ns, None).unwrap();
        for i in 0..ns.len() {
            let lhs = int.records[i].value;
            let rhs = 2.0 * asc.records[i].value - h.records[i].value;
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }
}
