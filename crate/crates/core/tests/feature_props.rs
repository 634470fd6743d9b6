use aae_core::features::{assemble, encode_storage, unpadded_len, Engine, EvaluationInstance, StorageConfig, PAD_VALUE};
use aae_core::graphmodel::{GraphStats, OperationKind, WorkloadProfile};
use proptest::prelude::*;

type Input = (GraphStats, WorkloadProfile, StorageConfig, StorageConfig);

fn normalised(counts: &[u32]) -> Vec<f64> {
    let total: u32 = counts.iter().sum();
    counts.iter().map(|c| f64::from(*c) / f64::from(total)).collect()
}

fn storage(n: usize) -> impl Strategy<Value = StorageConfig> {
    (any::<bool>(), prop::collection::vec(any::<bool>(), n)).prop_map(|(native, bits)| {
        StorageConfig::new(if native { Engine::NativeGraph } else { Engine::Columnar }, bits)
    })
}

fn input(props: std::ops::Range<usize>) -> impl Strategy<Value = Input> {
    (
        1u64..1_000_000,
        0u64..5_000_000,
        1u32..10,
        1u32..100,
        prop::collection::vec(1u64..10_000, props),
    )
        .prop_flat_map(|(n, e, nt, et, cards)| {
            let p = cards.len();
            let g = GraphStats::new(n, e, nt, et, cards).unwrap();
            (
                Just(g),
                prop::array::uniform19(0u32..20).prop_filter("non-empty", |c| c.iter().any(|v| *v > 0)),
                prop::collection::vec(1u32..20, p),
                storage(p),
                storage(p),
            )
        })
        .prop_map(|(g, rates, freq, a, b)| {
            let mut op_rates = [0.0; OperationKind::COUNT];
            op_rates.copy_from_slice(&normalised(&rates));
            let w = WorkloadProfile::new(op_rates, normalised(&freq), 10_000).unwrap();
            (g, w, a, b)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mask_marks_exactly_the_padding((g, w, a, b) in input(1..9), extra in 0usize..40) {
        let max_len = unpadded_len(g.num_properties()) + extra;
        let inst = assemble(&g, &w, &a, &b, max_len).unwrap();
        prop_assert_eq!(inst.len(), max_len);
        prop_assert_eq!(inst.real_len(), unpadded_len(g.num_properties()));
        for (v, m) in inst.vector.iter().zip(&inst.mask) {
            prop_assert_eq!(!*m, *v == PAD_VALUE);
        }
    }

    #[test]
    fn engine_block_is_one_hot(s in storage(5)) {
        let enc = encode_storage(&s);
        prop_assert_eq!(enc.len(), 2 + 5);
        prop_assert_eq!(enc[0] + enc[1], 1.0);
        prop_assert!(enc[..2].iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn encoding_is_injective(x in input(1..4), y in input(1..4)) {
        prop_assume!(x != y);
        let vx = assemble(&x.0, &x.1, &x.2, &x.3, 64).unwrap();
        let vy = assemble(&y.0, &y.1, &y.2, &y.3, 64).unwrap();
        prop_assert_ne!(vx.vector, vy.vector);
    }

    #[test]
    fn identical_storages_give_identical_blocks((g, w, a, _b) in input(1..9)) {
        let p = g.num_properties();
        let inst = assemble(&g, &w, &a, &a, 128).unwrap();
        let start = 6 + p + OperationKind::COUNT + p;
        let width = 2 + p;
        prop_assert_eq!(&inst.vector[start..start + width], &inst.vector[start + width..start + 2 * width]);
    }

    #[test]
    fn json_round_trip_is_exact((g, w, a, b) in input(1..9), label in any::<Option<bool>>()) {
        let mut inst = assemble(&g, &w, &a, &b, 96).unwrap();
        inst.label = label;
        let back = EvaluationInstance::from_json_line(&inst.to_json_line(), 1).unwrap();
        prop_assert_eq!(back, inst);
    }
}
