use proptest::prelude::*;
use socialtyper::embedstore::{aggregate_mean, fuse, EmbeddingSet};

fn f32_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-1e6f32..1e6f32).prop_map(f64::from), dim)
}

fn set_strategy() -> impl Strategy<Value = EmbeddingSet> {
    (1usize..8).prop_flat_map(|dim| {
        prop::collection::btree_map("[a-z]{1,6}", f32_vec(dim), 0..30)
            .prop_map(move |m| EmbeddingSet::from_pairs(dim, m).unwrap())
    })
}

fn items_strategy() -> impl Strategy<Value = Vec<(String, Vec<f64>)>> {
    (1usize..6).prop_flat_map(|dim| {
        prop::collection::vec(
            ("e[0-9]", prop::collection::vec(-100.0f64..100.0, dim)),
            1..40,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn emb1_round_trip_is_bit_exact(set in set_strategy()) {
        let bytes = set.to_emb1().unwrap();
        let back = EmbeddingSet::from_emb1(&bytes).unwrap();
        prop_assert_eq!(back.ids(), set.ids());
        for ((_, a), (_, b)) in back.iter().zip(set.iter()) {
            prop_assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        prop_assert_eq!(back.to_emb1().unwrap(), bytes);
    }

    #[test]
    fn etsv_round_trip_is_exact(set in set_strategy().prop_filter("text files need a row", |s| !s.is_empty())) {
        let back = EmbeddingSet::from_etsv(&set.to_etsv()).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn truncated_emb1_is_rejected(set in set_strategy(), cut in 1usize..64) {
        let bytes = set.to_emb1().unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(EmbeddingSet::from_emb1(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn mean_ignores_item_order(mut items in items_strategy(), seed in any::<u64>()) {
        let a = aggregate_mean(&items).unwrap();
        // rotate as a cheap permutation
        let r = (seed as usize) % items.len();
        items.rotate_left(r);
        let b = aggregate_mean(&items).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (id, v) in a.iter() {
            let w = b.get(id).unwrap();
            for (x, y) in v.iter().zip(w) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn mean_is_linear_in_scale(items in items_strategy(), s in -10.0f64..10.0) {
        let scaled: Vec<(String, Vec<f64>)> =
            items.iter().map(|(e, v)| (e.clone(), v.iter().map(|x| x * s).collect())).collect();
        let a = aggregate_mean(&items).unwrap();
        let b = aggregate_mean(&scaled).unwrap();
        for (id, v) in a.iter() {
            for (x, y) in v.iter().zip(b.get(id).unwrap()) {
                prop_assert!((x * s - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn mean_of_identical_items_is_the_item(v in prop::collection::vec(-1e3f64..1e3, 1..8), n in 1usize..10) {
        let items: Vec<(&str, Vec<f64>)> = (0..n).map(|_| ("e", v.clone())).collect();
        let m = aggregate_mean(&items).unwrap();
        for (x, y) in m.get("e").unwrap().iter().zip(&v) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn fuse_slices_recover_parts(a in set_strategy(), b in set_strategy()) {
        match fuse(&[("a", &a), ("b", &b)]) {
            Ok((fused, segs)) => {
                prop_assert_eq!(segs.total_len(), a.dim() + b.dim());
                for (id, row) in fused.iter() {
                    prop_assert_eq!(segs.slice(row, "a").unwrap(), a.get(id).unwrap());
                    prop_assert_eq!(segs.slice(row, "b").unwrap(), b.get(id).unwrap());
                }
                let shared = a.ids().iter().filter(|id| b.contains(id)).count();
                prop_assert_eq!(fused.len(), shared);
            }
            Err(_) => prop_assert!(a.ids().iter().all(|id| !b.contains(id))),
        }
    }
}
