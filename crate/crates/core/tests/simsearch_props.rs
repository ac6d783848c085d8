use proptest::prelude::*;
use socialtyper::embedstore::EmbeddingSet;
use socialtyper::simsearch::{cosine, rerank, topk, weighted_topk};

fn set(n: std::ops::Range<usize>) -> impl Strategy<Value = EmbeddingSet> {
    (2usize..6, n).prop_flat_map(|(dim, n)| {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), n).prop_map(move |rows| {
            EmbeddingSet::from_pairs(dim, rows.into_iter().enumerate().map(|(i, v)| (format!("e{i:03}"), v))).unwrap()
        })
    })
}

/// Two spaces over the same ids.
fn pair() -> impl Strategy<Value = (EmbeddingSet, EmbeddingSet)> {
    (2usize..60).prop_flat_map(|n| (set(n..n + 1), set(n..n + 1)))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cosine_is_symmetric_and_bounded(
        u in prop::collection::vec(-10.0f64..10.0, 4),
        v in prop::collection::vec(-10.0f64..10.0, 4),
    ) {
        prop_assume!(u.iter().any(|x| *x != 0.0) && v.iter().any(|x| *x != 0.0));
        let (a, b) = (cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
        prop_assert_eq!(a, b);
        prop_assert!((-1.0..=1.0).contains(&a));
        prop_assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn topk_is_sorted_and_excludes_query(s in set(2..80), q in 0usize..80, k in 1usize..90) {
        let query = format!("e{:03}", q % s.len());
        prop_assume!(s.get(&query).unwrap().iter().any(|x| *x != 0.0));
        let list = topk(&query, &s, k).unwrap();
        prop_assert_eq!(list.len(), k.min(s.len() - 1));
        prop_assert!(list.ids().all(|id| id != query));
        for w in list.entries.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].entity_id < w[1].entity_id));
        }
    }

    #[test]
    fn smaller_k_is_a_prefix(s in set(2..80), k in 1usize..40, extra in 0usize..40) {
        let small = topk("e000", &s, k).unwrap();
        let large = topk("e000", &s, k + extra).unwrap();
        prop_assert_eq!(&large.entries[..small.len()], &small.entries[..]);
    }

    #[test]
    fn rerank_stays_in_the_first_stage_pool((a, b) in pair(), k in 1usize..30) {
        let pool: Vec<String> = topk("e001", &a, k).unwrap().ids().map(String::from).collect();
        let r = rerank("e001", &a, &b, k).unwrap();
        prop_assert_eq!(r.candidates, pool.len());
        prop_assert_eq!(r.list.len() + r.missing_in_second, pool.len());
        prop_assert!(r.list.ids().all(|id| pool.iter().any(|p| p == id)));
        for w in r.list.entries.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn rerank_with_full_pool_equals_second_space_ranking((a, b) in pair()) {
        let n = a.len();
        let r = rerank("e000", &a, &b, n).unwrap();
        let direct = topk("e000", &b, n).unwrap();
        prop_assert_eq!(r.list.entries, direct.entries);
    }

    #[test]
    fn weighted_extremes_reduce_to_single_spaces((a, b) in pair(), k in 1usize..20) {
        let only_first = weighted_topk("e000", &a, &b, 1.0, k).unwrap();
        let only_second = weighted_topk("e000", &a, &b, 0.0, k).unwrap();
        let ids = |l: &socialtyper::simsearch::RankedList| l.ids().map(String::from).collect::<Vec<_>>();
        prop_assert_eq!(ids(&only_first), ids(&topk("e000", &a, k).unwrap()));
        prop_assert_eq!(ids(&only_second), ids(&topk("e000", &b, k).unwrap()));
    }
}
