//! Cosine similarity search over embedding sets.
//!
//! [`topk`] is an exhaustive scan. [`rerank`] retrieves a candidate pool in one
//! space and reorders it by similarity in a second space. Ties are broken by
//! ascending entity id, so results do not depend on how scoring is scheduled.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::embedstore::EmbeddingSet;
use crate::{Error, Result};

/// Default candidate pool size for reranking.
pub const DEFAULT_K: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked {
    pub entity_id: String,
    pub score: f64,
}

/// Answers to one query, best first. The query itself never appears.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<Ranked>,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|r| r.entity_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            id: "vector".into(),
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn query_vector<'a>(set: &'a EmbeddingSet, query_id: &str) -> Result<&'a [f64]> {
    let q = set.get(query_id).ok_or_else(|| Error::UnknownEntity(query_id.to_string()))?;
    if norm(q) == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(q)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    Ok(())
}

/// Best-first order: descending score, then ascending id.
fn rank_order(set: &EmbeddingSet) -> impl Fn(&(usize, f64), &(usize, f64)) -> Ordering + '_ {
    move |a, b| b.1.total_cmp(&a.1).then_with(|| set.ids()[a.0].cmp(&set.ids()[b.0]))
}

fn select(set: &EmbeddingSet, mut scored: Vec<(usize, f64)>, k: usize) -> Vec<Ranked> {
    let order = rank_order(set);
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, &order);
        scored.truncate(k);
    }
    scored.sort_by(&order);
    scored
        .into_iter()
        .map(|(i, score)| Ranked {
            entity_id: set.ids()[i].clone(),
            score,
        })
        .collect()
}

/// Cosine of `query` against every entity except `skip`. Zero vectors are skipped.
fn score_all(set: &EmbeddingSet, query: &[f64], skip: Option<usize>) -> Vec<(usize, f64)> {
    let qn = norm(query);
    (0..set.len())
        .into_par_iter()
        .filter(|&i| Some(i) != skip)
        .filter_map(|i| {
            let v = set.row(i);
            let n = norm(v);
            (n > 0.0).then(|| (i, (dot(query, v) / (qn * n)).clamp(-1.0, 1.0)))
        })
        .collect()
}

/// The `k` entities most cosine-similar to `query_id` (all of them if fewer remain).
pub fn topk(query_id: &str, set: &EmbeddingSet, k: usize) -> Result<RankedList> {
    check_k(k)?;
    let query = query_vector(set, query_id)?;
    let scored = score_all(set, query, set.position(query_id));
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries: select(set, scored, k),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reranked {
    pub list: RankedList,
    /// Size of the first-stage pool.
    pub candidates: usize,
    /// First-stage candidates absent from (or zero in) the second space.
    pub missing_in_second: usize,
}

impl Reranked {
    /// True when no first-stage candidate could be scored in the second space.
    pub fn overlap_empty(&self) -> bool {
        self.list.is_empty()
    }
}

/// Retrieves the top `k` in `first`, keeps those present in `second`, and
/// orders them by cosine in `second`. Scores are second-space cosines.
pub fn rerank(query_id: &str, first: &EmbeddingSet, second: &EmbeddingSet, k: usize) -> Result<Reranked> {
    let pool = topk(query_id, first, k)?;
    let query = query_vector(second, query_id)?;
    let qn = norm(query);
    let scored: Vec<(usize, f64)> = pool
        .entries
        .iter()
        .filter_map(|r| {
            let i = second.position(&r.entity_id)?;
            let n = norm(second.row(i));
            (n > 0.0).then(|| (i, (dot(query, second.row(i)) / (qn * n)).clamp(-1.0, 1.0)))
        })
        .collect();
    let kept = scored.len();
    let entries = select(second, scored, kept.max(1));
    if entries.is_empty() {
        log::warn!("{query_id}: none of the {} candidates exist in the second space", pool.len());
    }
    Ok(Reranked {
        candidates: pool.len(),
        missing_in_second: pool.len() - kept,
        list: RankedList {
            query_id: query_id.to_string(),
            entries,
        },
    })
}

/// Ranks by cosine over the concatenation of the query's vectors in each part.
/// Only entities present in every part are considered.
pub fn concat_topk(query_id: &str, parts: &[&EmbeddingSet], k: usize) -> Result<RankedList> {
    let named: Vec<(String, &EmbeddingSet)> = parts.iter().enumerate().map(|(i, s)| (i.to_string(), *s)).collect();
    let (fused, _) = crate::embedstore::fuse(&named)?;
    topk(query_id, &fused, k)
}

/// Ranks by `weight * cos_first + (1 - weight) * cos_second` over entities present in both sets.
pub fn weighted_topk(
    query_id: &str,
    first: &EmbeddingSet,
    second: &EmbeddingSet,
    weight: f64,
    k: usize,
) -> Result<RankedList> {
    check_k(k)?;
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::InvalidConfig("weight must lie in [0, 1]".into()));
    }
    let q1 = query_vector(first, query_id)?;
    let q2 = query_vector(second, query_id)?;
    let s1 = score_all(first, q1, first.position(query_id));
    let s2: std::collections::HashMap<usize, f64> = score_all(second, q2, second.position(query_id)).into_iter().collect();
    let scored: Vec<(usize, f64)> = s1
        .into_iter()
        .filter_map(|(i, a)| {
            let j = second.position(&first.ids()[i])?;
            s2.get(&j).map(|b| (i, weight * a + (1.0 - weight) * b))
        })
        .collect();
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries: select(first, scored, k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &[f64])]) -> EmbeddingSet {
        EmbeddingSet::from_pairs(pairs[0].1.len(), pairs.iter().map(|(id, v)| (*id, v.to_vec()))).unwrap()
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroVector)));
        assert!(cosine(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn topk_hand_fixture() {
        let s = set(&[
            ("q", &[1.0, 0.0]),
            ("a", &[1.0, 1.0]),
            ("b", &[0.0, 1.0]),
            ("c", &[2.0, 0.0]),
        ]);
        let r = topk("q", &s, 10).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["c", "a", "b"]);
        assert_eq!(r.entries[0].score, 1.0);
        let r = topk("q", &s, 1).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["c"]);
        assert!(matches!(topk("zz", &s, 1), Err(Error::UnknownEntity(_))));
        assert!(topk("q", &s, 0).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let s = set(&[("q", &[1.0, 0.0]), ("z", &[1.0, 1.0]), ("m", &[1.0, 1.0]), ("a", &[1.0, -1.0])]);
        let r = topk("q", &s, 3).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["a", "m", "z"]);
        let r = topk("q", &s, 2).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["a", "m"]);
    }

    #[test]
    fn rerank_reorders_pool() {
        let first = set(&[
            ("q", &[1.0, 0.0]),
            ("a", &[0.9, 0.1]),
            ("b", &[0.8, 0.2]),
            ("c", &[0.7, 0.3]),
            ("d", &[0.0, 1.0]),
        ]);
        let second = set(&[
            ("q", &[0.0, 1.0]),
            ("a", &[0.5, 0.5]),
            ("b", &[1.0, 0.1]),
            ("c", &[0.0, 1.0]),
            ("d", &[0.0, 1.0]),
        ]);
        let out = rerank("q", &first, &second, 3).unwrap();
        assert_eq!(out.list.ids().collect::<Vec<_>>(), ["c", "a", "b"]);
        assert_eq!(out.candidates, 3);
        let one = rerank("q", &first, &second, 1).unwrap();
        assert_eq!(one.list.ids().collect::<Vec<_>>(), ["a"]);
        let same = rerank("q", &first, &first, 3).unwrap();
        assert_eq!(same.list, topk("q", &first, 3).unwrap());
    }

    #[test]
    fn rerank_missing_query_and_empty_overlap() {
        let first = set(&[("q", &[1.0, 0.0]), ("a", &[1.0, 0.0])]);
        let second = set(&[("q", &[1.0, 0.0]), ("x", &[1.0, 0.0])]);
        let out = rerank("q", &first, &second, 5).unwrap();
        assert!(out.overlap_empty());
        assert_eq!(out.missing_in_second, 1);
        let no_q = set(&[("x", &[1.0, 0.0])]);
        assert!(rerank("q", &first, &no_q, 5).is_err());
        assert!(rerank("q", &no_q, &first, 5).is_err());
    }

    #[test]
    fn comparison_variants() {
        let first = set(&[("q", &[1.0, 0.0]), ("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let second = set(&[("q", &[1.0, 0.0]), ("a", &[0.0, 1.0]), ("b", &[1.0, 0.0])]);
        let w = weighted_topk("q", &first, &second, 1.0, 5).unwrap();
        assert_eq!(w.ids().collect::<Vec<_>>(), ["a", "b"]);
        let w = weighted_topk("q", &first, &second, 0.0, 5).unwrap();
        assert_eq!(w.ids().collect::<Vec<_>>(), ["b", "a"]);
        let c = concat_topk("q", &[&first, &second], 5).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c.entries[0].score - 0.5).abs() < 1e-12);
    }

    #[test]
    fn parallel_and_serial_agree() {
        let pairs: Vec<(String, Vec<f64>)> = (0..500)
            .map(|i| (format!("e{i}"), vec![(i % 7) as f64 - 3.0, (i % 5) as f64, 1.0]))
            .collect();
        let s = EmbeddingSet::from_pairs(3, pairs).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| topk("e1", &s, 40).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
