//! Cosine kNN over the embedding store and thresholded top-N alternatives.

mod hnsw;

use std::path::Path;

pub use hnsw::{build_index, AnnIndex, IndexParams, DEFAULT_EF_CONSTRUCTION, DEFAULT_EF_SEARCH, DEFAULT_M};

use crate::delimited::CsvText;
use crate::embedding_store::EmbeddingStore;
use crate::neural::loss::cosine_from_parts;
use crate::neural::tensor::dot;
use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_TOP_N: usize = 10;

/// One ranked alternative for an anchor. For the frequently-compared
/// baseline `similarity` holds the raw co-compare count instead of a cosine.
#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub anchor_id: String,
    pub neighbor_id: String,
    pub similarity: f64,
    pub rank: usize,
}

/// Ranks `(id, score)` pairs into recommendations numbered from 1.
pub fn rank_list(anchor_id: &str, scored: impl IntoIterator<Item = (String, f64)>) -> Vec<Recommendation> {
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (neighbor_id, similarity))| Recommendation {
            anchor_id: anchor_id.to_string(),
            neighbor_id,
            similarity,
            rank: i + 1,
        })
        .collect()
}

/// Exhaustive top-`k` by cosine similarity with the same ordering and
/// arithmetic as [`AnnIndex::knn`].
pub fn exact_knn(store: &EmbeddingStore, query: &[f64], k: usize) -> Result<Vec<(String, f64)>> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if query.len() != store.dim() {
        return Err(Error::DimMismatch {
            expected: store.dim(),
            actual: query.len(),
        });
    }
    let qq = dot(query, query);
    if qq == 0.0 {
        return Err(Error::ZeroNorm(None));
    }
    let mut scored: Vec<(String, f64)> = store
        .iter()
        .map(|(id, v)| (id.to_string(), cosine_from_parts(dot(v, query), dot(v, v), qq)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Up to `n` neighbors of `anchor_id` with similarity at least `threshold`.
/// Fetches `n + 1` candidates so the anchor's own hit never costs a slot.
pub fn top_n_recommendations(
    index: &AnnIndex,
    store: &EmbeddingStore,
    anchor_id: &str,
    n: usize,
    threshold: f64,
    ef_search: usize,
) -> Result<Vec<Recommendation>> {
    let query = store
        .get(anchor_id)
        .ok_or_else(|| Error::UnknownProduct(anchor_id.to_string()))?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let k = n + 1;
    let hits = index.knn(query, k, ef_search.max(k))?;
    Ok(filter_hits(anchor_id, hits, n, threshold))
}

pub(crate) fn filter_hits(anchor_id: &str, hits: Vec<(String, f64)>, n: usize, threshold: f64) -> Vec<Recommendation> {
    rank_list(
        anchor_id,
        hits.into_iter()
            .filter(|(id, sim)| id != anchor_id && *sim >= threshold)
            .take(n),
    )
}

/// `anchor_id,neighbor_id,rank,similarity` lines with a header.
pub fn recommendations_to_csv(recs: &[Recommendation]) -> String {
    let mut w = CsvText::new(&["anchor_id", "neighbor_id", "rank", "similarity"]);
    for r in recs {
        w.row([r.anchor_id.as_str(), &r.neighbor_id, &r.rank.to_string(), &r.similarity.to_string()]);
    }
    w.finish()
}

pub fn write_recommendations(path: &Path, recs: &[Recommendation]) -> Result<()> {
    std::fs::write(path, recommendations_to_csv(recs)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::Fingerprint;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store_of(vectors: &[(&str, Vec<f64>)]) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(vectors[0].1.len(), Fingerprint::default());
        for (id, v) in vectors {
            s.insert(*id, v.clone()).unwrap();
        }
        s
    }

    fn random_store(n: usize, dim: usize, seed: u64) -> EmbeddingStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = EmbeddingStore::new(dim, Fingerprint::default());
        for i in 0..n {
            let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            s.insert(format!("p{i:05}"), v).unwrap();
        }
        s
    }

    #[test]
    fn exact_knn_hand_computed() {
        let store = store_of(&[("a", vec![1.0, 0.0]), ("b", vec![1.0, 1.0]), ("c", vec![0.0, -2.0])]);
        let got = exact_knn(&store, &[2.0, 1.0], 3).unwrap();
        // cos to a = 2/sqrt5, to b = 3/sqrt10, to c = -1/sqrt5
        let expect = [
            ("b", 3.0 / 10f64.sqrt()),
            ("a", 2.0 / 5f64.sqrt()),
            ("c", -1.0 / 5f64.sqrt()),
        ];
        assert_eq!(got.len(), 3);
        for ((id, sim), (eid, esim)) in got.iter().zip(expect) {
            assert_eq!(id, eid);
            assert!((sim - esim).abs() < 1e-15);
        }
        assert_eq!(exact_knn(&store, &[1.0, 0.0], 1).unwrap()[0], ("a".to_string(), 1.0));
        assert!(exact_knn(&store, &[0.0, 0.0], 1).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let store = store_of(&[("z", vec![1.0, 0.0]), ("m", vec![2.0, 0.0]), ("a", vec![3.0, 0.0])]);
        let ids: Vec<_> = exact_knn(&store, &[1.0, 0.0], 3).unwrap().into_iter().map(|x| x.0).collect();
        assert_eq!(ids, ["a", "m", "z"]);
        let index = build_index(&store, IndexParams::default(), 1).unwrap();
        let ids: Vec<_> = index.knn(&[1.0, 0.0], 3, 10).unwrap().into_iter().map(|x| x.0).collect();
        assert_eq!(ids, ["a", "m", "z"]);
    }

    #[test]
    fn singleton_index() {
        let store = store_of(&[("only", vec![0.5, -0.5, 2.0])]);
        let index = build_index(&store, IndexParams::default(), 3).unwrap();
        let got = index.knn(&[-1.0, 0.0, 0.1], 5, 5).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, "only");
        assert_eq!(exact_knn(&store, &[1.0, 1.0, 1.0], 4).unwrap().len(), 1);
    }

    #[test]
    fn knn_argument_checks() {
        let store = random_store(20, 4, 1);
        let index = build_index(&store, IndexParams::default(), 1).unwrap();
        assert!(matches!(index.knn(&[0.0; 4], 1, 10), Err(Error::ZeroNorm(None))));
        assert!(index.knn(&[1.0; 3], 1, 10).is_err());
        assert!(index.knn(&[1.0; 4], 5, 4).is_err());
        assert!(index.knn(&[1.0; 4], 0, 4).is_err());
        assert!(build_index(&store, IndexParams { m: 1, ..Default::default() }, 1).is_err());
    }

    #[test]
    fn identity_query_ranks_itself_first() {
        let store = random_store(300, 8, 2);
        let index = build_index(&store, IndexParams::default(), 9).unwrap();
        for (id, v) in store.iter().step_by(37) {
            let got = index.knn(v, 3, 50).unwrap();
            assert_eq!(got[0].0, id);
            assert_eq!(got[0].1, 1.0);
        }
        let all = index.knn(store.get("p00000").unwrap(), 500, 500).unwrap();
        assert_eq!(all.len(), 300);
    }

    #[test]
    fn full_ef_equals_exact() {
        let store = random_store(400, 6, 3);
        let index = build_index(&store, IndexParams { m: 4, ef_construction: 20, ef_search: 10 }, 5).unwrap();
        assert!(index.base_layer_connected());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let q: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_eq!(index.knn(&q, 10, 400).unwrap(), exact_knn(&store, &q, 10).unwrap());
        }
    }

    #[test]
    fn graph_invariants_and_determinism() {
        let store = random_store(500, 5, 4);
        let params = IndexParams { m: 6, ef_construction: 40, ef_search: 20 };
        let index = build_index(&store, params, 17).unwrap();
        assert_eq!(index, build_index(&store, params, 17).unwrap());
        assert_eq!(index.len(), 500);
        for node in 0..index.len() {
            for level in 0..=index.node_level(node) {
                let cap = if level == 0 { 12 } else { 6 };
                assert!(index.neighbors(node, level).len() <= cap);
                assert!(!index.neighbors(node, level).contains(&(node as u32)));
            }
        }
        let back = AnnIndex::from_bytes(&index.to_bytes()).unwrap();
        assert_eq!(back, index);
        assert_eq!(back.to_bytes(), index.to_bytes());
    }

    #[test]
    fn threshold_and_self_exclusion() {
        let hits = vec![
            ("anchor".to_string(), 1.0),
            ("x".to_string(), 0.95),
            ("y".to_string(), 0.83),
            ("z".to_string(), 0.79),
        ];
        let recs = filter_hits("anchor", hits, 10, 0.8);
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[0].neighbor_id.as_str(), recs[0].rank), ("x", 1));
        assert_eq!((recs[1].neighbor_id.as_str(), recs[1].rank), ("y", 2));
        assert!(filter_hits("a", vec![("b".into(), 0.5)], 10, 0.8).is_empty());
    }

    #[test]
    fn top_n_on_a_small_store() {
        let store = store_of(&[
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.99, 0.1]),
            ("c", vec![0.9, 0.3]),
            ("d", vec![0.0, 1.0]),
        ]);
        let index = build_index(&store, IndexParams::default(), 1).unwrap();
        let recs = top_n_recommendations(&index, &store, "a", 10, 0.8, 100).unwrap();
        let ids: Vec<_> = recs.iter().map(|r| r.neighbor_id.as_str()).collect();
        assert_eq!(ids, ["b", "c"]);
        let one = top_n_recommendations(&index, &store, "a", 1, 0.8, 100).unwrap();
        assert_eq!(one.len(), 1);
        assert!(top_n_recommendations(&index, &store, "d", 10, 0.8, 100).unwrap().is_empty());
        assert!(matches!(
            top_n_recommendations(&index, &store, "nope", 10, 0.8, 100),
            Err(Error::UnknownProduct(_))
        ));
    }
}
