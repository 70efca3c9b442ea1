//! Layered navigable small-world graph for cosine kNN.
//!
//! Nodes are inserted in ascending product-id order, so node index order is
//! id order and every `(similarity, index)` comparison doubles as the
//! id-ascending tie-break. Upper layers keep at most `m` links per node, the
//! base layer at most `2m`. Similarities are computed exactly from the raw
//! vectors and their cached squared norms, the same arithmetic as
//! [`exact_knn`](super::exact_knn).

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binfmt::{Reader, Writer};
use crate::embedding_store::EmbeddingStore;
use crate::fingerprint::Fingerprint;
use crate::neural::loss::cosine_from_parts;
use crate::neural::tensor::dot;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ALTRHNSW";
const VERSION: u32 = 1;
const MAX_LEVEL: usize = 16;

pub const DEFAULT_M: usize = 16;
pub const DEFAULT_EF_CONSTRUCTION: usize = 200;
pub const DEFAULT_EF_SEARCH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            m: DEFAULT_M,
            ef_construction: DEFAULT_EF_CONSTRUCTION,
            ef_search: DEFAULT_EF_SEARCH,
        }
    }
}

/// A node reference ordered by closeness: greater means more similar, and
/// among equal similarities the smaller index is greater.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Near {
    pub sim: f64,
    pub idx: u32,
}

impl Eq for Near {}

impl Ord for Near {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Near {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// True when `i` was not yet visited in this epoch.
    fn insert(&mut self, i: u32) -> bool {
        let slot = &mut self.marks[i as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnIndex {
    params: IndexParams,
    seed: u64,
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<f64>,
    norms_sq: Vec<f64>,
    /// `links[node][level]`
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    max_level: usize,
    store_fingerprint: Fingerprint,
}

/// Builds the index over every entry of `store`. Level assignment comes from
/// a generator seeded with `seed`, so the graph is reproducible.
pub fn build_index(store: &EmbeddingStore, params: IndexParams, seed: u64) -> Result<AnnIndex> {
    if store.is_empty() {
        return Err(Error::InvalidArgument("cannot index an empty store".into()));
    }
    if params.m < 2 {
        return Err(Error::InvalidArgument("m must be >= 2".into()));
    }
    if params.ef_construction < 1 || params.ef_search < 1 {
        return Err(Error::InvalidArgument("ef values must be >= 1".into()));
    }
    let dim = store.dim();
    let n = store.len();
    let mut index = AnnIndex {
        params,
        seed,
        dim,
        ids: Vec::with_capacity(n),
        vectors: Vec::with_capacity(n * dim),
        norms_sq: Vec::with_capacity(n),
        links: Vec::with_capacity(n),
        entry: 0,
        max_level: 0,
        store_fingerprint: store.content_fingerprint(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level_mult = 1.0 / (params.m as f64).ln();
    let mut visited = Visited::new(n);

    for (id, v) in store.iter() {
        if v.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        let u: f64 = 1.0 - rng.gen::<f64>();
        let level = ((-u.ln() * level_mult).floor() as usize).min(MAX_LEVEL);
        index.ids.push(id.to_string());
        index.vectors.extend_from_slice(v);
        index.norms_sq.push(dot(v, v));
        index.links.push(vec![Vec::new(); level + 1]);
        index.insert((index.ids.len() - 1) as u32, level, &mut visited);
    }
    index.repair_base_connectivity();
    Ok(index)
}

impl AnnIndex {
    fn vector(&self, i: u32) -> &[f64] {
        let i = i as usize;
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    fn sim_to(&self, i: u32, q: &[f64], qq: f64) -> f64 {
        cosine_from_parts(dot(self.vector(i), q), self.norms_sq[i as usize], qq)
    }

    fn sim_between(&self, a: u32, b: u32) -> f64 {
        self.sim_to(a, self.vector(b), self.norms_sq[b as usize])
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    /// Best-first search on one layer; returns up to `ef` nodes, closest first.
    fn search_layer(&self, q: &[f64], qq: f64, entries: &[Near], ef: usize, level: usize, visited: &mut Visited) -> Vec<Near> {
        visited.reset(self.ids.len());
        let mut candidates: BinaryHeap<Near> = BinaryHeap::new();
        let mut found: BinaryHeap<Reverse<Near>> = BinaryHeap::new();
        for &e in entries {
            if visited.insert(e.idx) {
                candidates.push(e);
                found.push(Reverse(e));
            }
        }
        while found.len() > ef {
            found.pop();
        }
        while let Some(c) = candidates.pop() {
            let worst = found.peek().expect("found is never empty here").0;
            if c < worst && found.len() >= ef {
                break;
            }
            for &nb in &self.links[c.idx as usize][level] {
                if !visited.insert(nb) {
                    continue;
                }
                let near = Near {
                    sim: self.sim_to(nb, q, qq),
                    idx: nb,
                };
                let worst = found.peek().expect("found is never empty here").0;
                if found.len() < ef || near > worst {
                    candidates.push(near);
                    found.push(Reverse(near));
                    if found.len() > ef {
                        found.pop();
                    }
                }
            }
        }
        let mut out: Vec<Near> = found.into_iter().map(|Reverse(n)| n).collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    /// Neighbor selection heuristic: walk candidates closest first and keep
    /// one only if it is closer to the base than to every kept neighbor.
    fn select_neighbors(&self, candidates: &[Near], m: usize) -> Vec<u32> {
        let mut kept: Vec<Near> = Vec::with_capacity(m);
        for &c in candidates {
            if kept.len() >= m {
                break;
            }
            if kept.iter().all(|k| self.sim_between(c.idx, k.idx) < c.sim) {
                kept.push(c);
            }
        }
        kept.into_iter().map(|n| n.idx).collect()
    }

    fn insert(&mut self, q: u32, level: usize, visited: &mut Visited) {
        if q == 0 {
            self.entry = 0;
            self.max_level = level;
            return;
        }
        let qv = self.vector(q).to_vec();
        let qq = self.norms_sq[q as usize];
        let mut eps = vec![Near {
            sim: self.sim_to(self.entry, &qv, qq),
            idx: self.entry,
        }];
        for lc in (level + 1..=self.max_level).rev() {
            eps = self.search_layer(&qv, qq, &eps, 1, lc, visited);
        }
        for lc in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(&qv, qq, &eps, self.params.ef_construction, lc, visited);
            let neighbors = self.select_neighbors(&found, self.params.m);
            for &nb in &neighbors {
                self.links[nb as usize][lc].push(q);
                if self.links[nb as usize][lc].len() > self.max_links(lc) {
                    self.shrink(nb, lc);
                }
            }
            self.links[q as usize][lc] = neighbors;
            eps = found;
        }
        if level > self.max_level {
            self.entry = q;
            self.max_level = level;
        }
    }

    fn shrink(&mut self, node: u32, level: usize) {
        let mut cands: Vec<Near> = self.links[node as usize][level]
            .iter()
            .map(|&nb| Near {
                sim: self.sim_between(node, nb),
                idx: nb,
            })
            .collect();
        cands.sort_unstable_by(|a, b| b.cmp(a));
        self.links[node as usize][level] = self.select_neighbors(&cands, self.max_links(level));
    }

    fn reachable_from_entry(&self) -> Vec<bool> {
        let mut seen = vec![false; self.ids.len()];
        let mut queue = VecDeque::from([self.entry]);
        seen[self.entry as usize] = true;
        while let Some(i) = queue.pop_front() {
            for &nb in &self.links[i as usize][0] {
                if !seen[nb as usize] {
                    seen[nb as usize] = true;
                    queue.push_back(nb);
                }
            }
        }
        seen
    }

    /// Pruning can orphan nodes on the base layer. Each orphan gets an
    /// incoming link from its most similar reachable node that still has a
    /// free slot.
    fn repair_base_connectivity(&mut self) {
        let mut reached = self.reachable_from_entry();
        for u in 0..self.ids.len() as u32 {
            if reached[u as usize] {
                continue;
            }
            let cap = self.max_links(0);
            let best = (0..self.ids.len() as u32)
                .filter(|&r| reached[r as usize] && self.links[r as usize][0].len() < cap)
                .map(|r| Near {
                    sim: self.sim_between(u, r),
                    idx: r,
                })
                .max();
            let Some(anchor) = best else {
                log::warn!("no free base-layer slot to attach node {u}");
                continue;
            };
            self.links[anchor.idx as usize][0].push(u);
            if self.links[u as usize][0].len() < cap && !self.links[u as usize][0].contains(&anchor.idx) {
                self.links[u as usize][0].push(anchor.idx);
            }
            let mut queue = VecDeque::from([u]);
            reached[u as usize] = true;
            while let Some(i) = queue.pop_front() {
                for &nb in &self.links[i as usize][0] {
                    if !reached[nb as usize] {
                        reached[nb as usize] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
    }

    /// Approximate top-`k` by cosine similarity, most similar first, ties by
    /// product id.
    pub fn knn(&self, query: &[f64], k: usize, ef_search: usize) -> Result<Vec<(String, f64)>> {
        if k < 1 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if ef_search < k {
            return Err(Error::InvalidArgument(format!("ef_search ({ef_search}) must be >= k ({k})")));
        }
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let qq = dot(query, query);
        if qq == 0.0 {
            return Err(Error::ZeroNorm(None));
        }
        let mut visited = Visited::new(self.ids.len());
        let mut eps = vec![Near {
            sim: self.sim_to(self.entry, query, qq),
            idx: self.entry,
        }];
        for lc in (1..=self.max_level).rev() {
            eps = self.search_layer(query, qq, &eps, 1, lc, &mut visited);
        }
        let found = self.search_layer(query, qq, &eps, ef_search, 0, &mut visited);
        Ok(found
            .into_iter()
            .take(k)
            .map(|n| (self.ids[n.idx as usize].clone(), n.sim))
            .collect())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> IndexParams {
        self.params
    }

    pub fn store_fingerprint(&self) -> Fingerprint {
        self.store_fingerprint
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn id(&self, node: usize) -> &str {
        &self.ids[node]
    }

    pub fn node_level(&self, node: usize) -> usize {
        self.links[node].len() - 1
    }

    /// Outgoing links of `node` on `level`.
    pub fn neighbors(&self, node: usize, level: usize) -> &[u32] {
        &self.links[node][level]
    }

    pub fn base_layer_connected(&self) -> bool {
        self.reachable_from_entry().into_iter().all(|r| r)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u64(self.params.m as u64);
        w.u64(self.params.ef_construction as u64);
        w.u64(self.params.ef_search as u64);
        w.u64(self.seed);
        w.u64(self.dim as u64);
        w.u64(self.ids.len() as u64);
        w.u32(self.entry);
        w.u32(self.max_level as u32);
        w.fingerprint(&self.store_fingerprint);
        for (i, id) in self.ids.iter().enumerate() {
            w.str(id);
            w.f64s(self.vector(i as u32));
            w.u8((self.links[i].len() - 1) as u8);
            for layer in &self.links[i] {
                w.u32(layer.len() as u32);
                for &nb in layer {
                    w.u32(nb);
                }
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "index");
        r.expect_magic(MAGIC, VERSION)?;
        let params = IndexParams {
            m: r.usize()?,
            ef_construction: r.usize()?,
            ef_search: r.usize()?,
        };
        let seed = r.u64()?;
        let dim = r.usize()?;
        let n = r.usize()?;
        let entry = r.u32()?;
        let max_level = r.u32()? as usize;
        let store_fingerprint = r.fingerprint()?;
        let mut index = AnnIndex {
            params,
            seed,
            dim,
            ids: Vec::with_capacity(n),
            vectors: Vec::with_capacity(n.saturating_mul(dim)),
            norms_sq: Vec::with_capacity(n),
            links: Vec::with_capacity(n),
            entry,
            max_level,
            store_fingerprint,
        };
        for _ in 0..n {
            index.ids.push(r.str()?);
            let v = r.f64s(dim)?;
            index.norms_sq.push(dot(&v, &v));
            index.vectors.extend(v);
            let levels = r.u8()? as usize + 1;
            let mut node_links = Vec::with_capacity(levels);
            for _ in 0..levels {
                let count = r.u32()? as usize;
                let layer = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
                if layer.iter().any(|&nb| nb as usize >= n) {
                    return Err(r.err("link to a missing node"));
                }
                node_links.push(layer);
            }
            index.links.push(node_links);
        }
        r.finish()?;
        if n == 0 || entry as usize >= n || index.node_level(entry as usize) != max_level {
            return Err(r.err("inconsistent entry point"));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<Fingerprint> {
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(Fingerprint::of_bytes(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads an index and checks it was built from `store`.
    pub fn load_for_store(path: &Path, store: &EmbeddingStore) -> Result<Self> {
        let index = Self::load(path)?;
        let expected = store.content_fingerprint();
        if index.store_fingerprint != expected {
            return Err(Error::StaleArtifact {
                path: path.to_path_buf(),
                reason: format!(
                    "built from store {}, current store is {}",
                    index.store_fingerprint.short(),
                    expected.short()
                ),
            });
        }
        Ok(index)
    }
}
