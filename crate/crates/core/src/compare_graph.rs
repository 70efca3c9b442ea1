//! Co-compare graph: pair ingest, connected components and training-pair
//! sampling.
//!
//! Products that customers compared side by side are linked; every connected
//! component is a pool of mutual alternatives. Positives pair a product with
//! another member of its own component, negatives with a member of a
//! different component, so a negative is never co-compared by construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::delimited::{self, CsvText};
use crate::catalog::SkippedLine;
use crate::{Error, Result};

pub const DEFAULT_NEG_RATIO: usize = 3;
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

/// An unordered co-compare link, stored with the smaller id first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComparePair {
    pub product_id_1: String,
    pub product_id_2: String,
}

impl ComparePair {
    /// `None` for a self-pair.
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Option<Self> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(ComparePair {
                product_id_1: a,
                product_id_2: b,
            }),
            std::cmp::Ordering::Greater => Some(ComparePair {
                product_id_1: b,
                product_id_2: a,
            }),
        }
    }
}

/// Raw co-compare events with multiplicity, in file order.
#[derive(Debug, Clone, Default)]
pub struct PairStream {
    pub events: Vec<ComparePair>,
    pub skipped: Vec<SkippedLine>,
    pub self_pairs: usize,
}

fn unquote_single(f: &str) -> &str {
    match f.strip_prefix('\'').and_then(|x| x.strip_suffix('\'')) {
        Some(inner) => inner,
        None => f,
    }
}

/// Reads `id1,id2,flag` lines. Only `flag = 1` lines are events; `0`/`-1`
/// lines are ignored. A first line whose flag is not a number is a header.
pub fn read_pair_stream(path: &Path) -> Result<PairStream> {
    let mut out = PairStream::default();
    delimited::for_each_in_file(path, false, |r| {
        let line_no = r.line;
        let fields: Vec<&str> = r.fields().into_iter().map(unquote_single).collect();
        let parsed = match fields.as_slice() {
            [a, b, flag] if !a.is_empty() && !b.is_empty() => flag.parse::<i64>().ok().map(|f| (*a, *b, f)),
            _ => None,
        };
        let Some((a, b, flag)) = parsed else {
            if line_no == 1 && fields.len() == 3 {
                return Ok(());
            }
            log::warn!("{}:{line_no}: skipping malformed pair line", path.display());
            out.skipped.push(SkippedLine {
                line: line_no,
                reason: format!("expected `id1,id2,flag`, got `{}`", r.text()),
            });
            return Ok(());
        };
        match flag {
            1 => match ComparePair::new(a, b) {
                Some(p) => out.events.push(p),
                None => {
                    log::warn!("{}:{line_no}: dropping self-pair `{a}`", path.display());
                    out.self_pairs += 1;
                }
            },
            0 | -1 => {}
            other => out.skipped.push(SkippedLine {
                line: line_no,
                reason: format!("flag must be 1, 0 or -1, got {other}"),
            }),
        }
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct PairLoad {
    pub pairs: Vec<ComparePair>,
    pub skipped: Vec<SkippedLine>,
    pub self_pairs: usize,
}

/// Distinct co-compared pairs, in order of first appearance.
pub fn load_pairs(path: &Path) -> Result<PairLoad> {
    let stream = read_pair_stream(path)?;
    let mut seen = BTreeSet::new();
    let pairs = stream
        .events
        .into_iter()
        .filter(|p| seen.insert(p.clone()))
        .collect();
    Ok(PairLoad {
        pairs,
        skipped: stream.skipped,
        self_pairs: stream.self_pairs,
    })
}

/// Union-find over dense indices with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    pub fn new(len: usize) -> Self {
        DisjointSets {
            parent: (0..len).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Returns false when `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Disjoint components of the co-compare graph. Members of each component
/// are sorted, and components are ordered by their smallest member.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComponentSet {
    components: Vec<Vec<String>>,
    membership: HashMap<String, usize>,
}

impl ComponentSet {
    pub fn components(&self) -> &[Vec<String>] {
        &self.components
    }

    pub fn component_of(&self, id: &str) -> Option<usize> {
        self.membership.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn product_count(&self) -> usize {
        self.membership.len()
    }
}

pub fn connected_components(pairs: &[ComparePair]) -> ComponentSet {
    let ids: BTreeSet<&str> = pairs
        .iter()
        .flat_map(|p| [p.product_id_1.as_str(), p.product_id_2.as_str()])
        .collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut sets = DisjointSets::new(ids.len());
    for p in pairs {
        sets.union(index[p.product_id_1.as_str()], index[p.product_id_2.as_str()]);
    }

    // ids iterate in sorted order, so the first member seen for a root is its
    // smallest and roots are discovered in order of smallest member.
    let mut by_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut components: Vec<Vec<String>> = Vec::new();
    let mut membership = HashMap::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        let root = sets.find(i);
        let c = *by_root.entry(root).or_insert_with(|| {
            components.push(Vec::new());
            components.len() - 1
        });
        components[c].push(id.to_string());
        membership.insert(id.to_string(), c);
    }
    ComponentSet {
        components,
        membership,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrainingTriple {
    pub anchor_id: String,
    pub other_id: String,
    pub label: u8,
}

impl TrainingTriple {
    pub fn new(anchor: impl Into<String>, other: impl Into<String>, label: u8) -> Self {
        TrainingTriple {
            anchor_id: anchor.into(),
            other_id: other.into(),
            label,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingConfig {
    /// Negatives drawn per positive.
    pub neg_ratio: usize,
    pub positives_per_anchor: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            neg_ratio: DEFAULT_NEG_RATIO,
            positives_per_anchor: 1,
        }
    }
}

/// Draws, for every product of every component, `positives_per_anchor`
/// partners from its own component and `neg_ratio` times as many partners
/// from other components (uniform component first, then uniform member).
/// Triples are grouped by anchor, positives first.
pub fn sample_triples(components: &ComponentSet, cfg: &SamplingConfig, seed: u64) -> Result<Vec<TrainingTriple>> {
    let n = components.len();
    if n < 2 {
        return Err(Error::NoNegativePool(n));
    }
    if cfg.neg_ratio < 1 || cfg.positives_per_anchor < 1 {
        return Err(Error::InvalidArgument(
            "neg_ratio and positives_per_anchor must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_anchor = cfg.positives_per_anchor * (1 + cfg.neg_ratio);
    let mut out = Vec::with_capacity(components.product_count() * per_anchor);

    for (c, members) in components.components.iter().enumerate() {
        for (i, anchor) in members.iter().enumerate() {
            for _ in 0..cfg.positives_per_anchor {
                // uniform over members other than the anchor
                let mut j = rng.gen_range(0..members.len() - 1);
                if j >= i {
                    j += 1;
                }
                out.push(TrainingTriple::new(anchor.as_str(), members[j].as_str(), 1));
            }
            for _ in 0..cfg.positives_per_anchor * cfg.neg_ratio {
                let mut other = rng.gen_range(0..n - 1);
                if other >= c {
                    other += 1;
                }
                let pool = &components.components[other];
                let partner = &pool[rng.gen_range(0..pool.len())];
                out.push(TrainingTriple::new(anchor.as_str(), partner.as_str(), 0));
            }
        }
    }
    Ok(out)
}

/// Stratified, seeded split: each class contributes `round(len * fraction)`
/// triples to validation, kept within `[1, len - 1]`.
pub fn split_train_validation(
    triples: &[TrainingTriple],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<TrainingTriple>, Vec<TrainingTriple>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = triples.iter().cloned().partition(TrainingTriple::is_positive);
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::TooFewTriples {
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(triples.len());
    let mut val = Vec::new();
    for class in [&mut pos, &mut neg] {
        class.shuffle(&mut rng);
        let n_val = ((class.len() as f64 * val_fraction).round() as usize).clamp(1, class.len() - 1);
        val.extend(class.drain(..n_val));
        train.append(class);
    }
    train.shuffle(&mut rng);
    val.shuffle(&mut rng);
    Ok((train, val))
}

pub fn write_triples(path: &Path, triples: &[TrainingTriple]) -> Result<()> {
    let mut w = CsvText::new(&["anchor_id", "other_id", "label"]);
    for t in triples {
        w.row([t.anchor_id.as_str(), &t.other_id, &t.label.to_string()]);
    }
    std::fs::write(path, w.finish()).map_err(|e| Error::io(path, e))
}

pub fn read_triples(path: &Path) -> Result<Vec<TrainingTriple>> {
    let mut out = Vec::new();
    delimited::for_each_in_file(path, false, |r| {
        if r.first_is("anchor_id") {
            return Ok(());
        }
        let parse_err = || Error::Parse {
            path: path.to_path_buf(),
            line: r.line,
            message: format!("expected `anchor_id,other_id,label`, got `{}`", r.text()),
        };
        let [a, b, l] = r.fields()[..] else {
            return Err(parse_err());
        };
        let label = match l {
            "0" => 0,
            "1" => 1,
            _ => return Err(parse_err()),
        };
        out.push(TrainingTriple::new(a, b, label));
        Ok(())
    })?;
    Ok(out)
}
