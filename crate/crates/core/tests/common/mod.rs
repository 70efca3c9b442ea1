#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;

use altrec::baselines::{
    build_attribute_vectors, load_attributes, load_cocompare_counts, AttributeRecommender, AttributeSchema,
    CoCompareCounts,
};
use altrec::catalog::{EncodedField, EncodedProduct, Product, PAD};
use altrec::embedding_store::EmbeddingStore;
use altrec::evalkit::{load_sessions, Session};
use altrec::fingerprint::Fingerprint;
use altrec::neural::{batch_loss, compute_gradients, init_model, LossKind, PairExample, SiameseModel};
use rand::Rng;

pub fn field<R: Rng>(rng: &mut R, vocab: usize, len: usize, max_len: usize) -> EncodedField {
    let mut seq: Vec<u32> = (0..len).map(|_| rng.gen_range(1..vocab as u32)).collect();
    seq.resize(max_len, PAD);
    EncodedField { seq, len }
}

/// A product with a 1..=`title_max` token title and 0..=`desc_max` token
/// description drawn from `1..vocab`.
pub fn random_product<R: Rng>(rng: &mut R, id: &str, vocab: usize, title_max: usize, desc_max: usize) -> EncodedProduct {
    let tl = rng.gen_range(1..=title_max);
    let dl = rng.gen_range(0..=desc_max);
    EncodedProduct {
        product_id: id.to_string(),
        title: field(rng, vocab, tl, title_max),
        desc: field(rng, vocab, dl, desc_max),
    }
}

/// Central-difference check of every parameter. Returns the worst relative
/// error `|a - n| / max(|a|, |n|)` over entries where either side exceeds
/// `floor`, the number of such entries, and the largest absolute error.
pub struct GradReport {
    pub max_rel: f64,
    pub max_abs: f64,
    pub checked: usize,
    pub worst: String,
}

pub fn gradient_check(model: &SiameseModel, batch: &[PairExample<'_>], kind: LossKind, h: f64, floor: f64) -> GradReport {
    let (_, grads) = compute_gradients(batch, model, kind).unwrap();
    let mut report = GradReport {
        max_rel: 0.0,
        max_abs: 0.0,
        checked: 0,
        worst: String::new(),
    };
    let names: Vec<&str> = model.named_tensors().map(|(n, _)| n).collect();
    for (t, g) in grads.tensors().iter().enumerate() {
        for i in 0..g.len() {
            let mut plus = model.clone();
            plus.tensors_mut()[t].data_mut()[i] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[t].data_mut()[i] -= h;
            let numeric = (batch_loss(batch, &plus, kind).unwrap() - batch_loss(batch, &minus, kind).unwrap()) / (2.0 * h);
            let analytic = g.data()[i];
            let abs = (analytic - numeric).abs();
            report.max_abs = report.max_abs.max(abs);
            let scale = analytic.abs().max(numeric.abs());
            if scale <= floor {
                continue;
            }
            report.checked += 1;
            let rel = abs / scale;
            if rel > report.max_rel {
                report.max_rel = rel;
                report.worst = format!("{}[{i}] analytic {analytic:e} numeric {numeric:e}", names[t]);
            }
        }
    }
    report
}

/// A random small configuration for gradient checking: model, products and
/// labelled pairs. Negatives sitting within `margin` of the zero kink are
/// relabelled positive.
pub struct GradCase {
    pub model: SiameseModel,
    pub products: Vec<EncodedProduct>,
    pub pairs: Vec<(usize, usize, u8)>,
    pub kind: LossKind,
}

impl GradCase {
    pub fn random<R: Rng>(rng: &mut R, kind: LossKind) -> Self {
        let vocab = rng.gen_range(3..=50);
        let embed = rng.gen_range(1..=8);
        let hidden = rng.gen_range(1..=8);
        let batch = rng.gen_range(1..=4);
        let mut model = init_model(vocab, embed, hidden, rng.gen()).unwrap();
        if kind == LossKind::BinaryCrossEntropy {
            let h = model.head.data_mut();
            h[0] = rng.gen_range(0.5..3.0);
            h[1] = rng.gen_range(-1.0..1.0);
        }
        let products: Vec<EncodedProduct> = (0..2 * batch)
            .map(|i| random_product(rng, &format!("p{i}"), vocab, 5, 5))
            .collect();
        let pairs = (0..batch).map(|i| (2 * i, 2 * i + 1, rng.gen_range(0..=1))).collect();
        let mut case = GradCase {
            model,
            products,
            pairs,
            kind,
        };
        let energies = altrec::neural::batch_energies(&case.batch(), &case.model).unwrap();
        for (p, e) in case.pairs.iter_mut().zip(energies) {
            if p.2 == 0 && e.abs() < 1e-3 {
                p.2 = 1;
            }
        }
        case
    }

    pub fn batch(&self) -> Vec<PairExample<'_>> {
        self.pairs
            .iter()
            .map(|&(a, b, label)| PairExample {
                anchor: &self.products[a],
                other: &self.products[b],
                label,
            })
            .collect()
    }
}

/// Reachability by Warshall's algorithm on bitsets; returns the set of
/// components as sorted member lists.
pub fn closure_components(nodes: &[String], edges: &[(usize, usize)]) -> BTreeSet<Vec<String>> {
    let n = nodes.len();
    let words = n.div_ceil(64);
    let mut reach = vec![vec![0u64; words]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i / 64] |= 1 << (i % 64);
    }
    for &(a, b) in edges {
        reach[a][b / 64] |= 1 << (b % 64);
        reach[b][a / 64] |= 1 << (a % 64);
    }
    for k in 0..n {
        let via = reach[k].clone();
        for row in reach.iter_mut() {
            if row[k / 64] >> (k % 64) & 1 == 1 {
                for (w, v) in row.iter_mut().zip(&via) {
                    *w |= v;
                }
            }
        }
    }
    let touched: BTreeSet<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    touched
        .iter()
        .map(|&i| {
            let mut members: Vec<String> = (0..n)
                .filter(|&j| reach[i][j / 64] >> (j % 64) & 1 == 1)
                .map(|j| nodes[j].clone())
                .collect();
            members.sort();
            members
        })
        .collect()
}

pub fn run_cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_altrec"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| format!("spawning altrec: {e}"))?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!(
            "altrec {} exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

pub const CHAIN: [&[&str]; 8] = [
    &["synth"],
    &["ingest"],
    &["sample"],
    &["train"],
    &["embed"],
    &["index"],
    &["recommend"],
    &["evaluate"],
];

/// Runs the whole command-line pipeline with default settings in `dir`.
pub fn run_chain(dir: &Path) -> Result<Vec<String>, String> {
    CHAIN.iter().map(|args| run_cli(dir, args)).collect()
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval20")
}

/// The three recommenders and sessions of the frozen evaluation fixture.
pub struct EvalFixture {
    pub store: EmbeddingStore,
    pub attribute: AttributeRecommender,
    pub counts: CoCompareCounts,
    pub sessions: Vec<Session>,
    /// `(protocol, algorithm, k) -> (precision, recall)`.
    pub expected: BTreeMap<(String, String, usize), (f64, f64)>,
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn load_eval_fixture() -> EvalFixture {
    let dir = fixture_dir();
    let rows = csv_rows(&dir.join("embeddings.csv"));
    let mut store = EmbeddingStore::new(rows[0].len() - 1, Fingerprint::default());
    for r in &rows {
        store
            .insert(r[0].clone(), r[1..].iter().map(|x| x.parse().unwrap()).collect())
            .unwrap();
    }
    let schema = AttributeSchema::load(&dir.join("schema.csv")).unwrap();
    let (table, _) = load_attributes(&dir.join("attributes.csv")).unwrap();
    let products: Vec<Product> = table
        .iter()
        .map(|(id, attrs)| {
            let mut p = Product::new(id.clone(), "item", "");
            p.attributes = attrs.clone();
            p
        })
        .collect();
    let attribute = AttributeRecommender::new(build_attribute_vectors(&products, &schema).vectors);
    let counts = load_cocompare_counts(&dir.join("pairs.csv")).unwrap();
    let sessions = load_sessions(&dir.join("sessions.csv")).unwrap().sessions;
    let expected = csv_rows(&dir.join("expected.csv"))
        .into_iter()
        .map(|r| {
            (
                (r[0].clone(), r[1].clone(), r[2].parse().unwrap()),
                (r[3].parse().unwrap(), r[4].parse().unwrap()),
            )
        })
        .collect();
    EvalFixture {
        store,
        attribute,
        counts,
        sessions,
        expected,
    }
}
