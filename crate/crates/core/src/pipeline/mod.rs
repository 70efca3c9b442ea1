//! The stages behind the command-line tool. Each stage reads its inputs from
//! the configured paths and workspace, checks their lineage, writes its
//! artifact with a `.meta.json` sidecar and returns a one-line summary.

mod config;
pub mod lineage;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub use config::{PipelineConfig, KEYS};
use lineage::{input_fingerprint, record, verify};

use crate::ann::{build_index, recommendations_to_csv, top_n_recommendations, AnnIndex, Recommendation};
use crate::baselines::{
    build_attribute_vectors, load_attributes, load_cocompare_counts, merge_attributes, AttributeRecommender,
    AttributeSchema,
};
use crate::catalog::{build_vocabulary, encode_catalog, load_catalog, Product, Vocabulary};
use crate::compare_graph::{
    connected_components, load_pairs, read_triples, sample_triples, split_train_validation, write_triples,
};
use crate::embedding_store::{export_encoder, generate_embeddings, EmbeddingStore};
use crate::evalkit::{
    anchor_coverage, evaluate, filter_covered_sessions, lift, load_sessions, DeepRecommender, MetricsTable,
    Recommender, DEFAULT_KS,
};
use crate::fingerprint::Fingerprint;
use crate::neural::{init_model, train, Checkpoint};
use crate::synth::{generate, SynthConfig};
use crate::{Error, Result};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRAIN_TRIPLES_FILE: &str = "triples_train.csv";
pub const VAL_TRIPLES_FILE: &str = "triples_val.csv";
pub const MODEL_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const EMBEDDINGS_TEXT_FILE: &str = "embeddings.txt";
pub const INDEX_FILE: &str = "index.bin";
pub const RECOMMENDATIONS_FILE: &str = "recommendations.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_TEXT_FILE: &str = "metrics.txt";

impl PipelineConfig {
    pub fn artifact(&self, name: &str) -> PathBuf {
        self.workspace.join(name)
    }

    fn prepare_workspace(&self) -> Result<()> {
        self.validate()?;
        if self.threads > 1 {
            log::info!("--threads {} requested; stages run sequentially", self.threads);
        }
        std::fs::create_dir_all(&self.workspace).map_err(|e| Error::io(&self.workspace, e))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_products(path: &Path) -> Result<(Vec<Product>, Fingerprint)> {
    let fp = input_fingerprint(path)?;
    let load = load_catalog(path)?;
    if !load.skipped.is_empty() {
        log::warn!("{}: skipped {} catalog lines", path.display(), load.skipped.len());
    }
    Ok((load.products, fp))
}

pub fn run_synth(out: &Path, cfg: &SynthConfig) -> Result<String> {
    let corpus = generate(cfg)?;
    corpus.write_to(out)?;
    Ok(format!(
        "synth: {} products in {} families, {} pair rows, {} sessions -> {}",
        corpus.products.len(),
        cfg.families,
        corpus.pairs.len(),
        corpus.sessions.len(),
        out.display()
    ))
}

pub fn run_ingest(cfg: &PipelineConfig) -> Result<String> {
    cfg.prepare_workspace()?;
    let (products, catalog_fp) = load_products(&cfg.catalog)?;
    let vocab = build_vocabulary(&products, cfg.min_count)?;
    let path = cfg.artifact(VOCAB_FILE);
    vocab.save(&path)?;
    record(&path, &[(&cfg.catalog, catalog_fp)])?;
    Ok(format!(
        "ingest: {} products, vocabulary of {} tokens (min count {}) -> {}",
        products.len(),
        vocab.size(),
        cfg.min_count,
        path.display()
    ))
}

pub fn run_sample(cfg: &PipelineConfig) -> Result<String> {
    cfg.prepare_workspace()?;
    let pairs_fp = input_fingerprint(&cfg.pairs)?;
    let pairs = load_pairs(&cfg.pairs)?;
    let components = connected_components(&pairs.pairs);
    let triples = sample_triples(&components, &cfg.sampling, cfg.seed)?;
    let (train_set, val_set) = split_train_validation(&triples, cfg.val_fraction, cfg.seed)?;
    for (name, set) in [(TRAIN_TRIPLES_FILE, &train_set), (VAL_TRIPLES_FILE, &val_set)] {
        let path = cfg.artifact(name);
        write_triples(&path, set)?;
        record(&path, &[(&cfg.pairs, pairs_fp)])?;
    }
    let positives = triples.iter().filter(|t| t.is_positive()).count();
    Ok(format!(
        "sample: {} components over {} products, {} positives / {} negatives, {} train / {} validation",
        components.len(),
        components.product_count(),
        positives,
        triples.len() - positives,
        train_set.len(),
        val_set.len()
    ))
}

pub fn run_train(cfg: &PipelineConfig) -> Result<String> {
    cfg.prepare_workspace()?;
    let vocab_path = cfg.artifact(VOCAB_FILE);
    let train_path = cfg.artifact(TRAIN_TRIPLES_FILE);
    let val_path = cfg.artifact(VAL_TRIPLES_FILE);
    let vocab_fp = verify(&vocab_path)?;
    let train_fp = verify(&train_path)?;
    let val_fp = verify(&val_path)?;
    let (products, catalog_fp) = load_products(&cfg.catalog)?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let (encoded, _) = encode_catalog(&products, &vocab, cfg.encode)?;
    let model = init_model(vocab.size(), cfg.embed_dim, cfg.hidden_dim, cfg.seed)?;
    let mut train_cfg = cfg.train;
    train_cfg.seed = cfg.seed;
    let (model, history) = train(
        model,
        &read_triples(&train_path)?,
        &read_triples(&val_path)?,
        &encoded,
        &train_cfg,
    )?;

    let inputs: [(&Path, Fingerprint); 4] = [
        (&cfg.catalog, catalog_fp),
        (&vocab_path, vocab_fp),
        (&train_path, train_fp),
        (&val_path, val_fp),
    ];
    let model_path = cfg.artifact(MODEL_FILE);
    Checkpoint {
        model,
        vocab_fingerprint: vocab.fingerprint(),
    }
    .save(&model_path)?;
    record(&model_path, &inputs)?;
    let history_path = cfg.artifact(HISTORY_FILE);
    write_text(&history_path, &history.to_csv())?;
    record(&history_path, &inputs)?;
    Ok(format!(
        "train: {} epochs, best epoch {} with validation loss {:.6} (initial {:.6}) -> {}",
        history.epochs.len(),
        history.best_epoch,
        history.best_val_loss(),
        history.initial_val_loss,
        model_path.display()
    ))
}

pub fn run_embed(cfg: &PipelineConfig, text_export: bool) -> Result<String> {
    cfg.prepare_workspace()?;
    let model_path = cfg.artifact(MODEL_FILE);
    let vocab_path = cfg.artifact(VOCAB_FILE);
    let model_fp = verify(&model_path)?;
    let vocab_fp = verify(&vocab_path)?;
    let (products, catalog_fp) = load_products(&cfg.catalog)?;
    let (checkpoint, _) = Checkpoint::load(&model_path)?;
    let vocab = Vocabulary::load(&vocab_path)?;
    if checkpoint.vocab_fingerprint != vocab.fingerprint() {
        return Err(Error::StaleArtifact {
            path: model_path,
            reason: "trained against a different vocabulary".into(),
        });
    }
    let (encoded, rejected) = encode_catalog(&products, &vocab, cfg.encode)?;
    let encoder = export_encoder(&checkpoint.model).with_fingerprint(model_fp);
    let store = generate_embeddings(&encoder, encoded.values(), 1000)?;

    let inputs: [(&Path, Fingerprint); 3] = [
        (&cfg.catalog, catalog_fp),
        (&vocab_path, vocab_fp),
        (&model_path, model_fp),
    ];
    let path = cfg.artifact(EMBEDDINGS_FILE);
    store.save(&path)?;
    record(&path, &inputs)?;
    if text_export {
        let text_path = cfg.artifact(EMBEDDINGS_TEXT_FILE);
        write_text(&text_path, &store.to_text())?;
        record(&text_path, &inputs)?;
    }
    Ok(format!(
        "embed: {} products x {} dims ({} without title tokens) -> {}",
        store.len(),
        store.dim(),
        rejected.len(),
        path.display()
    ))
}

pub fn run_index(cfg: &PipelineConfig) -> Result<String> {
    cfg.prepare_workspace()?;
    let store_path = cfg.artifact(EMBEDDINGS_FILE);
    let store_fp = verify(&store_path)?;
    let store = EmbeddingStore::load(&store_path)?;
    let index = build_index(&store, cfg.index, cfg.seed)?;
    let path = cfg.artifact(INDEX_FILE);
    index.save(&path)?;
    record(&path, &[(&store_path, store_fp)])?;
    Ok(format!(
        "index: {} nodes, {} levels, m={} ef_construction={} -> {}",
        index.len(),
        index.max_level() + 1,
        cfg.index.m,
        cfg.index.ef_construction,
        path.display()
    ))
}

fn load_serving(cfg: &PipelineConfig) -> Result<(EmbeddingStore, AnnIndex)> {
    let store_path = cfg.artifact(EMBEDDINGS_FILE);
    let index_path = cfg.artifact(INDEX_FILE);
    verify(&store_path)?;
    verify(&index_path)?;
    let store = EmbeddingStore::load(&store_path)?;
    let index = AnnIndex::load_for_store(&index_path, &store)?;
    Ok((store, index))
}

/// Outcome of `recommend`: a single anchor's list, or a summary of the
/// file written for every product.
pub enum RecommendOutput {
    Anchor(Vec<Recommendation>),
    All(String),
}

pub fn run_recommend(cfg: &PipelineConfig, anchor: Option<&str>) -> Result<RecommendOutput> {
    cfg.prepare_workspace()?;
    let (store, index) = load_serving(cfg)?;
    let ef = cfg.index.ef_search;
    if let Some(anchor) = anchor {
        return Ok(RecommendOutput::Anchor(top_n_recommendations(
            &index,
            &store,
            anchor,
            cfg.n,
            cfg.threshold,
            ef,
        )?));
    }
    let mut all = Vec::new();
    let mut covered = 0;
    for id in store.ids() {
        let recs = top_n_recommendations(&index, &store, id, cfg.n, cfg.threshold, ef)?;
        covered += usize::from(!recs.is_empty());
        all.extend(recs);
    }
    let path = cfg.artifact(RECOMMENDATIONS_FILE);
    write_text(&path, &recommendations_to_csv(&all))?;
    let store_path = cfg.artifact(EMBEDDINGS_FILE);
    let index_path = cfg.artifact(INDEX_FILE);
    record(
        &path,
        &[
            (&store_path, Fingerprint::of_file(&store_path)?),
            (&index_path, Fingerprint::of_file(&index_path)?),
        ],
    )?;
    Ok(RecommendOutput::All(format!(
        "recommend: {} recommendations for {} of {} anchors (threshold {}, n {}) -> {}",
        all.len(),
        covered,
        store.len(),
        cfg.threshold,
        cfg.n,
        path.display()
    )))
}

/// Both protocol tables plus coverage and lifts.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub raw: MetricsTable,
    pub filtered: MetricsTable,
    /// `(algorithm, anchor coverage)`.
    pub coverage: Vec<(String, f64)>,
    /// `(description, relative lift)`.
    pub lifts: Vec<(String, f64)>,
}

impl EvaluationReport {
    pub fn to_csv(&self) -> String {
        let mut s = self.raw.to_csv_rows(true);
        s.push_str(&self.filtered.to_csv_rows(false));
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("Raw sessions\n{}\nFiltered sessions\n{}\n", self.raw.to_text(), self.filtered.to_text());
        s.push_str("Anchor coverage\n");
        for (name, c) in &self.coverage {
            let _ = writeln!(s, "{name:<20}  {c:.4}");
        }
        s.push_str("\nCoverage lift\n");
        for (name, l) in &self.lifts {
            let _ = writeln!(s, "{name:<44}  {:+.2}%", l * 100.0);
        }
        s
    }
}

/// Builds the attribute baseline from the catalog plus the optional
/// attribute file.
fn attribute_recommender(cfg: &PipelineConfig, mut products: Vec<Product>) -> Result<(AttributeRecommender, usize)> {
    let schema = AttributeSchema::load(&cfg.schema).map_err(|e| match e {
        Error::Io { .. } if !cfg.schema.exists() => Error::MissingArtifact(cfg.schema.clone()),
        other => other,
    })?;
    if cfg.attributes.exists() {
        let (table, skipped) = load_attributes(&cfg.attributes)?;
        if !skipped.is_empty() {
            log::warn!("{}: skipped {} attribute lines", cfg.attributes.display(), skipped.len());
        }
        merge_attributes(&mut products, &table);
    }
    let build = build_attribute_vectors(&products, &schema);
    if build.warnings > 0 {
        log::warn!("{} attribute values were unknown or unparsable", build.warnings);
    }
    Ok((AttributeRecommender::new(build.vectors), build.excluded.len()))
}

pub fn evaluate_workspace(cfg: &PipelineConfig) -> Result<EvaluationReport> {
    cfg.prepare_workspace()?;
    let (store, index) = load_serving(cfg)?;
    input_fingerprint(&cfg.sessions)?;
    input_fingerprint(&cfg.pairs)?;
    let (products, _) = load_products(&cfg.catalog)?;
    let catalog_ids: Vec<String> = products.iter().map(|p| p.product_id.clone()).collect();
    let sessions = load_sessions(&cfg.sessions)?;
    if !sessions.skipped.is_empty() {
        log::warn!("{}: skipped {} session lines", cfg.sessions.display(), sessions.skipped.len());
    }
    let deep = DeepRecommender {
        index: &index,
        store: &store,
        threshold: cfg.threshold,
        ef_search: cfg.index.ef_search,
    };
    let (attribute, _) = attribute_recommender(cfg, products)?;
    let counts = load_cocompare_counts(&cfg.pairs)?;
    let all: [&dyn Recommender; 3] = [&deep, &attribute, &counts];

    let mut coverage = Vec::new();
    for rec in all {
        coverage.push((
            rec.name().to_string(),
            anchor_coverage(rec, catalog_ids.iter().map(String::as_str))?,
        ));
    }
    let mut raw = evaluate(&all, &sessions.sessions, &DEFAULT_KS)?;
    let covered = filter_covered_sessions(&sessions.sessions, &[&attribute, &counts])?;
    let mut filtered = evaluate(&all, &covered, &DEFAULT_KS)?.with_protocol("filtered");
    for table in [&mut raw, &mut filtered] {
        for (row, (_, c)) in table.rows.iter_mut().zip(&coverage) {
            row.coverage = Some(*c);
        }
    }
    let lifts = coverage[1..]
        .iter()
        .map(|(name, c)| (format!("{} over {}", coverage[0].0, name), lift(coverage[0].1, *c)))
        .collect();
    Ok(EvaluationReport {
        raw,
        filtered,
        coverage,
        lifts,
    })
}

pub fn run_evaluate(cfg: &PipelineConfig) -> Result<String> {
    let report = evaluate_workspace(cfg)?;
    let csv_path = cfg.artifact(METRICS_FILE);
    let text_path = cfg.artifact(METRICS_TEXT_FILE);
    write_text(&csv_path, &report.to_csv())?;
    write_text(&text_path, &report.to_text())?;
    let mut inputs = Vec::new();
    for p in [
        cfg.artifact(EMBEDDINGS_FILE),
        cfg.artifact(INDEX_FILE),
        cfg.sessions.clone(),
        cfg.pairs.clone(),
        cfg.catalog.clone(),
        cfg.schema.clone(),
    ] {
        let fp = Fingerprint::of_file(&p)?;
        inputs.push((p, fp));
    }
    let inputs: Vec<(&Path, Fingerprint)> = inputs.iter().map(|(p, f)| (p.as_path(), *f)).collect();
    record(&csv_path, &inputs)?;
    record(&text_path, &inputs)?;
    let cov: Vec<String> = report.coverage.iter().map(|(n, c)| format!("{n} {c:.3}")).collect();
    Ok(format!(
        "evaluate: {} raw / {} filtered sessions, coverage {} -> {}",
        report.raw.sessions,
        report.filtered.sessions,
        cov.join(", "),
        csv_path.display()
    ))
}
