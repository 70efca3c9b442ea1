use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use altrec::pipeline::{self, PipelineConfig, RecommendOutput};
use altrec::synth::SynthConfig;
use altrec::ErrorClass;

/// Alternative-product recommendations from co-compare behavior and
/// product text.
///
/// Stages run in order: synth (optional) -> ingest -> sample -> train ->
/// embed -> index -> recommend / evaluate. Every option can also be set in a
/// flat `key = value` file passed with --config; flags win over the file.
/// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical error.
#[derive(Parser)]
#[command(name = "altrec", version)]
struct Cli {
    /// Config file with `key = value` lines (keys as in the long flags).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: catalog.jsonl, pairs.csv, sessions.csv,
    /// attributes.csv, schema.csv and families.csv.
    Synth(SynthArgs),
    /// Read the catalog (JSON lines with product_id, title, description and
    /// optional attributes) and write vocab.txt.
    Ingest(Overrides),
    /// Group co-compared products (id1,id2,flag lines) into components and
    /// write triples_train.csv / triples_val.csv (anchor_id,other_id,label).
    Sample(Overrides),
    /// Train the Siamese encoder; writes model.ckpt and history.csv.
    Train(Overrides),
    /// Embed every catalog product with the trained encoder; writes
    /// embeddings.bin.
    Embed {
        /// Also write embeddings.txt (id,v1,v2,... per line).
        #[arg(long)]
        text: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build the approximate nearest-neighbor index; writes index.bin.
    Index(Overrides),
    /// Top-n alternatives at or above the threshold. With --anchor, prints
    /// `anchor_id,neighbor_id,rank,similarity` lines; otherwise writes
    /// recommendations.csv for every product.
    Recommend {
        #[arg(long, value_name = "PRODUCT_ID")]
        anchor: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Precision/recall@{1,5,10} on purchase sessions
    /// (session_id,anchor_id,p1|p2 lines) for the learned recommender and
    /// both baselines, plus anchor coverage and lifts; writes metrics.csv and
    /// metrics.txt.
    Evaluate(Overrides),
    /// Print the effective configuration in config-file syntax.
    Config(Overrides),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long, default_value = "data")]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    families: usize,
    #[arg(long, default_value_t = 250)]
    per_family: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    sessions: usize,
    /// Fraction of products with no attributes.
    #[arg(long, default_value_t = 0.4)]
    missing_attr_fraction: f64,
    /// Fraction of products never co-compared.
    #[arg(long, default_value_t = 0.3)]
    uncompared_fraction: f64,
}

macro_rules! overrides {
    ($($field:ident: $ty:ty = $key:literal, $heading:literal, $help:literal;)*) => {
        #[derive(Args)]
        struct Overrides {
            $(
                #[arg(long = $key, help = $help, help_heading = $heading)]
                $field: Option<$ty>,
            )*
        }

        impl Overrides {
            fn apply(&self, cfg: &mut PipelineConfig) -> altrec::Result<()> {
                $(
                    if let Some(v) = &self.$field {
                        cfg.set($key, &v.to_string())?;
                    }
                )*
                Ok(())
            }
        }
    };
}

overrides! {
    catalog: String = "catalog", "Inputs", "Catalog file [default: data/catalog.jsonl]";
    pairs: String = "pairs", "Inputs", "Co-compare pair file [default: data/pairs.csv]";
    sessions: String = "sessions", "Inputs", "Sessions file [default: data/sessions.csv]";
    attributes: String = "attributes", "Inputs", "Attribute file, product_id,attribute_name,attribute_value [default: data/attributes.csv]";
    schema: String = "schema", "Inputs", "Attribute schema, name,categorical,v1|v2 or name,numerical,min,max [default: data/schema.csv]";
    workspace: String = "workspace", "Inputs", "Directory for artifacts [default: work]";
    min_count: u64 = "min-count", "Text", "Minimum token count for the vocabulary [default: 2]";
    title_len: usize = "title-len", "Text", "Title tokens kept [default: 16]";
    desc_len: usize = "desc-len", "Text", "Description tokens kept [default: 96]";
    neg_ratio: usize = "neg-ratio", "Sampling", "Negatives per positive [default: 3]";
    positives_per_anchor: usize = "positives-per-anchor", "Sampling", "Positives drawn per product [default: 1]";
    val_fraction: f64 = "val-fraction", "Sampling", "Validation share of each class [default: 0.1]";
    embed_dim: usize = "embed-dim", "Training", "Token embedding size [default: 32]";
    hidden_dim: usize = "hidden-dim", "Training", "LSTM hidden size; vectors have 4x this [default: 32]";
    batch_size: usize = "batch-size", "Training", "Mini-batch size [default: 64]";
    max_epochs: usize = "max-epochs", "Training", "Epoch limit [default: 50]";
    patience: usize = "patience", "Training", "Epochs without improvement before stopping [default: 3]";
    loss_kind: String = "loss-kind", "Training", "contrastive or binary_cross_entropy [default: contrastive]";
    learning_rate: f64 = "learning-rate", "Training", "RMSprop step size [default: 0.001]";
    rho: f64 = "rho", "Training", "RMSprop decay [default: 0.9]";
    epsilon: f64 = "epsilon", "Training", "RMSprop epsilon [default: 1e-8]";
    m: usize = "m", "Index", "Links per node [default: 16]";
    ef_construction: usize = "ef-construction", "Index", "Build beam width [default: 200]";
    ef_search: usize = "ef-search", "Index", "Query beam width [default: 100]";
    threshold: f64 = "threshold", "Serving", "Minimum cosine similarity [default: 0.8]";
    n: usize = "n", "Serving", "Recommendations per anchor [default: 10]";
    seed: u64 = "seed", "Run", "Seed for sampling, initialization, shuffling and the index [default: 0]";
    threads: usize = "threads", "Run", "Worker threads; stages currently run sequentially [default: 1]";
}

fn config(cli_config: &Option<PathBuf>, overrides: &Overrides) -> altrec::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = cli_config {
        cfg.apply_file(path)?;
    }
    overrides.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> altrec::Result<String> {
    let c = &cli.config;
    match cli.command {
        Command::Synth(a) => pipeline::run_synth(
            &a.out,
            &SynthConfig {
                families: a.families,
                per_family: a.per_family,
                seed: a.seed,
                sessions: a.sessions,
                missing_attr_fraction: a.missing_attr_fraction,
                uncompared_fraction: a.uncompared_fraction,
                ..SynthConfig::default()
            },
        ),
        Command::Ingest(o) => pipeline::run_ingest(&config(c, &o)?),
        Command::Sample(o) => pipeline::run_sample(&config(c, &o)?),
        Command::Train(o) => pipeline::run_train(&config(c, &o)?),
        Command::Embed { text, overrides } => pipeline::run_embed(&config(c, &overrides)?, text),
        Command::Index(o) => pipeline::run_index(&config(c, &o)?),
        Command::Recommend { anchor, overrides } => {
            match pipeline::run_recommend(&config(c, &overrides)?, anchor.as_deref())? {
                RecommendOutput::Anchor(recs) => {
                    let lines: Vec<String> = recs
                        .iter()
                        .map(|r| format!("{},{},{},{}", r.anchor_id, r.neighbor_id, r.rank, r.similarity))
                        .collect();
                    Ok(lines.join("\n"))
                }
                RecommendOutput::All(summary) => Ok(summary),
            }
        }
        Command::Evaluate(o) => pipeline::run_evaluate(&config(c, &o)?),
        Command::Config(o) => Ok(config(c, &o)?.describe().trim_end().to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
