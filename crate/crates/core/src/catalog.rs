//! Catalog ingest, tokenization, vocabulary and fixed-length encoding.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fingerprint::Fingerprint;
use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const OOV: u32 = 1;

pub const DEFAULT_TITLE_LEN: usize = 16;
pub const DEFAULT_DESC_LEN: usize = 96;
pub const DEFAULT_MIN_COUNT: u64 = 2;

/// One catalog entry. `attributes` is optional in the catalog file and is
/// only consumed by the attribute-based baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub product_id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl Product {
    pub fn new(id: impl Into<String>, title: impl Into<String>, description: impl Into<String>) -> Self {
        Product {
            product_id: id.into(),
            title: title.into(),
            description: description.into(),
            attributes: BTreeMap::new(),
        }
    }
}

/// A catalog line that could not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CatalogLoad {
    pub products: Vec<Product>,
    pub skipped: Vec<SkippedLine>,
}

/// Reads a line-delimited JSON catalog. Malformed lines are skipped and
/// reported; a repeated `product_id` aborts the load.
pub fn load_catalog(path: &Path) -> Result<CatalogLoad> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = CatalogLoad::default();
    let mut seen = HashSet::new();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let product = match serde_json::from_str::<Product>(&line) {
            Ok(p) => p,
            Err(e) => {
                out.skip(path, line_no, e.to_string());
                continue;
            }
        };
        if product.product_id.trim().is_empty() {
            out.skip(path, line_no, "empty product_id".into());
            continue;
        }
        if product.title.trim().is_empty() {
            out.skip(path, line_no, format!("empty title for `{}`", product.product_id));
            continue;
        }
        if !seen.insert(product.product_id.clone()) {
            return Err(Error::DuplicateId(product.product_id));
        }
        out.products.push(product);
    }
    Ok(out)
}

impl CatalogLoad {
    fn skip(&mut self, path: &Path, line: usize, reason: String) {
        log::warn!("{}:{line}: skipping malformed catalog record: {reason}", path.display());
        self.skipped.push(SkippedLine { line, reason });
    }
}

pub fn write_catalog(path: &Path, products: &[Product]) -> Result<()> {
    let mut buf = Vec::new();
    for p in products {
        serde_json::to_writer(&mut buf, p).expect("products always serialize");
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    min_count: u64,
    // index -> (token, corpus count); slots 0 and 1 are PAD and OOV.
    tokens: Vec<(String, u64)>,
    index: HashMap<String, u32>,
}

const PAD_TOKEN: &str = "<pad>";
const OOV_TOKEN: &str = "<oov>";

impl Vocabulary {
    fn from_sorted(min_count: u64, entries: Vec<(String, u64)>) -> Self {
        let mut tokens = vec![(PAD_TOKEN.to_string(), 0), (OOV_TOKEN.to_string(), 0)];
        tokens.extend(entries);
        let index = tokens
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, (t, _))| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            min_count,
            tokens,
            index,
        }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Index of `token`, or [`OOV`] when it is not in the vocabulary.
    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(OOV)
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(|(t, _)| t.as_str())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Text form: a `min_count` header line, then one `token count` line per
    /// stored token in index order (starting at index 2).
    pub fn to_text(&self) -> String {
        let mut s = format!("min_count {}\n", self.min_count);
        for (token, count) in &self.tokens[2..] {
            let _ = writeln!(s, "{token} {count}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "vocabulary",
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let min_count = header
            .strip_prefix("min_count ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(format!("bad header `{header}`")))?;
        let mut entries = Vec::new();
        for line in lines {
            let (token, count) = line
                .rsplit_once(' ')
                .ok_or_else(|| bad(format!("bad line `{line}`")))?;
            let count = count.parse().map_err(|_| bad(format!("bad count in `{line}`")))?;
            entries.push((token.to_string(), count));
        }
        Ok(Self::from_sorted(min_count, entries))
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_bytes(self.to_text().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Counts tokens over all titles and descriptions and keeps those seen at
/// least `min_count` times, most frequent first, ties in lexicographic order.
pub fn build_vocabulary(products: &[Product], min_count: u64) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::InvalidArgument("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    for p in products {
        for token in tokenize(&p.title).into_iter().chain(tokenize(&p.description)) {
            *counts.entry(token).or_default() += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_sorted(min_count, entries))
}

/// A tokenized text field padded to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedField {
    pub seq: Vec<u32>,
    pub len: usize,
}

impl EncodedField {
    fn encode(text: &str, vocab: &Vocabulary, max_len: usize) -> Self {
        let mut seq: Vec<u32> = tokenize(text)
            .iter()
            .take(max_len)
            .map(|t| vocab.lookup(t))
            .collect();
        let len = seq.len();
        seq.resize(max_len, PAD);
        EncodedField { seq, len }
    }

    /// The tokens that are actually processed (everything before padding).
    pub fn tokens(&self) -> &[u32] {
        &self.seq[..self.len]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedProduct {
    pub product_id: String,
    pub title: EncodedField,
    pub desc: EncodedField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeConfig {
    pub title_len: usize,
    pub desc_len: usize,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        EncodeConfig {
            title_len: DEFAULT_TITLE_LEN,
            desc_len: DEFAULT_DESC_LEN,
        }
    }
}

pub fn encode_product_text(product: &Product, vocab: &Vocabulary, cfg: EncodeConfig) -> Result<EncodedProduct> {
    if cfg.title_len < 1 || cfg.desc_len < 1 {
        return Err(Error::InvalidArgument("sequence lengths must be >= 1".into()));
    }
    let title = EncodedField::encode(&product.title, vocab, cfg.title_len);
    if title.len == 0 {
        return Err(Error::EmptyTitle(product.product_id.clone()));
    }
    Ok(EncodedProduct {
        product_id: product.product_id.clone(),
        title,
        desc: EncodedField::encode(&product.description, vocab, cfg.desc_len),
    })
}

/// Encodes a whole catalog, skipping (and returning) products whose title
/// has no tokens.
pub fn encode_catalog(
    products: &[Product],
    vocab: &Vocabulary,
    cfg: EncodeConfig,
) -> Result<(BTreeMap<String, EncodedProduct>, Vec<String>)> {
    let mut encoded = BTreeMap::new();
    let mut rejected = Vec::new();
    for p in products {
        match encode_product_text(p, vocab, cfg) {
            Ok(e) => {
                encoded.insert(e.product_id.clone(), e);
            }
            Err(Error::EmptyTitle(id)) => {
                log::warn!("product `{id}` has no title tokens; not encoded");
                rejected.push(id);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((encoded, rejected))
}
