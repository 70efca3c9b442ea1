//! Single-branch encoder export and the persisted product embedding store.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic    8 bytes   "ALTREMB1"
//! version  u32       1
//! dim      u64
//! count    u64
//! model    32 bytes  fingerprint of the checkpoint that produced the vectors
//! records  count x { id: u32 len + utf-8, dim x f64 }   sorted by id
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::delimited::CsvText;
use crate::binfmt::{Reader, Writer};
use crate::catalog::EncodedProduct;
use crate::fingerprint::Fingerprint;
use crate::neural::model::{encode_product, SiameseModel};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ALTREMB1";
const VERSION: u32 = 1;

/// One branch of the Siamese network: the encoder without the pair head.
/// Borrows the model's weights; nothing is copied.
#[derive(Debug, Clone, Copy)]
pub struct Encoder<'a> {
    model: &'a SiameseModel,
    fingerprint: Fingerprint,
}

pub fn export_encoder(model: &SiameseModel) -> Encoder<'_> {
    Encoder {
        model,
        fingerprint: Fingerprint::default(),
    }
}

impl<'a> Encoder<'a> {
    /// Tags the encoder with the checkpoint it was loaded from.
    pub fn with_fingerprint(self, fingerprint: Fingerprint) -> Self {
        Encoder { fingerprint, ..self }
    }

    pub fn dim(&self) -> usize {
        self.model.output_dim()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn encode(&self, product: &EncodedProduct) -> Result<Vec<f64>> {
        encode_product(product, self.model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
    model_fingerprint: Fingerprint,
}

fn check_vector(id: &str, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical(format!("embedding of `{id}`")));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroNorm(Some(id.to_string())));
    }
    Ok(())
}

impl EmbeddingStore {
    pub fn new(dim: usize, model_fingerprint: Fingerprint) -> Self {
        EmbeddingStore {
            dim,
            entries: BTreeMap::new(),
            model_fingerprint,
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        check_vector(&id, &vector, self.dim)?;
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.entries.insert(id, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn model_fingerprint(&self) -> Fingerprint {
        self.model_fingerprint
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u64(self.dim as u64);
        w.u64(self.entries.len() as u64);
        w.fingerprint(&self.model_fingerprint);
        for (id, v) in &self.entries {
            w.str(id);
            w.f64s(v);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "embedding store");
        r.expect_magic(MAGIC, VERSION)?;
        let dim = r.usize()?;
        let count = r.usize()?;
        let mut store = EmbeddingStore::new(dim, r.fingerprint()?);
        for _ in 0..count {
            let id = r.str()?;
            let v = r.f64s(dim)?;
            store.insert(id, v)?;
        }
        r.finish()?;
        Ok(store)
    }

    /// Fingerprint of the serialized store; this is what indexes record.
    pub fn content_fingerprint(&self) -> Fingerprint {
        Fingerprint::of_bytes(&self.to_bytes())
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

    /// Loads a store and checks it was generated by the checkpoint with
    /// fingerprint `model`.
    pub fn load_for_model(path: &Path, model: Fingerprint) -> Result<Self> {
        let store = Self::load(path)?;
        if store.model_fingerprint != model {
            return Err(Error::StaleArtifact {
                path: path.to_path_buf(),
                reason: format!(
                    "generated by model {}, current model is {}",
                    store.model_fingerprint.short(),
                    model.short()
                ),
            });
        }
        Ok(store)
    }

    /// One `id,v1,v2,...` line per product, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut w = CsvText::headless();
        for (id, v) in &self.entries {
            w.row(std::iter::once(id.clone()).chain(v.iter().map(|x| format!("{x:.16e}"))));
        }
        w.finish()
    }
}

/// Embeds every product with `encoder`. Rejects duplicate ids and products
/// that map to the zero vector.
pub fn generate_embeddings<'p>(
    encoder: &Encoder<'_>,
    products: impl IntoIterator<Item = &'p EncodedProduct>,
    progress_every: usize,
) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(encoder.dim(), encoder.fingerprint());
    for p in products {
        let v = encoder.encode(p)?;
        store.insert(p.product_id.clone(), v)?;
        if progress_every > 0 && store.len().is_multiple_of(progress_every) {
            log::info!("embedded {} products", store.len());
        }
    }
    if store.is_empty() {
        return Err(Error::InvalidArgument("no products to embed".into()));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_vocabulary, encode_product_text, EncodeConfig, Product};
    use crate::neural::init_model;

    fn encoded() -> Vec<EncodedProduct> {
        let products = vec![
            Product::new("b", "cordless drill kit", "two batteries"),
            Product::new("a", "air compressor", "cast iron pump"),
            Product::new("c", "cordless drill", ""),
        ];
        let vocab = build_vocabulary(&products, 1).unwrap();
        products
            .iter()
            .map(|p| encode_product_text(p, &vocab, EncodeConfig::default()).unwrap())
            .collect()
    }

    #[test]
    fn encoder_matches_model() {
        let m = init_model(20, 4, 3, 1).unwrap();
        let enc = export_encoder(&m);
        assert_eq!(enc.dim(), 12);
        for p in encoded() {
            assert_eq!(enc.encode(&p).unwrap(), encode_product(&p, &m).unwrap());
            assert_eq!(export_encoder(&m).encode(&p).unwrap(), enc.encode(&p).unwrap());
        }
    }

    #[test]
    fn generate_and_round_trip() {
        let m = init_model(20, 4, 3, 1).unwrap();
        let fp = Fingerprint::of_bytes(b"model");
        let products = encoded();
        let enc = export_encoder(&m).with_fingerprint(fp);
        let store = generate_embeddings(&enc, &products, 0).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.ids().collect::<Vec<_>>(), ["a", "b", "c"]);
        assert_eq!(store, generate_embeddings(&enc, &products, 0).unwrap());

        let back = EmbeddingStore::from_bytes(&store.to_bytes()).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_bytes(), store.to_bytes());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        store.save(&path).unwrap();
        assert!(EmbeddingStore::load_for_model(&path, fp).is_ok());
        assert!(matches!(
            EmbeddingStore::load_for_model(&path, Fingerprint::default()),
            Err(Error::StaleArtifact { .. })
        ));

        let dup = [products[0].clone(), products[0].clone()];
        assert!(matches!(generate_embeddings(&enc, &dup, 0), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn zero_vectors_are_rejected() {
        let mut store = EmbeddingStore::new(2, Fingerprint::default());
        assert!(matches!(store.insert("z", vec![0.0, 0.0]), Err(Error::ZeroNorm(Some(id))) if id == "z"));
        assert!(store.insert("n", vec![f64::NAN, 1.0]).is_err());
        assert!(store.insert("short", vec![1.0]).is_err());
    }

    #[test]
    fn text_export_has_seventeen_digits() {
        let mut store = EmbeddingStore::new(2, Fingerprint::default());
        store.insert("x", vec![0.1, -2.0]).unwrap();
        let text = store.to_text();
        assert_eq!(text, "x,1.0000000000000001e-1,-2.0000000000000000e0\n");
        let parsed: Vec<f64> = text.trim().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert_eq!(parsed, [0.1, -2.0]);
    }
}
