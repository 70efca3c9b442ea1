//! Model checkpoint file.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     8 bytes   "ALTRCKPT"
//! version   u32       1
//! vocab     u64       vocabulary size
//! embed     u64       embedding width
//! hidden    u64       hidden width per direction
//! vocab_fp  32 bytes  SHA-256 of the vocabulary text
//! count     u32       number of tensors (14)
//! tensors   count x { name: u32 len + utf-8, rank: u8, dims: rank x u64, values: f64... }
//! ```
//!
//! Tensors appear in a fixed order, so save -> load -> save is byte-identical.

use std::path::Path;

use super::model::{SiameseModel, TENSOR_NAMES};
use super::tensor::Tensor;
use crate::binfmt::{Reader, Writer};
use crate::fingerprint::Fingerprint;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ALTRCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SiameseModel,
    pub vocab_fingerprint: Fingerprint,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.u64(m.vocab_size() as u64);
        w.u64(m.embed_dim() as u64);
        w.u64(m.hidden_dim() as u64);
        w.fingerprint(&self.vocab_fingerprint);
        w.u32(TENSOR_NAMES.len() as u32);
        for (name, t) in m.named_tensors() {
            w.str(name);
            w.u8(t.shape().len() as u8);
            for &d in t.shape() {
                w.u64(d as u64);
            }
            w.f64s(t.data());
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        r.expect_magic(MAGIC, VERSION)?;
        let (vocab, embed, hidden) = (r.usize()?, r.usize()?, r.usize()?);
        let vocab_fingerprint = r.fingerprint()?;
        if r.u32()? as usize != TENSOR_NAMES.len() {
            return Err(r.err("unexpected tensor count"));
        }
        // Start from a correctly shaped model and overwrite every tensor.
        let mut model = super::model::init_model(vocab.max(1), embed.max(1), hidden.max(1), 0)?;
        for (expected, slot) in TENSOR_NAMES.iter().zip(model.tensors_mut()) {
            let name = r.str()?;
            if name != *expected {
                return Err(r.err(format!("expected tensor `{expected}`, found `{name}`")));
            }
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            if dims != slot.shape() {
                return Err(r.err(format!("tensor `{name}` has shape {dims:?}, expected {:?}", slot.shape())));
            }
            let n = slot.len();
            *slot = Tensor::from_vec(&dims, r.f64s(n)?)?;
        }
        r.finish()?;
        Ok(Checkpoint {
            model,
            vocab_fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<Fingerprint> {
        let bytes = self.to_bytes();
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(Fingerprint::of_bytes(&bytes))
    }

    /// Loads a checkpoint and returns it with the fingerprint of its bytes.
    pub fn load(path: &Path) -> Result<(Self, Fingerprint)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_bytes(&bytes)?, Fingerprint::of_bytes(&bytes)))
    }
}
