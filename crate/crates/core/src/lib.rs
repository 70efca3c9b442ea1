//! Alternative-product recommendation pipeline.
//!
//! Product titles and descriptions are tokenized ([`catalog`]), co-compared
//! product pairs are grouped into connected components and sampled into
//! labelled training pairs ([`compare_graph`]), a Siamese bidirectional LSTM
//! is trained with a cosine contrastive loss ([`neural`]), the single-branch
//! encoder embeds the catalog ([`embedding_store`]) and an HNSW-style graph
//! index serves top-N alternatives above a similarity cutoff ([`ann`]).
//! Two baselines ([`baselines`]) and an offline evaluation harness
//! ([`evalkit`]) complete the picture; [`pipeline`] wires it all together for
//! the `altrec` command line tool.

pub mod ann;
pub mod baselines;
pub mod catalog;
pub mod compare_graph;
mod delimited;
pub mod embedding_store;
mod binfmt;
mod error;
pub mod evalkit;
pub mod fingerprint;
pub mod neural;
pub mod pipeline;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
