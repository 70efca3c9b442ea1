use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lstm::{bilstm_backprop, bilstm_trace, BiLstmLayer, BiTrace};
use super::tensor::Tensor;
use crate::catalog::{EncodedProduct, PAD};
use crate::{Error, Result};

pub const DEFAULT_EMBED_DIM: usize = 32;
pub const DEFAULT_HIDDEN_DIM: usize = 32;

/// The shared projection of both Siamese branches: one token embedding
/// table, a bidirectional encoder per text field, and the two-scalar head
/// used only by the cross-entropy loss.
///
/// Both branches call into the same instance, so weight sharing is a
/// property of the call graph rather than of copied tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseModel {
    /// `vocab x e`; row 0 (PAD) is zero and never updated.
    pub embedding: Tensor,
    pub title: BiLstmLayer,
    pub desc: BiLstmLayer,
    /// `[scale, bias]` of the cross-entropy head.
    pub head: Tensor,
}

/// A gradient set or optimizer accumulator: same layout as the model.
pub type Gradients = SiameseModel;

pub(crate) const TENSOR_NAMES: [&str; 14] = [
    "embedding",
    "title.forward.w_input",
    "title.forward.w_recurrent",
    "title.forward.bias",
    "title.backward.w_input",
    "title.backward.w_recurrent",
    "title.backward.bias",
    "desc.forward.w_input",
    "desc.forward.w_recurrent",
    "desc.forward.bias",
    "desc.backward.w_input",
    "desc.backward.w_recurrent",
    "desc.backward.bias",
    "head",
];

/// Weights are Glorot-uniform per matrix, forget-gate biases 1, other biases
/// 0, the PAD embedding row 0. Deterministic in `seed`.
pub fn init_model(vocab_size: usize, embed_dim: usize, hidden_dim: usize, seed: u64) -> Result<SiameseModel> {
    if vocab_size < 1 || embed_dim < 1 || hidden_dim < 1 {
        return Err(Error::InvalidArgument("model dimensions must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut embedding = Tensor::glorot(vocab_size, embed_dim, &mut rng);
    embedding.row_mut(PAD as usize).fill(0.0);
    let title = BiLstmLayer::init(embed_dim, hidden_dim, &mut rng);
    let desc = BiLstmLayer::init(embed_dim, hidden_dim, &mut rng);
    let head = Tensor::from_vec(&[2], vec![1.0, 0.0])?;
    Ok(SiameseModel {
        embedding,
        title,
        desc,
        head,
    })
}

impl SiameseModel {
    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.title.hidden()
    }

    /// Dimension of a product vector: title `2h` plus description `2h`.
    pub fn output_dim(&self) -> usize {
        4 * self.hidden_dim()
    }

    pub fn zeros_like(&self) -> Self {
        SiameseModel {
            embedding: self.embedding.zeros_like(),
            title: self.title.zeros_like(),
            desc: self.desc.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 14] {
        let (t, d) = (&self.title, &self.desc);
        [
            &self.embedding,
            &t.forward.w_input,
            &t.forward.w_recurrent,
            &t.forward.bias,
            &t.backward.w_input,
            &t.backward.w_recurrent,
            &t.backward.bias,
            &d.forward.w_input,
            &d.forward.w_recurrent,
            &d.forward.bias,
            &d.backward.w_input,
            &d.backward.w_recurrent,
            &d.backward.bias,
            &self.head,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 14] {
        let (t, d) = (&mut self.title, &mut self.desc);
        [
            &mut self.embedding,
            &mut t.forward.w_input,
            &mut t.forward.w_recurrent,
            &mut t.forward.bias,
            &mut t.backward.w_input,
            &mut t.backward.w_recurrent,
            &mut t.backward.bias,
            &mut d.forward.w_input,
            &mut d.forward.w_recurrent,
            &mut d.forward.bias,
            &mut d.backward.w_input,
            &mut d.backward.w_recurrent,
            &mut d.backward.bias,
            &mut self.head,
        ]
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        TENSOR_NAMES.into_iter().zip(self.tensors())
    }

    pub fn add_assign(&mut self, other: &SiameseModel) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.scale(k);
        }
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.named_tensors().find(|(_, t)| !t.all_finite()).map(|(n, _)| n)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Forward state of one product through the encoder.
#[derive(Debug, Clone)]
pub(crate) struct ProductTrace {
    title: BiTrace,
    desc: Option<BiTrace>,
    pub output: Vec<f64>,
}

pub(crate) fn trace_product(p: &EncodedProduct, model: &SiameseModel) -> Result<ProductTrace> {
    let title = bilstm_trace(p.title.tokens(), &model.embedding, &model.title)?;
    let mut output = title.output();
    // An empty description contributes the zero initial state.
    let desc = if p.desc.len == 0 {
        output.extend(std::iter::repeat_n(0.0, 2 * model.hidden_dim()));
        None
    } else {
        let d = bilstm_trace(p.desc.tokens(), &model.embedding, &model.desc)?;
        output.extend(d.output());
        Some(d)
    };
    Ok(ProductTrace { title, desc, output })
}

pub(crate) fn backprop_product(trace: &ProductTrace, d_output: &[f64], model: &SiameseModel, grads: &mut Gradients) {
    let two_h = 2 * model.hidden_dim();
    bilstm_backprop(
        &model.title,
        &trace.title,
        &d_output[..two_h],
        &mut grads.title,
        &model.embedding,
        &mut grads.embedding,
    );
    if let Some(desc) = &trace.desc {
        bilstm_backprop(
            &model.desc,
            desc,
            &d_output[two_h..],
            &mut grads.desc,
            &model.embedding,
            &mut grads.embedding,
        );
    }
}

/// `title_forward ⊕ title_backward ⊕ desc_forward ⊕ desc_backward`, each the
/// final hidden state of its direction.
pub fn encode_product(p: &EncodedProduct, model: &SiameseModel) -> Result<Vec<f64>> {
    Ok(trace_product(p, model)?.output)
}
