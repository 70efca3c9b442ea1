//! Batch loss and its reverse-mode gradient through cosine energy and both
//! bidirectional encoders.

use super::loss::{bce_grad, bce_loss, contrastive_grad, contrastive_loss, cosine_energy, cosine_grad, ExactSum, LossKind};
use super::model::{backprop_product, trace_product, Gradients, SiameseModel};
use crate::catalog::{EncodedProduct, PAD};
use crate::{Error, Result};

/// One labelled pair fed through both Siamese branches.
#[derive(Debug, Clone, Copy)]
pub struct PairExample<'a> {
    pub anchor: &'a EncodedProduct,
    pub other: &'a EncodedProduct,
    pub label: u8,
}

fn energy_for(a: &[f64], b: &[f64], ids: (&str, &str)) -> Result<f64> {
    cosine_energy(a, b).map_err(|e| match e {
        Error::ZeroNorm(_) => {
            let id = if a.iter().all(|&x| x == 0.0) { ids.0 } else { ids.1 };
            Error::ZeroNorm(Some(id.to_string()))
        }
        other => other,
    })
}

pub fn instance_loss(e_w: f64, label: u8, kind: LossKind, model: &SiameseModel) -> f64 {
    match kind {
        LossKind::Contrastive => contrastive_loss(e_w, label),
        LossKind::BinaryCrossEntropy => {
            let h = model.head.data();
            bce_loss(e_w, label, h[0], h[1])
        }
    }
}

/// Per-pair energies for a batch, in batch order.
pub fn batch_energies(batch: &[PairExample<'_>], model: &SiameseModel) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|ex| {
            let u = trace_product(ex.anchor, model)?.output;
            let v = trace_product(ex.other, model)?.output;
            energy_for(&u, &v, (&ex.anchor.product_id, &ex.other.product_id))
        })
        .collect()
}

/// Exact (order-free) sum of instance losses over the batch.
pub fn batch_loss_sum(batch: &[PairExample<'_>], model: &SiameseModel, kind: LossKind) -> Result<ExactSum> {
    let energies = batch_energies(batch, model)?;
    Ok(batch
        .iter()
        .zip(energies)
        .map(|(ex, e)| instance_loss(e, ex.label, kind, model))
        .collect())
}

/// Sum of instance losses over the batch, correctly rounded.
pub fn batch_loss(batch: &[PairExample<'_>], model: &SiameseModel, kind: LossKind) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(batch_loss_sum(batch, model, kind)?.value())
}

/// Gradient of [`batch_loss`] with respect to every parameter, plus the loss.
///
/// At `E = 1` for positives and `E = 0` for negatives the contrastive loss
/// has a kink; the subgradient used there is 0. The PAD embedding row always
/// gets a zero gradient.
pub fn compute_gradients(batch: &[PairExample<'_>], model: &SiameseModel, kind: LossKind) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grads = model.zeros_like();
    let mut total = ExactSum::new();
    for ex in batch {
        let ta = trace_product(ex.anchor, model)?;
        let tb = trace_product(ex.other, model)?;
        let e = energy_for(&ta.output, &tb.output, (&ex.anchor.product_id, &ex.other.product_id))?;
        total.add(instance_loss(e, ex.label, kind, model));

        let d_energy = match kind {
            LossKind::Contrastive => contrastive_grad(e, ex.label),
            LossKind::BinaryCrossEntropy => {
                let h = model.head.data();
                let (d_e, d_scale, d_bias) = bce_grad(e, ex.label, h[0], h[1]);
                let gh = grads.head.data_mut();
                gh[0] += d_scale;
                gh[1] += d_bias;
                d_e
            }
        };
        if d_energy == 0.0 {
            continue;
        }
        let (_, du, dv) = cosine_grad(&ta.output, &tb.output);
        let du: Vec<f64> = du.into_iter().map(|g| g * d_energy).collect();
        let dv: Vec<f64> = dv.into_iter().map(|g| g * d_energy).collect();
        backprop_product(&ta, &du, model, &mut grads);
        backprop_product(&tb, &dv, model, &mut grads);
    }
    grads.embedding.row_mut(PAD as usize).fill(0.0);
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::Numerical(name.to_string()));
    }
    Ok((total.value(), grads))
}
