//! Standard LSTM cell (sigmoid gates, tanh candidate and output squashing, no
//! peepholes) run in both directions over the unpadded part of a sequence.
//!
//! Gate rows are laid out as `[input | forget | cell | output]`, each
//! `hidden` wide.

use rand::Rng;

use super::tensor::{gemv_acc, gemv_t_acc, outer_acc, Tensor};
use crate::catalog::PAD;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4h x e`
    pub w_input: Tensor,
    /// `4h x h`
    pub w_recurrent: Tensor,
    /// `4h`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn init(embed_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w_input = Tensor::glorot(4 * hidden, embed_dim, rng);
        let w_recurrent = Tensor::glorot(4 * hidden, hidden, rng);
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        LstmParams {
            w_input,
            w_recurrent,
            bias,
        }
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams {
            w_input: self.w_input.zeros_like(),
            w_recurrent: self.w_recurrent.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmLayer {
    pub fn init(embed_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let forward = LstmParams::init(embed_dim, hidden, rng);
        let backward = LstmParams::init(embed_dim, hidden, rng);
        BiLstmLayer { forward, backward }
    }

    pub fn zeros_like(&self) -> Self {
        BiLstmLayer {
            forward: self.forward.zeros_like(),
            backward: self.backward.zeros_like(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
struct Step {
    /// Activated gates `[i | f | g | o]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Everything one direction needs for backpropagation through time.
#[derive(Debug, Clone)]
pub struct DirectionTrace {
    tokens: Vec<u32>,
    steps: Vec<Step>,
}

impl DirectionTrace {
    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().expect("traces are never empty").h
    }
}

fn check_tokens(tokens: &[u32], embedding: &Tensor) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("cannot encode an empty sequence".into()));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t as usize >= embedding.rows()) {
        return Err(Error::InvalidArgument(format!(
            "token index {t} outside vocabulary of size {}",
            embedding.rows()
        )));
    }
    Ok(())
}

/// Runs one direction over `tokens` in the given order, from a zero state.
pub fn run_direction(params: &LstmParams, embedding: &Tensor, tokens: Vec<u32>) -> DirectionTrace {
    let h = params.hidden();
    let mut steps: Vec<Step> = Vec::with_capacity(tokens.len());
    let zeros = vec![0.0; h];
    for &token in &tokens {
        let (h_prev, c_prev) = match steps.last() {
            Some(s) => (&s.h, &s.c),
            None => (&zeros, &zeros),
        };
        let mut z = params.bias.data().to_vec();
        gemv_acc(&params.w_input, embedding.row(token as usize), &mut z);
        gemv_acc(&params.w_recurrent, h_prev, &mut z);

        let mut gates = z;
        for (k, v) in gates.iter_mut().enumerate() {
            *v = if (2 * h..3 * h).contains(&k) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        let (i, f, g, o) = (&gates[..h], &gates[h..2 * h], &gates[2 * h..3 * h], &gates[3 * h..]);
        let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let hv: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
        steps.push(Step {
            gates,
            c,
            tanh_c,
            h: hv,
        });
    }
    DirectionTrace { tokens, steps }
}

/// Backpropagates `d_final` (gradient w.r.t. the last hidden state) through
/// the whole trace, accumulating into `grads` and the embedding gradient.
pub fn backprop_direction(
    params: &LstmParams,
    trace: &DirectionTrace,
    d_final: &[f64],
    grads: &mut LstmParams,
    embedding: &Tensor,
    d_embedding: &mut Tensor,
) {
    let h = params.hidden();
    let zeros = vec![0.0; h];
    let mut dh = d_final.to_vec();
    let mut dc = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];

    for t in (0..trace.steps.len()).rev() {
        let s = &trace.steps[t];
        let (h_prev, c_prev) = if t > 0 {
            (&trace.steps[t - 1].h[..], &trace.steps[t - 1].c[..])
        } else {
            (&zeros[..], &zeros[..])
        };
        let (i, f, g, o) = (&s.gates[..h], &s.gates[h..2 * h], &s.gates[2 * h..3 * h], &s.gates[3 * h..]);
        for k in 0..h {
            let d_o = dh[k] * s.tanh_c[k];
            dc[k] += dh[k] * o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            da[k] = dc[k] * g[k] * i[k] * (1.0 - i[k]);
            da[h + k] = dc[k] * c_prev[k] * f[k] * (1.0 - f[k]);
            da[2 * h + k] = dc[k] * i[k] * (1.0 - g[k] * g[k]);
            da[3 * h + k] = d_o * o[k] * (1.0 - o[k]);
            dc[k] *= f[k];
        }

        let token = trace.tokens[t] as usize;
        for (b, d) in grads.bias.data_mut().iter_mut().zip(&da) {
            *b += d;
        }
        outer_acc(&mut grads.w_input, &da, embedding.row(token));
        outer_acc(&mut grads.w_recurrent, &da, h_prev);
        if token != PAD as usize {
            gemv_t_acc(&params.w_input, &da, d_embedding.row_mut(token));
        }
        dh.fill(0.0);
        gemv_t_acc(&params.w_recurrent, &da, &mut dh);
    }
}

/// Forward and backward traces over one text field.
#[derive(Debug, Clone)]
pub struct BiTrace {
    pub forward: DirectionTrace,
    pub backward: DirectionTrace,
}

impl BiTrace {
    /// `forward_final ⊕ backward_final`
    pub fn output(&self) -> Vec<f64> {
        let mut out = self.forward.final_hidden().to_vec();
        out.extend_from_slice(self.backward.final_hidden());
        out
    }
}

/// Encodes the unpadded `tokens` with both directions.
pub fn bilstm_trace(tokens: &[u32], embedding: &Tensor, layer: &BiLstmLayer) -> Result<BiTrace> {
    check_tokens(tokens, embedding)?;
    let forward = run_direction(&layer.forward, embedding, tokens.to_vec());
    let backward = run_direction(&layer.backward, embedding, tokens.iter().rev().copied().collect());
    Ok(BiTrace { forward, backward })
}

/// Returns `h_forward_final ⊕ h_backward_final` (length `2h`).
pub fn bilstm_encode(tokens: &[u32], embedding: &Tensor, layer: &BiLstmLayer) -> Result<Vec<f64>> {
    Ok(bilstm_trace(tokens, embedding, layer)?.output())
}

pub fn bilstm_backprop(
    layer: &BiLstmLayer,
    trace: &BiTrace,
    d_output: &[f64],
    grads: &mut BiLstmLayer,
    embedding: &Tensor,
    d_embedding: &mut Tensor,
) {
    let h = layer.hidden();
    backprop_direction(&layer.forward, &trace.forward, &d_output[..h], &mut grads.forward, embedding, d_embedding);
    backprop_direction(&layer.backward, &trace.backward, &d_output[h..], &mut grads.backward, embedding, d_embedding);
}
