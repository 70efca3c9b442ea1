//! Cosine energy, the two per-pair losses and an exactly rounded summation
//! used for batch totals.

use std::fmt;
use std::str::FromStr;

use super::tensor::dot;
use crate::{Error, Result};

/// Per-pair loss applied to the cosine energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `|1 - E|` for alternatives, `max(E, 0)` for non-alternatives.
    #[default]
    Contrastive,
    /// Cross-entropy of `sigmoid(scale * E + bias)` against the label, with
    /// `scale` and `bias` learned.
    BinaryCrossEntropy,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Contrastive => "contrastive",
            LossKind::BinaryCrossEntropy => "binary_cross_entropy",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contrastive" => Ok(LossKind::Contrastive),
            "binary_cross_entropy" | "bce" => Ok(LossKind::BinaryCrossEntropy),
            other => Err(Error::InvalidArgument(format!("unknown loss kind `{other}`"))),
        }
    }
}

/// Cosine similarity from precomputed squared norms, clamped to `[-1, 1]`.
///
/// `sqrt(uu * vv)` rather than `sqrt(uu) * sqrt(vv)` so that `u == v` gives
/// exactly 1.
pub fn cosine_from_parts(uv: f64, uu: f64, vv: f64) -> f64 {
    (uv / (uu * vv).sqrt()).clamp(-1.0, 1.0)
}

/// Cosine energy `<u, v> / (|u| |v|)`.
pub fn cosine_energy(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::ZeroNorm(None));
    }
    Ok(cosine_from_parts(dot(u, v), uu, vv))
}

/// Gradients of the cosine energy with respect to both inputs.
pub(crate) fn cosine_grad(u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (uu, vv, uv) = (dot(u, u), dot(v, v), dot(u, v));
    let e = cosine_from_parts(uv, uu, vv);
    let inv = 1.0 / (uu * vv).sqrt();
    let du = u.iter().zip(v).map(|(a, b)| b * inv - e * a / uu).collect();
    let dv = u.iter().zip(v).map(|(a, b)| a * inv - e * b / vv).collect();
    (e, du, dv)
}

/// Contrastive instance loss: `|1 - E|` when `label = 1`; `|E|` when
/// `label = 0` and `E > 0`, else 0.
pub fn contrastive_loss(e_w: f64, label: u8) -> f64 {
    if label == 1 {
        (1.0 - e_w).abs()
    } else if e_w > 0.0 {
        e_w.abs()
    } else {
        0.0
    }
}

/// `d loss / d E`, taking 0 on the flat side of each kink.
pub(crate) fn contrastive_grad(e_w: f64, label: u8) -> f64 {
    if label == 1 {
        if e_w < 1.0 {
            -1.0
        } else {
            0.0
        }
    } else if e_w > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Cross-entropy of `sigmoid(scale * E + bias)` against `label`.
pub fn bce_loss(e_w: f64, label: u8, scale: f64, bias: f64) -> f64 {
    let z = scale * e_w + bias;
    softplus(z) - f64::from(label) * z
}

/// `(d/dE, d/dscale, d/dbias)` of [`bce_loss`].
pub(crate) fn bce_grad(e_w: f64, label: u8, scale: f64, bias: f64) -> (f64, f64, f64) {
    let dz = sigmoid(scale * e_w + bias) - f64::from(label);
    (dz * scale, dz * e_w, dz)
}

/// Exactly rounded floating-point sum (Shewchuk partials).
///
/// The represented value is the exact real sum of everything added, so
/// totals do not depend on order or grouping and merging two sums is exact.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    /// The exact sum rounded to nearest, ties to even.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        iter.into_iter().for_each(|x| s.add(x));
        s
    }
}
