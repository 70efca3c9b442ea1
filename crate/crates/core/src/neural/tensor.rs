use rand::Rng;

use crate::{Error, Result};

/// Dense row-major `f64` tensor. Only rank 1 and rank 2 are used.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DimMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Glorot-style uniform init on `[-s, s]`, `s = sqrt(6 / (rows + cols))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-s..=s)).collect();
        Tensor {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }
}

/// `out += m * x` for a row-major `m`.
pub(crate) fn gemv_acc(m: &Tensor, x: &[f64], out: &mut [f64]) {
    let cols = m.cols();
    debug_assert_eq!(cols, x.len());
    for (o, row) in out.iter_mut().zip(m.data.chunks_exact(cols)) {
        *o += dot(row, x);
    }
}

/// `out += mᵀ * y`.
pub(crate) fn gemv_t_acc(m: &Tensor, y: &[f64], out: &mut [f64]) {
    let cols = m.cols();
    for (&yr, row) in y.iter().zip(m.data.chunks_exact(cols)) {
        if yr != 0.0 {
            for (o, w) in out.iter_mut().zip(row) {
                *o += yr * w;
            }
        }
    }
}

/// `m += y ⊗ x`.
pub(crate) fn outer_acc(m: &mut Tensor, y: &[f64], x: &[f64]) {
    let cols = m.cols();
    for (&yr, row) in y.iter().zip(m.data.chunks_exact_mut(cols)) {
        if yr != 0.0 {
            for (w, xv) in row.iter_mut().zip(x) {
                *w += yr * xv;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
