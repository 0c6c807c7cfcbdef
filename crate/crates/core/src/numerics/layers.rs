//! Layer primitives with explicit backward passes.
//!
//! Forward calls return the output together with a cache; the matching
//! backward call consumes the cache and the upstream gradient. Nothing is
//! stored on the layer itself, so a parameter set can be shared by several
//! forward passes (e.g. source and target batches through one encoder).

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Affine map `y = W x + b` applied to every row of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayerParams {
    /// `out × in`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Inputs saved by [`LinearLayerParams::forward`].
#[derive(Debug, Clone)]
pub struct LinearCache {
    input: Matrix,
    out_dim: usize,
}

/// Gradients of a linear layer, shape-congruent with [`LinearLayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LinearLayerParams {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::shape(format!(
                "weight has {} output rows but bias has {} entries",
                weight.rows(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Output only, no cache.
    pub fn apply(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "linear layer expects {} input features, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let mut out = input.matmul_transposed(&self.weight)?;
        out.add_row_vector(&self.bias)?;
        Ok(out)
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, LinearCache)> {
        let out = self.apply(input)?;
        let cache = LinearCache {
            input: input.clone(),
            out_dim: self.out_dim(),
        };
        Ok((out, cache))
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &LinearCache, grad_output: &Matrix) -> Result<(LinearGrads, Matrix)> {
        if cache.input.cols() != self.in_dim() || cache.out_dim != self.out_dim() {
            return Err(Error::shape(format!(
                "cache was produced by a {}->{} layer, this layer is {}->{}",
                cache.input.cols(),
                cache.out_dim,
                self.in_dim(),
                self.out_dim()
            )));
        }
        if grad_output.shape() != (cache.input.rows(), self.out_dim()) {
            return Err(Error::shape(format!(
                "grad_output is {}x{}, expected {}x{}",
                grad_output.rows(),
                grad_output.cols(),
                cache.input.rows(),
                self.out_dim()
            )));
        }
        let weight = grad_output.transposed_matmul(&cache.input)?;
        let bias = grad_output.column_sums();
        let grad_input = grad_output.matmul(&self.weight)?;
        Ok((LinearGrads { weight, bias }, grad_input))
    }
}

impl LinearGrads {
    pub fn zeros_like(params: &LinearLayerParams) -> Self {
        Self {
            weight: Matrix::zeros(params.out_dim(), params.in_dim()),
            bias: vec![0.0; params.out_dim()],
        }
    }

    pub fn add_assign(&mut self, other: &LinearGrads) -> Result<()> {
        self.weight.add_assign(&other.weight)?;
        if self.bias.len() != other.bias.len() {
            return Err(Error::shape("bias gradients of different lengths"));
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
        Ok(())
    }
}

/// Mask saved by [`relu_forward`].
#[derive(Debug, Clone)]
pub struct ReluCache {
    active: Vec<bool>,
    shape: (usize, usize),
}

/// Elementwise `max(0, x)`.
pub fn relu_forward(input: &Matrix) -> (Matrix, ReluCache) {
    let out = input.map(|v| v.max(0.0));
    let cache = ReluCache {
        active: input.as_slice().iter().map(|&v| v > 0.0).collect(),
        shape: input.shape(),
    };
    (out, cache)
}

/// Passes the gradient where the cached input was strictly positive. The
/// subgradient at exactly zero is zero.
pub fn relu_backward(cache: &ReluCache, grad_output: &Matrix) -> Result<Matrix> {
    if grad_output.shape() != cache.shape {
        return Err(Error::shape(format!(
            "relu cache is {}x{}, grad is {}x{}",
            cache.shape.0,
            cache.shape.1,
            grad_output.rows(),
            grad_output.cols()
        )));
    }
    let data = grad_output
        .as_slice()
        .iter()
        .zip(&cache.active)
        .map(|(&g, &on)| if on { g } else { 0.0 })
        .collect();
    Matrix::from_vec(cache.shape.0, cache.shape.1, data)
}

/// Row-wise softmax, stabilised by subtracting each row's maximum.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Batch-mean cross-entropy of `softmax(logits)` against integer labels.
///
/// Returns the loss and its gradient `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, classes) = logits.shape();
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows of logits", labels.len())));
    }
    if n == 0 {
        return Err(Error::shape("cross-entropy of an empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::config(format!("label {bad} out of range for {classes} classes")));
    }
    let mut grad = softmax_rows(logits);
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        loss += log_sum - row[y];
        grad[(r, y)] -= 1.0;
    }
    let inv_n = 1.0 / n as f64;
    Ok((loss * inv_n, grad.scale(inv_n)))
}
