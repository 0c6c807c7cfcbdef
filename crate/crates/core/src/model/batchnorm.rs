//! Per-feature batch normalization, used as the norm-balancing baseline in
//! front of each modality's classifier.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    /// Unbiased running estimate; never negative.
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

/// Values saved by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BatchNormState {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::shape(format!(
                "batch norm over {} features applied to {} columns",
                self.dim(),
                x.cols()
            )));
        }
        Ok(())
    }

    /// Normalizes with the batch's own mean and biased variance.
    pub fn forward_train(&self, x: &Matrix) -> Result<(Matrix, BatchNormCache)> {
        self.check(x)?;
        let (n, d) = x.shape();
        if n == 0 {
            return Err(Error::shape("batch norm over an empty batch"));
        }
        let batch_mean: Vec<f64> = x.column_sums().iter().map(|s| s / n as f64).collect();
        let mut batch_var = vec![0.0; d];
        for row in x.iter_rows() {
            for j in 0..d {
                let c = row[j] - batch_mean[j];
                batch_var[j] += c * c;
            }
        }
        batch_var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = batch_var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let normalized = Matrix::from_fn(n, d, |r, c| (x[(r, c)] - batch_mean[c]) * inv_std[c]);
        let out = Matrix::from_fn(n, d, |r, c| self.gamma[c] * normalized[(r, c)] + self.beta[c]);
        Ok((
            out,
            BatchNormCache {
                normalized,
                inv_std,
                batch_mean,
                batch_var,
            },
        ))
    }

    /// Fixed per-feature affine map built from the running statistics.
    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let (scale, shift) = self.eval_affine();
        Ok(Matrix::from_fn(x.rows(), x.cols(), |r, c| {
            scale[c] * x[(r, c)] + shift[c]
        }))
    }

    /// `(scale, shift)` with `eval(x) = scale ⊙ x + shift`.
    pub fn eval_affine(&self) -> (Vec<f64>, Vec<f64>) {
        let scale: Vec<f64> = (0..self.dim())
            .map(|j| self.gamma[j] / (self.running_var[j] + self.epsilon).sqrt())
            .collect();
        let shift = (0..self.dim())
            .map(|j| self.beta[j] - scale[j] * self.running_mean[j])
            .collect();
        (scale, shift)
    }

    pub fn backward(&self, cache: &BatchNormCache, grad: &Matrix) -> Result<(BatchNormGrads, Matrix)> {
        if grad.shape() != cache.normalized.shape() {
            return Err(Error::shape("batch norm gradient does not match cached batch"));
        }
        let (n, d) = grad.shape();
        let mut sum_dy = vec![0.0; d];
        let mut sum_dy_xhat = vec![0.0; d];
        for r in 0..n {
            for j in 0..d {
                sum_dy[j] += grad[(r, j)];
                sum_dy_xhat[j] += grad[(r, j)] * cache.normalized[(r, j)];
            }
        }
        let nf = n as f64;
        let grad_input = Matrix::from_fn(n, d, |r, j| {
            self.gamma[j] * cache.inv_std[j] / nf
                * (nf * grad[(r, j)] - sum_dy[j] - cache.normalized[(r, j)] * sum_dy_xhat[j])
        });
        Ok((
            BatchNormGrads {
                gamma: sum_dy_xhat,
                beta: sum_dy,
            },
            grad_input,
        ))
    }

    /// Exponential moving average toward the statistics of a training batch.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let n = cache.normalized.rows() as f64;
        let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        let m = self.momentum;
        for j in 0..self.dim() {
            self.running_mean[j] = (1.0 - m) * self.running_mean[j] + m * cache.batch_mean[j];
            self.running_var[j] = (1.0 - m) * self.running_var[j] + m * cache.batch_var[j] * correction;
        }
    }
}

impl BatchNormGrads {
    pub fn zeros(dim: usize) -> Self {
        Self {
            gamma: vec![0.0; dim],
            beta: vec![0.0; dim],
        }
    }
}
