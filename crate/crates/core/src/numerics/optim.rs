//! Stochastic gradient descent with momentum and L2 weight decay.

use crate::error::{Error, Result};

/// A collection of parameter tensors visited in a fixed declaration order.
///
/// Gradient containers implement the same trait with the same order, which is
/// what makes a parameter set and its gradients shape-congruent.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl ParamSet for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "sgd needs lr >= 0, momentum in [0, 1), weight_decay >= 0; got {self:?}"
            )))
        }
    }
}

/// SGD with heavy-ball momentum:
///
/// ```text
/// v ← momentum·v + grad + weight_decay·param
/// param ← param − lr·v
/// ```
///
/// Velocity buffers are created on the first step and must stay congruent
/// with the parameter set afterwards.
#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            velocity: Vec::new(),
        }
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies one update. Nothing is modified if the shapes disagree or any
    /// gradient entry is non-finite.
    pub fn step<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: ParamSet + ?Sized,
        G: ParamSet + ?Sized,
    {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() {
            return Err(Error::shape(format!(
                "{} gradient tensors for {} parameter tensors",
                grads.len(),
                params.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::shape(format!(
                    "tensor {i}: parameter has {} entries, gradient {}",
                    p.len(),
                    g.len()
                )));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient tensor {i} entry {j} is {}", g[j])));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
        } else if self.velocity.len() != params.len()
            || self.velocity.iter().zip(&params).any(|(v, p)| v.len() != p.len())
        {
            return Err(Error::shape("parameter set changed shape between optimizer steps"));
        }

        let SgdConfig {
            learning_rate,
            momentum,
            weight_decay,
        } = self.config;
        for ((p, g), v) in params.iter_mut().zip(&grads).zip(&mut self.velocity) {
            for ((pj, gj), vj) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vj = momentum * *vj + gj + weight_decay * *pj;
                *pj -= learning_rate * *vj;
            }
        }
        Ok(())
    }
}
