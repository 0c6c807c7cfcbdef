//! Dense linear algebra, layers, optimizer and the gradient oracle.

mod gradcheck;
mod layers;
mod matrix;
mod optim;

pub use gradcheck::{finite_difference_grad, relative_error};
pub use layers::{
    relu_backward, relu_forward, softmax_cross_entropy, softmax_rows, LinearCache, LinearGrads, LinearLayerParams,
    ReluCache,
};
pub(crate) use matrix::dot;
pub use matrix::Matrix;
pub use optim::{ParamSet, Sgd, SgdConfig};

/// Euclidean norm; zero for the zero vector.
pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Index of the largest entry, ties resolved toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
