//! Relative norm alignment for two-stream audio-visual classifiers.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: a small dense matrix type, linear/ReLU layers with
//!   hand-written backward passes, softmax cross-entropy, SGD with momentum
//!   and a central finite-difference gradient oracle.
//! - [`losses`]: the cross-modal feature-norm losses (relative norm
//!   alignment, its source/target split, hard norm alignment) together with
//!   the cosine alignment and orthogonality baselines.
//! - [`model`]: the two-stream network (per-modality encoders and
//!   classifiers, late or mid fusion, optional batch normalization) and its
//!   binary checkpoint format.
//! - [`data`]: the synthetic domain-shifted benchmark, domain-generalization
//!   and adaptation splits, and the `RNAFEAT v1` feature file format.
//! - [`training`]: training loops, evaluation, checkpoint-score averaging,
//!   norm telemetry and the experiment matrix.
//!
//! All arithmetic is `f64` and every public result is deterministic given its
//! inputs and seed.

pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
