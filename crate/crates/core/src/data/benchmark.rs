//! Synthetic multimodal benchmark with controlled domain shift.
//!
//! Every class owns one visual and one audio prototype, shared by all
//! domains. A domain distorts each modality with its own rotation (a product
//! of random plane rotations whose angles are scaled by the modality's
//! transform strength) and offset, then adds isotropic noise:
//!
//! ```text
//! x = Q_d^m · μ_c^m + b_d^m + N(0, σ_m²)
//! ```
//!
//! Audio samples are finally multiplied by `audio_norm_scale` (times an
//! optional per-domain gain), which changes their norms and nothing else.
//! By default audio is the noisier modality, so the stream with the larger
//! norm is the less informative one.

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Domain, MultiModalBatch};
use crate::error::{Error, Result};
use crate::numerics::{l2_norm, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub num_domains: usize,
    pub num_classes: usize,
    pub visual_dim: usize,
    pub audio_dim: usize,
    /// Per class, per domain, before the train/test partition.
    pub samples_per_class: usize,
    /// Radius of the sphere the class prototypes are drawn on.
    pub prototype_scale: f64,
    /// Visual shift strength: 0 leaves every domain identical, 1 applies
    /// full random rotations.
    pub transform_strength: f64,
    /// Norm of each domain offset at `transform_strength = 1`.
    pub bias_scale: f64,
    /// Per-coordinate noise of visual samples.
    pub noise_sigma: f64,
    /// Per-coordinate noise of audio samples, before scaling.
    pub audio_noise_sigma: f64,
    /// Rotation/offset strength of the audio shift; `transform_strength`
    /// governs the visual one.
    pub audio_transform_strength: f64,
    /// Multiplier applied to every audio input (norm imbalance).
    pub audio_norm_scale: f64,
    /// Each domain further multiplies its audio by `exp(u)`, `u` uniform in
    /// `±audio_gain_jitter` (per-environment recording gain).
    pub audio_gain_jitter: f64,
    pub train_fraction: f64,
    /// In `[0, 1)`: each (domain, class) keeps a random fraction of up to
    /// this much fewer samples. 0 means balanced.
    pub class_skew: f64,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            num_domains: 3,
            num_classes: 8,
            visual_dim: 16,
            audio_dim: 16,
            samples_per_class: 60,
            prototype_scale: 1.0,
            transform_strength: 0.15,
            bias_scale: 0.5,
            noise_sigma: 0.15,
            audio_noise_sigma: 0.4,
            audio_transform_strength: 0.15,
            audio_norm_scale: 10.0,
            audio_gain_jitter: 0.0,
            train_fraction: 0.7,
            class_skew: 0.0,
            seed: 7,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.num_domains < 2 {
            return fail(format!("num_domains must be at least 2, got {}", self.num_domains));
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if self.visual_dim == 0 || self.audio_dim == 0 {
            return fail("input dimensions must be positive".into());
        }
        if self.samples_per_class < 2 {
            return fail("samples_per_class must be at least 2".into());
        }
        let finite_nonneg = [
            ("prototype_scale", self.prototype_scale),
            ("transform_strength", self.transform_strength),
            ("bias_scale", self.bias_scale),
            ("noise_sigma", self.noise_sigma),
            ("audio_noise_sigma", self.audio_noise_sigma),
            ("audio_transform_strength", self.audio_transform_strength),
            ("audio_gain_jitter", self.audio_gain_jitter),
        ];
        for (name, v) in finite_nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.audio_norm_scale.is_finite() && self.audio_norm_scale > 0.0) {
            return fail(format!(
                "audio_norm_scale must be positive, got {}",
                self.audio_norm_scale
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.class_skew) {
            return fail(format!("class_skew must lie in [0, 1), got {}", self.class_skew));
        }
        Ok(())
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn on_sphere(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v = gaussian_vector(rng, dim);
        let n = l2_norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x * radius / n).collect();
        }
    }
}

/// Product of `2·dim` plane rotations on random coordinate pairs with angles
/// uniform in `±π·strength`. Exactly the identity at strength 0.
fn random_rotation(rng: &mut ChaCha8Rng, dim: usize, strength: f64) -> Matrix {
    let mut q = Matrix::identity(dim);
    if dim < 2 {
        return q;
    }
    let axis = Uniform::new(0, dim).expect("dim >= 2");
    let angle = Uniform::new_inclusive(-std::f64::consts::PI, std::f64::consts::PI).expect("finite");
    for _ in 0..2 * dim {
        let i = axis.sample(rng);
        let mut j = axis.sample(rng);
        while j == i {
            j = axis.sample(rng);
        }
        let theta = strength * angle.sample(rng);
        let (s, c) = theta.sin_cos();
        for col in 0..dim {
            let (qi, qj) = (q[(i, col)], q[(j, col)]);
            q[(i, col)] = c * qi - s * qj;
            q[(j, col)] = s * qi + c * qj;
        }
    }
    q
}

struct Shift {
    rotation: Matrix,
    bias: Vec<f64>,
}

impl Shift {
    fn draw(rng: &mut ChaCha8Rng, dim: usize, strength: f64, bias_scale: f64) -> Self {
        let rotation = random_rotation(rng, dim, strength);
        let bias = on_sphere(rng, dim, bias_scale * strength);
        Self { rotation, bias }
    }

    fn apply(&self, prototype: &[f64]) -> Vec<f64> {
        (0..self.bias.len())
            .map(|r| {
                self.rotation
                    .row(r)
                    .iter()
                    .zip(prototype)
                    .map(|(q, p)| q * p)
                    .sum::<f64>()
                    + self.bias[r]
            })
            .collect()
    }
}

/// Draws the whole benchmark. Deterministic in `spec` (including its seed).
pub fn generate_benchmark(spec: &BenchmarkSpec) -> Result<Vec<Domain>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let proto_v: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| on_sphere(&mut rng, spec.visual_dim, spec.prototype_scale))
        .collect();
    let proto_a: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| on_sphere(&mut rng, spec.audio_dim, spec.prototype_scale))
        .collect();
    let shifts: Vec<(Shift, Shift)> = (0..spec.num_domains)
        .map(|_| {
            let v = Shift::draw(&mut rng, spec.visual_dim, spec.transform_strength, spec.bias_scale);
            let a = Shift::draw(&mut rng, spec.audio_dim, spec.audio_transform_strength, spec.bias_scale);
            (v, a)
        })
        .collect();
    let gains: Vec<f64> = (0..spec.num_domains)
        .map(|_| {
            if spec.audio_gain_jitter > 0.0 {
                let u: f64 = rng.random_range(-spec.audio_gain_jitter..=spec.audio_gain_jitter);
                spec.audio_norm_scale * u.exp()
            } else {
                spec.audio_norm_scale
            }
        })
        .collect();
    let keep = Uniform::new(0.0, 1.0).expect("unit interval");

    let mut domains = Vec::with_capacity(spec.num_domains);
    for (d, (shift_v, shift_a)) in shifts.iter().enumerate() {
        let mut train = Split::default();
        let mut test = Split::default();
        for c in 0..spec.num_classes {
            let count = if spec.class_skew > 0.0 {
                let frac = 1.0 - spec.class_skew * keep.sample(&mut rng);
                ((spec.samples_per_class as f64 * frac).round() as usize).max(2)
            } else {
                spec.samples_per_class
            };
            let n_train = ((count as f64 * spec.train_fraction).round() as usize).clamp(1, count - 1);
            let center_v = shift_v.apply(&proto_v[c]);
            let center_a = shift_a.apply(&proto_a[c]);
            for k in 0..count {
                let v: Vec<f64> = center_v
                    .iter()
                    .map(|m| m + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let a: Vec<f64> = center_a
                    .iter()
                    .map(|m| (m + spec.audio_noise_sigma * rng.sample::<f64, _>(StandardNormal)) * gains[d])
                    .collect();
                let dest = if k < n_train { &mut train } else { &mut test };
                dest.push(v, a, c);
            }
        }
        domains.push(Domain {
            id: d,
            train: train.finish(spec, d)?,
            test: test.finish(spec, d)?,
        });
    }
    Ok(domains)
}

#[derive(Default)]
struct Split {
    visual: Vec<f64>,
    audio: Vec<f64>,
    labels: Vec<usize>,
}

impl Split {
    fn push(&mut self, v: Vec<f64>, a: Vec<f64>, label: usize) {
        self.visual.extend(v);
        self.audio.extend(a);
        self.labels.push(label);
    }

    fn finish(self, spec: &BenchmarkSpec, domain: usize) -> Result<MultiModalBatch> {
        let n = self.labels.len();
        MultiModalBatch::new(
            Matrix::from_vec(n, spec.visual_dim, self.visual)?,
            Matrix::from_vec(n, spec.audio_dim, self.audio)?,
            Some(self.labels),
            domain,
        )
    }
}
