//! Random instances and central finite-difference checks, shared by the
//! gradient test target and the acceptance target.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rna_core::losses::{
    cosine_alignment_loss, hna_loss, orthogonality_loss, rna_loss, rna_loss_uda, FeatureBatch, LossResult, Modality,
};
use rna_core::model::{init_model, FusionMode, ModelConfig, Phase, TwoStreamModel};
use rna_core::numerics::{
    finite_difference_grad, relative_error, relu_backward, relu_forward, softmax_cross_entropy, LinearLayerParams,
    Matrix, ParamSet,
};

pub const TOLERANCE: f64 = 1e-5;
const EPS: f64 = 1e-6;
const FLOOR: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub rel_err: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.rel_err < TOLERANCE
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn batch(m: Matrix, modality: Modality) -> FeatureBatch {
    FeatureBatch::new(m, modality).expect("non-empty batch")
}

fn compare(name: String, analytic: &[f64], numeric: &[f64]) -> Check {
    Check {
        rel_err: relative_error(analytic, numeric, FLOOR),
        name,
    }
}

fn split(x: &[f64], shapes: &[(usize, usize)]) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(shapes.len());
    let mut at = 0;
    for &(r, c) in shapes {
        out.push(Matrix::from_vec(r, c, x[at..at + r * c].to_vec()).expect("consistent shape"));
        at += r * c;
    }
    out
}

fn concat(ms: &[&Matrix]) -> Vec<f64> {
    ms.iter().flat_map(|m| m.as_slice().iter().copied()).collect()
}

/// Checks a loss of a visual and an audio batch against differences of its
/// own value.
fn pair_loss_check(
    name: &str,
    v: &Matrix,
    a: &Matrix,
    loss: impl Fn(&FeatureBatch, &FeatureBatch) -> LossResult,
) -> Check {
    let shapes = [v.shape(), a.shape()];
    let r = loss(&batch(v.clone(), Modality::Visual), &batch(a.clone(), Modality::Audio));
    let numeric = finite_difference_grad(
        |x| {
            let m = split(x, &shapes);
            loss(
                &batch(m[0].clone(), Modality::Visual),
                &batch(m[1].clone(), Modality::Audio),
            )
            .value
        },
        &concat(&[v, a]),
        EPS,
    );
    let analytic = concat(&[&r.grad_visual, &r.grad_audio]);
    compare(format!("{name} N={} D={}", v.rows(), v.cols()), &analytic, &numeric)
}

/// Draws a loss instance: `N ≤ 8`, `D ≤ 16`, audio on a larger scale.
fn loss_instance(rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let n = rng.random_range(1..=8);
    let d = rng.random_range(2..=16);
    let sv = rng.random_range(0.5..3.0);
    let sa = rng.random_range(0.5..3.0) * 10.0;
    (gaussian(rng, n, d, sv), gaussian(rng, n, d, sa))
}

pub fn rna_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let (v, a) = loss_instance(&mut rng);
            pair_loss_check("rna", &v, &a, |v, a| rna_loss(v, a).expect("valid rna instance"))
        })
        .collect()
}

pub fn hna_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let (v, a) = loss_instance(&mut rng);
            let radius = rng.random_range(0.5..20.0);
            pair_loss_check("hna", &v, &a, |v, a| {
                hna_loss(v, a, radius).expect("valid hna instance")
            })
        })
        .collect()
}

pub fn cosine_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let (v, a) = loss_instance(&mut rng);
            pair_loss_check("cosine-align", &v, &a, |v, a| {
                cosine_alignment_loss(v, a).expect("valid cosine instance")
            })
        })
        .collect()
}

pub fn orthogonality_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let (v, a) = loss_instance(&mut rng);
            pair_loss_check("orthogonality", &v, &a, |v, a| {
                orthogonality_loss(v, a).expect("valid orthogonality instance")
            })
        })
        .collect()
}

/// Source plus target relative norm alignment, differentiated through all
/// four batches at once.
pub fn uda_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let (sv, sa) = loss_instance(&mut rng);
            let (tv, ta) = loss_instance(&mut rng);
            let d = sv.cols();
            let (tv, ta) = (
                gaussian(&mut rng, tv.rows(), d, 1.5),
                gaussian(&mut rng, ta.rows(), d, 15.0),
            );
            let eval = |m: &[Matrix]| {
                rna_loss_uda(
                    &batch(m[0].clone(), Modality::Visual),
                    &batch(m[1].clone(), Modality::Audio),
                    &batch(m[2].clone(), Modality::Visual),
                    &batch(m[3].clone(), Modality::Audio),
                )
                .expect("valid uda instance")
            };
            let mats = [sv.clone(), sa.clone(), tv.clone(), ta.clone()];
            let shapes: Vec<_> = mats.iter().map(Matrix::shape).collect();
            let r = eval(&mats);
            let numeric = finite_difference_grad(
                |x| eval(&split(x, &shapes)).total(),
                &concat(&[&sv, &sa, &tv, &ta]),
                EPS,
            );
            let analytic = concat(&[
                &r.source.grad_visual,
                &r.source.grad_audio,
                &r.target.grad_visual,
                &r.target.grad_audio,
            ]);
            compare(
                format!("rna-uda Ns={} Nt={} D={d}", sv.rows(), tv.rows()),
                &analytic,
                &numeric,
            )
        })
        .collect()
}

pub fn cross_entropy_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=8);
            let c = rng.random_range(2..=8);
            let logits = gaussian(&mut rng, n, c, 3.0);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let (_, grad) = softmax_cross_entropy(&logits, &labels).expect("valid logits");
            let numeric = finite_difference_grad(
                |x| {
                    let m = Matrix::from_vec(n, c, x.to_vec()).expect("shape");
                    softmax_cross_entropy(&m, &labels).expect("valid logits").0
                },
                logits.as_slice(),
                EPS,
            );
            compare(format!("cross-entropy N={n} C={c}"), grad.as_slice(), &numeric)
        })
        .collect()
}

/// `Σ C ⊙ relu(x Wᵀ + b)` through weights, bias and input.
pub fn linear_relu_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=8);
            let din = rng.random_range(1..=16);
            let dout = rng.random_range(1..=16);
            let x = gaussian(&mut rng, n, din, 1.0);
            let w = gaussian(&mut rng, dout, din, 0.7);
            let b: Vec<f64> = (0..dout).map(|_| rng.random_range(-0.5..0.5)).collect();
            let coef = gaussian(&mut rng, n, dout, 1.0);
            let objective = |x: &Matrix, w: &Matrix, b: &[f64]| -> f64 {
                let layer = LinearLayerParams::new(w.clone(), b.to_vec()).expect("shape");
                let (h, _) = relu_forward(&layer.apply(x).expect("shape"));
                h.as_slice().iter().zip(coef.as_slice()).map(|(h, c)| h * c).sum()
            };
            let layer = LinearLayerParams::new(w.clone(), b.clone()).expect("shape");
            let (pre, lcache) = layer.forward(&x).expect("shape");
            let (_, rcache) = relu_forward(&pre);
            let g_pre = relu_backward(&rcache, &coef).expect("shape");
            let (grads, g_x) = layer.backward(&lcache, &g_pre).expect("shape");
            let mut analytic = concat(&[&g_x, &grads.weight]);
            analytic.extend(&grads.bias);
            let mut point = concat(&[&x, &w]);
            point.extend(&b);
            let numeric = finite_difference_grad(
                |p| {
                    let m = split(p, &[(n, din), (dout, din)]);
                    objective(&m[0], &m[1], &p[n * din + dout * din..])
                },
                &point,
                EPS,
            );
            compare(format!("linear+relu N={n} {din}->{dout}"), &analytic, &numeric)
        })
        .collect()
}

fn perturb(model: &mut TwoStreamModel, rng: &mut ChaCha8Rng, scale: f64) {
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += scale * z;
        }
    }
}

/// One random model instance and the scalar objective
/// `CE(fused) + ⟨Cv, f_v⟩ + ⟨Ca, f_a⟩`, checked over every trainable
/// parameter. Cycles through late/mid fusion, with and without batch norm,
/// in training and (for batch norm) evaluation mode.
pub fn model_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let fusion = if i % 2 == 0 { FusionMode::Late } else { FusionMode::Mid };
            let batchnorm = (i / 2) % 2 == 1;
            let phase = if batchnorm && (i / 4) % 2 == 1 {
                Phase::Eval
            } else {
                Phase::Train
            };
            let hidden = if rng.random_bool(0.5) {
                vec![rng.random_range(2..=12)]
            } else {
                vec![]
            };
            let config = ModelConfig {
                visual_input_dim: rng.random_range(2..=16),
                audio_input_dim: rng.random_range(2..=16),
                hidden_dims: hidden,
                feature_dim: rng.random_range(2..=8),
                num_classes: rng.random_range(2..=4),
                fusion,
                batchnorm,
            };
            let mut model = init_model(&config, rng.random()).expect("valid model config");
            perturb(&mut model, &mut rng, 0.1);
            for bn in [&mut model.batchnorm_visual, &mut model.batchnorm_audio]
                .into_iter()
                .flatten()
            {
                for (m, v) in bn.running_mean.iter_mut().zip(bn.running_var.iter_mut()) {
                    *m = rng.random_range(-0.5..0.5);
                    *v = rng.random_range(0.5..2.0);
                }
            }
            let n = rng.random_range(2..=8);
            let xv = gaussian(&mut rng, n, config.visual_input_dim, 1.0);
            let xa = gaussian(&mut rng, n, config.audio_input_dim, 10.0);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..config.num_classes)).collect();
            let cv = gaussian(&mut rng, n, config.feature_dim, 0.1);
            let ca = gaussian(&mut rng, n, config.feature_dim, 0.1);

            let objective = |m: &TwoStreamModel| -> f64 {
                let pass = m.forward(&xv, &xa, phase).expect("forward");
                let (ce, _) = softmax_cross_entropy(&pass.fused, &labels).expect("ce");
                let dot = |f: &FeatureBatch, c: &Matrix| -> f64 {
                    f.features()
                        .as_slice()
                        .iter()
                        .zip(c.as_slice())
                        .map(|(x, y)| x * y)
                        .sum()
                };
                ce + dot(&pass.features_visual, &cv) + dot(&pass.features_audio, &ca)
            };
            let pass = model.forward(&xv, &xa, phase).expect("forward");
            let (_, g_fused) = softmax_cross_entropy(&pass.fused, &labels).expect("ce");
            let grads = model.backward(&pass, &g_fused, Some(&cv), Some(&ca)).expect("backward");
            let analytic: Vec<f64> = grads.tensors().concat();
            let point: Vec<f64> = model.tensors().concat();
            let mut probe = model.clone();
            let numeric = finite_difference_grad(
                |p| {
                    let mut at = 0;
                    for t in probe.tensors_mut() {
                        t.copy_from_slice(&p[at..at + t.len()]);
                        at += t.len();
                    }
                    objective(&probe)
                },
                &point,
                EPS,
            );
            compare(
                format!(
                    "model {} bn={} {:?} N={n} params={}",
                    fusion.as_str(),
                    batchnorm,
                    phase,
                    point.len()
                ),
                &analytic,
                &numeric,
            )
        })
        .collect()
}

/// An encoder alone: `⟨C, F(x)⟩` through its layers, as used for the
/// adaptation target term.
pub fn encoder_checks(count: usize, seed: u64) -> Vec<Check> {
    let mut rng = rng(seed);
    (0..count)
        .map(|_| {
            let config = ModelConfig {
                visual_input_dim: rng.random_range(1..=16),
                audio_input_dim: 3,
                hidden_dims: vec![rng.random_range(1..=12), rng.random_range(1..=12)],
                feature_dim: rng.random_range(1..=8),
                num_classes: 2,
                fusion: FusionMode::Late,
                batchnorm: false,
            };
            let mut model = init_model(&config, rng.random()).expect("valid model config");
            perturb(&mut model, &mut rng, 0.1);
            let n = rng.random_range(1..=8);
            let x = gaussian(&mut rng, n, config.visual_input_dim, 1.0);
            let c = gaussian(&mut rng, n, config.feature_dim, 1.0);
            let (_, cache) = model.encode_with_cache(Modality::Visual, &x).expect("encode");
            let grads = model.encoder_backward(Modality::Visual, &cache, &c).expect("backward");
            let analytic: Vec<f64> = grads
                .iter()
                .flat_map(|g| g.weight.as_slice().iter().chain(&g.bias).copied())
                .collect();
            let point: Vec<f64> = model
                .encoder_visual
                .layers
                .iter()
                .flat_map(|l| l.weight.as_slice().iter().chain(&l.bias).copied())
                .collect();
            let mut probe = model.clone();
            let numeric = finite_difference_grad(
                |p| {
                    let mut at = 0;
                    for l in probe.encoder_visual.layers.iter_mut() {
                        for t in [l.weight.as_mut_slice(), l.bias.as_mut_slice()] {
                            t.copy_from_slice(&p[at..at + t.len()]);
                            at += t.len();
                        }
                    }
                    let f = probe.encode(Modality::Visual, &x).expect("encode");
                    f.features()
                        .as_slice()
                        .iter()
                        .zip(c.as_slice())
                        .map(|(a, b)| a * b)
                        .sum()
                },
                &point,
                EPS,
            );
            compare(format!("encoder N={n} params={}", point.len()), &analytic, &numeric)
        })
        .collect()
}

/// The full suite: 20 instances of each loss and of the adaptation loss,
/// cross-entropy, linear/ReLU and encoder, plus 24 full models.
pub fn full_suite(seed: u64) -> Vec<Check> {
    let mut all = Vec::new();
    all.extend(rna_checks(20, seed));
    all.extend(uda_checks(20, seed + 1));
    all.extend(cosine_checks(20, seed + 2));
    all.extend(orthogonality_checks(20, seed + 3));
    all.extend(hna_checks(20, seed + 4));
    all.extend(cross_entropy_checks(20, seed + 5));
    all.extend(linear_relu_checks(20, seed + 6));
    all.extend(encoder_checks(20, seed + 7));
    all.extend(model_checks(24, seed + 8));
    all
}

/// Random orthogonal matrix: Gram-Schmidt on a Gaussian matrix.
pub fn orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    loop {
        let g = gaussian(rng, d, d, 1.0);
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
        for r in 0..d {
            let mut v = g.row(r).to_vec();
            for u in &q {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-6 {
                break;
            }
            q.push(v.into_iter().map(|x| x / n).collect());
        }
        if q.len() == d {
            return Matrix::from_rows(&q).expect("square");
        }
    }
}

/// Rows transformed by `Q`: `x ↦ Q x`.
pub fn rotate(m: &Matrix, q: &Matrix) -> Matrix {
    m.matmul_transposed(q).expect("matching width")
}

/// Largest deviation seen for one invariant over a batch of instances.
#[derive(Debug, Clone)]
pub struct Invariant {
    pub name: &'static str,
    pub max_deviation: f64,
    pub instances: usize,
}

/// Rotation invariance of the norm losses, row-scale invariance of the
/// angular losses and the dot-product identity, each on `count` instances.
pub fn geometry_suite(count: usize, seed: u64) -> Vec<Invariant> {
    let mut rng = rng(seed);
    let mut dev = [0.0f64; 5];
    for _ in 0..count {
        let (v, a) = loss_instance(&mut rng);
        let radius = rng.random_range(0.5..30.0);
        let qv = orthogonal(&mut rng, v.cols());
        let qa = orthogonal(&mut rng, a.cols());
        let fv: Vec<f64> = (0..v.rows()).map(|_| rng.random_range(0.01..100.0)).collect();
        let fa: Vec<f64> = (0..a.rows()).map(|_| rng.random_range(0.01..100.0)).collect();
        let scale = |m: &Matrix, f: &[f64]| Matrix::from_fn(m.rows(), m.cols(), |r, c| m[(r, c)] * f[r]);

        let bv = batch(v.clone(), Modality::Visual);
        let ba = batch(a.clone(), Modality::Audio);
        let rv = batch(rotate(&v, &qv), Modality::Visual);
        let ra = batch(rotate(&a, &qa), Modality::Audio);
        let sv = batch(scale(&v, &fv), Modality::Visual);
        let sa = batch(scale(&a, &fa), Modality::Audio);

        let diff = |x: f64, y: f64| (x - y).abs();
        dev[0] = dev[0].max(diff(
            rna_loss(&bv, &ba).unwrap().value,
            rna_loss(&rv, &ra).unwrap().value,
        ));
        dev[1] = dev[1].max(diff(
            hna_loss(&bv, &ba, radius).unwrap().value,
            hna_loss(&rv, &ra, radius).unwrap().value,
        ));
        dev[2] = dev[2].max(diff(
            cosine_alignment_loss(&bv, &ba).unwrap().value,
            cosine_alignment_loss(&sv, &sa).unwrap().value,
        ));
        dev[3] = dev[3].max(diff(
            orthogonality_loss(&bv, &ba).unwrap().value,
            orthogonality_loss(&sv, &sa).unwrap().value,
        ));
        for r in 0..v.rows() {
            let d = rna_core::losses::dot_product_decomposition(v.row(r), a.row(r)).unwrap();
            let cos = d.cos_theta.expect("non-zero rows");
            dev[4] = dev[4].max(diff(d.dot, d.norm_v * d.norm_a * cos));
        }
    }
    let names = [
        "rna rotation invariance",
        "hna rotation invariance",
        "cosine-align scale invariance",
        "orthogonality scale invariance",
        "dot = |v||a|cos",
    ];
    names
        .iter()
        .zip(dev)
        .map(|(&name, max_deviation)| Invariant {
            name,
            max_deviation,
            instances: count,
        })
        .collect()
}
