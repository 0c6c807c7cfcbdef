//! The two-stream audio-visual classifier.
//!
//! Each modality has its own encoder `F^m` (a ReLU MLP) producing
//! `feature_dim`-wide features, and its own linear classifier `G^m`. In late
//! fusion the two logit matrices are summed; in mid fusion a single linear
//! classifier reads the concatenation `[f_v | f_a]`. With the batch-norm
//! baseline enabled, each modality's features are normalized right before
//! classification.
//!
//! Auxiliary feature losses act on the raw encoder outputs, before any
//! normalization.

mod batchnorm;
pub mod checkpoint;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batchnorm::{BatchNormCache, BatchNormGrads, BatchNormState};

use crate::data::MultiModalBatch;
use crate::error::{Error, Result};
use crate::losses::{FeatureBatch, Modality};
use crate::numerics::{
    argmax, relu_backward, relu_forward, LinearCache, LinearGrads, LinearLayerParams, Matrix, ParamSet, ReluCache,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// Sum of per-modality logits.
    #[default]
    Late,
    /// One classifier over the concatenated features.
    Mid,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Late => "late",
            FusionMode::Mid => "mid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "late" => Ok(FusionMode::Late),
            "mid" => Ok(FusionMode::Mid),
            other => Err(Error::config(format!(
                "unknown fusion mode '{other}' (expected late or mid)"
            ))),
        }
    }
}

/// Whether batch norm uses batch statistics (training) or running ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub visual_input_dim: usize,
    pub audio_input_dim: usize,
    /// Widths of the hidden layers of each encoder; empty means a single
    /// linear layer.
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub fusion: FusionMode,
    pub batchnorm: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("visual_input_dim", self.visual_input_dim),
            ("audio_input_dim", self.audio_input_dim),
            ("feature_dim", self.feature_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// A stack of linear layers with ReLU between consecutive layers (none after
/// the last one).
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub layers: Vec<LinearLayerParams>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    linear: Vec<LinearCache>,
    relu: Vec<ReluCache>,
}

impl Encoder {
    pub fn new(layers: Vec<LinearLayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("encoder needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(format!(
                    "encoder layer widths {} -> {} do not chain",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, input: &Matrix) -> Result<(Matrix, EncoderCache)> {
        let mut linear = Vec::with_capacity(self.layers.len());
        let mut relu = Vec::with_capacity(self.layers.len() - 1);
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let (z, cache) = layer.forward(&x)?;
            linear.push(cache);
            if i + 1 < self.layers.len() {
                let (a, rc) = relu_forward(&z);
                relu.push(rc);
                x = a;
            } else {
                x = z;
            }
        }
        Ok((x, EncoderCache { linear, relu }))
    }

    /// Output only.
    pub fn apply(&self, input: &Matrix) -> Result<Matrix> {
        let mut x = self.layers[0].apply(input)?;
        for layer in &self.layers[1..] {
            x = layer.apply(&x.map(|v| v.max(0.0)))?;
        }
        Ok(x)
    }

    /// Layer gradients (in layer order) and the gradient wrt the input.
    pub fn backward(&self, cache: &EncoderCache, grad: &Matrix) -> Result<(Vec<LinearGrads>, Matrix)> {
        if cache.linear.len() != self.layers.len() {
            return Err(Error::shape("encoder cache from a different architecture"));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad.clone();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                g = relu_backward(&cache.relu[i], &g)?;
            }
            let (lg, gi) = self.layers[i].backward(&cache.linear[i], &g)?;
            grads.push(lg);
            g = gi;
        }
        grads.reverse();
        Ok((grads, g))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStreamModel {
    pub encoder_visual: Encoder,
    pub encoder_audio: Encoder,
    pub classifier_visual: LinearLayerParams,
    pub classifier_audio: LinearLayerParams,
    pub fusion: FusionMode,
    /// Present iff `fusion == Mid`; reads `2·feature_dim` inputs.
    pub mid_classifier: Option<LinearLayerParams>,
    pub batchnorm_visual: Option<BatchNormState>,
    pub batchnorm_audio: Option<BatchNormState>,
}

/// Gradients shape-congruent with [`TwoStreamModel`]'s trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder_visual: Vec<LinearGrads>,
    pub encoder_audio: Vec<LinearGrads>,
    pub classifier_visual: LinearGrads,
    pub classifier_audio: LinearGrads,
    pub mid_classifier: Option<LinearGrads>,
    pub batchnorm_visual: Option<BatchNormGrads>,
    pub batchnorm_audio: Option<BatchNormGrads>,
}

#[derive(Debug, Clone)]
enum NormCache {
    Train(BatchNormCache),
    /// Running-statistics standardization of the input and the per-feature
    /// factor `γ / sqrt(running_var + ε)`.
    Eval {
        normalized: Matrix,
        scale: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
enum HeadCache {
    Late { visual: LinearCache, audio: LinearCache },
    Mid(LinearCache),
}

#[derive(Debug, Clone)]
struct PassCache {
    encoder_visual: EncoderCache,
    encoder_audio: EncoderCache,
    norm_visual: Option<NormCache>,
    norm_audio: Option<NormCache>,
    head: HeadCache,
}

/// Everything a forward pass produces, plus what backward needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Raw encoder outputs (before batch norm).
    pub features_visual: FeatureBatch,
    pub features_audio: FeatureBatch,
    /// Visual-only prediction scores.
    pub logits_visual: Matrix,
    /// Audio-only prediction scores.
    pub logits_audio: Matrix,
    pub fused: Matrix,
    cache: PassCache,
}

impl ForwardPass {
    /// Logits for the requested stream selection.
    pub fn logits(&self, selection: Option<Modality>) -> &Matrix {
        match selection {
            None => &self.fused,
            Some(Modality::Visual) => &self.logits_visual,
            Some(Modality::Audio) => &self.logits_audio,
        }
    }
}

/// Deterministic initialization: weights uniform in `±sqrt(6 / fan_in)`
/// (variance `2 / fan_in`), biases zero, batch norm at identity.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<TwoStreamModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |in_dim: usize, out_dim: usize| -> LinearLayerParams {
        let limit = (6.0 / in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
        let weight = Matrix::from_fn(out_dim, in_dim, |_, _| dist.sample(&mut rng));
        LinearLayerParams {
            weight,
            bias: vec![0.0; out_dim],
        }
    };
    let mut encoder = |input_dim: usize| -> Encoder {
        let mut widths = vec![input_dim];
        widths.extend(&config.hidden_dims);
        widths.push(config.feature_dim);
        Encoder {
            layers: widths.windows(2).map(|w| layer(w[0], w[1])).collect(),
        }
    };
    let encoder_visual = encoder(config.visual_input_dim);
    let encoder_audio = encoder(config.audio_input_dim);
    let classifier_visual = layer(config.feature_dim, config.num_classes);
    let classifier_audio = layer(config.feature_dim, config.num_classes);
    let mid_classifier = (config.fusion == FusionMode::Mid).then(|| layer(2 * config.feature_dim, config.num_classes));
    let bn = || config.batchnorm.then(|| BatchNormState::new(config.feature_dim));
    Ok(TwoStreamModel {
        encoder_visual,
        encoder_audio,
        classifier_visual,
        classifier_audio,
        fusion: config.fusion,
        mid_classifier,
        batchnorm_visual: bn(),
        batchnorm_audio: bn(),
    })
}

/// Elementwise sum of per-modality logits.
pub fn fuse_late(logits_visual: &Matrix, logits_audio: &Matrix) -> Result<Matrix> {
    logits_visual.add(logits_audio)
}

impl TwoStreamModel {
    /// Checks the structural invariants: shared feature width, matching
    /// class counts, and a mid classifier exactly when fusing mid-level.
    pub fn validate(&self) -> Result<()> {
        let d = self.encoder_visual.output_dim();
        if self.encoder_audio.output_dim() != d {
            return Err(Error::shape(format!(
                "encoders produce {d} and {} features",
                self.encoder_audio.output_dim()
            )));
        }
        if self.classifier_visual.in_dim() != d || self.classifier_audio.in_dim() != d {
            return Err(Error::shape("classifier input width differs from feature width"));
        }
        let c = self.classifier_visual.out_dim();
        if self.classifier_audio.out_dim() != c {
            return Err(Error::shape("classifiers disagree on the number of classes"));
        }
        match (&self.mid_classifier, self.fusion) {
            (Some(mid), FusionMode::Mid) => {
                if mid.in_dim() != 2 * d || mid.out_dim() != c {
                    return Err(Error::shape("mid classifier has the wrong shape"));
                }
            }
            (None, FusionMode::Late) => {}
            _ => {
                return Err(Error::config(
                    "mid classifier must be present exactly in mid fusion mode",
                ))
            }
        }
        if self.batchnorm_visual.is_some() != self.batchnorm_audio.is_some() {
            return Err(Error::config("batch norm must be enabled on both streams or neither"));
        }
        for bn in [&self.batchnorm_visual, &self.batchnorm_audio].into_iter().flatten() {
            if bn.dim() != d || bn.epsilon <= 0.0 || bn.running_var.iter().any(|&v| v < 0.0) {
                return Err(Error::config("invalid batch norm state"));
            }
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder_visual.output_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier_visual.out_dim()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.batchnorm_visual.is_some()
    }

    pub fn encoder(&self, modality: Modality) -> &Encoder {
        match modality {
            Modality::Visual => &self.encoder_visual,
            Modality::Audio => &self.encoder_audio,
        }
    }

    fn batchnorm(&self, modality: Modality) -> Option<&BatchNormState> {
        match modality {
            Modality::Visual => self.batchnorm_visual.as_ref(),
            Modality::Audio => self.batchnorm_audio.as_ref(),
        }
    }

    fn classifier(&self, modality: Modality) -> &LinearLayerParams {
        match modality {
            Modality::Visual => &self.classifier_visual,
            Modality::Audio => &self.classifier_audio,
        }
    }

    /// `F^m(x)`.
    pub fn encode(&self, modality: Modality, input: &Matrix) -> Result<FeatureBatch> {
        FeatureBatch::new(self.encoder(modality).apply(input)?, modality)
    }

    /// `F^m(x)` with the cache needed by [`TwoStreamModel::encoder_backward`].
    pub fn encode_with_cache(&self, modality: Modality, input: &Matrix) -> Result<(FeatureBatch, EncoderCache)> {
        let (f, cache) = self.encoder(modality).forward(input)?;
        Ok((FeatureBatch::new(f, modality)?, cache))
    }

    pub fn encoder_backward(
        &self,
        modality: Modality,
        cache: &EncoderCache,
        grad: &Matrix,
    ) -> Result<Vec<LinearGrads>> {
        Ok(self.encoder(modality).backward(cache, grad)?.0)
    }

    fn normalize(&self, modality: Modality, features: &Matrix, phase: Phase) -> Result<(Matrix, Option<NormCache>)> {
        match (self.batchnorm(modality), phase) {
            (None, _) => Ok((features.clone(), None)),
            (Some(bn), Phase::Train) => {
                let (y, cache) = bn.forward_train(features)?;
                Ok((y, Some(NormCache::Train(cache))))
            }
            (Some(bn), Phase::Eval) => {
                let (scale, _) = bn.eval_affine();
                let normalized = Matrix::from_fn(features.rows(), features.cols(), |r, c| {
                    (features[(r, c)] - bn.running_mean[c]) / (bn.running_var[c] + bn.epsilon).sqrt()
                });
                Ok((bn.forward_eval(features)?, Some(NormCache::Eval { normalized, scale })))
            }
        }
    }

    /// Single-stream scores from (already normalized) features. In mid mode
    /// this is the mid classifier reading this modality's half with the
    /// other half zeroed.
    fn stream_logits(&self, modality: Modality, normalized: &Matrix) -> Result<Matrix> {
        match &self.mid_classifier {
            None => self.classifier(modality).apply(normalized),
            Some(mid) => {
                let zeros = Matrix::zeros(normalized.rows(), normalized.cols());
                let input = match modality {
                    Modality::Visual => normalized.hstack(&zeros)?,
                    Modality::Audio => zeros.hstack(normalized)?,
                };
                mid.apply(&input)
            }
        }
    }

    /// `G^m(f_m)`, with batch norm in front when enabled.
    pub fn classify(&self, modality: Modality, features: &FeatureBatch, phase: Phase) -> Result<Matrix> {
        if features.dim() != self.feature_dim() {
            return Err(Error::shape(format!(
                "classifier expects {} features, got {}",
                self.feature_dim(),
                features.dim()
            )));
        }
        let (normalized, _) = self.normalize(modality, features.features(), phase)?;
        self.stream_logits(modality, &normalized)
    }

    /// Mid-level fusion head applied to raw features.
    pub fn fuse_mid(
        &self,
        features_visual: &FeatureBatch,
        features_audio: &FeatureBatch,
        phase: Phase,
    ) -> Result<Matrix> {
        let mid = self
            .mid_classifier
            .as_ref()
            .ok_or_else(|| Error::config("mid-level fusion requested on a late-fusion model"))?;
        let (nv, _) = self.normalize(Modality::Visual, features_visual.features(), phase)?;
        let (na, _) = self.normalize(Modality::Audio, features_audio.features(), phase)?;
        mid.apply(&nv.hstack(&na)?)
    }

    pub fn forward(&self, visual: &Matrix, audio: &Matrix, phase: Phase) -> Result<ForwardPass> {
        if visual.rows() != audio.rows() {
            return Err(Error::shape(format!(
                "{} visual rows paired with {} audio rows",
                visual.rows(),
                audio.rows()
            )));
        }
        let (fv, encoder_visual) = self.encode_with_cache(Modality::Visual, visual)?;
        let (fa, encoder_audio) = self.encode_with_cache(Modality::Audio, audio)?;
        let (nv, norm_visual) = self.normalize(Modality::Visual, fv.features(), phase)?;
        let (na, norm_audio) = self.normalize(Modality::Audio, fa.features(), phase)?;
        let (logits_visual, logits_audio, fused, head) = match &self.mid_classifier {
            None => {
                let (lv, cv) = self.classifier_visual.forward(&nv)?;
                let (la, ca) = self.classifier_audio.forward(&na)?;
                let fused = fuse_late(&lv, &la)?;
                (lv, la, fused, HeadCache::Late { visual: cv, audio: ca })
            }
            Some(mid) => {
                let (fused, cache) = mid.forward(&nv.hstack(&na)?)?;
                let lv = self.stream_logits(Modality::Visual, &nv)?;
                let la = self.stream_logits(Modality::Audio, &na)?;
                (lv, la, fused, HeadCache::Mid(cache))
            }
        };
        Ok(ForwardPass {
            features_visual: fv,
            features_audio: fa,
            logits_visual,
            logits_audio,
            fused,
            cache: PassCache {
                encoder_visual,
                encoder_audio,
                norm_visual,
                norm_audio,
                head,
            },
        })
    }

    /// Backpropagates `grad_fused` (gradient wrt the fused logits) and any
    /// extra gradients wrt the raw encoder features.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        grad_fused: &Matrix,
        feature_grad_visual: Option<&Matrix>,
        feature_grad_audio: Option<&Matrix>,
    ) -> Result<ModelGrads> {
        let mut grads = self.zero_grads();
        let (g_norm_v, g_norm_a) = match (&pass.cache.head, &self.mid_classifier) {
            (HeadCache::Late { visual, audio }, None) => {
                let (gv, gnv) = self.classifier_visual.backward(visual, grad_fused)?;
                let (ga, gna) = self.classifier_audio.backward(audio, grad_fused)?;
                grads.classifier_visual = gv;
                grads.classifier_audio = ga;
                (gnv, gna)
            }
            (HeadCache::Mid(cache), Some(mid)) => {
                let (gm, g_concat) = mid.backward(cache, grad_fused)?;
                grads.mid_classifier = Some(gm);
                g_concat.split_columns(self.feature_dim())
            }
            _ => return Err(Error::shape("forward pass came from a model with another fusion mode")),
        };

        let mut g_fv = self.denormalize(Modality::Visual, pass.cache.norm_visual.as_ref(), &g_norm_v, &mut grads)?;
        let mut g_fa = self.denormalize(Modality::Audio, pass.cache.norm_audio.as_ref(), &g_norm_a, &mut grads)?;
        if let Some(extra) = feature_grad_visual {
            g_fv.add_assign(extra)?;
        }
        if let Some(extra) = feature_grad_audio {
            g_fa.add_assign(extra)?;
        }
        grads.encoder_visual = self.encoder_backward(Modality::Visual, &pass.cache.encoder_visual, &g_fv)?;
        grads.encoder_audio = self.encoder_backward(Modality::Audio, &pass.cache.encoder_audio, &g_fa)?;
        Ok(grads)
    }

    fn denormalize(
        &self,
        modality: Modality,
        cache: Option<&NormCache>,
        grad: &Matrix,
        grads: &mut ModelGrads,
    ) -> Result<Matrix> {
        let (bn, slot) = match modality {
            Modality::Visual => (self.batchnorm_visual.as_ref(), &mut grads.batchnorm_visual),
            Modality::Audio => (self.batchnorm_audio.as_ref(), &mut grads.batchnorm_audio),
        };
        match (bn, cache) {
            (None, None) => Ok(grad.clone()),
            (Some(bn), Some(NormCache::Train(c))) => {
                let (g, gi) = bn.backward(c, grad)?;
                *slot = Some(g);
                Ok(gi)
            }
            (Some(bn), Some(NormCache::Eval { normalized, scale })) => {
                let mut g = BatchNormGrads::zeros(bn.dim());
                for r in 0..grad.rows() {
                    for j in 0..bn.dim() {
                        g.gamma[j] += grad[(r, j)] * normalized[(r, j)];
                        g.beta[j] += grad[(r, j)];
                    }
                }
                *slot = Some(g);
                Ok(Matrix::from_fn(grad.rows(), grad.cols(), |r, c| {
                    grad[(r, c)] * scale[c]
                }))
            }
            _ => Err(Error::shape("batch norm cache does not match the model")),
        }
    }

    /// Copies the running statistics of the pass's batches into the
    /// batch-norm layers. No-op without batch norm or for eval passes.
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        if let (Some(bn), Some(NormCache::Train(c))) = (self.batchnorm_visual.as_mut(), &pass.cache.norm_visual) {
            bn.update_running(c);
        }
        if let (Some(bn), Some(NormCache::Train(c))) = (self.batchnorm_audio.as_mut(), &pass.cache.norm_audio) {
            bn.update_running(c);
        }
    }

    pub fn zero_grads(&self) -> ModelGrads {
        let enc = |e: &Encoder| e.layers.iter().map(LinearGrads::zeros_like).collect();
        ModelGrads {
            encoder_visual: enc(&self.encoder_visual),
            encoder_audio: enc(&self.encoder_audio),
            classifier_visual: LinearGrads::zeros_like(&self.classifier_visual),
            classifier_audio: LinearGrads::zeros_like(&self.classifier_audio),
            mid_classifier: self.mid_classifier.as_ref().map(LinearGrads::zeros_like),
            batchnorm_visual: self.batchnorm_visual.as_ref().map(|b| BatchNormGrads::zeros(b.dim())),
            batchnorm_audio: self.batchnorm_audio.as_ref().map(|b| BatchNormGrads::zeros(b.dim())),
        }
    }

    /// Eval-mode fused logits for a batch.
    pub fn predict_logits(&self, batch: &MultiModalBatch, selection: Option<Modality>) -> Result<Matrix> {
        let pass = self.forward(batch.visual(), batch.audio(), Phase::Eval)?;
        Ok(pass.logits(selection).clone())
    }
}

/// Argmax of the eval-mode fused logits, ties to the lowest class index.
pub fn predict(model: &TwoStreamModel, batch: &MultiModalBatch) -> Result<Vec<usize>> {
    let logits = model.predict_logits(batch, None)?;
    Ok(logits.iter_rows().map(argmax).collect())
}

impl ModelGrads {
    /// Adds encoder gradients computed on a separate batch (e.g. target
    /// features in adaptation).
    pub fn add_encoder_grads(&mut self, modality: Modality, grads: &[LinearGrads]) -> Result<()> {
        let slot = match modality {
            Modality::Visual => &mut self.encoder_visual,
            Modality::Audio => &mut self.encoder_audio,
        };
        if slot.len() != grads.len() {
            return Err(Error::shape("encoder gradient depth mismatch"));
        }
        for (a, b) in slot.iter_mut().zip(grads) {
            a.add_assign(b)?;
        }
        Ok(())
    }
}

fn linear_tensors(l: &LinearLayerParams) -> [&[f64]; 2] {
    [l.weight.as_slice(), &l.bias]
}

fn linear_tensors_mut(l: &mut LinearLayerParams) -> [&mut [f64]; 2] {
    [l.weight.as_mut_slice(), &mut l.bias]
}

fn grad_tensors(l: &LinearGrads) -> [&[f64]; 2] {
    [l.weight.as_slice(), &l.bias]
}

fn grad_tensors_mut(l: &mut LinearGrads) -> [&mut [f64]; 2] {
    [l.weight.as_mut_slice(), &mut l.bias]
}

// Declaration order, shared by the model, its gradients and checkpoints:
// visual encoder, audio encoder, visual classifier, audio classifier,
// mid classifier, visual batch norm (γ, β), audio batch norm (γ, β).
impl ParamSet for TwoStreamModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in self.encoder_visual.layers.iter().chain(&self.encoder_audio.layers) {
            out.extend(linear_tensors(l));
        }
        out.extend(linear_tensors(&self.classifier_visual));
        out.extend(linear_tensors(&self.classifier_audio));
        if let Some(mid) = &self.mid_classifier {
            out.extend(linear_tensors(mid));
        }
        for bn in [&self.batchnorm_visual, &self.batchnorm_audio].into_iter().flatten() {
            out.push(&bn.gamma);
            out.push(&bn.beta);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self
            .encoder_visual
            .layers
            .iter_mut()
            .chain(self.encoder_audio.layers.iter_mut())
        {
            out.extend(linear_tensors_mut(l));
        }
        out.extend(linear_tensors_mut(&mut self.classifier_visual));
        out.extend(linear_tensors_mut(&mut self.classifier_audio));
        if let Some(mid) = &mut self.mid_classifier {
            out.extend(linear_tensors_mut(mid));
        }
        for bn in [&mut self.batchnorm_visual, &mut self.batchnorm_audio]
            .into_iter()
            .flatten()
        {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out
    }
}

impl ParamSet for ModelGrads {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in self.encoder_visual.iter().chain(&self.encoder_audio) {
            out.extend(grad_tensors(l));
        }
        out.extend(grad_tensors(&self.classifier_visual));
        out.extend(grad_tensors(&self.classifier_audio));
        if let Some(mid) = &self.mid_classifier {
            out.extend(grad_tensors(mid));
        }
        for bn in [&self.batchnorm_visual, &self.batchnorm_audio].into_iter().flatten() {
            out.push(&bn.gamma);
            out.push(&bn.beta);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self.encoder_visual.iter_mut().chain(self.encoder_audio.iter_mut()) {
            out.extend(grad_tensors_mut(l));
        }
        out.extend(grad_tensors_mut(&mut self.classifier_visual));
        out.extend(grad_tensors_mut(&mut self.classifier_audio));
        if let Some(mid) = &mut self.mid_classifier {
            out.extend(grad_tensors_mut(mid));
        }
        for bn in [&mut self.batchnorm_visual, &mut self.batchnorm_audio]
            .into_iter()
            .flatten()
        {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out
    }
}
