use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{AuxLoss, ExperimentConfig};
use super::telemetry::{IterationRecord, NormTelemetry};
use crate::data::{DgTrainSet, MultiModalBatch, UdaTrainSet};
use crate::error::{Error, Result};
use crate::losses::{feature_norms, FeatureBatch, Modality, NormStats};
use crate::model::{init_model, Phase, TwoStreamModel};
use crate::numerics::{softmax_cross_entropy, Sgd};

const SOURCE_STREAM: u64 = 1;
const TARGET_STREAM: u64 = 2;

/// What a training run hands back.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last iteration.
    pub model: TwoStreamModel,
    /// Up to `checkpoint_average` most recent snapshots, oldest first. The
    /// last one is always `model`.
    pub snapshots: Vec<TwoStreamModel>,
    pub telemetry: NormTelemetry,
    /// The hard norm alignment target actually used, if any.
    pub hna_radius: Option<f64>,
}

/// Epoch-wise shuffling without replacement. Batches never straddle an
/// epoch boundary; a pool smaller than the batch size is used whole.
struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(len: usize, batch: usize, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            order: (0..len).collect(),
            pos: len,
            batch: batch.min(len),
            rng,
        }
    }

    fn next(&mut self) -> &[usize] {
        if self.pos + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let s = &self.order[self.pos..self.pos + self.batch];
        self.pos += self.batch;
        s
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn stats_of(visual: &FeatureBatch, audio: &FeatureBatch) -> NormStats {
    NormStats::from_means(mean(&feature_norms(visual)), mean(&feature_norms(audio)))
}

/// Domain generalization: cross-entropy on the pooled sources plus
/// `λ·L_aux` on the source features. With several sources the pool is
/// sampled uniformly, with no per-domain balancing.
pub fn train_dg(config: &ExperimentConfig, train: &DgTrainSet) -> Result<TrainOutcome> {
    config.validate_training()?;
    let parts: Vec<&MultiModalBatch> = train.sources.iter().collect();
    let pool = MultiModalBatch::concat(&parts)?;
    run(config, &pool, None)
}

/// Unsupervised adaptation: the source term as in [`train_dg`] plus the
/// same auxiliary loss on an unlabeled target minibatch. Target labels are
/// dropped on entry, so nothing downstream can read them.
pub fn train_uda(config: &ExperimentConfig, train: &UdaTrainSet) -> Result<TrainOutcome> {
    config.validate_training()?;
    let target = train.target.without_labels();
    run(config, &train.source, Some(&target))
}

fn resolve_radius(config: &ExperimentConfig, model: &TwoStreamModel, pool: &MultiModalBatch) -> Result<Option<f64>> {
    match config.aux {
        AuxLoss::Hna { radius: Some(r) } => Ok(Some(r)),
        AuxLoss::Hna { radius: None } => {
            let fv = model.encode(Modality::Visual, pool.visual())?;
            let fa = model.encode(Modality::Audio, pool.audio())?;
            let s = stats_of(&fv, &fa);
            let r = 0.5 * (s.mean_norm_visual + s.mean_norm_audio);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Degenerate(format!("initial feature norms give hna radius {r}")));
            }
            Ok(Some(r))
        }
        _ => Ok(None),
    }
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    telemetry: NormTelemetry,
}

impl Run<'_> {
    fn abort(&self, iteration: usize, reason: impl Into<String>) -> Error {
        Error::NumericalAbort {
            iteration,
            reason: reason.into(),
            last_record: self.telemetry.last().map(|r| r.to_string()),
        }
    }

    /// Numerical failures become an abort carrying the last record; anything
    /// else passes through.
    fn numeric<T>(&self, iteration: usize, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::NonFinite(m) | Error::Degenerate(m) => self.abort(iteration, m),
            other => other,
        })
    }

    fn aux_active(&self) -> bool {
        self.config.lambda > 0.0 && self.config.aux.is_feature_loss()
    }
}

fn run(config: &ExperimentConfig, source: &MultiModalBatch, target: Option<&MultiModalBatch>) -> Result<TrainOutcome> {
    let labels = source
        .labels()
        .ok_or_else(|| Error::config("source data must be labeled"))?;
    if source.is_empty() {
        return Err(Error::config("source data is empty"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= config.num_classes) {
        return Err(Error::config(format!(
            "label {bad} out of range for {} classes",
            config.num_classes
        )));
    }
    if target.is_some_and(|t| t.is_empty()) {
        return Err(Error::config("target data is empty"));
    }
    let mut model = init_model(
        &config.model_config(source.visual().cols(), source.audio().cols()),
        config.seed,
    )?;
    let radius = resolve_radius(config, &model, source)?;
    let mut sgd = Sgd::new(config.optimizer);
    let mut src_sampler = BatchSampler::new(source.len(), config.batch_size, config.seed, SOURCE_STREAM);
    let mut tgt_sampler = target.map(|t| BatchSampler::new(t.len(), config.batch_size, config.seed, TARGET_STREAM));
    let mut snapshots: VecDeque<TwoStreamModel> = VecDeque::new();
    let mut state = Run {
        config,
        telemetry: NormTelemetry::default(),
    };
    let lambda = config.lambda;
    let aux_name = config.aux.name();

    for it in 0..config.iterations {
        let batch = source.select(src_sampler.next());
        let pass = state.numeric(it, model.forward(batch.visual(), batch.audio(), Phase::Train))?;
        let (ce, grad_logits) = softmax_cross_entropy(&pass.fused, batch.labels().expect("pool is labeled"))?;
        let stats = stats_of(&pass.features_visual, &pass.features_audio);

        let aux = if state.aux_active() {
            state.numeric(
                it,
                config.aux.compute(&pass.features_visual, &pass.features_audio, radius),
            )?
        } else {
            None
        };
        let aux_value = aux.as_ref().map_or(0.0, |r| r.value);
        let gv = aux.as_ref().map(|r| r.grad_visual.scale(lambda));
        let ga = aux.as_ref().map(|r| r.grad_audio.scale(lambda));
        let mut total = ce + lambda * aux_value;
        let mut grads = state.numeric(it, model.backward(&pass, &grad_logits, gv.as_ref(), ga.as_ref()))?;

        if let (Some(t), Some(sampler)) = (target, tgt_sampler.as_mut()) {
            // Drawn every iteration so the source stream never depends on λ.
            let tb = t.select(sampler.next());
            let (fv, cv) = state.numeric(it, model.encode_with_cache(Modality::Visual, tb.visual()))?;
            let (fa, ca) = state.numeric(it, model.encode_with_cache(Modality::Audio, tb.audio()))?;
            let t_aux = if state.aux_active() {
                state.numeric(it, config.aux.compute(&fv, &fa, radius))?
            } else {
                None
            };
            let t_value = t_aux.as_ref().map_or(0.0, |r| r.value);
            if let Some(r) = &t_aux {
                let g_v = model.encoder_backward(Modality::Visual, &cv, &r.grad_visual.scale(lambda))?;
                let g_a = model.encoder_backward(Modality::Audio, &ca, &r.grad_audio.scale(lambda))?;
                grads.add_encoder_grads(Modality::Visual, &g_v)?;
                grads.add_encoder_grads(Modality::Audio, &g_a)?;
                total += lambda * t_value;
            }
            state.telemetry.target_records.push(IterationRecord::new(
                it,
                stats_of(&fv, &fa),
                f64::NAN,
                t_value,
                aux_name,
            ));
        }

        if !total.is_finite() {
            return Err(state.abort(
                it,
                format!("total loss is {total} (cross-entropy {ce}, {aux_name} {aux_value})"),
            ));
        }
        state
            .telemetry
            .records
            .push(IterationRecord::new(it, stats, ce, aux_value, aux_name));
        state.numeric(it, sgd.step(&mut model, &grads))?;
        model.update_running_stats(&pass);

        if (it + 1) % config.checkpoint_interval == 0 {
            snapshots.push_back(model.clone());
            if snapshots.len() > config.checkpoint_average {
                snapshots.pop_front();
            }
        }
    }

    if snapshots.back() != Some(&model) {
        snapshots.push_back(model.clone());
        if snapshots.len() > config.checkpoint_average {
            snapshots.pop_front();
        }
    }
    Ok(TrainOutcome {
        model,
        snapshots: snapshots.into(),
        telemetry: state.telemetry,
        hna_radius: radius,
    })
}
