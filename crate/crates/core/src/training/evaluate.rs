use super::telemetry::EvalMode;
use crate::data::MultiModalBatch;
use crate::error::{Error, Result};
use crate::losses::Modality;
use crate::model::TwoStreamModel;
use crate::numerics::{argmax, softmax_rows, Matrix};

fn selection(mode: EvalMode) -> Option<Modality> {
    match mode {
        EvalMode::Fused => None,
        EvalMode::VisualOnly => Some(Modality::Visual),
        EvalMode::AudioOnly => Some(Modality::Audio),
    }
}

fn labels_of(dataset: &MultiModalBatch) -> Result<&[usize]> {
    if dataset.is_empty() {
        return Err(Error::config("cannot evaluate on an empty dataset"));
    }
    dataset
        .labels()
        .ok_or_else(|| Error::config("evaluation needs a labeled dataset"))
}

/// Fraction of rows whose argmax (ties to the lowest class) equals the label.
pub fn accuracy_of_scores(scores: &Matrix, labels: &[usize]) -> Result<f64> {
    if scores.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} score rows for {} labels",
            scores.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::config("cannot evaluate on an empty dataset"));
    }
    let hits = scores
        .iter_rows()
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Top-1 accuracy of one model in eval mode.
pub fn evaluate(model: &TwoStreamModel, dataset: &MultiModalBatch, mode: EvalMode) -> Result<f64> {
    let labels = labels_of(dataset)?;
    accuracy_of_scores(&model.predict_logits(dataset, selection(mode))?, labels)
}

/// Per-sample mean of the snapshots' softmax score vectors.
pub fn averaged_scores(snapshots: &[TwoStreamModel], dataset: &MultiModalBatch, mode: EvalMode) -> Result<Matrix> {
    let (first, rest) = snapshots
        .split_first()
        .ok_or_else(|| Error::config("checkpoint averaging needs at least one snapshot"))?;
    let mut sum = softmax_rows(&first.predict_logits(dataset, selection(mode))?);
    for m in rest {
        sum.add_assign(&softmax_rows(&m.predict_logits(dataset, selection(mode))?))?;
    }
    Ok(sum.scale(1.0 / snapshots.len() as f64))
}

/// Accuracy of the prediction obtained by averaging the snapshots' softmax
/// scores. With one snapshot this is [`evaluate`].
pub fn average_checkpoint_scores(
    snapshots: &[TwoStreamModel],
    dataset: &MultiModalBatch,
    mode: EvalMode,
) -> Result<f64> {
    let labels = labels_of(dataset)?;
    accuracy_of_scores(&averaged_scores(snapshots, dataset, mode)?, labels)
}
