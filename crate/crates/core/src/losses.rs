//! Cross-modal feature losses with analytic gradients.
//!
//! Every loss takes a visual and an audio [`FeatureBatch`] holding the same
//! samples (row `i` of both batches comes from sample `i`) and returns a
//! [`LossResult`] carrying the value and the gradient with respect to each
//! batch.
//!
//! Two families live here. The norm family ([`rna_loss`], [`hna_loss`])
//! sees only per-sample feature norms `h(x) = ‖f(x)‖₂` and is blind to the
//! angle between modalities. The angle family ([`cosine_alignment_loss`],
//! [`orthogonality_loss`]) sees only that angle and is blind to magnitudes.
//! [`dot_product_decomposition`] ties the two together through
//! `⟨v, a⟩ = ‖v‖‖a‖cos θ`.

use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{dot, l2_norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Visual,
    Audio,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Source,
    Target,
    Id(usize),
}

/// `N × D` encoded features of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    features: Matrix,
    modality: Modality,
    domain: Option<DomainTag>,
}

impl FeatureBatch {
    /// Fails on an empty batch or non-finite entries.
    pub fn new(features: Matrix, modality: Modality) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::shape(format!("empty {modality} feature batch")));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite(format!("{modality} features")));
        }
        Ok(Self {
            features,
            modality,
            domain: None,
        })
    }

    pub fn with_domain(mut self, domain: DomainTag) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn into_features(self) -> Matrix {
        self.features
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn domain(&self) -> Option<DomainTag> {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

/// Per-sample L2 norms `h(x_i)`, one per row.
pub fn feature_norms(batch: &FeatureBatch) -> Vec<f64> {
    batch.features.iter_rows().map(l2_norm).collect()
}

/// Mean feature norms of the two modalities and their difference and ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean_norm_visual: f64,
    pub mean_norm_audio: f64,
    /// `mean_norm_visual − mean_norm_audio`.
    pub delta: f64,
    /// `mean_norm_visual / mean_norm_audio`.
    pub rho: f64,
}

impl NormStats {
    /// Builds the statistics from the two means. `rho` is NaN when the audio
    /// mean is zero.
    pub fn from_means(mean_norm_visual: f64, mean_norm_audio: f64) -> Self {
        let rho = if mean_norm_audio > 0.0 {
            mean_norm_visual / mean_norm_audio
        } else {
            f64::NAN
        };
        Self {
            mean_norm_visual,
            mean_norm_audio,
            delta: mean_norm_visual - mean_norm_audio,
            rho,
        }
    }
}

/// Mean-feature-norm distance and norm ratio between paired batches.
pub fn norm_stats(visual: &FeatureBatch, audio: &FeatureBatch) -> Result<NormStats> {
    check_pair(visual, audio)?;
    let stats = NormStats::from_means(mean(&feature_norms(visual)), mean(&feature_norms(audio)));
    if stats.mean_norm_audio <= 0.0 {
        return Err(Error::Degenerate(
            "mean audio feature norm is zero, norm ratio undefined".into(),
        ));
    }
    Ok(stats)
}

/// Loss value with gradients for both input batches.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_visual: Matrix,
    pub grad_audio: Matrix,
}

/// Relative norm alignment: `(ρ − 1)²` with `ρ = Σᵢ‖vᵢ‖ / Σᵢ‖aᵢ‖`.
///
/// With equal batch sizes the ratio of sums equals the ratio of means, so the
/// loss is zero exactly when the two modalities have the same mean feature
/// norm. Rows of norm zero get zero gradient.
pub fn rna_loss(visual: &FeatureBatch, audio: &FeatureBatch) -> Result<LossResult> {
    check_pair(visual, audio)?;
    let norms_v = feature_norms(visual);
    let norms_a = feature_norms(audio);
    let sum_v: f64 = norms_v.iter().sum();
    let sum_a: f64 = norms_a.iter().sum();
    if sum_a <= 0.0 {
        return Err(Error::Degenerate(
            "mean audio feature norm is zero, relative norm alignment undefined".into(),
        ));
    }
    let rho = sum_v / sum_a;
    let dl_drho = 2.0 * (rho - 1.0);
    // ∂ρ/∂Σv = 1/Σa, ∂ρ/∂Σa = −Σv/Σa²
    let grad_visual = norm_gradient(visual.features(), &norms_v, dl_drho / sum_a);
    let grad_audio = norm_gradient(audio.features(), &norms_a, -dl_drho * sum_v / (sum_a * sum_a));
    Ok(LossResult {
        value: (rho - 1.0).powi(2),
        grad_visual,
        grad_audio,
    })
}

/// Source and target terms of the adaptation variant of [`rna_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct UdaLoss {
    pub source: LossResult,
    pub target: LossResult,
}

impl UdaLoss {
    pub fn total(&self) -> f64 {
        self.source.value + self.target.value
    }
}

/// `L = L_source + L_target`, each term a [`rna_loss`] on its own domain.
/// The source term's gradients touch only source features and likewise for
/// the target.
pub fn rna_loss_uda(
    source_visual: &FeatureBatch,
    source_audio: &FeatureBatch,
    target_visual: &FeatureBatch,
    target_audio: &FeatureBatch,
) -> Result<UdaLoss> {
    let source = rna_loss(source_visual, source_audio).map_err(|e| annotate(e, "source domain"))?;
    let target = rna_loss(target_visual, target_audio).map_err(|e| annotate(e, "target domain"))?;
    Ok(UdaLoss { source, target })
}

/// Hard norm alignment: `(mean‖v‖ − R)² + (mean‖a‖ − R)²`.
pub fn hna_loss(visual: &FeatureBatch, audio: &FeatureBatch, target_norm: f64) -> Result<LossResult> {
    if !(target_norm > 0.0 && target_norm.is_finite()) {
        return Err(Error::config(format!(
            "hard norm alignment radius must be positive, got {target_norm}"
        )));
    }
    check_pair(visual, audio)?;
    let n = visual.len() as f64;
    let norms_v = feature_norms(visual);
    let norms_a = feature_norms(audio);
    let dev_v = mean(&norms_v) - target_norm;
    let dev_a = mean(&norms_a) - target_norm;
    Ok(LossResult {
        value: dev_v * dev_v + dev_a * dev_a,
        grad_visual: norm_gradient(visual.features(), &norms_v, 2.0 * dev_v / n),
        grad_audio: norm_gradient(audio.features(), &norms_a, 2.0 * dev_a / n),
    })
}

/// Alignment baseline: mean over paired rows of `1 − cos θᵢ`.
pub fn cosine_alignment_loss(visual: &FeatureBatch, audio: &FeatureBatch) -> Result<LossResult> {
    cosine_family(visual, audio, |c| (1.0 - c, -1.0))
}

/// Orthogonality baseline: mean over paired rows of `cos² θᵢ`.
pub fn orthogonality_loss(visual: &FeatureBatch, audio: &FeatureBatch) -> Result<LossResult> {
    cosine_family(visual, audio, |c| (c * c, 2.0 * c))
}

/// The four quantities of `⟨v, a⟩ = ‖v‖ ‖a‖ cos θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DotDecomposition {
    pub dot: f64,
    pub norm_v: f64,
    pub norm_a: f64,
    /// `None` when either vector is zero.
    pub cos_theta: Option<f64>,
}

pub fn dot_product_decomposition(v: &[f64], a: &[f64]) -> Result<DotDecomposition> {
    if v.len() != a.len() {
        return Err(Error::shape(format!(
            "dot product of lengths {} and {}",
            v.len(),
            a.len()
        )));
    }
    let d = dot(v, a);
    let norm_v = l2_norm(v);
    let norm_a = l2_norm(a);
    let cos_theta = (norm_v > 0.0 && norm_a > 0.0).then(|| d / (norm_v * norm_a));
    Ok(DotDecomposition {
        dot: d,
        norm_v,
        norm_a,
        cos_theta,
    })
}

/// Shared body of the two angle losses. `per_row(c)` returns the row loss and
/// its derivative with respect to `c = cos θ`.
fn cosine_family(
    visual: &FeatureBatch,
    audio: &FeatureBatch,
    per_row: impl Fn(f64) -> (f64, f64),
) -> Result<LossResult> {
    check_pair(visual, audio)?;
    if visual.dim() != audio.dim() {
        return Err(Error::shape(format!(
            "cosine between {}-dim visual and {}-dim audio features",
            visual.dim(),
            audio.dim()
        )));
    }
    let (n, d) = visual.features().shape();
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad_visual = Matrix::zeros(n, d);
    let mut grad_audio = Matrix::zeros(n, d);
    for i in 0..n {
        let v = visual.features().row(i);
        let a = audio.features().row(i);
        let nv = l2_norm(v);
        let na = l2_norm(a);
        if nv == 0.0 || na == 0.0 {
            return Err(Error::Degenerate(format!(
                "row {i} has zero norm, cosine similarity undefined"
            )));
        }
        let c = dot(v, a) / (nv * na);
        let (loss, dloss_dc) = per_row(c);
        value += loss;
        // ∂c/∂v = a/(‖v‖‖a‖) − c·v/‖v‖², symmetric for a
        let scale = dloss_dc * inv_n;
        for (k, (gv, ga)) in grad_visual
            .row_mut(i)
            .iter_mut()
            .zip(grad_audio.row_mut(i).iter_mut())
            .enumerate()
        {
            *gv = scale * (a[k] / (nv * na) - c * v[k] / (nv * nv));
            *ga = scale * (v[k] / (nv * na) - c * a[k] / (na * na));
        }
    }
    Ok(LossResult {
        value: value * inv_n,
        grad_visual,
        grad_audio,
    })
}

/// `coeff · xᵢ / ‖xᵢ‖` for every row, zero rows mapping to zero.
fn norm_gradient(features: &Matrix, norms: &[f64], coeff: f64) -> Matrix {
    let mut grad = Matrix::zeros(features.rows(), features.cols());
    for (i, &h) in norms.iter().enumerate() {
        if h == 0.0 {
            continue;
        }
        let s = coeff / h;
        for (g, x) in grad.row_mut(i).iter_mut().zip(features.row(i)) {
            *g = s * x;
        }
    }
    grad
}

fn check_pair(visual: &FeatureBatch, audio: &FeatureBatch) -> Result<()> {
    if visual.modality() != Modality::Visual || audio.modality() != Modality::Audio {
        return Err(Error::config(format!(
            "expected (visual, audio) batches, got ({}, {})",
            visual.modality(),
            audio.modality()
        )));
    }
    if visual.len() != audio.len() {
        return Err(Error::shape(format!(
            "{} visual samples paired with {} audio samples",
            visual.len(),
            audio.len()
        )));
    }
    Ok(())
}

fn annotate(err: Error, what: &str) -> Error {
    match err {
        Error::Degenerate(m) => Error::Degenerate(format!("{what}: {m}")),
        Error::Shape(m) => Error::Shape(format!("{what}: {m}")),
        other => other,
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
