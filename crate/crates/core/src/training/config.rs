use std::fmt;
use std::path::{Path, PathBuf};

use crate::data::{generate_benchmark, load_feature_file, BenchmarkSpec, Domain};
use crate::error::{Error, Result};
use crate::losses::{cosine_alignment_loss, hna_loss, orthogonality_loss, rna_loss, FeatureBatch, LossResult};
use crate::model::{FusionMode, ModelConfig};
use crate::numerics::SgdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    /// Generalization from one source domain.
    DgSingle,
    /// Generalization from every non-target domain, pooled.
    DgMulti,
    /// Adaptation with one labeled source and the unlabeled target.
    Uda,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::DgSingle => "dg-single",
            Setting::DgMulti => "dg-multi",
            Setting::Uda => "uda",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dg-single" => Ok(Setting::DgSingle),
            "dg-multi" => Ok(Setting::DgMulti),
            "uda" => Ok(Setting::Uda),
            other => Err(Error::config(format!(
                "unknown setting '{other}' (expected dg-single, dg-multi or uda)"
            ))),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The auxiliary term added to cross-entropy, weighted by `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AuxLoss {
    None,
    Rna,
    CosineAlign,
    Orthogonality,
    /// Hard norm alignment. Without an explicit radius, `R` is set half-way
    /// between the two modalities' mean feature norms of the freshly
    /// initialized model on the source training data.
    Hna {
        radius: Option<f64>,
    },
    /// No feature loss; batch norm in front of both classifiers instead.
    BatchNormOnly,
}

impl AuxLoss {
    pub fn name(&self) -> &'static str {
        match self {
            AuxLoss::None => "none",
            AuxLoss::Rna => "rna",
            AuxLoss::CosineAlign => "cosine-align",
            AuxLoss::Orthogonality => "orthogonality",
            AuxLoss::Hna { .. } => "hna",
            AuxLoss::BatchNormOnly => "batchnorm-only",
        }
    }

    /// Accepts the names above; `hna(<R>)` pins the radius.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("hna(").and_then(|r| r.strip_suffix(')')) {
            let radius: f64 = inner
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad hna radius '{inner}'")))?;
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::config(format!("hna radius must be positive, got {radius}")));
            }
            return Ok(AuxLoss::Hna { radius: Some(radius) });
        }
        match s {
            "none" => Ok(AuxLoss::None),
            "rna" => Ok(AuxLoss::Rna),
            "cosine-align" => Ok(AuxLoss::CosineAlign),
            "orthogonality" => Ok(AuxLoss::Orthogonality),
            "hna" => Ok(AuxLoss::Hna { radius: None }),
            "batchnorm-only" => Ok(AuxLoss::BatchNormOnly),
            other => Err(Error::config(format!(
                "unknown auxiliary loss '{other}' (expected none, rna, cosine-align, orthogonality, hna, hna(<R>) or batchnorm-only)"
            ))),
        }
    }

    /// Whether this choice puts a loss on the features.
    pub fn is_feature_loss(&self) -> bool {
        !matches!(self, AuxLoss::None | AuxLoss::BatchNormOnly)
    }

    pub fn uses_batchnorm(&self) -> bool {
        matches!(self, AuxLoss::BatchNormOnly)
    }

    /// Evaluates the feature loss, `None` when there is none. `radius` is
    /// the resolved hard-norm-alignment target.
    pub fn compute(
        &self,
        visual: &FeatureBatch,
        audio: &FeatureBatch,
        radius: Option<f64>,
    ) -> Result<Option<LossResult>> {
        match self {
            AuxLoss::None | AuxLoss::BatchNormOnly => Ok(None),
            AuxLoss::Rna => rna_loss(visual, audio).map(Some),
            AuxLoss::CosineAlign => cosine_alignment_loss(visual, audio).map(Some),
            AuxLoss::Orthogonality => orthogonality_loss(visual, audio).map(Some),
            AuxLoss::Hna { radius: fixed } => {
                let r = fixed
                    .or(radius)
                    .ok_or_else(|| Error::config("hard norm alignment radius not resolved"))?;
                hna_loss(visual, audio, r).map(Some)
            }
        }
    }
}

impl fmt::Display for AuxLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuxLoss::Hna { radius: Some(r) } => write!(f, "hna({r})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Where the domains come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Benchmark(BenchmarkSpec),
    /// A directory of `domain<i>_train.rnafeat` / `domain<i>_test.rnafeat`
    /// files, `i = 0, 1, ...`.
    Directory(PathBuf),
}

pub fn domain_file_name(domain: usize, split: &str) -> String {
    format!("domain{domain}_{split}.rnafeat")
}

impl DataSource {
    pub fn load(&self) -> Result<Vec<Domain>> {
        match self {
            DataSource::Benchmark(spec) => generate_benchmark(spec),
            DataSource::Directory(dir) => load_domain_dir(dir),
        }
    }
}

fn load_domain_dir(dir: &Path) -> Result<Vec<Domain>> {
    if !dir.is_dir() {
        return Err(Error::config(format!(
            "data directory {} does not exist",
            dir.display()
        )));
    }
    let mut domains = Vec::new();
    loop {
        let d = domains.len();
        let train_path = dir.join(domain_file_name(d, "train"));
        let test_path = dir.join(domain_file_name(d, "test"));
        if !train_path.exists() {
            break;
        }
        let read = |p: &Path| -> Result<_> {
            load_feature_file(p).map(|b| b.with_domain_id(d)).map_err(|e| match e {
                Error::Parse { location, message } => Error::Parse {
                    location: format!("{}: {location}", p.display()),
                    message,
                },
                Error::Io(io) => Error::config(format!("{}: {io}", p.display())),
                other => other,
            })
        };
        domains.push(Domain {
            id: d,
            train: read(&train_path)?,
            test: read(&test_path)?,
        });
    }
    if domains.is_empty() {
        return Err(Error::config(format!(
            "no {} found in {}",
            domain_file_name(0, "train"),
            dir.display()
        )));
    }
    Ok(domains)
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub setting: Setting,
    /// Source domain for `dg-single` and `uda`.
    pub source: usize,
    pub target: usize,
    pub aux: AuxLoss,
    /// Weight of the auxiliary loss.
    pub lambda: f64,
    pub fusion: FusionMode,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub optimizer: SgdConfig,
    pub iterations: usize,
    pub batch_size: usize,
    /// Number of trailing snapshots whose scores are averaged at test time.
    pub checkpoint_average: usize,
    /// Iterations between snapshots.
    pub checkpoint_interval: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Benchmark(BenchmarkSpec::default()),
            setting: Setting::DgSingle,
            source: 0,
            target: 1,
            aux: AuxLoss::Rna,
            lambda: 1.0,
            fusion: FusionMode::Late,
            hidden_dims: vec![128],
            feature_dim: 64,
            num_classes: 8,
            optimizer: SgdConfig::default(),
            iterations: 2000,
            batch_size: 32,
            checkpoint_average: 9,
            checkpoint_interval: 50,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Checks the invariants a configuration file must satisfy. The library
    /// trainers accept zero iterations (and return the initial model); the
    /// configuration level does not.
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        self.validate_training()
    }

    pub(crate) fn validate_training(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.checkpoint_average == 0 {
            return Err(Error::config("checkpoint_average must be at least 1"));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::config("checkpoint_interval must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if let DataSource::Benchmark(spec) = &self.data {
            spec.validate()?;
            if spec.num_classes != self.num_classes {
                return Err(Error::config(format!(
                    "benchmark has {} classes but the model is configured for {}",
                    spec.num_classes, self.num_classes
                )));
            }
        }
        self.optimizer.validate()
    }

    pub fn model_config(&self, visual_input_dim: usize, audio_input_dim: usize) -> ModelConfig {
        ModelConfig {
            visual_input_dim,
            audio_input_dim,
            hidden_dims: self.hidden_dims.clone(),
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
            fusion: self.fusion,
            batchnorm: self.aux.uses_batchnorm(),
        }
    }
}
