//! Paired audio-visual samples, the synthetic benchmark, and the splits that
//! decide what a trainer may see.
//!
//! Splits are structural: a domain-generalization trainer receives a
//! [`DgTrainSet`], which only holds source batches, and an adaptation trainer
//! receives a [`UdaTrainSet`] whose target batch carries no labels at all.
//! Target test data lives beside the train set in the split and is only
//! handed to the evaluator.

mod benchmark;
pub mod feature_file;

pub use benchmark::{generate_benchmark, BenchmarkSpec};
pub use feature_file::{decode_feature_file, encode_feature_file, load_feature_file, save_feature_file};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// `N` paired samples: row `i` of `visual` and row `i` of `audio` belong to
/// the same clip.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalBatch {
    visual: Matrix,
    audio: Matrix,
    labels: Option<Vec<usize>>,
    domain_id: usize,
}

impl MultiModalBatch {
    pub fn new(visual: Matrix, audio: Matrix, labels: Option<Vec<usize>>, domain_id: usize) -> Result<Self> {
        if visual.rows() != audio.rows() {
            return Err(Error::shape(format!(
                "modality pairing: {} visual rows and {} audio rows",
                visual.rows(),
                audio.rows()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != visual.rows() {
                return Err(Error::shape(format!(
                    "{} labels for {} samples",
                    l.len(),
                    visual.rows()
                )));
            }
        }
        Ok(Self {
            visual,
            audio,
            labels,
            domain_id,
        })
    }

    pub fn visual(&self) -> &Matrix {
        &self.visual
    }

    pub fn audio(&self) -> &Matrix {
        &self.audio
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn domain_id(&self) -> usize {
        self.domain_id
    }

    pub fn len(&self) -> usize {
        self.visual.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.visual.rows() == 0
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn select(&self, indices: &[usize]) -> MultiModalBatch {
        MultiModalBatch {
            visual: self.visual.select_rows(indices),
            audio: self.audio.select_rows(indices),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            domain_id: self.domain_id,
        }
    }

    pub fn without_labels(&self) -> MultiModalBatch {
        MultiModalBatch {
            labels: None,
            ..self.clone()
        }
    }

    pub fn with_domain_id(mut self, domain_id: usize) -> Self {
        self.domain_id = domain_id;
        self
    }

    /// Stacks batches into one pool. The result is labeled only if every part
    /// is; it takes the first part's domain id.
    pub fn concat(parts: &[&MultiModalBatch]) -> Result<MultiModalBatch> {
        let first = parts.first().ok_or_else(|| Error::config("cannot pool zero batches"))?;
        let visual = Matrix::vstack(&parts.iter().map(|b| &b.visual).collect::<Vec<_>>())?;
        let audio = Matrix::vstack(&parts.iter().map(|b| &b.audio).collect::<Vec<_>>())?;
        let labels = parts
            .iter()
            .map(|b| b.labels.clone())
            .collect::<Option<Vec<_>>>()
            .map(|ls| ls.concat());
        MultiModalBatch::new(visual, audio, labels, first.domain_id)
    }
}

/// One domain of the benchmark with its train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub id: usize,
    pub train: MultiModalBatch,
    pub test: MultiModalBatch,
}

/// Which sources a domain-generalization split trains on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceSelection {
    /// Every domain except the target (multi-source).
    AllRemaining,
    /// Explicit source list (single-source is a list of one).
    Only(Vec<usize>),
}

/// Labeled source data, the only thing a generalization trainer receives.
#[derive(Debug, Clone, PartialEq)]
pub struct DgTrainSet {
    pub sources: Vec<MultiModalBatch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgSplit {
    pub train: DgTrainSet,
    pub source_ids: Vec<usize>,
    /// Held-out source samples, for in-domain accuracy.
    pub source_test: MultiModalBatch,
    pub target_id: usize,
    pub target_test: MultiModalBatch,
}

/// One labeled source and one unlabeled target.
#[derive(Debug, Clone, PartialEq)]
pub struct UdaTrainSet {
    pub source: MultiModalBatch,
    pub target: MultiModalBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UdaSplit {
    pub train: UdaTrainSet,
    pub source_id: usize,
    pub source_test: MultiModalBatch,
    pub target_id: usize,
    pub target_test: MultiModalBatch,
}

/// Builds a generalization split: sources contribute their labeled training
/// partitions; the target contributes only its test partition, to the
/// evaluator.
pub fn make_dg_split(domains: &[Domain], target: usize, sources: SourceSelection) -> Result<DgSplit> {
    if domains.len() < 2 {
        return Err(Error::config(format!(
            "domain generalization needs at least 2 domains, got {}",
            domains.len()
        )));
    }
    check_index(domains, target, "target")?;
    let source_ids = match sources {
        SourceSelection::AllRemaining => (0..domains.len()).filter(|&d| d != target).collect(),
        SourceSelection::Only(ids) => ids,
    };
    if source_ids.is_empty() {
        return Err(Error::config("no source domains selected"));
    }
    for &s in &source_ids {
        check_index(domains, s, "source")?;
        if s == target {
            return Err(Error::config(format!("domain {s} is both source and target")));
        }
    }
    let train = DgTrainSet {
        sources: source_ids.iter().map(|&s| domains[s].train.clone()).collect(),
    };
    if train.sources.iter().any(|b| !b.is_labeled()) {
        return Err(Error::config("source domains must be labeled"));
    }
    let source_test = MultiModalBatch::concat(&source_ids.iter().map(|&s| &domains[s].test).collect::<Vec<_>>())?;
    Ok(DgSplit {
        train,
        source_ids,
        source_test,
        target_id: target,
        target_test: domains[target].test.clone(),
    })
}

/// Builds an adaptation split. The target's training partition is stripped
/// of labels; its test partition goes to the evaluator.
pub fn make_uda_split(domains: &[Domain], source: usize, target: usize) -> Result<UdaSplit> {
    check_index(domains, source, "source")?;
    check_index(domains, target, "target")?;
    if source == target {
        return Err(Error::config(format!("source and target are both domain {source}")));
    }
    if !domains[source].train.is_labeled() {
        return Err(Error::config("source domain must be labeled"));
    }
    Ok(UdaSplit {
        train: UdaTrainSet {
            source: domains[source].train.clone(),
            target: domains[target].train.without_labels(),
        },
        source_id: source,
        source_test: domains[source].test.clone(),
        target_id: target,
        target_test: domains[target].test.clone(),
    })
}

/// Every ordered `(source, target)` pair with distinct members.
pub fn ordered_pairs(num_domains: usize) -> Vec<(usize, usize)> {
    (0..num_domains)
        .flat_map(|s| (0..num_domains).filter(move |&t| t != s).map(move |t| (s, t)))
        .collect()
}

fn check_index(domains: &[Domain], idx: usize, role: &str) -> Result<()> {
    if idx >= domains.len() {
        return Err(Error::config(format!(
            "{role} index {idx} out of range for {} domains",
            domains.len()
        )));
    }
    Ok(())
}
