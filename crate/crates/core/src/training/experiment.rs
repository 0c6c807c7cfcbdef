use std::fmt::Write as _;

use rayon::prelude::*;

use super::config::{AuxLoss, ExperimentConfig, Setting};
use super::evaluate::average_checkpoint_scores;
use super::telemetry::{top_k_norm_share, EvalMode, EvalRecord, TopKShare};
use super::trainer::{train_dg, train_uda, TrainOutcome};
use crate::data::{make_dg_split, make_uda_split, ordered_pairs, Domain, MultiModalBatch, SourceSelection};
use crate::error::{Error, Result};
use crate::losses::Modality;
use crate::model::FusionMode;

/// Default `k` of the top-k norm share, clamped to the feature width.
pub const DEFAULT_TOP_K: usize = 300;

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Fused top-1 accuracy on the target test split, in `[0, 1]`, from the
    /// averaged snapshot scores.
    pub accuracy: f64,
    pub outcome: TrainOutcome,
}

/// Trains according to `config.setting` and evaluates the averaged
/// snapshots on the source and target test splits in every mode.
pub fn run_experiment(config: &ExperimentConfig, domains: &[Domain]) -> Result<RunResult> {
    let (mut outcome, source_test, target_test) = match config.setting {
        Setting::DgSingle | Setting::DgMulti => {
            let sel = match config.setting {
                Setting::DgSingle => SourceSelection::Only(vec![config.source]),
                _ => SourceSelection::AllRemaining,
            };
            let split = make_dg_split(domains, config.target, sel)?;
            (train_dg(config, &split.train)?, split.source_test, split.target_test)
        }
        Setting::Uda => {
            let split = make_uda_split(domains, config.source, config.target)?;
            (train_uda(config, &split.train)?, split.source_test, split.target_test)
        }
    };
    let mut accuracy = f64::NAN;
    for (name, data) in [("source-test", &source_test), ("target-test", &target_test)] {
        for mode in EvalMode::ALL {
            let acc = average_checkpoint_scores(&outcome.snapshots, data, mode)?;
            if name == "target-test" && mode == EvalMode::Fused {
                accuracy = acc;
            }
            outcome.telemetry.evaluations.push(EvalRecord {
                split: name.to_string(),
                mode,
                accuracy: acc,
            });
        }
    }
    outcome.telemetry.top_k_share = Some(feature_top_k(&outcome, &target_test)?);
    Ok(RunResult { accuracy, outcome })
}

fn feature_top_k(outcome: &TrainOutcome, data: &MultiModalBatch) -> Result<TopKShare> {
    let m = &outcome.model;
    let k = DEFAULT_TOP_K.min(m.feature_dim());
    let fv = m.encode(Modality::Visual, data.visual())?;
    let fa = m.encode(Modality::Audio, data.audio())?;
    Ok(TopKShare {
        k,
        visual: top_k_norm_share(fv.features(), k),
        audio: top_k_norm_share(fa.features(), k),
    })
}

/// One row of a results table: an auxiliary loss and a fusion mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub name: String,
    pub aux: AuxLoss,
    pub fusion: FusionMode,
    /// Overrides the base configuration's `λ` for this row.
    pub lambda: Option<f64>,
}

impl Method {
    pub const STANDARD: [&'static str; 6] = [
        "source-only",
        "alignment-only",
        "orthogonality-only",
        "batchnorm",
        "hna",
        "rna",
    ];

    /// Table names: `source-only`, `alignment-only`, `orthogonality-only`,
    /// `batchnorm`, `hna`, `rna`, each optionally suffixed `-mid` for
    /// mid-level fusion and then `@<λ>` for a row-specific weight.
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        let (head, lambda) = match name.split_once('@') {
            Some((h, l)) => {
                let lambda: f64 = l
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad weight in method '{name}'")))?;
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::config(format!("weight in method '{name}' must be >= 0")));
                }
                (h.trim(), Some(lambda))
            }
            None => (name, None),
        };
        let (base, fusion) = match head.strip_suffix("-mid") {
            Some(b) => (b, FusionMode::Mid),
            None => (head, FusionMode::Late),
        };
        let aux = match base {
            "source-only" => AuxLoss::None,
            "alignment-only" => AuxLoss::CosineAlign,
            "orthogonality-only" => AuxLoss::Orthogonality,
            "batchnorm" => AuxLoss::BatchNormOnly,
            "hna" => AuxLoss::Hna { radius: None },
            "rna" => AuxLoss::Rna,
            other => {
                return Err(Error::config(format!(
                    "unknown method '{other}' (expected one of {})",
                    Self::STANDARD.join(", ")
                )))
            }
        };
        Ok(Self {
            name: name.to_string(),
            aux,
            fusion,
            lambda,
        })
    }
}

/// A table column: the sources trained on and the target evaluated on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainPair {
    pub sources: Vec<usize>,
    pub target: usize,
}

impl DomainPair {
    /// `D0-D1` for single source, `D0+D2-D1` for several.
    pub fn label(&self) -> String {
        let src: Vec<String> = self.sources.iter().map(|s| format!("D{s}")).collect();
        format!("{}-D{}", src.join("+"), self.target)
    }
}

/// The columns of the standard tables: every ordered pair for single-source
/// settings, every leave-one-out target for multi-source.
pub fn standard_pairs(setting: Setting, num_domains: usize) -> Vec<DomainPair> {
    match setting {
        Setting::DgSingle | Setting::Uda => ordered_pairs(num_domains)
            .into_iter()
            .map(|(s, t)| DomainPair {
                sources: vec![s],
                target: t,
            })
            .collect(),
        Setting::DgMulti => (0..num_domains)
            .map(|t| DomainPair {
                sources: (0..num_domains).filter(|&d| d != t).collect(),
                target: t,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    /// Mean accuracy in percent over seeds; NaN if any seed failed.
    pub mean: f64,
    /// Sample standard deviation in percent (0 for one seed).
    pub std: f64,
    pub per_seed: Vec<f64>,
    pub failed: bool,
}

impl CellSummary {
    fn from_runs(runs: &[Result<f64, String>]) -> Self {
        let failed = runs.iter().any(|r| r.is_err());
        let per_seed: Vec<f64> = runs.iter().map(|r| r.as_ref().copied().unwrap_or(f64::NAN)).collect();
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = if per_seed.len() > 1 {
            (per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            per_seed,
            failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub cells: Vec<CellSummary>,
    /// Arithmetic mean of the cell means.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    /// Pair labels, in column order (the mean column is implicit).
    pub columns: Vec<String>,
    pub rows: Vec<MethodRow>,
    /// `method / pair / seed: error` for each failed run.
    pub failures: Vec<String>,
}

impl ResultsTable {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    fn csv_with(&self, value: impl Fn(&CellSummary) -> f64, mean: impl Fn(&MethodRow) -> f64) -> String {
        let mut out = format!("method,{},mean\n", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.cells.iter().map(|c| value(c).to_string()).collect();
            writeln!(out, "{},{},{}", row.method, cells.join(","), mean(row)).expect("writing to a String");
        }
        out
    }

    /// Mean top-1 accuracy (%) per cell, one row per method, plus `mean`.
    pub fn to_csv(&self) -> String {
        self.csv_with(|c| c.mean, |r| r.mean)
    }

    /// Standard deviation over seeds per cell; the last column is the mean
    /// of the row's standard deviations.
    pub fn to_std_csv(&self) -> String {
        self.csv_with(
            |c| c.std,
            |r| r.cells.iter().map(|c| c.std).sum::<f64>() / r.cells.len() as f64,
        )
    }
}

/// Runs every (method, pair, seed) cell of a table on `domains`. Cells run
/// in parallel but are assembled in a fixed order; a failing run marks its
/// cell NaN and the rest continue.
pub fn run_experiment_matrix(
    base: &ExperimentConfig,
    domains: &[Domain],
    methods: &[Method],
    pairs: &[DomainPair],
    seeds: &[u64],
) -> Result<ResultsTable> {
    if methods.is_empty() || pairs.is_empty() || seeds.is_empty() {
        return Err(Error::config(
            "a results table needs at least one method, pair and seed",
        ));
    }
    for p in pairs {
        let single = matches!(base.setting, Setting::DgSingle | Setting::Uda);
        if single && p.sources.len() != 1 {
            return Err(Error::config(format!(
                "{} needs exactly one source per pair",
                base.setting
            )));
        }
        if p.target >= domains.len() || p.sources.iter().any(|&s| s >= domains.len() || s == p.target) {
            return Err(Error::config(format!("invalid domain pair {}", p.label())));
        }
    }
    let jobs: Vec<(usize, usize, u64)> = (0..methods.len())
        .flat_map(|m| (0..pairs.len()).flat_map(move |p| seeds.iter().map(move |&s| (m, p, s))))
        .collect();
    let results: Vec<Result<f64, String>> = jobs
        .par_iter()
        .map(|&(m, p, seed)| {
            let config = ExperimentConfig {
                aux: methods[m].aux,
                fusion: methods[m].fusion,
                lambda: methods[m].lambda.unwrap_or(base.lambda),
                source: pairs[p].sources[0],
                target: pairs[p].target,
                seed,
                ..base.clone()
            };
            run_experiment(&config, domains)
                .map(|r| 100.0 * r.accuracy)
                .map_err(|e| e.to_string())
        })
        .collect();

    let mut failures = Vec::new();
    let mut rows = Vec::with_capacity(methods.len());
    let per_cell = seeds.len();
    for (m, method) in methods.iter().enumerate() {
        let mut cells = Vec::with_capacity(pairs.len());
        for (p, pair) in pairs.iter().enumerate() {
            let start = (m * pairs.len() + p) * per_cell;
            let runs = &results[start..start + per_cell];
            for (seed, r) in seeds.iter().zip(runs) {
                if let Err(e) = r {
                    failures.push(format!("{} / {} / seed {seed}: {e}", method.name, pair.label()));
                }
            }
            cells.push(CellSummary::from_runs(runs));
        }
        let mean = cells.iter().map(|c| c.mean).sum::<f64>() / cells.len() as f64;
        rows.push(MethodRow {
            method: method.name.clone(),
            cells,
            mean,
        });
    }
    Ok(ResultsTable {
        columns: pairs.iter().map(DomainPair::label).collect(),
        rows,
        failures,
    })
}
