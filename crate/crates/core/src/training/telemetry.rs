use std::fmt;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::losses::NormStats;
use crate::numerics::Matrix;

pub const TELEMETRY_HEADER: &str = "iter,mean_norm_v,mean_norm_a,delta,rho,ce_loss,aux_loss";

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_norm_visual: f64,
    pub mean_norm_audio: f64,
    pub delta: f64,
    pub rho: f64,
    pub ce_loss: f64,
    /// Unweighted auxiliary loss (0 when there is none).
    pub aux_loss: f64,
    pub aux_loss_name: String,
}

impl IterationRecord {
    pub fn new(iteration: usize, stats: NormStats, ce_loss: f64, aux_loss: f64, aux_loss_name: &str) -> Self {
        Self {
            iteration,
            mean_norm_visual: stats.mean_norm_visual,
            mean_norm_audio: stats.mean_norm_audio,
            delta: stats.delta,
            rho: stats.rho,
            ce_loss,
            aux_loss,
            aux_loss_name: aux_loss_name.to_string(),
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iteration,
            self.mean_norm_visual,
            self.mean_norm_audio,
            self.delta,
            self.rho,
            self.ce_loss,
            self.aux_loss
        )
    }
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iter={} mean_norm_v={:.6} mean_norm_a={:.6} delta={:.6} rho={:.6} ce={:.6} {}={:.6}",
            self.iteration,
            self.mean_norm_visual,
            self.mean_norm_audio,
            self.delta,
            self.rho,
            self.ce_loss,
            self.aux_loss_name,
            self.aux_loss
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EvalMode {
    Fused,
    VisualOnly,
    AudioOnly,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::Fused, EvalMode::VisualOnly, EvalMode::AudioOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Fused => "fused",
            EvalMode::VisualOnly => "visual-only",
            EvalMode::AudioOnly => "audio-only",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub split: String,
    pub mode: EvalMode,
    /// Top-1 accuracy in `[0, 1]`.
    pub accuracy: f64,
}

/// Share of the total squared feature norm held by the `k` heaviest
/// dimensions, per modality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopKShare {
    pub k: usize,
    pub visual: f64,
    pub audio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormTelemetry {
    /// One record per iteration, on the (pooled) source batch.
    pub records: Vec<IterationRecord>,
    /// Adaptation only: statistics of the unlabeled target batch.
    pub target_records: Vec<IterationRecord>,
    pub evaluations: Vec<EvalRecord>,
    pub top_k_share: Option<TopKShare>,
}

impl NormTelemetry {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        records_to_csv(&self.records)
    }

    /// Mean `|ρ − 1|` over the first and the last tenth of the records
    /// (at least one record each).
    pub fn rho_deviation_deciles(&self) -> Option<(f64, f64)> {
        rho_deviation_deciles(&self.records)
    }
}

pub fn records_to_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from(TELEMETRY_HEADER);
    out.push('\n');
    for r in records {
        writeln!(out, "{}", r.to_csv_row()).expect("writing to a String");
    }
    out
}

pub fn rho_deviation_deciles(records: &[IterationRecord]) -> Option<(f64, f64)> {
    if records.is_empty() {
        return None;
    }
    let n = (records.len() / 10).max(1);
    let dev = |rs: &[IterationRecord]| rs.iter().map(|r| (r.rho - 1.0).abs()).sum::<f64>() / rs.len() as f64;
    Some((dev(&records[..n]), dev(&records[records.len() - n..])))
}

/// Parses a telemetry CSV. Records must be strictly ordered by iteration.
pub fn parse_telemetry_csv(text: &str) -> Result<Vec<IterationRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header_ok = reader
        .headers()
        .map(|h| h.iter().eq(TELEMETRY_HEADER.split(',')))
        .unwrap_or(false);
    if !header_ok {
        return Err(Error::parse("line 1", format!("expected header '{TELEMETRY_HEADER}'")));
    }
    let mut out: Vec<IterationRecord> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(format!("line {line}"), e.to_string())
        })?;
        let loc = format!("line {}", row.position().map_or(0, |p| p.line()));
        if row.len() != 7 {
            return Err(Error::parse(loc, format!("expected 7 fields, found {}", row.len())));
        }
        let iteration: usize = row[0]
            .parse()
            .map_err(|_| Error::parse(loc.clone(), format!("bad iteration '{}'", &row[0])))?;
        let mut nums = [0.0; 6];
        for (slot, tok) in nums.iter_mut().zip(row.iter().skip(1)) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(loc.clone(), format!("'{tok}' is not a number")))?;
        }
        if out.last().is_some_and(|prev| iteration <= prev.iteration) {
            return Err(Error::parse(loc, "iterations are not strictly increasing"));
        }
        out.push(IterationRecord {
            iteration,
            mean_norm_visual: nums[0],
            mean_norm_audio: nums[1],
            delta: nums[2],
            rho: nums[3],
            ce_loss: nums[4],
            aux_loss: nums[5],
            aux_loss_name: String::new(),
        });
    }
    Ok(out)
}

/// Fraction of `Σ_i ‖x_i‖²` carried by the `k` dimensions with the largest
/// column energy. `k` is clamped to the width; an all-zero matrix gives 0.
pub fn top_k_norm_share(features: &Matrix, k: usize) -> f64 {
    let mut energy = vec![0.0; features.cols()];
    for row in features.iter_rows() {
        for (e, x) in energy.iter_mut().zip(row) {
            *e += x * x;
        }
    }
    let total: f64 = energy.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    energy.sort_by(|a, b| b.total_cmp(a));
    let top: f64 = energy.iter().take(k.min(energy.len())).sum();
    top / total
}
