//! Flat `key = value` configuration files with `[section]` headers.
//!
//! ```text
//! # comment
//! [benchmark]          # or [data] dir = <path> for feature files
//! seed = 7
//!
//! [experiment]
//! setting = dg-single
//! aux = rna
//!
//! [matrix]
//! methods = source-only, rna
//! seeds = 0, 1, 2, 3, 4
//! ```
//!
//! Unknown sections or keys are errors, reported with their line.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rna_core::data::BenchmarkSpec;
use rna_core::model::FusionMode;
use rna_core::training::{AuxLoss, DataSource, DomainPair, ExperimentConfig, Method, Setting};

use crate::error::{CliError, CliResult};

pub const SECTIONS: [&str; 4] = ["benchmark", "data", "experiment", "matrix"];

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug)]
pub struct ConfigFile {
    path: PathBuf,
    entries: BTreeMap<(String, String), Entry>,
    sections: BTreeMap<String, usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        let mut cfg = ConfigFile {
            path: path.to_path_buf(),
            entries: BTreeMap::new(),
            sections: BTreeMap::new(),
        };
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(cfg.error(line, format!("unknown section [{name}]")));
                }
                if cfg.sections.insert(name.clone(), line).is_some() {
                    return Err(cfg.error(line, format!("section [{name}] appears twice")));
                }
                section = Some(name);
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(cfg.error(line, format!("expected 'key = value', found '{content}'")));
            };
            let Some(sec) = section.clone() else {
                return Err(cfg.error(line, "key outside of any [section]"));
            };
            let key = key.trim().to_string();
            let entry = Entry {
                value: value.trim().to_string(),
                line,
            };
            if cfg.entries.insert((sec.clone(), key.clone()), entry).is_some() {
                return Err(cfg.error(line, format!("duplicate key '{key}' in [{sec}]")));
            }
        }
        Ok(cfg)
    }

    fn error(&self, line: usize, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.contains_key(name)
    }

    fn take_raw(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn take_with<T>(
        &mut self,
        section: &str,
        key: &str,
        parse: impl FnOnce(&str) -> Result<T, String>,
    ) -> CliResult<Option<T>> {
        match self.take_raw(section, key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|m| self.error(e.line, format!("{section}.{key}: {m}"))),
        }
    }

    fn take<T: FromStr>(&mut self, section: &str, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        self.take_with(section, key, |v| v.parse::<T>().map_err(|e| format!("'{v}': {e}")))
    }

    fn set<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T) -> CliResult<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.take(section, key)? {
            *slot = v;
        }
        Ok(())
    }

    fn list<T: FromStr>(&mut self, section: &str, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.take_with(section, key, |v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| format!("'{s}': {e}")))
                .collect()
        })
    }

    /// Drops a whole section the current command does not use.
    pub fn ignore_section(&mut self, section: &str) {
        self.entries.retain(|(s, _), _| s != section);
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> CliResult<()> {
        match self.entries.iter().min_by_key(|(_, e)| e.line) {
            None => Ok(()),
            Some(((s, k), e)) => Err(self.error(e.line, format!("unknown key '{k}' in [{s}]"))),
        }
    }

    /// The `[benchmark]` section; defaults when the section is absent.
    pub fn benchmark_spec(&mut self) -> CliResult<BenchmarkSpec> {
        let mut spec = BenchmarkSpec::default();
        let s = "benchmark";
        self.set(s, "num_domains", &mut spec.num_domains)?;
        self.set(s, "num_classes", &mut spec.num_classes)?;
        self.set(s, "visual_dim", &mut spec.visual_dim)?;
        self.set(s, "audio_dim", &mut spec.audio_dim)?;
        self.set(s, "samples_per_class", &mut spec.samples_per_class)?;
        self.set(s, "prototype_scale", &mut spec.prototype_scale)?;
        self.set(s, "transform_strength", &mut spec.transform_strength)?;
        self.set(s, "audio_transform_strength", &mut spec.audio_transform_strength)?;
        self.set(s, "bias_scale", &mut spec.bias_scale)?;
        self.set(s, "noise_sigma", &mut spec.noise_sigma)?;
        self.set(s, "audio_noise_sigma", &mut spec.audio_noise_sigma)?;
        self.set(s, "audio_norm_scale", &mut spec.audio_norm_scale)?;
        self.set(s, "audio_gain_jitter", &mut spec.audio_gain_jitter)?;
        self.set(s, "train_fraction", &mut spec.train_fraction)?;
        self.set(s, "class_skew", &mut spec.class_skew)?;
        self.set(s, "seed", &mut spec.seed)?;
        Ok(spec)
    }

    /// `[data]` or `[benchmark]` (not both) plus `[experiment]`.
    pub fn experiment_config(&mut self) -> CliResult<ExperimentConfig> {
        let mut c = ExperimentConfig::default();
        if self.has_section("data") && self.has_section("benchmark") {
            let line = self.sections["data"];
            return Err(self.error(line, "use either [data] or [benchmark], not both"));
        }
        let explicit_classes: Option<usize> = self.take("experiment", "num_classes")?;
        if self.has_section("data") {
            let dir: PathBuf = self.take("data", "dir")?.ok_or_else(|| {
                let line = self.sections["data"];
                self.error(line, "[data] needs 'dir = <path>'")
            })?;
            let dir = if dir.is_relative() {
                self.path.parent().unwrap_or(Path::new(".")).join(dir)
            } else {
                dir
            };
            c.data = DataSource::Directory(dir);
        } else {
            let spec = self.benchmark_spec()?;
            c.num_classes = spec.num_classes;
            c.data = DataSource::Benchmark(spec);
        }
        if let Some(n) = explicit_classes {
            c.num_classes = n;
        }
        let s = "experiment";
        if let Some(v) = self.take_with(s, "setting", |v| Setting::parse(v).map_err(|e| e.to_string()))? {
            c.setting = v;
        }
        self.set(s, "source", &mut c.source)?;
        self.set(s, "target", &mut c.target)?;
        if let Some(v) = self.take_with(s, "aux", |v| AuxLoss::parse(v).map_err(|e| e.to_string()))? {
            c.aux = v;
        }
        self.set(s, "lambda", &mut c.lambda)?;
        if let Some(v) = self.take_with(s, "fusion", |v| FusionMode::parse(v).map_err(|e| e.to_string()))? {
            c.fusion = v;
        }
        if let Some(v) = self.list(s, "hidden_dims")? {
            c.hidden_dims = v;
        }
        self.set(s, "feature_dim", &mut c.feature_dim)?;
        self.set(s, "learning_rate", &mut c.optimizer.learning_rate)?;
        self.set(s, "momentum", &mut c.optimizer.momentum)?;
        self.set(s, "weight_decay", &mut c.optimizer.weight_decay)?;
        self.set(s, "iterations", &mut c.iterations)?;
        self.set(s, "batch_size", &mut c.batch_size)?;
        self.set(s, "checkpoint_average", &mut c.checkpoint_average)?;
        self.set(s, "checkpoint_interval", &mut c.checkpoint_interval)?;
        self.set(s, "seed", &mut c.seed)?;
        Ok(c)
    }

    /// The `[matrix]` section.
    pub fn matrix_plan(&mut self) -> CliResult<MatrixPlan> {
        let s = "matrix";
        let methods = match self.take_with(s, "methods", |v| {
            v.split(',')
                .map(str::trim)
                .filter(|m| !m.is_empty())
                .map(|m| Method::parse(m).map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, _>>()
        })? {
            Some(m) => m,
            None => Method::STANDARD
                .iter()
                .map(|m| Method::parse(m).expect("standard method names parse"))
                .collect(),
        };
        let seeds = self.list(s, "seeds")?.unwrap_or_else(|| vec![0, 1, 2, 3, 4]);
        let pairs = self.take_with(s, "pairs", |v| {
            v.split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(parse_pair)
                .collect::<Result<Vec<_>, _>>()
        })?;
        Ok(MatrixPlan { methods, seeds, pairs })
    }
}

#[derive(Debug, Clone)]
pub struct MatrixPlan {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Explicit columns; the standard set for the setting when absent.
    pub pairs: Option<Vec<DomainPair>>,
}

/// `D0-D1` or `D0+D2-D1`, the column labels of a results table.
pub fn parse_pair(s: &str) -> Result<DomainPair, String> {
    let bad = || format!("'{s}' is not a domain pair like D0-D1 or D0+D2-D1");
    let (src, tgt) = s.rsplit_once('-').ok_or_else(bad)?;
    let index =
        |d: &str| -> Result<usize, String> { d.trim().strip_prefix('D').and_then(|n| n.parse().ok()).ok_or_else(bad) };
    let sources = src.split('+').map(index).collect::<Result<Vec<_>, _>>()?;
    Ok(DomainPair {
        sources,
        target: index(tgt)?,
    })
}
