//! Output staging and the run manifest.
//!
//! Commands collect every artifact in memory first. Only after the whole
//! computation succeeded are the files written, each through a temporary
//! file in the destination directory that is renamed into place. The
//! manifest goes last, so its presence means every listed file exists.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rna_core::data::BenchmarkSpec;
use rna_core::training::{DataSource, ExperimentConfig};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, String, Vec<u8>)>,
}

impl Artifacts {
    /// Queues `contents` under `file_name`, listed in the manifest as `role`.
    pub fn add(&mut self, role: &str, file_name: &str, contents: impl Into<Vec<u8>>) {
        self.files
            .push((role.to_string(), file_name.to_string(), contents.into()));
    }

    /// Writes every artifact, then the manifest. Returns the manifest path.
    pub fn commit(self, out_dir: &Path, manifest: RunManifest) -> CliResult<PathBuf> {
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let mut listed = Vec::with_capacity(self.files.len());
        for (role, name, bytes) in &self.files {
            let path = out_dir.join(name);
            write_atomic(&path, bytes)?;
            listed.push((role.clone(), path));
        }
        let path = out_dir.join(MANIFEST_FILE);
        write_atomic(&path, manifest.render(&listed).as_bytes())?;
        Ok(path)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// What produced a run's outputs. Rendered in the same `[section]`,
/// `key = value` form as configuration files.
#[derive(Debug)]
pub struct RunManifest {
    pub command: String,
    /// Resolved configuration, already rendered.
    pub config: String,
    pub duration: Duration,
}

impl RunManifest {
    fn render(&self, artifacts: &[(String, PathBuf)]) -> String {
        let mut out = String::new();
        out.push_str("[run]\n");
        writeln!(out, "tool = rna {}", env!("CARGO_PKG_VERSION")).expect("writing to a String");
        writeln!(out, "command = {}", self.command).expect("writing to a String");
        writeln!(out, "duration_seconds = {:.3}", self.duration.as_secs_f64()).expect("writing to a String");
        out.push('\n');
        out.push_str(&self.config);
        out.push_str("\n[artifacts]\n");
        for (role, path) in artifacts {
            writeln!(out, "{role} = {}", path.display()).expect("writing to a String");
        }
        out
    }
}

pub fn render_benchmark(spec: &BenchmarkSpec) -> String {
    let BenchmarkSpec {
        num_domains,
        num_classes,
        visual_dim,
        audio_dim,
        samples_per_class,
        prototype_scale,
        transform_strength,
        bias_scale,
        noise_sigma,
        audio_noise_sigma,
        audio_transform_strength,
        audio_norm_scale,
        audio_gain_jitter,
        train_fraction,
        class_skew,
        seed,
    } = spec;
    format!(
        "[benchmark]\n\
         num_domains = {num_domains}\n\
         num_classes = {num_classes}\n\
         visual_dim = {visual_dim}\n\
         audio_dim = {audio_dim}\n\
         samples_per_class = {samples_per_class}\n\
         prototype_scale = {prototype_scale}\n\
         transform_strength = {transform_strength}\n\
         audio_transform_strength = {audio_transform_strength}\n\
         bias_scale = {bias_scale}\n\
         noise_sigma = {noise_sigma}\n\
         audio_noise_sigma = {audio_noise_sigma}\n\
         audio_norm_scale = {audio_norm_scale}\n\
         audio_gain_jitter = {audio_gain_jitter}\n\
         train_fraction = {train_fraction}\n\
         class_skew = {class_skew}\n\
         seed = {seed}\n"
    )
}

pub fn render_experiment(c: &ExperimentConfig) -> String {
    let mut out = match &c.data {
        DataSource::Benchmark(spec) => render_benchmark(spec),
        DataSource::Directory(dir) => format!("[data]\ndir = {}\n", dir.display()),
    };
    let hidden: Vec<String> = c.hidden_dims.iter().map(|h| h.to_string()).collect();
    write!(
        out,
        "\n[experiment]\n\
         setting = {}\n\
         source = {}\n\
         target = {}\n\
         aux = {}\n\
         lambda = {}\n\
         fusion = {}\n\
         hidden_dims = {}\n\
         feature_dim = {}\n\
         num_classes = {}\n\
         learning_rate = {}\n\
         momentum = {}\n\
         weight_decay = {}\n\
         iterations = {}\n\
         batch_size = {}\n\
         checkpoint_average = {}\n\
         checkpoint_interval = {}\n\
         seed = {}\n",
        c.setting,
        c.source,
        c.target,
        c.aux,
        c.lambda,
        c.fusion.as_str(),
        hidden.join(", "),
        c.feature_dim,
        c.num_classes,
        c.optimizer.learning_rate,
        c.optimizer.momentum,
        c.optimizer.weight_decay,
        c.iterations,
        c.batch_size,
        c.checkpoint_average,
        c.checkpoint_interval,
        c.seed,
    )
    .expect("writing to a String");
    out
}
