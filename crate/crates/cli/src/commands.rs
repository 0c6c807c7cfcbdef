use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rna_core::data::{decode_feature_file, encode_feature_file, generate_benchmark, MultiModalBatch};
use rna_core::losses::{norm_stats, FeatureBatch, Modality};
use rna_core::model::checkpoint::{encode_checkpoint, load_checkpoint};
use rna_core::training::telemetry::{parse_telemetry_csv, records_to_csv, rho_deviation_deciles, top_k_norm_share};
use rna_core::training::{domain_file_name, run_experiment, run_experiment_matrix, standard_pairs, DEFAULT_TOP_K};

use crate::config_file::ConfigFile;
use crate::error::{CliError, CliResult};
use crate::output::{render_benchmark, render_experiment, Artifacts, RunManifest};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const TARGET_TELEMETRY_FILE: &str = "telemetry_target.csv";
pub const EVALUATION_FILE: &str = "evaluation.csv";
pub const TARGET_FEATURES_FILE: &str = "target_features.rnafeat";
pub const RESULTS_FILE: &str = "results.csv";
pub const RESULTS_STD_FILE: &str = "results_std.csv";
pub const FAILURES_FILE: &str = "failures.txt";
pub const NORMS_FILE: &str = "norms.csv";

/// Options shared by the commands that read a configuration file.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
}

fn note(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn generate(opts: &RunOptions) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = ConfigFile::load(&opts.config)?;
    let mut spec = cfg.benchmark_spec()?;
    cfg.finish()?;
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let domains = generate_benchmark(&spec)?;
    let mut artifacts = Artifacts::default();
    for d in &domains {
        for (split, batch) in [("train", &d.train), ("test", &d.test)] {
            let name = domain_file_name(d.id, split);
            artifacts.add(&format!("domain{}_{split}", d.id), &name, encode_feature_file(batch));
        }
    }
    let manifest = RunManifest {
        command: "generate".into(),
        config: render_benchmark(&spec),
        duration: start.elapsed(),
    };
    let path = artifacts.commit(&opts.out, manifest)?;
    note(
        opts.quiet,
        format!(
            "wrote {} domains to {} ({})",
            domains.len(),
            opts.out.display(),
            path.display()
        ),
    );
    Ok(())
}

pub fn train(opts: &RunOptions) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = ConfigFile::load(&opts.config)?;
    let mut config = cfg.experiment_config()?;
    cfg.ignore_section("matrix");
    cfg.finish()?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate()?;
    let domains = config.data.load()?;
    note(
        opts.quiet,
        format!(
            "training {} aux={} lambda={} on D{} -> D{} for {} iterations",
            config.setting, config.aux, config.lambda, config.source, config.target, config.iterations
        ),
    );
    let run = run_experiment(&config, &domains)?;
    let telemetry = &run.outcome.telemetry;

    let mut artifacts = Artifacts::default();
    artifacts.add("checkpoint", CHECKPOINT_FILE, encode_checkpoint(&run.outcome.model));
    artifacts.add("telemetry", TELEMETRY_FILE, records_to_csv(&telemetry.records));
    if !telemetry.target_records.is_empty() {
        artifacts.add(
            "target_telemetry",
            TARGET_TELEMETRY_FILE,
            records_to_csv(&telemetry.target_records),
        );
    }
    let mut eval = String::from("split,mode,accuracy\n");
    for e in &telemetry.evaluations {
        writeln!(eval, "{},{},{}", e.split, e.mode, e.accuracy).expect("writing to a String");
    }
    artifacts.add("results", EVALUATION_FILE, eval);
    artifacts.add(
        "target_features",
        TARGET_FEATURES_FILE,
        encoded_target_features(&run, &config, &domains)?,
    );

    if let Some(last) = telemetry.last() {
        note(opts.quiet, format!("final {last}"));
    }
    if let Some(share) = telemetry.top_k_share {
        note(
            opts.quiet,
            format!(
                "target top-{} norm share: visual {:.4} audio {:.4}",
                share.k, share.visual, share.audio
            ),
        );
    }
    let manifest = RunManifest {
        command: "train".into(),
        config: render_experiment(&config),
        duration: start.elapsed(),
    };
    artifacts.commit(&opts.out, manifest)?;
    println!("setting={} aux={} acc={}", config.setting, config.aux, run.accuracy);
    Ok(())
}

/// The final model's features of the target test split, labeled, so that
/// `norms` can report on them.
fn encoded_target_features(
    run: &rna_core::training::RunResult,
    config: &rna_core::training::ExperimentConfig,
    domains: &[rna_core::data::Domain],
) -> CliResult<String> {
    let target = &domains[config.target].test;
    let model = &run.outcome.model;
    let fv = model.encode(Modality::Visual, target.visual())?.into_features();
    let fa = model.encode(Modality::Audio, target.audio())?.into_features();
    let batch = MultiModalBatch::new(fv, fa, target.labels().map(<[usize]>::to_vec), config.target)?;
    Ok(encode_feature_file(&batch))
}

pub fn matrix(opts: &RunOptions) -> CliResult<()> {
    let start = Instant::now();
    let mut cfg = ConfigFile::load(&opts.config)?;
    let config = cfg.experiment_config()?;
    let mut plan = cfg.matrix_plan()?;
    cfg.finish()?;
    if let Some(seed) = opts.seed {
        plan.seeds = vec![seed];
    }
    config.validate()?;
    for m in &plan.methods {
        let mut c = config.clone();
        c.aux = m.aux;
        c.fusion = m.fusion;
        c.lambda = m.lambda.unwrap_or(config.lambda);
        c.validate()?;
    }
    let domains = config.data.load()?;
    let pairs = plan
        .pairs
        .clone()
        .unwrap_or_else(|| standard_pairs(config.setting, domains.len()));
    note(
        opts.quiet,
        format!(
            "{}: {} methods x {} pairs x {} seeds",
            config.setting,
            plan.methods.len(),
            pairs.len(),
            plan.seeds.len()
        ),
    );
    let table = run_experiment_matrix(&config, &domains, &plan.methods, &pairs, &plan.seeds)?;

    let mut artifacts = Artifacts::default();
    let csv = table.to_csv();
    artifacts.add("results", RESULTS_FILE, csv.clone());
    artifacts.add("results_std", RESULTS_STD_FILE, table.to_std_csv());
    if !table.failures.is_empty() {
        let mut text = String::new();
        for f in &table.failures {
            writeln!(text, "{f}").expect("writing to a String");
            note(false, format!("failed cell: {f}"));
        }
        artifacts.add("failures", FAILURES_FILE, text);
    }
    let mut rendered = render_experiment(&config);
    let methods: Vec<&str> = plan.methods.iter().map(|m| m.name.as_str()).collect();
    let seeds: Vec<String> = plan.seeds.iter().map(u64::to_string).collect();
    let labels: Vec<String> = pairs.iter().map(|p| p.label()).collect();
    write!(
        rendered,
        "\n[matrix]\nmethods = {}\nseeds = {}\npairs = {}\n",
        methods.join(", "),
        seeds.join(", "),
        labels.join(", ")
    )
    .expect("writing to a String");
    let manifest = RunManifest {
        command: "matrix".into(),
        config: rendered,
        duration: start.elapsed(),
    };
    artifacts.commit(&opts.out, manifest)?;
    if !opts.quiet {
        print!("{csv}");
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct NormsOptions {
    pub inputs: Vec<PathBuf>,
    pub top_k: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

/// One line of the norm report.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub input: String,
    pub kind: &'static str,
    /// Samples for feature files, records for telemetry.
    pub count: usize,
    pub mean_norm_visual: f64,
    pub mean_norm_audio: f64,
    pub delta: f64,
    pub rho: f64,
    /// `(k, visual share, audio share)`; feature files only.
    pub top_k: Option<(usize, f64, f64)>,
    /// First and last decile mean `|ρ − 1|`; telemetry only.
    pub rho_deciles: Option<(f64, f64)>,
}

const NORMS_HEADER: &str =
    "input,kind,count,mean_norm_v,mean_norm_a,delta,rho,top_k,top_k_share_v,top_k_share_a,rho_dev_first,rho_dev_last";

impl NormReport {
    fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.input,
            self.kind,
            self.count,
            self.mean_norm_visual,
            self.mean_norm_audio,
            self.delta,
            self.rho,
            self.top_k.map(|t| t.0.to_string()).unwrap_or_default(),
            opt(self.top_k.map(|t| t.1)),
            opt(self.top_k.map(|t| t.2)),
            opt(self.rho_deciles.map(|d| d.0)),
            opt(self.rho_deciles.map(|d| d.1)),
        )
    }

    fn text(&self) -> String {
        let mut s = format!(
            "{} ({}, {} {}):\n  mean_norm_v = {:.6}\n  mean_norm_a = {:.6}\n  delta = {:.6}\n  rho = {:.6}\n",
            self.input,
            self.kind,
            self.count,
            if self.kind == "features" { "samples" } else { "records" },
            self.mean_norm_visual,
            self.mean_norm_audio,
            self.delta,
            self.rho
        );
        if let Some((k, v, a)) = self.top_k {
            writeln!(
                s,
                "  top-{k} norm share: visual {:.2}% audio {:.2}%",
                100.0 * v,
                100.0 * a
            )
            .expect("writing to a String");
        }
        if let Some((first, last)) = self.rho_deciles {
            writeln!(s, "  |rho - 1|: first decile {first:.6}, last decile {last:.6}").expect("writing to a String");
        }
        s
    }
}

pub fn norms(opts: &NormsOptions) -> CliResult<Vec<NormReport>> {
    if opts.inputs.is_empty() {
        return Err(CliError::Usage("norms needs at least one input file".into()));
    }
    if opts.top_k == Some(0) {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    let model = opts.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let mut reports = Vec::with_capacity(opts.inputs.len());
    for path in &opts.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let located = |e: rna_core::Error| match e {
            rna_core::Error::Parse { location, message } => rna_core::Error::Parse {
                location: format!("{}: {location}", path.display()),
                message,
            },
            other => other,
        };
        let report = if text.trim_start().starts_with("RNAFEAT") {
            let batch = decode_feature_file(&text, 0).map_err(located)?;
            let (v, a) = match &model {
                Some(m) => (
                    m.encode(Modality::Visual, batch.visual())?,
                    m.encode(Modality::Audio, batch.audio())?,
                ),
                None => (
                    FeatureBatch::new(batch.visual().clone(), Modality::Visual)?,
                    FeatureBatch::new(batch.audio().clone(), Modality::Audio)?,
                ),
            };
            let stats = norm_stats(&v, &a).map_err(located)?;
            let k = opts.top_k.unwrap_or(DEFAULT_TOP_K);
            NormReport {
                input: path.display().to_string(),
                kind: "features",
                count: batch.len(),
                mean_norm_visual: stats.mean_norm_visual,
                mean_norm_audio: stats.mean_norm_audio,
                delta: stats.delta,
                rho: stats.rho,
                top_k: Some((
                    k.min(v.dim()).min(a.dim()),
                    top_k_norm_share(v.features(), k),
                    top_k_norm_share(a.features(), k),
                )),
                rho_deciles: None,
            }
        } else {
            if model.is_some() {
                return Err(CliError::Usage(format!(
                    "--checkpoint applies to feature files, {} is telemetry",
                    path.display()
                )));
            }
            let records = parse_telemetry_csv(&text).map_err(located)?;
            let last = records.last().ok_or_else(|| {
                CliError::Core(located(rna_core::Error::Parse {
                    location: "line 2".into(),
                    message: "telemetry has no records".into(),
                }))
            })?;
            NormReport {
                input: path.display().to_string(),
                kind: "telemetry",
                count: records.len(),
                mean_norm_visual: last.mean_norm_visual,
                mean_norm_audio: last.mean_norm_audio,
                delta: last.delta,
                rho: last.rho,
                top_k: None,
                rho_deciles: rho_deviation_deciles(&records),
            }
        };
        reports.push(report);
    }
    if let Some(out) = &opts.out {
        let mut csv = format!("{NORMS_HEADER}\n");
        for r in &reports {
            writeln!(csv, "{}", r.csv_row()).expect("writing to a String");
        }
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        crate::output::write_atomic(&out.join(NORMS_FILE), csv.as_bytes())?;
    }
    if !opts.quiet {
        for r in &reports {
            print!("{}", r.text());
        }
    }
    Ok(reports)
}
