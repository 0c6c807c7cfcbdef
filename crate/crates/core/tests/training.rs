use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rna_core::data::{
    generate_benchmark, make_dg_split, make_uda_split, BenchmarkSpec, Domain, MultiModalBatch, SourceSelection,
    UdaTrainSet,
};
use rna_core::model::checkpoint::encode_checkpoint;
use rna_core::model::init_model;
use rna_core::training::{
    evaluate, records_to_csv, run_experiment, run_experiment_matrix, standard_pairs, train_dg, train_uda, AuxLoss,
    DataSource, EvalMode, ExperimentConfig, Method, Setting, TrainOutcome,
};
use rna_core::Error;

fn spec() -> BenchmarkSpec {
    BenchmarkSpec {
        samples_per_class: 20,
        ..BenchmarkSpec::default()
    }
}

fn quick(aux: AuxLoss, lambda: f64) -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Benchmark(spec()),
        aux,
        lambda,
        hidden_dims: vec![24],
        feature_dim: 12,
        iterations: 120,
        batch_size: 16,
        checkpoint_interval: 20,
        checkpoint_average: 3,
        ..ExperimentConfig::default()
    }
}

fn domains() -> Vec<Domain> {
    generate_benchmark(&spec()).unwrap()
}

fn fingerprint(o: &TrainOutcome) -> (Vec<u8>, String, String) {
    (
        encode_checkpoint(&o.model),
        records_to_csv(&o.telemetry.records),
        records_to_csv(&o.telemetry.target_records),
    )
}

fn uda_set(domains: &[Domain]) -> UdaTrainSet {
    make_uda_split(domains, 0, 1).unwrap().train
}

fn with_target_labels(set: &UdaTrainSet, labels: Vec<usize>) -> UdaTrainSet {
    let t = &set.target;
    UdaTrainSet {
        source: set.source.clone(),
        target: MultiModalBatch::new(t.visual().clone(), t.audio().clone(), Some(labels), t.domain_id()).unwrap(),
    }
}

#[test]
fn corrupting_target_labels_changes_nothing() {
    let domains = domains();
    let clean = uda_set(&domains);
    let n = clean.target.len();
    let true_labels = domains[1].train.labels().unwrap().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let garbage: Vec<usize> = (0..n).map(|_| rng.random_range(0..1000)).collect();
    for aux in [AuxLoss::Rna, AuxLoss::CosineAlign, AuxLoss::BatchNormOnly] {
        let config = ExperimentConfig {
            setting: Setting::Uda,
            ..quick(aux, 1.0)
        };
        let reference = fingerprint(&train_uda(&config, &clean).unwrap());
        for labels in [true_labels.clone(), garbage.clone(), vec![0; n]] {
            let run = train_uda(&config, &with_target_labels(&clean, labels)).unwrap();
            assert_eq!(fingerprint(&run), reference, "{aux}");
        }
    }
}

#[test]
fn zero_weight_is_the_source_only_baseline() {
    let domains = domains();
    let split = make_dg_split(&domains, 1, SourceSelection::Only(vec![0])).unwrap();
    let plain = train_dg(&quick(AuxLoss::None, 1.0), &split.train).unwrap();
    for aux in [AuxLoss::Rna, AuxLoss::Hna { radius: None }, AuxLoss::Orthogonality] {
        let zero = train_dg(&quick(aux, 0.0), &split.train).unwrap();
        assert_eq!(zero.model, plain.model, "{aux}");
        assert_eq!(zero.snapshots, plain.snapshots);
        assert_eq!(
            records_to_csv(&zero.telemetry.records),
            records_to_csv(&plain.telemetry.records)
        );
        assert!(zero.telemetry.records.iter().all(|r| r.aux_loss == 0.0));
    }
}

#[test]
fn zero_weight_adaptation_is_single_source_generalization() {
    let domains = domains();
    let dg = train_dg(
        &quick(AuxLoss::Rna, 0.0),
        &make_dg_split(&domains, 1, SourceSelection::Only(vec![0]))
            .unwrap()
            .train,
    )
    .unwrap();
    let config = ExperimentConfig {
        setting: Setting::Uda,
        ..quick(AuxLoss::Rna, 0.0)
    };
    let uda = train_uda(&config, &uda_set(&domains)).unwrap();
    assert_eq!(uda.model, dg.model);
    assert_eq!(uda.telemetry.records, dg.telemetry.records);
    assert_eq!(uda.telemetry.target_records.len(), config.iterations);
}

#[test]
fn zero_iterations_return_the_initial_model() {
    let domains = domains();
    let config = ExperimentConfig {
        iterations: 0,
        ..quick(AuxLoss::Rna, 1.0)
    };
    let split = make_dg_split(&domains, 1, SourceSelection::Only(vec![0])).unwrap();
    let out = train_dg(&config, &split.train).unwrap();
    let init = init_model(&config.model_config(16, 16), config.seed).unwrap();
    assert_eq!(out.model, init);
    assert_eq!(out.snapshots, vec![init]);
    assert!(out.telemetry.records.is_empty());
    assert!(config.validate().is_err());
}

#[test]
fn training_is_deterministic_per_seed() {
    let domains = domains();
    let split = make_dg_split(&domains, 2, SourceSelection::AllRemaining).unwrap();
    let config = quick(AuxLoss::Rna, 1.0);
    let a = train_dg(&config, &split.train).unwrap();
    let b = train_dg(&config, &split.train).unwrap();
    assert_eq!(fingerprint(&a), fingerprint(&b));
    let c = train_dg(&ExperimentConfig { seed: 1, ..config }, &split.train).unwrap();
    assert_ne!(fingerprint(&a).0, fingerprint(&c).0);
}

#[test]
fn telemetry_is_ordered_and_consistent() {
    let domains = domains();
    let config = ExperimentConfig {
        setting: Setting::Uda,
        ..quick(AuxLoss::Rna, 1.0)
    };
    let out = train_uda(&config, &uda_set(&domains)).unwrap();
    for records in [&out.telemetry.records, &out.telemetry.target_records] {
        assert_eq!(records.len(), config.iterations);
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.iteration, i);
            assert!((r.delta - (r.mean_norm_visual - r.mean_norm_audio)).abs() <= 1e-12);
            assert!((r.rho - r.mean_norm_visual / r.mean_norm_audio).abs() <= 1e-12 * r.rho);
            assert_eq!(r.aux_loss_name, "rna");
        }
    }
    assert!(out.telemetry.records.iter().all(|r| r.ce_loss.is_finite()));
    assert!(out.snapshots.len() <= config.checkpoint_average);
    assert_eq!(out.snapshots.last(), Some(&out.model));
}

#[test]
fn divergence_aborts_with_the_last_record() {
    let domains = domains();
    let split = make_dg_split(&domains, 1, SourceSelection::Only(vec![0])).unwrap();
    let err = train_dg(&quick(AuxLoss::Hna { radius: None }, 50.0), &split.train).unwrap_err();
    assert!(err.is_numerical(), "{err}");
    match err {
        Error::NumericalAbort {
            iteration, last_record, ..
        } => {
            assert!(iteration > 0);
            assert!(last_record.unwrap().contains(&format!("iter={}", iteration - 1)));
        }
        other => panic!("{other}"),
    }
}

#[test]
fn invalid_configurations_are_rejected() {
    let bad = [
        ExperimentConfig {
            lambda: -1.0,
            ..quick(AuxLoss::Rna, 1.0)
        },
        ExperimentConfig {
            checkpoint_average: 0,
            ..quick(AuxLoss::Rna, 1.0)
        },
        ExperimentConfig {
            batch_size: 0,
            ..quick(AuxLoss::Rna, 1.0)
        },
        ExperimentConfig {
            num_classes: 5,
            ..quick(AuxLoss::Rna, 1.0)
        },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::Config(_))), "{c:?}");
        assert!(run_experiment(&c, &domains()).is_err());
    }
}

#[test]
fn evaluation_needs_labeled_data() {
    let domains = domains();
    let model = init_model(&quick(AuxLoss::None, 0.0).model_config(16, 16), 0).unwrap();
    assert!(evaluate(&model, &domains[0].test.without_labels(), EvalMode::Fused).is_err());
    let empty = domains[0].test.select(&[]);
    assert!(evaluate(&model, &empty, EvalMode::Fused).is_err());
}

#[test]
fn unshifted_domains_transfer_perfectly() {
    let spec = BenchmarkSpec {
        transform_strength: 0.0,
        audio_transform_strength: 0.0,
        bias_scale: 0.0,
        noise_sigma: 0.0,
        audio_noise_sigma: 0.0,
        audio_norm_scale: 1.0,
        samples_per_class: 10,
        ..BenchmarkSpec::default()
    };
    let domains = generate_benchmark(&spec).unwrap();
    let config = ExperimentConfig {
        data: DataSource::Benchmark(spec),
        aux: AuxLoss::None,
        ..quick(AuxLoss::None, 0.0)
    };
    let run = run_experiment(&config, &domains).unwrap();
    assert_eq!(run.accuracy, 1.0);
}

#[test]
fn results_table_layout_and_reruns() {
    let domains = domains();
    let base = ExperimentConfig {
        iterations: 40,
        ..quick(AuxLoss::Rna, 1.0)
    };
    let methods = vec![Method::parse("source-only").unwrap()];
    let pairs = standard_pairs(Setting::DgSingle, 3);
    let table = run_experiment_matrix(&base, &domains, &methods, &pairs, &[0]).unwrap();
    let csv = table.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "method,D0-D1,D0-D2,D1-D0,D1-D2,D2-D0,D2-D1,mean");
    let cells: Vec<f64> = lines[1].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert_eq!(cells.len(), 7);
    let mean = cells[..6].iter().sum::<f64>() / 6.0;
    assert!((mean - cells[6]).abs() <= 1e-12);
    let again = run_experiment_matrix(&base, &domains, &methods, &pairs, &[0]).unwrap();
    assert_eq!(again.to_csv(), csv);

    let single = ExperimentConfig {
        source: 2,
        target: 0,
        seed: 0,
        aux: AuxLoss::None,
        ..base.clone()
    };
    let direct = run_experiment(&single, &domains).unwrap().accuracy * 100.0;
    assert_eq!(table.rows[0].cells[4].mean, direct);

    let multi = ExperimentConfig {
        setting: Setting::DgMulti,
        ..base
    };
    let pairs = standard_pairs(Setting::DgMulti, 3);
    let table = run_experiment_matrix(&multi, &domains, &methods, &pairs, &[0, 1]).unwrap();
    assert_eq!(table.columns, vec!["D1+D2-D0", "D0+D2-D1", "D0+D1-D2"]);
    assert_eq!(table.rows[0].cells[0].per_seed.len(), 2);
}

#[test]
fn failed_cells_become_nan_and_the_rest_continue() {
    let domains = domains();
    let base = ExperimentConfig {
        iterations: 40,
        ..quick(AuxLoss::Rna, 1.0)
    };
    let methods = vec![Method::parse("source-only").unwrap(), Method::parse("hna@50").unwrap()];
    let pairs = standard_pairs(Setting::DgSingle, 3)[..2].to_vec();
    let table = run_experiment_matrix(&base, &domains, &methods, &pairs, &[0]).unwrap();
    assert!(table.rows[0].cells.iter().all(|c| c.mean.is_finite() && !c.failed));
    assert!(table.rows[1].cells.iter().all(|c| c.mean.is_nan() && c.failed));
    assert_eq!(table.failures.len(), 2);
    assert!(table.to_csv().lines().nth(2).unwrap().contains("NaN"));
}

#[test]
fn rna_drives_rho_to_one_on_the_default_benchmark() {
    let domains = generate_benchmark(&BenchmarkSpec::default()).unwrap();
    let config = ExperimentConfig::default();
    let run = run_experiment(&config, &domains).unwrap();
    let (first, last) = run.outcome.telemetry.rho_deviation_deciles().unwrap();
    assert!(last < first && last < 0.1, "first {first} last {last}");
    let ce = |rs: &[rna_core::training::IterationRecord]| rs.iter().map(|r| r.ce_loss).sum::<f64>() / rs.len() as f64;
    let records = &run.outcome.telemetry.records;
    assert!(ce(&records[records.len() - 200..]) < ce(&records[..200]));
}
