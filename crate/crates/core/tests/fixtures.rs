use rna_core::data::MultiModalBatch;
use rna_core::losses::{
    cosine_alignment_loss, feature_norms, hna_loss, norm_stats, orthogonality_loss, rna_loss, FeatureBatch, Modality,
};
use rna_core::model::{fuse_late, init_model, predict, FusionMode, ModelConfig};
use rna_core::numerics::{
    argmax, finite_difference_grad, l2_norm, relu_backward, relu_forward, softmax_cross_entropy, softmax_rows,
    LinearLayerParams, Matrix, Sgd, SgdConfig,
};
use rna_core::training::{accuracy_of_scores, averaged_scores, evaluate, EvalMode};
use rna_core::Error;

fn m<const C: usize>(rows: &[[f64; C]]) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

fn fb<const C: usize>(rows: &[[f64; C]], modality: Modality) -> FeatureBatch {
    FeatureBatch::new(m(rows), modality).unwrap()
}

/// Visual rows of norm 5 and 5, audio rows of norm 1 and 2.
fn hand_fixture() -> (FeatureBatch, FeatureBatch) {
    (
        fb(&[[3.0, 4.0], [0.0, 5.0]], Modality::Visual),
        fb(&[[1.0, 0.0], [0.0, 2.0]], Modality::Audio),
    )
}

#[test]
fn hand_fixture_statistics() {
    let (v, a) = hand_fixture();
    assert_eq!(feature_norms(&v), vec![5.0, 5.0]);
    assert_eq!(feature_norms(&a), vec![1.0, 2.0]);
    let s = norm_stats(&v, &a).unwrap();
    assert_eq!(s.mean_norm_visual, 5.0);
    assert_eq!(s.mean_norm_audio, 1.5);
    assert_eq!(s.delta, 3.5);
    assert!((s.rho - 10.0 / 3.0).abs() < 1e-15);
}

#[test]
fn hand_fixture_losses() {
    let (v, a) = hand_fixture();
    assert!((rna_loss(&v, &a).unwrap().value - 49.0 / 9.0).abs() < 1e-12);
    assert!((hna_loss(&v, &a, 3.25).unwrap().value - 6.125).abs() < 1e-12);
}

#[test]
fn identical_batches_are_aligned() {
    let (v, _) = hand_fixture();
    let a = FeatureBatch::new(v.features().clone(), Modality::Audio).unwrap();
    let s = norm_stats(&v, &a).unwrap();
    assert_eq!((s.delta, s.rho), (0.0, 1.0));
    let r = rna_loss(&v, &a).unwrap();
    assert_eq!(r.value, 0.0);
    assert_eq!(
        l2_norm(r.grad_visual.as_slice()) + l2_norm(r.grad_audio.as_slice()),
        0.0
    );
    assert!(cosine_alignment_loss(&v, &a).unwrap().value.abs() < 1e-15);
    assert!((orthogonality_loss(&v, &a).unwrap().value - 1.0).abs() < 1e-15);
}

#[test]
fn orthogonal_pairs() {
    let v = fb(&[[1.0, 0.0], [0.0, 3.0]], Modality::Visual);
    let a = fb(&[[0.0, 2.0], [-4.0, 0.0]], Modality::Audio);
    assert_eq!(cosine_alignment_loss(&v, &a).unwrap().value, 1.0);
    assert_eq!(orthogonality_loss(&v, &a).unwrap().value, 0.0);
}

#[test]
fn rna_penalizes_rho_asymmetrically() {
    let v = fb(&[[2.0, 0.0]], Modality::Visual);
    let a = fb(&[[1.0, 0.0]], Modality::Audio);
    assert_eq!(rna_loss(&v, &a).unwrap().value, 1.0);
    let v = fb(&[[1.0, 0.0]], Modality::Visual);
    let a = fb(&[[2.0, 0.0]], Modality::Audio);
    assert_eq!(rna_loss(&v, &a).unwrap().value, 0.25);
}

#[test]
fn degenerate_and_invalid_inputs() {
    let v = fb(&[[1.0, 0.0]], Modality::Visual);
    let zero = fb(&[[0.0, 0.0]], Modality::Audio);
    assert!(matches!(norm_stats(&v, &zero), Err(Error::Degenerate(_))));
    assert!(matches!(rna_loss(&v, &zero), Err(Error::Degenerate(_))));
    assert!(cosine_alignment_loss(&v, &zero).is_err());
    assert!(orthogonality_loss(&v, &zero).is_err());
    let a = fb(&[[1.0, 0.0]], Modality::Audio);
    assert!(matches!(hna_loss(&v, &a, 0.0), Err(Error::Config(_))));
}

#[test]
fn matmul_examples() {
    let b = m(&[[1.0, 2.0], [3.0, 4.0]]);
    assert_eq!(Matrix::identity(2).matmul(&b).unwrap(), b);
    assert_eq!(m(&[[1.0, 2.0]]).matmul(&m(&[[3.0], [4.0]])).unwrap(), m(&[[11.0]]));
    assert_eq!(
        Matrix::zeros(2, 2)
            .matmul(&m(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
            .unwrap(),
        Matrix::zeros(2, 3)
    );
    assert!(matches!(b.matmul(&Matrix::zeros(3, 1)), Err(Error::Shape(_))));
}

#[test]
fn linear_and_relu_examples() {
    let id = LinearLayerParams::new(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
    assert_eq!(id.apply(&m(&[[5.0, 7.0]])).unwrap(), m(&[[5.0, 7.0]]));
    let l = LinearLayerParams::new(m(&[[2.0, 0.0], [0.0, 3.0]]), vec![1.0, 1.0]).unwrap();
    let (out, cache) = l.forward(&m(&[[1.0, 1.0]])).unwrap();
    assert_eq!(out, m(&[[3.0, 4.0]]));
    let (g, gi) = l.backward(&cache, &Matrix::zeros(1, 2)).unwrap();
    assert!(g
        .weight
        .as_slice()
        .iter()
        .chain(&g.bias)
        .chain(gi.as_slice())
        .all(|&x| x == 0.0));
    let (_, id_cache) = id.forward(&m(&[[5.0, 7.0]])).unwrap();
    let (_, gi) = id.backward(&id_cache, &m(&[[0.3, -2.0]])).unwrap();
    assert_eq!(gi, m(&[[0.3, -2.0]]));
    let b = LinearLayerParams::new(Matrix::filled(2, 3, 0.7), vec![4.0, -1.0]).unwrap();
    assert_eq!(b.apply(&Matrix::zeros(2, 3)).unwrap(), m(&[[4.0, -1.0], [4.0, -1.0]]));

    let (y, rc) = relu_forward(&m(&[[-1.0, 0.0, 2.0]]));
    assert_eq!(y, m(&[[0.0, 0.0, 2.0]]));
    assert_eq!(
        relu_backward(&rc, &m(&[[1.0, 1.0, 1.0]])).unwrap(),
        m(&[[0.0, 0.0, 1.0]])
    );
}

#[test]
fn cross_entropy_examples() {
    let (loss, grad) = softmax_cross_entropy(&Matrix::zeros(1, 8), &[3]).unwrap();
    assert!((loss - 8f64.ln()).abs() < 1e-12);
    assert!((grad[(0, 3)] - (1.0 / 8.0 - 1.0)).abs() < 1e-15);
    let mut prev = f64::INFINITY;
    for margin in [1.0, 5.0, 20.0, 100.0] {
        let (loss, _) = softmax_cross_entropy(&m(&[[margin, 0.0, 0.0]]), &[0]).unwrap();
        assert!(loss < prev);
        prev = loss;
    }
    assert!(prev < 1e-40);
    assert!(matches!(
        softmax_cross_entropy(&Matrix::zeros(1, 3), &[3]),
        Err(Error::Config(_))
    ));
}

#[test]
fn sgd_examples() {
    let plain = SgdConfig {
        learning_rate: 1.0,
        momentum: 0.0,
        weight_decay: 0.0,
    };
    let mut p = vec![1.0];
    Sgd::new(plain).step(&mut p, &vec![0.5]).unwrap();
    assert_eq!(p, vec![0.5]);

    let (lr, g) = (0.1, 2.0);
    let mut p = vec![0.0];
    let mut opt = Sgd::new(SgdConfig {
        learning_rate: lr,
        momentum: 0.9,
        weight_decay: 0.0,
    });
    opt.step(&mut p, &vec![g]).unwrap();
    opt.step(&mut p, &vec![g]).unwrap();
    assert!((p[0] + lr * g * (1.0 + 1.9)).abs() < 1e-12);

    let mut p = vec![1.0, 2.0];
    let err = Sgd::new(plain).step(&mut p, &vec![f64::NAN, 0.0]).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)));
    assert_eq!(p, vec![1.0, 2.0]);
}

#[test]
fn finite_difference_examples() {
    let g = finite_difference_grad(|x| x[0] * x[0], &[3.0], 1e-5);
    assert!((g[0] - 6.0).abs() < 1e-8);
    assert_eq!(finite_difference_grad(|_| 4.2, &[1.0, -2.0], 1e-3), vec![0.0, 0.0]);
    let g = finite_difference_grad(l2_norm, &[3.0, 4.0], 1e-6);
    assert!((g[0] - 0.6).abs() < 1e-7 && (g[1] - 0.8).abs() < 1e-7);
    assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
    assert_eq!(l2_norm(&[0.0; 4]), 0.0);
    assert_eq!(l2_norm(&[0.0, 1.0, 0.0]), 1.0);
}

#[test]
fn fusion_and_prediction_examples() {
    assert_eq!(
        fuse_late(&m(&[[1.0, 2.0]]), &m(&[[3.0, -1.0]])).unwrap(),
        m(&[[4.0, 1.0]])
    );
    let v = m(&[[0.5, -2.0, 1.0]]);
    assert_eq!(fuse_late(&v, &Matrix::zeros(1, 3)).unwrap(), v);
    assert_eq!(fuse_late(&v, &v.scale(-1.0)).unwrap(), Matrix::zeros(1, 3));
    assert_eq!(argmax(&[0.0; 8]), 0);
    assert_eq!(argmax(&[1.0, 5.0, 2.0]), 1);
    assert_eq!(argmax(&[1.0, 5.0, 5.0]), 1);
    assert!(fuse_late(&v, &Matrix::zeros(2, 3)).is_err());
}

#[test]
fn zero_model_predicts_class_zero() {
    let config = ModelConfig {
        visual_input_dim: 3,
        audio_input_dim: 2,
        hidden_dims: vec![],
        feature_dim: 4,
        num_classes: 8,
        fusion: FusionMode::Late,
        batchnorm: false,
    };
    let mut model = init_model(&config, 0).unwrap();
    for c in [&mut model.classifier_visual, &mut model.classifier_audio] {
        c.weight = Matrix::zeros(8, 4);
    }
    let labels: Vec<usize> = (0..16).map(|i| i % 8).collect();
    let data = MultiModalBatch::new(Matrix::filled(16, 3, 1.0), Matrix::filled(16, 2, 1.0), Some(labels), 0).unwrap();
    assert_eq!(predict(&model, &data).unwrap(), vec![0; 16]);
    assert_eq!(evaluate(&model, &data, EvalMode::Fused).unwrap(), 1.0 / 8.0);
    let soft = softmax_rows(&model.predict_logits(&data, None).unwrap());
    assert!(soft.as_slice().iter().all(|&p| (p - 0.125).abs() < 1e-15));
}

#[test]
fn score_averaging_example() {
    let a = m(&[[0.6, 0.4]]);
    let b = m(&[[0.2, 0.8]]);
    let avg = a.add(&b).unwrap().scale(0.5);
    assert!((avg[(0, 0)] - 0.4).abs() < 1e-15 && (avg[(0, 1)] - 0.6).abs() < 1e-15);
    assert_eq!(accuracy_of_scores(&avg, &[1]).unwrap(), 1.0);
    assert_eq!(accuracy_of_scores(&a, &[1]).unwrap(), 0.0);
}

#[test]
fn snapshot_averaging_of_identical_models_is_evaluation() {
    let config = ModelConfig {
        visual_input_dim: 3,
        audio_input_dim: 3,
        hidden_dims: vec![5],
        feature_dim: 4,
        num_classes: 3,
        fusion: FusionMode::Late,
        batchnorm: false,
    };
    let model = init_model(&config, 5).unwrap();
    let x = Matrix::from_fn(9, 3, |r, c| ((r * 3 + c) as f64).sin());
    let data = MultiModalBatch::new(x.clone(), x.scale(10.0), Some((0..9).map(|i| i % 3).collect()), 0).unwrap();
    let single = evaluate(&model, &data, EvalMode::Fused).unwrap();
    let one = averaged_scores(&[model.clone()], &data, EvalMode::Fused).unwrap();
    let many = averaged_scores(&vec![model.clone(); 4], &data, EvalMode::Fused).unwrap();
    assert_eq!(accuracy_of_scores(&one, data.labels().unwrap()).unwrap(), single);
    assert_eq!(accuracy_of_scores(&many, data.labels().unwrap()).unwrap(), single);
    assert!(averaged_scores(&[], &data, EvalMode::Fused).is_err());
}
