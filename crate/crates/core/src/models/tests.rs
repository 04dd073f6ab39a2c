use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::svm::smo;
use super::*;
use crate::rng::seeded;
use crate::windowing::Provenance;

fn fm(x: Matrix, y: Vec<u8>) -> FeatureMatrix {
    let n = y.len();
    let d = x.cols();
    FeatureMatrix::new(
        x,
        y,
        (0..n).map(|i| format!("p{}", i % 3)).collect(),
        vec![Provenance::Negative; n],
        (0..d).map(|j| format!("f{j}")).collect(),
    )
    .unwrap()
}

/// Two Gaussian blobs along the first axis, `shift` apart.
fn blobs(n: usize, d: usize, shift: f64, seed: u64) -> FeatureMatrix {
    let mut rng = seeded(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let l = (i % 2) as u8;
        let mut r: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
        r[0] += if l == 1 { shift / 2.0 } else { -shift / 2.0 };
        rows.push(r);
        y.push(l);
    }
    fm(Matrix::from_rows(&rows).unwrap(), y)
}

/// Separated by a margin of at least 1 sd on every axis after standardization.
fn separable(n: usize, seed: u64) -> FeatureMatrix {
    let mut rng = seeded(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let l = (i % 2) as u8;
        let base = if l == 1 { 3.0 } else { -3.0 };
        rows.push(vec![base + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        y.push(l);
    }
    fm(Matrix::from_rows(&rows).unwrap(), y)
}

fn small_spec(family: Family) -> ModelSpec {
    let spec = ModelSpec::new(family).with_seed(3);
    match family {
        Family::RandomForest => spec.with("n_estimators", 15),
        Family::Gboost => spec.with("n_estimators", 20),
        Family::Adaboost => spec.with("n_estimators", 20),
        Family::Mlp => spec.with("max_epochs", 15).with("lr", 0.05),
        Family::SvmLinear => spec.with("max_iter", 200),
        _ => spec,
    }
}

fn f1(pred: &[u8], y: &[u8]) -> f64 {
    let tp = pred.iter().zip(y).filter(|(p, t)| **p == 1 && **t == 1).count() as f64;
    let fp = pred.iter().zip(y).filter(|(p, t)| **p == 1 && **t == 0).count() as f64;
    let fneg = pred.iter().zip(y).filter(|(p, t)| **p == 0 && **t == 1).count() as f64;
    2.0 * tp / (2.0 * tp + fp + fneg)
}

#[test]
fn knn_k1_recovers_training_labels() {
    let data = blobs(40, 3, 1.0, 1);
    let m = fit(&ModelSpec::new(Family::Knn).with("n_neighbors", 1), &data, None).unwrap();
    let s = m.predict_scores(&data.x).unwrap();
    for (score, &l) in s.iter().zip(&data.labels) {
        assert_eq!(*score, l as f64);
    }
}

#[test]
fn naive_bayes_is_symmetric_on_mirrored_classes() {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for k in 0..20 {
        let v = 1.0 + 0.1 * k as f64;
        rows.push(vec![v, -2.0 * v]);
        y.push(1);
        rows.push(vec![-v, 2.0 * v]);
        y.push(0);
    }
    let data = fm(Matrix::from_rows(&rows).unwrap(), y);
    let m = fit(&ModelSpec::new(Family::GaussianNb), &data, None).unwrap();
    let s = m.predict_scores(&Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap()).unwrap();
    assert!((s[0] - 0.5).abs() < 1e-12, "{}", s[0]);
}

#[test]
fn logreg_separates_1d_data() {
    let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![if i < 50 { -1.0 - i as f64 * 0.1 } else { 0.1 * (i - 49) as f64 }]).collect();
    let y: Vec<u8> = (0..100).map(|i| (i >= 50) as u8).collect();
    let data = fm(Matrix::from_rows(&rows).unwrap(), y.clone());
    for penalty in ["l1", "l2"] {
        let m = fit(&ModelSpec::new(Family::Logreg).with("penalty", penalty), &data, None).unwrap();
        assert_eq!(m.predict_labels(&data.x, 0.5).unwrap(), y, "{penalty}");
    }
}

#[test]
fn threshold_is_inclusive_and_bounded() {
    assert_eq!(threshold_scores(&[0.4, 0.5, 0.6], 0.5).unwrap(), vec![0, 1, 1]);
    assert_eq!(threshold_scores(&[0.0, 0.3, 1.0], 0.0).unwrap(), vec![1, 1, 1]);
    assert!(threshold_scores(&[0.5], 1.0 + 1e-9).is_err());
    assert!(threshold_scores(&[0.5], -1e-9).is_err());
}

#[test]
fn gboost_without_stages_scores_the_prior() {
    let mut data = blobs(40, 2, 2.0, 2);
    data.labels[0] = 1;
    let prior = data.prevalence();
    let m = fit(&ModelSpec::new(Family::Gboost).with("n_estimators", 0), &data, None).unwrap();
    for s in m.predict_scores(&data.x).unwrap() {
        assert!((s - prior).abs() < 1e-12);
    }
}

#[test]
fn gboost_training_loss_never_increases() {
    let data = blobs(120, 4, 1.0, 4);
    for second_order in [false, true] {
        let x = Standardizer::fit(&data.x).transform(&data.x).unwrap();
        let mut hp = Hyperparams::new();
        hp.set("n_estimators", 30);
        hp.set("learning_rate", 0.3);
        hp.set("colsample", 0.8);
        hp.set("second_order", second_order);
        let g = GradientBoosting::fit(&x, &data.labels, &hp, 9).unwrap();
        assert_eq!(g.train_loss.len(), 31);
        for w in g.train_loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{second_order}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn smo_respects_box_and_equality() {
    for seed in 0..5 {
        let data = blobs(60, 3, 1.0, 20 + seed);
        let x = Standardizer::fit(&data.x).transform(&data.x).unwrap();
        let n = x.rows();
        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                        (-0.3 * d).exp()
                    })
                    .collect()
            })
            .collect();
        let s: Vec<f64> = data.labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let upper: Vec<f64> = data.labels.iter().map(|&l| if l == 1 { 2.0 } else { 0.7 }).collect();
        let sol = smo(&k, &s, &upper, 1e-3, 1_000_000);
        for (a, c) in sol.alpha.iter().zip(&upper) {
            assert!(*a >= 0.0 && a <= c);
        }
        let eq: f64 = sol.alpha.iter().zip(&s).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-6, "{eq}");
    }
}

#[test]
fn standardizer_centres_training_columns() {
    let data = blobs(50, 4, 3.0, 5);
    let st = Standardizer::fit(&data.x);
    let z = st.transform(&data.x).unwrap();
    for j in 0..4 {
        let c = z.column(j);
        let m = c.iter().sum::<f64>() / 50.0;
        let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 50.0).sqrt();
        assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
    }
    let constant = Matrix::from_rows(&[vec![2.0], vec![2.0]]).unwrap();
    assert_eq!(Standardizer::fit(&constant).sd, vec![1.0]);
}

#[test]
fn every_family_is_deterministic_and_in_range() {
    let train = blobs(60, 3, 1.5, 6);
    let val = blobs(20, 3, 1.5, 7);
    for family in Family::ALL {
        let spec = small_spec(family);
        let a = fit(&spec, &train, Some(&val)).unwrap();
        let b = fit(&spec, &train, Some(&val)).unwrap();
        let sa = a.predict_scores(&val.x).unwrap();
        assert_eq!(sa, b.predict_scores(&val.x).unwrap(), "{family}");
        assert!(sa.iter().all(|s| (0.0..=1.0).contains(s)), "{family}");
    }
}

#[test]
fn separable_data_reaches_perfect_training_f1() {
    let data = separable(60, 8);
    let specs = [
        ModelSpec::new(Family::Logreg),
        ModelSpec::new(Family::SvmLinear),
        ModelSpec::new(Family::Tree),
        ModelSpec::new(Family::RandomForest).with("n_estimators", 25),
        ModelSpec::new(Family::Knn).with("n_neighbors", 1),
    ];
    for spec in specs {
        let m = fit(&spec, &data, None).unwrap();
        let pred = m.predict_labels(&data.x, 0.5).unwrap();
        assert_eq!(f1(&pred, &data.labels), 1.0, "{}", spec.family);
    }
}

#[test]
fn artifacts_round_trip_bitwise() {
    let train = blobs(50, 3, 1.5, 10);
    let val = blobs(20, 3, 1.5, 11);
    let dir = tempfile::tempdir().unwrap();
    for family in Family::ALL {
        let m = fit(&small_spec(family).with("select", "anova_f").with("select_k", 2), &train, Some(&val)).unwrap();
        let path = dir.path().join(format!("{family}.json"));
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back.selected.len(), 2);
        let (a, b) = (m.predict_scores(&val.x).unwrap(), back.predict_scores(&val.x).unwrap());
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()), "{family}");
    }
}

#[test]
fn rejects_bad_inputs() {
    let data = blobs(20, 2, 1.0, 12);
    let mut one_class = data.clone();
    one_class.labels.iter_mut().for_each(|l| *l = 1);
    assert!(matches!(fit(&ModelSpec::new(Family::Logreg), &one_class, None), Err(Error::SingleClass)));
    let mut nan = data.clone();
    nan.x.set(0, 0, f64::NAN);
    assert!(fit(&ModelSpec::new(Family::Logreg), &nan, None).is_err());
    assert!(fit(&ModelSpec::new(Family::Mlp), &data, None).is_err());
    assert!(fit(&ModelSpec::new(Family::Knn).with("C", 1.0), &data, None).is_err());
    let m = fit(&ModelSpec::new(Family::Logreg), &data, None).unwrap();
    assert!(matches!(
        m.predict_scores(&Matrix::zeros(1, 3)),
        Err(Error::DimensionMismatch { expected: 2, found: 3 })
    ));
}

#[test]
fn platt_scores_increase_with_the_margin() {
    let dec: Vec<f64> = (0..40).map(|i| i as f64 / 10.0 - 2.0).collect();
    let y: Vec<u8> = (0..40).map(|i| (i >= 18) as u8).collect();
    let p = Platt::fit(&dec, &y);
    assert!(p.a < 0.0);
    assert!(p.score(1.0) > p.score(0.0) && p.score(0.0) > p.score(-1.0));
}

#[test]
fn mlp_depth_follows_input_size() {
    let cfg = MlpTraining::default();
    for (d, l) in [(4, 1), (7, 1), (16, 1), (17, 2), (36, 2), (64, 2), (65, 3), (144, 3), (546, 3)] {
        assert_eq!(MlpArchitecture::for_dim(d, &cfg).hidden_layers, l, "{d}");
    }
}

#[test]
fn zero_mlp_outputs_one_half_with_zero_output_bias_gradient() {
    let arch = MlpArchitecture {
        input_dim: 4,
        hidden_layers: 1,
        hidden_width: 8,
        dropout: 0.1,
    };
    let params = vec![0.0; arch.n_params()];
    let x = Matrix::from_rows(&[vec![1.0, 2.0, 0.0, -1.0], vec![0.5, -1.0, 3.0, 2.0]]).unwrap();
    let (loss, g) = mlp_gradient(&arch, &params, &x, &[0, 1]).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(g[arch.n_params() - 1], 0.0);
    let net = Mlp::from_params(&arch, params).unwrap();
    assert_eq!(net.scores(&x), vec![0.5, 0.5]);
}

#[test]
fn duplicated_batch_rows_keep_the_gradient() {
    let arch = MlpArchitecture {
        input_dim: 3,
        hidden_layers: 2,
        hidden_width: 5,
        dropout: 0.1,
    };
    let net = Mlp::init(&arch, 4);
    let rows = vec![vec![0.1, 0.7, -1.0], vec![1.5, -0.2, 0.3], vec![-0.4, 0.9, 2.0]];
    let x = Matrix::from_rows(&rows).unwrap();
    let doubled = x.vstack(&x).unwrap();
    let (_, g1) = mlp_gradient(&arch, &net.params, &x, &[0, 1, 1]).unwrap();
    let (_, g2) = mlp_gradient(&arch, &net.params, &doubled, &[0, 1, 1, 0, 1, 1]).unwrap();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

#[test]
fn mlp_training_lowers_validation_loss() {
    let train = blobs(80, 3, 3.0, 13);
    let val = blobs(40, 3, 3.0, 14);
    let cfg = MlpTraining {
        lr: 0.05,
        max_epochs: 30,
        ..MlpTraining::default()
    };
    let arch = MlpArchitecture::for_dim(3, &cfg);
    let (net, log) = Mlp::train(&arch, &cfg, &train.x, &train.labels, &val.x, &val.labels, 1).unwrap();
    let start = Mlp::init(&arch, crate::rng::derive_seed(1, &[0])).loss(&val.x, &val.labels);
    let best = log.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert!(best < start);
    assert!((net.loss(&val.x, &val.labels) - best).abs() < 1e-12);
}

#[test]
fn zero_epochs_or_zero_rate_leave_the_network_unchanged() {
    let data = blobs(30, 3, 1.0, 15);
    let arch = MlpArchitecture::for_dim(3, &MlpTraining::default());
    let init = Mlp::init(&arch, 2);
    let mut a = init.clone();
    a.train_epochs(&data.x, &data.labels, 0.1, 4, 0, &mut seeded(1)).unwrap();
    assert_eq!(a, init);
    let mut b = init.clone();
    b.train_epochs(&data.x, &data.labels, 0.0, 4, 3, &mut seeded(1)).unwrap();
    assert_eq!(b, init);
}
