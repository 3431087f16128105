use hiernet::baselines::{
    kernel_predict, kernel_regress, FcInit, FullyConnectedNet, KernelSpec, LinearizedNet, RegressOptions,
};
use hiernet::concept::Dataset;
use hiernet::linalg::Matrix;
use hiernet::resnet::{sgd_train, DataSource, EvalPlan, TrainConfig, TrainableSet};
use hiernet::risk::{empirical_risk, Predictor};
use hiernet::RngStream;

fn tiny_problem(seed: u64, n: usize, d: usize, k: usize) -> Dataset {
    let mut rng = RngStream::new(seed, 0);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    let y: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.normal()).collect()).collect();
    Dataset::new(Matrix::from_rows(&x).unwrap(), Matrix::from_rows(&y).unwrap()).unwrap()
}

fn full_batch(lr: f64, wd: f64, epochs: usize, n: usize, trainable: TrainableSet) -> TrainConfig {
    let mut cfg = TrainConfig::practice(lr, wd);
    cfg.steps = epochs;
    cfg.batch_size = n;
    cfg.lr_drop = None;
    cfg.trainable = trainable;
    cfg.eval_every = epochs;
    cfg
}

#[test]
fn last_layer_training_reaches_least_squares_optimum() {
    let data = tiny_problem(1, 8, 3, 2);
    let mut rng = RngStream::new(2, 0);
    let net = FullyConnectedNet::init(3, 2, 16, 2, true, FcInit::Practice, &mut rng).unwrap();

    // Closed form on the hidden features (σ(h),1): min-norm least squares.
    let phi: Vec<Vec<f64>> = (0..8).map(|i| net.hidden_features(data.x.row(i), 0).unwrap()).collect();
    let phi = Matrix::from_rows(&phi).unwrap();
    let gram = phi.matmul(&phi.transpose()).unwrap();
    let spec = KernelSpec::Gram { matrix: gram };
    let idx = Matrix::from_rows(&(0..8).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap();
    let ls = kernel_regress(&[spec], &idx, &data.y, 0.0, RegressOptions::default()).unwrap();
    let mut closed = 0.0;
    for i in 0..8 {
        let p = kernel_predict(&ls, &[i as f64]).unwrap();
        closed += p
            .iter()
            .zip(data.y.row(i))
            .map(|(a, b)| 0.5 * (a - b).powi(2))
            .sum::<f64>()
            / 8.0;
    }

    let mut trained = net.clone();
    let cfg = full_batch(0.05, 0.0, 20000, 8, TrainableSet::Last);
    sgd_train(
        &mut trained,
        &DataSource::Fixed(&data),
        &cfg,
        &EvalPlan::default(),
        &mut rng,
    )
    .unwrap();
    let loss = 0.5 * empirical_risk(&trained, &data).unwrap();
    assert!((loss - closed).abs() <= 1e-6, "{loss} vs {closed}");
    assert_eq!(trained.hidden, net.hidden);
}

#[test]
fn conjugate_trainer_agrees_with_kernel_regression() {
    let (n, wd) = (8, 0.05);
    let data = tiny_problem(3, n, 3, 2);
    let mut rng = RngStream::new(4, 0);
    let net = FullyConnectedNet::init(3, 2, 16, 2, true, FcInit::Practice, &mut rng).unwrap();
    let spec = KernelSpec::Conjugate {
        net: net.clone(),
        layer: 0,
    };
    let pred = kernel_regress(&[spec], &data.x, &data.y, n as f64 * wd, RegressOptions::default()).unwrap();

    let mut trained = net;
    let cfg = full_batch(0.05, wd, 20000, n, TrainableSet::Last);
    sgd_train(
        &mut trained,
        &DataSource::Fixed(&data),
        &cfg,
        &EvalPlan::default(),
        &mut rng,
    )
    .unwrap();

    let probe = tiny_problem(5, 6, 3, 1);
    for i in 0..6 {
        let x = probe.x.row(i);
        let a = trained.predict(x);
        let b = kernel_predict(&pred, x).unwrap();
        for j in 0..2 {
            assert!((a[j] - b[j]).abs() <= 1e-6, "{} vs {}", a[j], b[j]);
        }
    }
}

#[test]
fn zero_learning_rate_leaves_fc_net_unchanged() {
    let data = tiny_problem(6, 10, 4, 1);
    let mut rng = RngStream::new(7, 0);
    let net = FullyConnectedNet::init(4, 1, 8, 3, true, FcInit::Practice, &mut rng).unwrap();
    let mut trained = net.clone();
    let cfg = full_batch(0.0, 0.0, 5, 5, TrainableSet::All);
    sgd_train(
        &mut trained,
        &DataSource::Fixed(&data),
        &cfg,
        &EvalPlan::default(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(trained, net);
}

#[test]
fn linearized_training_tracks_the_network_to_second_order() {
    let data = tiny_problem(8, 10, 4, 2);
    let net = FullyConnectedNet::init(4, 2, 64, 2, true, FcInit::Practice, &mut RngStream::new(9, 0)).unwrap();
    let probe = tiny_problem(10, 5, 4, 1);
    let gap = |lr: f64| {
        let mut cfg = full_batch(lr, 0.0, 10, 10, TrainableSet::All);
        cfg.momentum = 0.0;
        let mut full = net.clone();
        sgd_train(
            &mut full,
            &DataSource::Fixed(&data),
            &cfg,
            &EvalPlan::default(),
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        let mut lin = LinearizedNet::new(net.clone());
        sgd_train(
            &mut lin,
            &DataSource::Fixed(&data),
            &cfg,
            &EvalPlan::default(),
            &mut RngStream::new(0, 0),
        )
        .unwrap();
        (0..5)
            .flat_map(|i| {
                let x = probe.x.row(i);
                full.predict(x)
                    .into_iter()
                    .zip(lin.predict(x))
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    };
    let gaps: Vec<f64> = [1e-2, 5e-3, 2.5e-3, 1.25e-3].into_iter().map(gap).collect();
    for w in gaps.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.2..0.3).contains(&ratio), "halving lr scaled the gap by {ratio}");
    }
}

#[test]
fn single_gaussian_anchor_is_reproduced() {
    let pred = hiernet::baselines::KernelPredictor {
        kernels: vec![KernelSpec::Gaussian { h: 2.0 }],
        anchors: Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap(),
        weights: Matrix::from_rows(&[vec![1.0]]).unwrap(),
        used_pinv: false,
    };
    let x = [0.5, 0.25];
    let expected = KernelSpec::Gaussian { h: 2.0 }.eval(&x, &[1.0, -1.0]).unwrap();
    assert_eq!(kernel_predict(&pred, &x).unwrap(), vec![expected]);
}
