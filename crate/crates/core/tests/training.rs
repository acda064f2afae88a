use boostnet_core::dataset::{Scaler, N_FEATURES};
use boostnet_core::nn::loss::compute_loss;
use boostnet_core::nn::params::Params;
use boostnet_core::nn::train::{
    init_weights, loss_and_gradient, predict, train_prepared, write_history, CurveSpan, Hyperparams, PreparedData,
    Sample,
};
use boostnet_core::nn::ModelKind;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn identity_scaler() -> Scaler {
    Scaler {
        x_mean: [0.0; N_FEATURES],
        x_std: [1.0; N_FEATURES],
        y_mean: [0.0; 2],
        y_std: [1.0; 2],
    }
}

/// Random curves with targets and aux values of converter-like magnitude.
fn random_data(seed: u64, curves: usize, len: usize) -> PreparedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = curves * len;
    let x: Vec<[f64; N_FEATURES]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let y: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(1.0..5.0), rng.random_range(0.5..3.0)]).collect();
    let aux: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(100.0..300.0), rng.random_range(0.1..0.6)]).collect();
    let spans = (0..curves)
        .map(|c| CurveSpan {
            id: c as u64,
            start: c * len,
            len,
        })
        .collect();
    let scaler = Scaler {
        y_mean: [3.0, 1.5],
        y_std: [1.2, 0.7],
        ..identity_scaler()
    };
    PreparedData::from_parts(&x, y, aux, spans, vec![], &scaler)
}

fn small_hp(kind: ModelKind, hidden: usize, k: usize) -> Hyperparams {
    Hyperparams {
        hidden_size: hidden,
        sequence_length: k,
        batch_size: 8,
        epochs: 3,
        lambda: 0.2,
        ..kind.default_hyperparams()
    }
}

fn all_samples(data: &PreparedData) -> Vec<Sample> {
    data.train.iter().flat_map(|c| c.samples()).collect()
}

fn check_full_loss_gradient(kind: ModelKind, hidden: usize, k: usize, stride: usize) {
    let data = random_data(21, 3, 7);
    let hp = small_hp(kind, hidden, k);
    let weights = init_weights(kind, &hp, &mut ChaCha8Rng::seed_from_u64(4));
    let samples: Vec<Sample> = all_samples(&data).into_iter().step_by(2).collect();
    let (_, grads) = loss_and_gradient(&weights, &data, &samples, 0.2, stride).unwrap();
    let total = |w: &_| loss_and_gradient(w, &data, &samples, 0.2, stride).unwrap().0.total;
    let h = 1e-5;
    let mut probe = weights.clone();
    let mut worst: f64 = 0.0;
    for (t, g) in grads.tensors().iter().enumerate() {
        for n in 0..g.len() {
            let orig = probe.tensors()[t][n];
            probe.tensors_mut()[t][n] = orig + h;
            let up = total(&probe);
            probe.tensors_mut()[t][n] = orig - h;
            let down = total(&probe);
            probe.tensors_mut()[t][n] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (numeric - g[n]).abs() / numeric.abs().max(g[n].abs()).max(1e-4);
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-5, "{kind}: worst relative gradient error {worst:e}");
}

#[test]
fn fcnn_full_loss_gradient() {
    check_full_loss_gradient(ModelKind::Fcnn, 8, 0, 1);
}

#[test]
fn bilstm_full_loss_gradient() {
    check_full_loss_gradient(ModelKind::BilstmPinn, 8, 3, 1);
    check_full_loss_gradient(ModelKind::Bilstm, 5, 2, 2);
}

#[test]
fn window_locality() {
    let data = random_data(3, 2, 30);
    let hp = small_hp(ModelKind::Bilstm, 6, 3);
    let w = init_weights(ModelKind::Bilstm, &hp, &mut ChaCha8Rng::seed_from_u64(8));
    let target = Sample {
        start: 0,
        len: 30,
        offset: 12,
    };
    let before = predict(&w, &data, &[target], 1).unwrap();
    let mut perturbed = data.clone();
    for n in (0..60).filter(|n| !(9..=15).contains(n)) {
        perturbed.x[n] = [1e3; N_FEATURES];
    }
    assert_eq!(predict(&w, &perturbed, &[target], 1).unwrap(), before);
    perturbed.x[9][4] += 1e-3;
    assert_ne!(predict(&w, &perturbed, &[target], 1).unwrap(), before);
}

#[test]
fn linear_toy_problem_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (curves, len) = (8, 64);
    let x: Vec<[f64; N_FEATURES]> = (0..curves * len)
        .map(|_| {
            let mut r = [0.0; N_FEATURES];
            r[1] = rng.random_range(-1.0..1.0);
            r[2] = rng.random_range(-1.0..1.0);
            r
        })
        .collect();
    let y: Vec<[f64; 2]> = x
        .iter()
        .map(|r| [0.8 * r[1] - 0.3 * r[2] + 0.5, 0.2 * r[1] + 0.6 * r[2] - 0.1])
        .collect();
    let spans = (0..curves)
        .map(|c| CurveSpan {
            id: c as u64,
            start: c * len,
            len,
        })
        .collect();
    let data = PreparedData::from_parts(&x, y, vec![[0.0; 2]; curves * len], spans, vec![], &identity_scaler());
    let hp = Hyperparams {
        batch_size: 64,
        epochs: 200,
        learning_rate: 3e-3,
        hidden_size: 16,
        weight_decay: 0.0,
        lambda: 0.0,
        ..ModelKind::Fcnn.default_hyperparams()
    };
    let model = train_prepared(&data, ModelKind::Fcnn, &hp).unwrap();
    let first = model.history[0].train.rmse_part;
    let last = model.history.last().unwrap().train.rmse_part;
    assert!(last < 5e-3 && last < 0.02 * first, "training RMSE {first:e} -> {last:e}");
}

#[test]
fn same_seed_same_history() {
    let data = random_data(5, 4, 12);
    for kind in [ModelKind::Fcnn, ModelKind::BilstmPinn] {
        let hp = small_hp(kind, 6, 2);
        let a = train_prepared(&data, kind, &hp).unwrap();
        let b = train_prepared(&data, kind, &hp).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.weights, b.weights);
        let c = train_prepared(&data, kind, &Hyperparams { seed: 99, ..hp }).unwrap();
        assert_ne!(a.history, c.history);
    }
}

#[test]
fn default_hyperparams_run_35_epochs() {
    let mut data = random_data(6, 3, 10);
    data.test = vec![data.train.pop().unwrap()];
    for kind in ModelKind::ALL {
        let hp = kind.default_hyperparams();
        assert_eq!(hp.epochs, 35);
        let model = train_prepared(&data, kind, &hp).unwrap();
        assert_eq!(model.history.len(), 35);
        assert!(model.history.iter().all(|r| r.validation.is_some()));
        let mut log = Vec::new();
        write_history(&model.history, &mut log).unwrap();
        assert_eq!(String::from_utf8(log).unwrap().lines().count(), 36);
    }
}

#[test]
fn empty_training_split_is_an_error() {
    let mut data = random_data(1, 2, 5);
    data.train.clear();
    assert!(train_prepared(&data, ModelKind::Fcnn, &small_hp(ModelKind::Fcnn, 4, 0)).is_err());
}

fn batch(rows: usize, seed: u64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = Array2::from_shape_fn((rows, 2), |_| rng.random_range(-5.0..5.0));
    let target = Array2::from_shape_fn((rows, 2), |_| rng.random_range(-5.0..5.0));
    let aux = Array2::from_shape_fn((rows, 2), |(_, c)| {
        if c == 0 {
            rng.random_range(10.0..500.0)
        } else {
            rng.random_range(0.0..0.9)
        }
    });
    (pred, target, aux)
}

proptest! {
    #[test]
    fn loss_decomposes(rows in 1usize..40, seed: u64, lambda in 0.0f64..5.0) {
        let (p, t, a) = batch(rows, seed);
        let l = compute_loss(p.view(), t.view(), a.view(), lambda).unwrap();
        prop_assert!((l.total - (l.rmse_part + lambda * l.pbe_part)).abs() <= 1e-12 * l.total.max(1.0));
    }

    #[test]
    fn loss_grows_with_lambda(rows in 1usize..40, seed: u64, lo in 0.0f64..2.0, step in 0.0f64..2.0) {
        let (p, t, a) = batch(rows, seed);
        let l1 = compute_loss(p.view(), t.view(), a.view(), lo).unwrap();
        let l2 = compute_loss(p.view(), t.view(), a.view(), lo + step).unwrap();
        prop_assert!(l1.pbe_part > 0.0);
        prop_assert!(l2.total >= l1.total);
    }
}
