//! Finite-difference validation of the full training losses: every head kind,
//! gradients flowing through the encoder, the prototypes and the distance
//! scale, with the DisMax variant including its compound-half KL term.

use entropic_ood_core::data::{build_mosaic, gen_blobs};
use entropic_ood_core::encoder::{Activation, EncoderSpec};
use entropic_ood_core::heads::{training_loss, LossConfig, LossKind};
use entropic_ood_core::matrix::Matrix;
use entropic_ood_core::model::Model;
use entropic_ood_core::seeding::derive_seed;
use entropic_ood_core::tape::finite_diff_check;
use entropic_ood_core::train::batch_loss_tape;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Loss as a function of (features, prototypes) only, the smallest
/// interesting configuration.
#[test]
fn isomax_loss_gradient_wrt_features_and_prototypes() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let config = LossConfig::new(LossKind::IsoMax);
    let features = rand_matrix(4, 3, &mut rng, -2.0, 2.0);
    let prototypes = rand_matrix(5, 3, &mut rng, -2.0, 2.0);
    let targets = vec![0, 1, 2, 3];

    let err = finite_diff_check(
        |tape, vars| {
            let d = tape.pairwise_euclidean(vars[0], vars[1]);
            let logits = tape.scale(d, -1.0);
            training_loss(LossKind::IsoMax, &config, logits, &targets, tape).unwrap()
        },
        &[features, prototypes],
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "isomax gradient error {err}");
}

/// Full model: encoder (4 -> 5 -> 4, tanh), head of the given kind, random
/// batch of 4 examples over 5 classes. With `with_fpr` the loss adds the
/// KL term over a freshly built mosaic half.
fn full_model_check(kind: LossKind, seed: u64, with_fpr: bool) -> f64 {
    let encoder = EncoderSpec {
        input_dim: 4,
        hidden_dims: vec![5],
        feature_dim: 4,
        // smooth activation keeps central differences clean
        activation: Activation::Tanh,
    };
    let classes = 5;
    let mut config = LossConfig::new(kind);
    config.alpha = if with_fpr { 1.0 } else { 0.0 };

    let model = Model::new(encoder.clone(), classes, config, seed).unwrap();
    let params: Vec<Matrix> = model.params.flatten().into_iter().cloned().collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let x = rand_matrix(4, 4, &mut rng, -1.5, 1.5);
    let targets: Vec<usize> = (0..4).map(|_| rng.gen_range(0..classes)).collect();

    let compound = if with_fpr {
        let grid = gen_blobs(classes, 6, 4, 0.8, derive_seed(seed, 2))
            .unwrap()
            .with_grid_shape(2, 2, 1)
            .unwrap();
        Some(build_mosaic(&grid, 4, classes, derive_seed(seed, 3)).unwrap())
    } else {
        None
    };

    finite_diff_check(
        |tape, vars| {
            let pair = compound
                .as_ref()
                .map(|m| (&m.compound_features, &m.target_q));
            batch_loss_tape(tape, &encoder, &config, vars, &x, &targets, pair).unwrap()
        },
        &params,
        1e-5,
    )
    .unwrap()
}

#[test]
fn softmax_full_model_gradients_pass() {
    for seed in 0..5 {
        let err = full_model_check(LossKind::Softmax, 200 + seed, false);
        assert!(err < 1e-4, "seed {seed}: error {err}");
    }
}

#[test]
fn isomax_full_model_gradients_pass() {
    for seed in 0..5 {
        let err = full_model_check(LossKind::IsoMax, 300 + seed, false);
        assert!(err < 1e-4, "seed {seed}: error {err}");
    }
}

#[test]
fn isomax_plus_full_model_gradients_pass() {
    for seed in 0..5 {
        let err = full_model_check(LossKind::IsoMaxPlus, 400 + seed, false);
        assert!(err < 1e-4, "seed {seed}: error {err}");
    }
}

#[test]
fn dismax_full_model_gradients_pass_with_fpr_term() {
    for seed in 0..5 {
        let err = full_model_check(LossKind::DisMax, 500 + seed, true);
        assert!(err < 1e-4, "seed {seed}: error {err}");
    }
}
