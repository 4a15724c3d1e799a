use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use innmf::experiments::full_batch;
use innmf::factorize::{
    grid_collapse_check, innmf_fit, kl_divergence, matrix_nmf_refit_h, nmf_multiplicative, refit_activations,
    ActivationKind, Architecture, Factors, FitOptions, InnmfModel, LookupTable,
};
use innmf::inr::{load_model, save_model, EncodingConfig, InrFunction};
use innmf::tfpoints::{NormalizationInfo, TFPoint, TFPointSet};
use innmf::transforms::{stft, AudioBuffer};

fn random_net(seed: u64) -> InrFunction {
    InrFunction::init(seed, EncodingConfig::geometric(6), &[32, 32]).unwrap()
}

fn function_model(seed: u64, k: usize) -> InnmfModel {
    InnmfModel::new(
        Factors::Functions((0..k as u64).map(|c| random_net(seed * 100 + c)).collect()),
        Factors::Functions((0..k as u64).map(|c| random_net(seed * 100 + 50 + c)).collect()),
        NormalizationInfo::new(0.0, 2.0, 4000.0, 3.5).unwrap(),
    )
    .unwrap()
}

#[test]
fn evaluation_is_non_negative_for_random_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..5 {
        let mut f = random_net(seed);
        for i in 0..f.num_params() {
            f.set_param(i, rng.random_range(-3.0..3.0));
        }
        for _ in 0..200 {
            assert!(f.evaluate(rng.random_range(-2.0..2.0)).unwrap() >= 0.0);
        }
    }
}

#[test]
fn large_batch_matches_scalar_calls() {
    let f = random_net(3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
    let batch = f.evaluate_batch(&xs).unwrap();
    for (x, b) in xs.iter().zip(&batch) {
        assert!((f.evaluate(*x).unwrap() - b).abs() <= 1e-12);
    }
}

#[test]
fn small_steps_give_small_changes() {
    let f = InrFunction::init(5, EncodingConfig::geometric(8), &[64, 64]).unwrap();
    for x in [0.1, 0.37, 0.5, 0.82] {
        let y = f.evaluate(x).unwrap();
        let coarse = (f.evaluate(x + 1e-3).unwrap() - y).abs();
        let fine = (f.evaluate(x + 1e-6).unwrap() - y).abs();
        assert!(fine < 1e-4, "x={x}: {fine}");
        // A smooth function scales its increments with the step.
        assert!(fine < coarse * 1e-2, "x={x}: {fine} vs {coarse}");
    }
}

#[test]
fn saved_models_evaluate_identically() {
    let dir = tempfile::tempdir().unwrap();
    let model = function_model(2, 2);
    let path = dir.path().join("m.json");
    save_model(&model.to_file().unwrap(), &path).unwrap();
    let back = InnmfModel::from_file(load_model(&path).unwrap()).unwrap();
    assert_eq!(back.rank(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (t, f) = (rng.random_range(0.0..2.0), rng.random_range(0.0..4000.0));
        assert_eq!(model.predict(t, f).unwrap().to_bits(), back.predict(t, f).unwrap().to_bits());
    }
}

#[test]
fn predictions_are_non_negative() {
    let model = function_model(4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<TFPoint> =
        (0..10_000).map(|_| TFPoint::new(rng.random_range(0.0..2.0), rng.random_range(0.0..4000.0), 1.0)).collect();
    let pred = model.predict_points(&TFPointSet::new(pts, "r").unwrap()).unwrap();
    assert!(pred.iter().all(|p| *p >= 0.0));
}

#[test]
fn collapse_agrees_with_pointwise_prediction() {
    let model = function_model(6, 2);
    let audio = AudioBuffer::new(vec![0.0; 160], 8000).unwrap();
    let grid = stft(&audio, 16, 8).unwrap();
    let m = grid_collapse_check(&model, &grid).unwrap();
    assert_eq!(m.dim(), (grid.num_bins(), grid.num_frames()));
    let (w, h) =
        (model.sample_spectral(&grid.bin_freqs()).unwrap(), model.sample_activations(&grid.frame_times()).unwrap());
    for (i, &f) in grid.bin_freqs().iter().enumerate() {
        for (j, &t) in grid.frame_times().iter().enumerate() {
            let sum: f64 = (0..2).map(|k| w[(i, k)] * h[(j, k)]).sum::<f64>() * model.norm.m_scale;
            assert!((m[(i, j)] - sum).abs() <= 1e-12 * sum.max(1.0));
            assert!((m[(i, j)] - model.predict(t, f).unwrap()).abs() <= 1e-12 * sum.max(1.0));
        }
    }
}

#[test]
fn doubling_a_component_doubles_its_contribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w = Array2::from_shape_fn((2, 6), |_| rng.random_range(0.1..1.0));
    let h = Array2::from_shape_fn((2, 5), |_| rng.random_range(0.1..1.0));
    let freqs: Vec<f64> = (0..6).map(|i| i as f64 * 100.0).collect();
    let times: Vec<f64> = (0..5).map(|j| j as f64 * 0.1).collect();
    let build = |w: &Array2<f64>| {
        InnmfModel::new(
            Factors::Table(LookupTable::from_values(freqs.clone(), w).unwrap()),
            Factors::Table(LookupTable::from_values(times.clone(), &h).unwrap()),
            NormalizationInfo::new(0.0, 0.4, 500.0, 1.0).unwrap(),
        )
        .unwrap()
    };
    let mut doubled = w.clone();
    doubled.row_mut(1).mapv_inplace(|v| 2.0 * v);
    let pts: Vec<TFPoint> = times.iter().flat_map(|&t| freqs.iter().map(move |&f| TFPoint::new(t, f, 1.0))).collect();
    let pts = TFPointSet::new(pts, "g").unwrap();
    let (a, b) = (build(&w), build(&doubled));
    let first = |m: &InnmfModel| m.predict_points_partial(&pts, 0..1).unwrap();
    let second = |m: &InnmfModel| m.predict_points_partial(&pts, 1..2).unwrap();
    for (x, y) in first(&a).iter().zip(first(&b)) {
        assert!((x - y).abs() < 1e-12);
    }
    for (x, y) in second(&a).iter().zip(second(&b)) {
        assert!((2.0 * x - y).abs() < 1e-12);
    }
}

#[test]
fn full_rank_nmf_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let v = Array2::from_shape_fn((8, 8), |_| rng.random_range(0.0..1.0));
    let (model, _) = nmf_multiplicative(&v, 8, 5000, 3).unwrap();
    assert!(kl_divergence(&v, &model.reconstruct()) < 1e-6 * v.sum());
}

#[test]
fn activation_refit_recovers_exact_factorization() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let w = Array2::from_shape_fn((30, 3), |_| rng.random_range(0.0..1.0));
    let h_true = Array2::from_shape_fn((3, 40), |_| rng.random_range(0.0..1.0));
    let v = w.dot(&h_true);
    let (h, curve) = matrix_nmf_refit_h(&v, &w, 3000, 4).unwrap();
    assert!(curve.windows(2).all(|c| c[1] <= c[0] + 1e-12));
    assert!(kl_divergence(&v, &w.dot(&h)) < 1e-8 * v.sum());
}

fn smooth_points(k: usize) -> TFPointSet {
    let mut pts = Vec::new();
    for j in 0..25 {
        let t = j as f64 * 0.04;
        for i in 0..33 {
            let f = i as f64 * 125.0;
            let x = f / 4000.0;
            let m: f64 = (0..k)
                .map(|c| {
                    let a = (-((x - 0.2 - 0.5 * c as f64).powi(2)) / 0.02).exp() + 0.05;
                    let b = 1.0 + 0.8 * (3.0 * t + 2.0 * c as f64).sin();
                    a * b
                })
                .sum();
            pts.push(TFPoint::new(t, f, m));
        }
    }
    TFPointSet::new(pts, "smooth").unwrap()
}

fn small_options(activations: ActivationKind) -> FitOptions {
    let arch = Architecture { encoding_freqs: 5, hidden: vec![32, 32], omega0: 30.0 };
    FitOptions { activations, spectral_arch: arch.clone(), activation_arch: arch }
}

#[test]
fn rank_one_training_reduces_loss_by_99_percent() {
    let (_, report) =
        innmf_fit(&smooth_points(1), 1, 4000.0, &full_batch(1e-2, 2000, 21), &small_options(ActivationKind::Functions))
            .unwrap();
    let curve = &report.loss_curve;
    assert!(curve.iter().all(|v| v.is_finite()));
    assert!(report.final_loss < 0.01 * curve[0], "{} vs {}", report.final_loss, curve[0]);
}

#[test]
fn rank_two_training_reduces_loss_by_99_percent() {
    let (_, report) =
        innmf_fit(&smooth_points(2), 2, 4000.0, &full_batch(1e-2, 2000, 22), &small_options(ActivationKind::Table))
            .unwrap();
    assert!(report.final_loss < 0.01 * report.loss_curve[0]);
}

#[test]
fn refit_on_training_points_matches_joint_fit() {
    let pts = smooth_points(2);
    let options = small_options(ActivationKind::Table);
    let (model, joint) = innmf_fit(&pts, 2, 4000.0, &full_batch(1e-2, 1500, 23), &options).unwrap();
    let (_, refit) =
        refit_activations(&pts, &model.dictionary().unwrap(), &full_batch(1e-2, 1500, 24), &options).unwrap();
    assert!(refit.final_loss <= 1.05 * joint.final_loss, "{} vs {}", refit.final_loss, joint.final_loss);
}
