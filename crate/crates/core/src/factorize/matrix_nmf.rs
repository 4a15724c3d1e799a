//! Dense NMF with KL multiplicative updates.

use ndarray::{Array1, Array2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kl::kl_pointwise;
use crate::error::{Error, Result};

/// Denominator guard for the update ratios. Small enough that it never
/// changes a step taken on sensible data.
const TINY: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixNmfModel {
    /// `bins x K`.
    pub w: Array2<f64>,
    /// `K x frames`.
    pub h: Array2<f64>,
}

impl MatrixNmfModel {
    pub fn reconstruct(&self) -> Array2<f64> {
        self.w.dot(&self.h)
    }
}

/// Summed generalized KL divergence between `v` and `approx`.
pub fn kl_divergence(v: &Array2<f64>, approx: &Array2<f64>) -> f64 {
    v.iter().zip(approx.iter()).map(|(&m, &p)| kl_pointwise(m, p, TINY)).sum()
}

fn check_input(v: &Array2<f64>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if v.is_empty() {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidArgument("matrix entries must be finite and non-negative".into()));
    }
    if v.iter().all(|x| *x == 0.0) {
        return Err(Error::InvalidArgument("matrix is all zeros".into()));
    }
    Ok(())
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let dist = Uniform::new(0.1, 1.1).expect("valid range");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// `H <- H ⊙ (Wᵀ (V ⊘ WH)) ⊘ (Wᵀ 1)`
fn update_h(v: &Array2<f64>, w: &Array2<f64>, h: &mut Array2<f64>) {
    let mut ratio = w.dot(&*h);
    ratio.zip_mut_with(v, |r, &x| *r = x / r.max(TINY));
    let numer = w.t().dot(&ratio);
    let col_sums: Array1<f64> = w.sum_axis(Axis(0));
    for ((k, j), hv) in h.indexed_iter_mut() {
        *hv *= numer[(k, j)] / col_sums[k].max(TINY);
    }
}

/// `W <- W ⊙ ((V ⊘ WH) Hᵀ) ⊘ (1 Hᵀ)`
fn update_w(v: &Array2<f64>, w: &mut Array2<f64>, h: &Array2<f64>) {
    let mut ratio = w.dot(h);
    ratio.zip_mut_with(v, |r, &x| *r = x / r.max(TINY));
    let numer = ratio.dot(&h.t());
    let row_sums: Array1<f64> = h.sum_axis(Axis(1));
    for ((i, k), wv) in w.indexed_iter_mut() {
        *wv *= numer[(i, k)] / row_sums[k].max(TINY);
    }
}

/// Runs `iterations` rounds of KL multiplicative updates (H then W) from a
/// seeded `U(0.1, 1.1)` initialization.
///
/// Returns the model and the summed KL before the first update followed by
/// the KL after each round, so the curve has `iterations + 1` entries.
pub fn nmf_multiplicative(
    v: &Array2<f64>,
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<(MatrixNmfModel, Vec<f64>)> {
    check_input(v, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = uniform_matrix(v.nrows(), k, &mut rng);
    let mut h = uniform_matrix(k, v.ncols(), &mut rng);
    let mut curve = Vec::with_capacity(iterations + 1);
    curve.push(kl_divergence(v, &w.dot(&h)));
    for _ in 0..iterations {
        update_h(v, &w, &mut h);
        update_w(v, &mut w, &h);
        curve.push(kl_divergence(v, &w.dot(&h)));
    }
    Ok((MatrixNmfModel { w, h }, curve))
}

/// Fits activations for a fixed dictionary with H-only updates.
pub fn matrix_nmf_refit_h(
    v: &Array2<f64>,
    fixed_w: &Array2<f64>,
    iterations: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<f64>)> {
    let k = fixed_w.ncols();
    check_input(v, k)?;
    if fixed_w.nrows() != v.nrows() {
        return Err(Error::Shape(format!("dictionary has {} rows but the matrix has {}", fixed_w.nrows(), v.nrows())));
    }
    if fixed_w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidArgument("dictionary entries must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = uniform_matrix(k, v.ncols(), &mut rng);
    let mut curve = Vec::with_capacity(iterations + 1);
    curve.push(kl_divergence(v, &fixed_w.dot(&h)));
    for _ in 0..iterations {
        update_h(v, fixed_w, &mut h);
        curve.push(kl_divergence(v, &fixed_w.dot(&h)));
    }
    Ok((h, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new(0.0, 1.0).unwrap();
        Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng))
    }

    fn assert_monotone(curve: &[f64]) {
        for (i, w) in curve.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-12, "KL rose at step {i}: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rank_one_is_recovered() {
        let w = Array2::from_shape_fn((30, 1), |(i, _)| 1.0 + (i as f64 * 0.3).sin().abs());
        let h = Array2::from_shape_fn((1, 20), |(_, j)| 0.5 + j as f64 / 10.0);
        let v = w.dot(&h);
        let (_, curve) = nmf_multiplicative(&v, 1, 500, 1).unwrap();
        assert!(*curve.last().unwrap() < 1e-8 * v.sum());
        assert_monotone(&curve);
    }

    #[test]
    fn monotone_on_random_data() {
        let v = random_matrix(64, 100, 9);
        let (model, curve) = nmf_multiplicative(&v, 10, 200, 3).unwrap();
        assert_monotone(&curve);
        assert!(model.w.iter().chain(model.h.iter()).all(|x| *x >= 0.0 && x.is_finite()));
    }

    #[test]
    fn refit_recovers_exact_activations() {
        let w = random_matrix(40, 3, 1).mapv(|x| x + 0.05);
        let h_true = random_matrix(3, 25, 2).mapv(|x| x + 0.05);
        let v = w.dot(&h_true);
        let w_before = w.clone();
        let (h, curve) = matrix_nmf_refit_h(&v, &w, 3000, 5).unwrap();
        assert_eq!(w, w_before);
        assert_monotone(&curve);
        assert!(kl_divergence(&v, &w.dot(&h)) < 1e-8 * v.sum());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(nmf_multiplicative(&Array2::zeros((3, 3)), 1, 1, 0).is_err());
        assert!(nmf_multiplicative(&Array2::from_elem((3, 3), -1.0), 1, 1, 0).is_err());
        assert!(nmf_multiplicative(&Array2::ones((3, 3)), 0, 1, 0).is_err());
        assert!(matrix_nmf_refit_h(&Array2::ones((3, 3)), &Array2::ones((4, 1)), 1, 0).is_err());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let v = random_matrix(10, 12, 4);
        let a = nmf_multiplicative(&v, 3, 20, 77).unwrap();
        let b = nmf_multiplicative(&v, 3, 20, 77).unwrap();
        assert_eq!(a, b);
    }
}
