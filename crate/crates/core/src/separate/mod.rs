//! Two-source separation with fixed per-source dictionaries, soft masks on
//! the mixture STFT, and projection-based quality metrics.

mod metrics;

pub use metrics::{bss_metrics, read_metrics_csv, write_metrics_csv, BssMetrics, MetricsRow};

use ndarray::{concatenate, Array2, Axis};

use crate::error::{Error, Result};
use crate::factorize::{
    matrix_nmf_refit_h, nmf_multiplicative, refit_activations, FitOptions, FitReport, InnmfModel, SpectralDictionary,
    TrainConfig,
};
use crate::tfpoints::{TFPoint, TFPointSet};
use crate::transforms::{istft, stft, AudioBuffer, StftGrid};

/// Offset in the mask denominator so silent bins split evenly instead of 0/0.
pub const MASK_EPS: f64 = 1e-12;

/// Scales `b` to the RMS of `a` and sums them, truncating to the shorter
/// length. Returns the mixture and the two (scaled) references.
pub fn mix_at_0db(a: &AudioBuffer, b: &AudioBuffer) -> Result<(AudioBuffer, AudioBuffer, AudioBuffer)> {
    if a.sample_rate_hz != b.sample_rate_hz {
        return Err(Error::InvalidArgument(format!(
            "sample rates differ: {} vs {}",
            a.sample_rate_hz, b.sample_rate_hz
        )));
    }
    let n = a.len().min(b.len());
    let a = a.slice(0, n);
    let b = b.slice(0, n);
    let (ra, rb) = (a.rms(), b.rms());
    if ra == 0.0 || rb == 0.0 {
        return Err(Error::InvalidArgument("cannot mix a silent source at 0 dB".into()));
    }
    let b = b.scaled(ra / rb);
    let mix = a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect();
    Ok((AudioBuffer::new(mix, a.sample_rate_hz)?, a, b))
}

/// Zero-pads half a window on both sides so every input sample is covered
/// by a full set of overlapping frames.
pub fn pad_for_stft(audio: &AudioBuffer, window_size: usize) -> AudioBuffer {
    let pad = window_size / 2;
    let mut samples = vec![0.0; pad];
    samples.extend_from_slice(&audio.samples);
    samples.resize(samples.len() + pad, 0.0);
    AudioBuffer { samples, sample_rate_hz: audio.sample_rate_hz }
}

/// STFT of the padded signal, with times of the returned points shifted
/// back to the unpadded signal's clock.
pub fn padded_stft(audio: &AudioBuffer, window_size: usize, hop: usize) -> Result<(StftGrid, TFPointSet)> {
    let grid = stft(&pad_for_stft(audio, window_size), window_size, hop)?;
    let shift = (window_size / 2) as f64 / audio.sample_rate_hz as f64;
    let freqs = grid.bin_freqs();
    let mut points = Vec::with_capacity(grid.num_bins() * grid.num_frames());
    for j in 0..grid.num_frames() {
        let t = grid.frame_time(j) - shift;
        for (k, c) in grid.frame(j).iter().enumerate() {
            points.push(TFPoint::new(t, freqs[k], c.norm()));
        }
    }
    let points = TFPointSet::new(points, grid.tag())?;
    Ok((grid, points))
}

/// Output of a separation run.
#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub estimates: [AudioBuffer; 2],
    /// Predicted magnitudes per source, `bins x frames`.
    pub predictions: [Array2<f64>; 2],
    /// Soft masks per source, `bins x frames`; they sum to one.
    pub masks: [Array2<f64>; 2],
    pub loss_curve: Vec<f64>,
    /// Present when references were supplied.
    pub metrics: Option<[BssMetrics; 2]>,
}

/// A separation problem: a mixture and one frozen dictionary per source.
#[derive(Debug, Clone)]
pub struct SeparationJob {
    pub mixture: AudioBuffer,
    pub dictionaries: [SpectralDictionary; 2],
    pub window_size: usize,
    pub hop: usize,
    pub config: TrainConfig,
    pub options: FitOptions,
}

impl SeparationJob {
    pub fn validate(&self) -> Result<()> {
        if self.mixture.is_empty() {
            return Err(Error::InvalidArgument("mixture is empty".into()));
        }
        let [d1, d2] = &self.dictionaries;
        if d1.rank() != d2.rank() {
            return Err(Error::InvalidArgument(format!(
                "dictionaries have different ranks ({} and {})",
                d1.rank(),
                d2.rank()
            )));
        }
        self.config.validate()
    }
}

/// Learns both sources' activations jointly on the mixture points with both
/// dictionaries frozen. The returned model holds source 1's components
/// first, then source 2's.
pub fn fit_mixture_activations(
    points: &TFPointSet,
    dictionaries: &[SpectralDictionary; 2],
    config: &TrainConfig,
    options: &FitOptions,
) -> Result<(InnmfModel, FitReport)> {
    let joint = dictionaries[0].concat(&dictionaries[1])?;
    refit_activations(points, &joint, config, options)
}

fn to_bins_by_frames(frame_major: Vec<f64>, grid: &StftGrid) -> Result<Array2<f64>> {
    let m = Array2::from_shape_vec((grid.num_frames(), grid.num_bins()), frame_major)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok(m.reversed_axes().as_standard_layout().to_owned())
}

/// Soft masks `(m̃ᵢ + ε/2) / (m̃₁ + m̃₂ + ε)` applied to the mixture
/// coefficients and inverted. Predictions are `bins x frames`.
pub fn soft_mask_reconstruct(
    mixture: &StftGrid,
    pred1: &Array2<f64>,
    pred2: &Array2<f64>,
) -> Result<([AudioBuffer; 2], [Array2<f64>; 2])> {
    let dim = (mixture.num_bins(), mixture.num_frames());
    if pred1.dim() != dim || pred2.dim() != dim {
        return Err(Error::Shape(format!(
            "predictions {:?} and {:?} do not match the {dim:?} grid",
            pred1.dim(),
            pred2.dim()
        )));
    }
    if pred1.iter().chain(pred2.iter()).any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Numeric("predictions must be finite and non-negative".into()));
    }
    let denom = pred1 + pred2 + MASK_EPS;
    let m1 = (pred1 + MASK_EPS / 2.0) / &denom;
    let m2 = (pred2 + MASK_EPS / 2.0) / &denom;
    let gains = |m: &Array2<f64>| -> Vec<f64> { m.t().iter().copied().collect() };
    let e1 = istft(&mixture.apply_gains(&gains(&m1))?)?;
    let e2 = istft(&mixture.apply_gains(&gains(&m2))?)?;
    Ok(([e1, e2], [m1, m2]))
}

fn unpad(audio: &AudioBuffer, window_size: usize, len: usize) -> AudioBuffer {
    let pad = window_size / 2;
    audio.slice(pad, pad + len)
}

/// Masks, inverts and scores frame-major predictions on a padded mixture grid.
fn finish(
    grid: &StftGrid,
    pred: [Vec<f64>; 2],
    mixture_len: usize,
    loss_curve: Vec<f64>,
    references: Option<[&AudioBuffer; 2]>,
) -> Result<SeparationResult> {
    let [p1, p2] = pred;
    let p1 = to_bins_by_frames(p1, grid)?;
    let p2 = to_bins_by_frames(p2, grid)?;
    let ([e1, e2], masks) = soft_mask_reconstruct(grid, &p1, &p2)?;
    let estimates = [unpad(&e1, grid.window_size, mixture_len), unpad(&e2, grid.window_size, mixture_len)];
    let metrics = match references {
        Some([r1, r2]) => Some([bss_metrics(&estimates[0], r1, r2)?, bss_metrics(&estimates[1], r2, r1)?]),
        None => None,
    };
    Ok(SeparationResult { estimates, predictions: [p1, p2], masks, loss_curve, metrics })
}

/// End-to-end iN-NMF separation. `references` (clean source 1, source 2)
/// enable metric computation.
pub fn run_separation(job: &SeparationJob, references: Option<[&AudioBuffer; 2]>) -> Result<SeparationResult> {
    job.validate()?;
    let (grid, points) = padded_stft(&job.mixture, job.window_size, job.hop)?;
    let (model, report) = fit_mixture_activations(&points, &job.dictionaries, &job.config, &job.options)?;
    let k1 = job.dictionaries[0].rank();
    let p1 = model.predict_points_partial(&points, 0..k1)?;
    let p2 = model.predict_points_partial(&points, k1..model.rank())?;
    finish(&grid, [p1, p2], job.mixture.len(), report.loss_curve, references)
}

/// Dictionary `W` (`bins x K`) from a clean recording by multiplicative-update NMF.
pub fn nmf_dictionary(
    clean: &AudioBuffer,
    k: usize,
    window_size: usize,
    hop: usize,
    iterations: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let (grid, _) = padded_stft(clean, window_size, hop)?;
    let (model, _) = nmf_multiplicative(&grid.magnitude_matrix(), k, iterations, seed)?;
    Ok(model.w)
}

/// The matrix-NMF separation path: activations for `[W₁ W₂]` learned on the
/// mixture magnitude spectrogram, then the same masking and inversion.
pub fn nmf_separation(
    mixture: &AudioBuffer,
    dictionaries: [&Array2<f64>; 2],
    window_size: usize,
    hop: usize,
    iterations: usize,
    seed: u64,
    references: Option<[&AudioBuffer; 2]>,
) -> Result<SeparationResult> {
    let (grid, _) = padded_stft(mixture, window_size, hop)?;
    let [w1, w2] = dictionaries;
    if w1.nrows() != grid.num_bins() || w2.nrows() != grid.num_bins() {
        return Err(Error::Shape(format!(
            "dictionaries have {} and {} rows; the mixture grid has {} bins",
            w1.nrows(),
            w2.nrows(),
            grid.num_bins()
        )));
    }
    let w = concatenate(Axis(1), &[w1.view(), w2.view()]).map_err(|e| Error::Shape(e.to_string()))?;
    let (h, curve) = matrix_nmf_refit_h(&grid.magnitude_matrix(), &w, iterations, seed)?;
    let k1 = w1.ncols();
    let v1 = w1.dot(&h.slice(ndarray::s![..k1, ..]));
    let v2 = w2.dot(&h.slice(ndarray::s![k1.., ..]));
    let frame_major = |m: Array2<f64>| -> Vec<f64> { m.t().iter().copied().collect() };
    let n = grid.num_bins() * grid.num_frames();
    let curve = curve.into_iter().map(|c| c / n as f64).collect();
    finish(&grid, [frame_major(v1), frame_major(v2)], mixture.len(), curve, references)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, len: usize, sr: u32) -> AudioBuffer {
        let s = (0..len).map(|i| (std::f64::consts::TAU * freq * i as f64 / sr as f64).sin()).collect();
        AudioBuffer::new(s, sr).unwrap()
    }

    #[test]
    fn mixing_equalizes_rms() {
        let a = tone(300.0, 4000, 8000);
        let b = tone(900.0, 5000, 8000).scaled(0.1);
        let (mix, ra, rb) = mix_at_0db(&a, &b).unwrap();
        assert_eq!(mix.len(), 4000);
        assert!((ra.rms() / rb.rms() - 1.0).abs() < 1e-9);
        assert!(mix_at_0db(&a, &AudioBuffer::new(vec![0.0; 10], 8000).unwrap()).is_err());
    }

    #[test]
    fn equal_predictions_split_in_half() {
        let mix = tone(440.0, 4096, 8000);
        let grid = stft(&pad_for_stft(&mix, 256), 256, 64).unwrap();
        let p = Array2::from_elem((grid.num_bins(), grid.num_frames()), 0.3);
        let ([e1, e2], [m1, m2]) = soft_mask_reconstruct(&grid, &p, &p).unwrap();
        let full = istft(&grid).unwrap();
        for i in 0..full.len() {
            assert!((e1.samples[i] - full.samples[i] / 2.0).abs() < 1e-12);
            assert!((e1.samples[i] + e2.samples[i] - full.samples[i]).abs() < 1e-9);
        }
        assert!((&m1 + &m2).iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_prediction_gives_everything_to_the_other_source() {
        let mix = tone(440.0, 4096, 8000);
        let padded = pad_for_stft(&mix, 256);
        let grid = stft(&padded, 256, 64).unwrap();
        let p1 = Array2::from_elem((grid.num_bins(), grid.num_frames()), 1.0);
        let p2 = Array2::zeros(p1.dim());
        let ([e1, e2], _) = soft_mask_reconstruct(&grid, &p1, &p2).unwrap();
        let err: f64 = e1.samples.iter().zip(&padded.samples).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(err.sqrt() < 1e-9 * padded.energy().sqrt());
        assert!(e2.samples.iter().all(|s| s.abs() < 1e-9));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let mix = tone(440.0, 2048, 8000);
        let grid = stft(&mix, 256, 64).unwrap();
        let p = Array2::zeros((3, 3));
        assert!(soft_mask_reconstruct(&grid, &p, &p).is_err());
    }

    #[test]
    fn padded_points_are_centered_on_the_original_clock() {
        let mix = tone(440.0, 2048, 8000);
        let (grid, pts) = padded_stft(&mix, 256, 64).unwrap();
        assert_eq!(pts.len(), grid.num_bins() * grid.num_frames());
        assert_eq!(pts.points()[0].t, 0.0);
        assert_eq!(grid.num_frames(), 2048 / 64 + 1);
    }
}
