//! Sparse sinusoidal analysis: per-frame spectral peaks refined by
//! parabolic interpolation of the log magnitude.

use super::audio::AudioBuffer;
use super::stft::stft;
use crate::error::Result;
use crate::tfpoints::{TFPoint, TFPointSet};

pub const DEFAULT_PEAK_THRESHOLD_DB: f64 = -60.0;

/// Frames whose strongest bin is below this magnitude count as silent.
const SILENCE_FLOOR: f64 = 1e-9;

/// Interpolated peak location (fractional bin offset in `[-0.5, 0.5]`) and
/// log-magnitude height from three neighbouring log magnitudes.
pub fn parabolic_peak(alpha: f64, beta: f64, gamma: f64) -> (f64, f64) {
    let denom = alpha - 2.0 * beta + gamma;
    let offset = if denom < 0.0 { (0.5 * (alpha - gamma) / denom).clamp(-0.5, 0.5) } else { 0.0 };
    (offset, beta - 0.25 * (alpha - gamma) * offset)
}

pub fn sinusoidal_model_points(
    audio: &AudioBuffer,
    window_size: usize,
    hop: usize,
    peak_threshold_db: f64,
) -> Result<TFPointSet> {
    let grid = stft(audio, window_size, hop)?;
    let bin_hz = audio.sample_rate_hz as f64 / window_size as f64;
    let rel = 10f64.powf(peak_threshold_db / 20.0);
    let ln = |x: f64| x.max(f64::MIN_POSITIVE).ln();

    let mut points = Vec::new();
    let mut mags = vec![0.0; grid.num_bins()];
    for j in 0..grid.num_frames() {
        for (m, c) in mags.iter_mut().zip(grid.frame(j)) {
            *m = c.norm();
        }
        let peak = mags.iter().copied().fold(0.0, f64::max);
        if peak < SILENCE_FLOOR {
            continue;
        }
        let floor = peak * rel;
        let t = grid.frame_time(j);
        for k in 1..mags.len() - 1 {
            let (a, b, c) = (mags[k - 1], mags[k], mags[k + 1]);
            if b > a && b >= c && b >= floor {
                let (offset, height) = parabolic_peak(ln(a), ln(b), ln(c));
                points.push(TFPoint::new(t, (k as f64 + offset) * bin_hz, height.exp()));
            }
        }
    }
    TFPointSet::new(points, format!("sin:N={window_size},hop={hop},thresh={peak_threshold_db}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tones(freqs: &[f64], sr: u32, len: usize) -> AudioBuffer {
        AudioBuffer::new(
            (0..len).map(|n| freqs.iter().map(|f| (2.0 * PI * f * n as f64 / sr as f64).sin()).sum()).collect(),
            sr,
        )
        .unwrap()
    }

    #[test]
    fn parabola_vertex() {
        // y = -(x - 0.2)^2 sampled at -1, 0, 1.
        let y = |x: f64| -(x - 0.2) * (x - 0.2);
        let (off, h) = parabolic_peak(y(-1.0), y(0.0), y(1.0));
        assert!((off - 0.2).abs() < 1e-12);
        assert!(h.abs() < 1e-12);
        assert_eq!(parabolic_peak(1.0, 1.0, 1.0), (0.0, 1.0));
    }

    #[test]
    fn lone_tone_one_peak_per_frame() {
        let (sr, n) = (16000, 1024);
        let audio = tones(&[440.0], sr, 16000);
        let pts = sinusoidal_model_points(&audio, n, 256, -25.0).unwrap();
        let frames = crate::transforms::stft::frame_count(audio.len(), n, 256);
        assert_eq!(pts.len(), frames);
        let bin = sr as f64 / n as f64;
        assert!(pts.iter().all(|p| (p.f - 440.0).abs() < bin));
    }

    #[test]
    fn silence_is_empty() {
        let audio = AudioBuffer::new(vec![0.0; 4096], 8000).unwrap();
        let pts = sinusoidal_model_points(&audio, 512, 128, DEFAULT_PEAK_THRESHOLD_DB).unwrap();
        assert!(pts.is_empty());
    }

    #[test]
    fn two_tones_two_peaks() {
        let (sr, n) = (8000, 512);
        let audio = tones(&[500.0, 1800.0], sr, 8000);
        let pts = sinusoidal_model_points(&audio, n, 128, -25.0).unwrap();
        let frames = crate::transforms::stft::frame_count(audio.len(), n, 128);
        assert_eq!(pts.len(), 2 * frames);
        let bin = sr as f64 / n as f64;
        for pair in pts.points().chunks(2) {
            assert!((pair[0].f - 500.0).abs() < bin);
            assert!((pair[1].f - 1800.0).abs() < bin);
        }
    }
}
