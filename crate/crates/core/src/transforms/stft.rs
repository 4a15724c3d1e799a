//! Hann-windowed STFT and its weighted overlap-add inverse.
//!
//! Frames are not padded: frame `j` covers samples `[j*hop, j*hop + N)` and
//! its time coordinate is the window center `(j*hop + N/2) / sr`.

use std::f64::consts::PI;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::tfpoints::{TFPoint, TFPointSet};

/// Smallest accepted DFT size.
pub const MIN_WINDOW: usize = 16;

/// Overlap-add normalizer floor. Output samples whose summed squared window
/// falls below this are set to zero instead of being amplified.
const WOLA_FLOOR: f64 = 1e-3;

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Complex STFT coefficients, stored frame-major (`frame * num_bins + bin`).
#[derive(Debug, Clone, PartialEq)]
pub struct StftGrid {
    coeffs: Vec<Complex64>,
    num_frames: usize,
    pub window_size: usize,
    pub hop: usize,
    pub sample_rate_hz: u32,
    /// Length of the analysed signal, used to size the inverse.
    pub signal_len: usize,
}

impl StftGrid {
    /// Assembles a grid from frame-major coefficients.
    pub fn from_coeffs(
        coeffs: Vec<Complex64>,
        window_size: usize,
        hop: usize,
        sample_rate_hz: u32,
        signal_len: usize,
    ) -> Result<Self> {
        let num_bins = window_size / 2 + 1;
        if window_size == 0 || !window_size.is_multiple_of(2) || hop == 0 || hop > window_size {
            return Err(Error::InvalidArgument(format!("invalid grid geometry N={window_size}, hop={hop}")));
        }
        if !coeffs.len().is_multiple_of(num_bins) {
            return Err(Error::Shape(format!("{} coefficients is not a multiple of {num_bins} bins", coeffs.len())));
        }
        Ok(Self { num_frames: coeffs.len() / num_bins, coeffs, window_size, hop, sample_rate_hz, signal_len })
    }

    pub fn num_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.coeffs[frame * self.num_bins() + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        let nb = self.num_bins();
        &self.coeffs[frame * nb..(frame + 1) * nb]
    }

    /// Frequency of bin `k` in Hz.
    pub fn bin_freq(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate_hz as f64 / self.window_size as f64
    }

    /// Time of frame `j` (window center) in seconds.
    pub fn frame_time(&self, frame: usize) -> f64 {
        (frame * self.hop) as f64 / self.sample_rate_hz as f64
            + (self.window_size / 2) as f64 / self.sample_rate_hz as f64
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.num_bins()).map(|k| self.bin_freq(k)).collect()
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.num_frames).map(|j| self.frame_time(j)).collect()
    }

    /// Magnitudes, frame-major like the coefficients.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm()).collect()
    }

    /// Magnitudes arranged as `bins x frames`, row-major.
    pub fn magnitude_matrix(&self) -> Array2<f64> {
        let (nb, nf) = (self.num_bins(), self.num_frames);
        let mut m = Array2::zeros((nb, nf));
        for j in 0..nf {
            for k in 0..nb {
                m[(k, j)] = self.coeffs[j * nb + k].norm();
            }
        }
        m
    }

    /// Multiplies each coefficient by a real gain laid out frame-major.
    pub fn apply_gains(&self, gains: &[f64]) -> Result<StftGrid> {
        if gains.len() != self.coeffs.len() {
            return Err(Error::Shape(format!("{} gains for {} coefficients", gains.len(), self.coeffs.len())));
        }
        Ok(StftGrid { coeffs: self.coeffs.iter().zip(gains).map(|(c, g)| c * g).collect(), ..self.clone() })
    }

    pub fn tag(&self) -> String {
        format!("stft:N={},hop={}", self.window_size, self.hop)
    }
}

fn check_geometry(window_size: usize, hop: usize) -> Result<()> {
    if window_size < MIN_WINDOW || !window_size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("window size must be even and >= {MIN_WINDOW}, got {window_size}")));
    }
    if hop == 0 || hop > window_size || !window_size.is_multiple_of(hop) {
        return Err(Error::InvalidArgument(format!("hop {hop} must divide window size {window_size}")));
    }
    Ok(())
}

/// Number of frames produced for a signal of `len` samples.
pub fn frame_count(len: usize, window_size: usize, hop: usize) -> usize {
    if len < window_size {
        0
    } else {
        1 + (len - window_size) / hop
    }
}

pub fn stft(audio: &AudioBuffer, window_size: usize, hop: usize) -> Result<StftGrid> {
    check_geometry(window_size, hop)?;
    if audio.len() < window_size {
        return Err(Error::InvalidArgument(format!(
            "audio of {} samples is shorter than one window ({window_size})",
            audio.len()
        )));
    }
    let window = hann(window_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_size);
    let num_bins = window_size / 2 + 1;
    let num_frames = frame_count(audio.len(), window_size, hop);

    let mut coeffs = Vec::with_capacity(num_bins * num_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); window_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for j in 0..num_frames {
        let start = j * hop;
        for (n, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(audio.samples[start + n] * window[n], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        coeffs.extend_from_slice(&buf[..num_bins]);
    }
    StftGrid::from_coeffs(coeffs, window_size, hop, audio.sample_rate_hz, audio.len())
}

/// Weighted overlap-add inverse with squared-window normalization.
///
/// Requires `hop` to divide `N` with at least two-fold overlap.
pub fn istft(grid: &StftGrid) -> Result<AudioBuffer> {
    let (n, hop) = (grid.window_size, grid.hop);
    if n % hop != 0 || n / hop < 2 {
        return Err(Error::InvalidArgument(format!("hop {hop} does not satisfy overlap-add for window {n}")));
    }
    let window = hann(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let nb = grid.num_bins();
    let out_len = grid.signal_len.max(grid.num_frames.saturating_sub(1) * hop + n);
    let mut out = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let scale = 1.0 / n as f64;

    for j in 0..grid.num_frames {
        let frame = grid.frame(j);
        buf[..nb].copy_from_slice(frame);
        // DC and Nyquist bins of a real signal carry no imaginary part.
        buf[0].im = 0.0;
        buf[nb - 1].im = 0.0;
        for k in 1..nb - 1 {
            buf[n - k] = frame[k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = j * hop;
        for i in 0..n {
            out[start + i] += buf[i].re * scale * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    for (o, w) in out.iter_mut().zip(&norm) {
        *o = if *w >= WOLA_FLOOR { *o / w } else { 0.0 };
    }
    out.truncate(grid.signal_len);
    AudioBuffer::new(out, grid.sample_rate_hz)
}

/// One point per (frame, bin), frame-major then bin-major.
pub fn stft_to_points(grid: &StftGrid) -> TFPointSet {
    let freqs = grid.bin_freqs();
    let mut points = Vec::with_capacity(grid.coeffs.len());
    for j in 0..grid.num_frames {
        let t = grid.frame_time(j);
        for (k, c) in grid.frame(j).iter().enumerate() {
            points.push(TFPoint::new(t, freqs[k], c.norm()));
        }
    }
    TFPointSet::new(points, grid.tag()).expect("stft points are valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, sr: u32, len: usize, amp: f64) -> AudioBuffer {
        let s = (0..len).map(|n| amp * (2.0 * PI * freq * n as f64 / sr as f64).sin()).collect();
        AudioBuffer::new(s, sr).unwrap()
    }

    #[test]
    fn bin_aligned_sine_peaks_at_its_bin() {
        let sr = 8000;
        let n = 256;
        let audio = sine(10.0 * sr as f64 / n as f64, sr, 2048, 1.0);
        let grid = stft(&audio, n, 64).unwrap();
        for j in 0..grid.num_frames() {
            let frame = grid.frame(j);
            let argmax = (0..frame.len()).max_by(|&a, &b| frame[a].norm().total_cmp(&frame[b].norm())).unwrap();
            assert_eq!(argmax, 10);
        }
    }

    #[test]
    fn zero_audio_gives_zero_grid() {
        let audio = AudioBuffer::new(vec![0.0; 1000], 8000).unwrap();
        let grid = stft(&audio, 256, 64).unwrap();
        assert!(grid.coeffs().iter().all(|c| c.norm() == 0.0));
        let back = istft(&grid).unwrap();
        assert!(back.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn frame_count_by_enumeration() {
        // Enumerate frame starts directly: j*hop + N <= len.
        let (len, n, hop) = (1024, 256, 64);
        let enumerated = (0..).take_while(|j| j * hop + n <= len).count();
        assert_eq!(enumerated, 13);
        let audio = AudioBuffer::new(vec![0.0; len], 16000).unwrap();
        assert_eq!(stft(&audio, n, hop).unwrap().num_frames(), enumerated);
    }

    #[test]
    fn geometry_errors() {
        let audio = AudioBuffer::new(vec![0.0; 100], 8000).unwrap();
        assert!(stft(&audio, 256, 64).is_err());
        let audio = AudioBuffer::new(vec![0.0; 1000], 8000).unwrap();
        assert!(stft(&audio, 255, 64).is_err());
        assert!(stft(&audio, 8, 4).is_err());
        assert!(stft(&audio, 256, 100).is_err());
        let grid = stft(&audio, 256, 256).unwrap();
        assert!(istft(&grid).is_err());
    }

    #[test]
    fn points_layout() {
        let audio = sine(300.0, 8000, 600, 0.5);
        let grid = stft(&audio, 16, 8).unwrap();
        let pts = stft_to_points(&grid);
        assert_eq!(pts.len(), grid.num_bins() * grid.num_frames());
        let p0 = pts.points()[0];
        assert_eq!(p0.f, 0.0);
        assert_eq!(p0.t, 8.0 / 8000.0);
        let mags = grid.magnitudes();
        assert!(pts.iter().zip(&mags).all(|(p, m)| p.m == *m));
        assert_eq!(pts.source_tag, "stft:N=16,hop=8");
    }

    #[test]
    fn tiny_grid_point_count() {
        // N=4 is below the analysis minimum, but grids can be built directly.
        let coeffs = vec![Complex64::new(1.0, 0.0); 6];
        let grid = StftGrid::from_coeffs(coeffs, 4, 2, 8, 8).unwrap();
        assert_eq!(grid.num_bins(), 3);
        assert_eq!(stft_to_points(&grid).len(), 6);
    }
}
