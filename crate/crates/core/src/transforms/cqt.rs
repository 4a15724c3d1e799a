//! Constant-Q analysis computed bin by bin.
//!
//! Each bin has its own window length and hop, so the resulting points are
//! irregular in both time and frequency.

use std::f64::consts::PI;

use super::audio::AudioBuffer;
use super::stft::hann;
use crate::error::{Error, Result};
use crate::tfpoints::{TFPoint, TFPointSet};

pub const DEFAULT_Q_SCALE: f64 = 17.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqtConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub bins_per_octave: u32,
    /// Window length in periods of the bin frequency.
    pub q_scale: f64,
}

impl CqtConfig {
    pub fn new(f_min_hz: f64, f_max_hz: f64, bins_per_octave: u32) -> Self {
        Self { f_min_hz, f_max_hz, bins_per_octave, q_scale: DEFAULT_Q_SCALE }
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if !(self.f_min_hz > 0.0 && self.f_min_hz < self.f_max_hz) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < f_min < f_max, got {} and {}",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if self.f_max_hz > nyquist {
            return Err(Error::InvalidArgument(format!("f_max {} Hz is above Nyquist {nyquist} Hz", self.f_max_hz)));
        }
        if self.bins_per_octave == 0 {
            return Err(Error::InvalidArgument("bins per octave must be >= 1".into()));
        }
        if !(self.q_scale > 0.0 && self.q_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!("q_scale must be positive, got {}", self.q_scale)));
        }
        Ok(())
    }

    /// Geometrically spaced center frequencies `f_min * 2^(k/B)` up to `f_max`.
    pub fn frequencies(&self) -> Vec<f64> {
        let b = self.bins_per_octave as f64;
        let count = (b * (self.f_max_hz / self.f_min_hz).log2() + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.f_min_hz * (k as f64 / b).exp2()).collect()
    }

    /// Even window length for a bin at `freq`.
    pub fn window_len(&self, freq: f64, sample_rate_hz: u32) -> usize {
        let len = (self.q_scale * sample_rate_hz as f64 / freq).ceil() as usize;
        (len + len % 2).max(2)
    }

    pub fn tag(&self) -> String {
        format!("cqt:fmin={},fmax={},bpo={},q={}", self.f_min_hz, self.f_max_hz, self.bins_per_octave, self.q_scale)
    }
}

/// Per-bin windowed inner products with complex exponentials.
///
/// Magnitudes are normalized by half the window sum, so a sinusoid of
/// amplitude `a` centered on a bin yields `a`. Bins whose window is longer
/// than the audio produce no points. Points are emitted bin-major, then by
/// frame.
pub fn cqt_to_points(audio: &AudioBuffer, config: &CqtConfig) -> Result<TFPointSet> {
    config.validate(audio.sample_rate_hz)?;
    let sr = audio.sample_rate_hz as f64;
    let mut points = Vec::new();
    for freq in config.frequencies() {
        let len = config.window_len(freq, audio.sample_rate_hz);
        if len > audio.len() {
            continue;
        }
        let hop = len / 2;
        let window = hann(len);
        let gain = 2.0 / window.iter().sum::<f64>();
        let (kernel_re, kernel_im): (Vec<f64>, Vec<f64>) = window
            .iter()
            .enumerate()
            .map(|(n, w)| {
                let phase = 2.0 * PI * freq * n as f64 / sr;
                (w * gain * phase.cos(), -w * gain * phase.sin())
            })
            .unzip();
        let mut start = 0;
        while start + len <= audio.len() {
            let seg = &audio.samples[start..start + len];
            let (mut re, mut im) = (0.0, 0.0);
            for ((x, kr), ki) in seg.iter().zip(&kernel_re).zip(&kernel_im) {
                re += x * kr;
                im += x * ki;
            }
            let t = (start as f64 + len as f64 / 2.0) / sr;
            points.push(TFPoint::new(t, freq, re.hypot(im)));
            start += hop;
        }
    }
    TFPointSet::new(points, config.tag())
}
