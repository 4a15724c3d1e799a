//! Deterministic synthetic audio: harmonic notes and formant-shaped
//! "voices" standing in for recorded material.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::transforms::AudioBuffer;

pub const SYNTH_SAMPLE_RATE: u32 = 8000;

/// A sustained harmonic note with linear attack/release ramps.
#[derive(Debug, Clone, PartialEq)]
pub struct Note {
    pub f0_hz: f64,
    pub onset_secs: f64,
    pub offset_secs: f64,
    /// Amplitude of harmonic `h + 1`.
    pub harmonics: Vec<f64>,
    pub vibrato_hz: f64,
    /// Relative frequency deviation, e.g. `0.005` for ±0.5 %.
    pub vibrato_depth: f64,
    pub ramp_secs: f64,
}

impl Note {
    pub fn plain(f0_hz: f64, onset_secs: f64, offset_secs: f64, harmonics: Vec<f64>) -> Self {
        Self { f0_hz, onset_secs, offset_secs, harmonics, vibrato_hz: 0.0, vibrato_depth: 0.0, ramp_secs: 0.01 }
    }

    fn envelope(&self, t: f64) -> f64 {
        if t < self.onset_secs || t >= self.offset_secs {
            return 0.0;
        }
        let r = self.ramp_secs.max(1e-6);
        ((t - self.onset_secs) / r).min((self.offset_secs - t) / r).min(1.0)
    }
}

/// Indicator of `[on, off)`.
pub fn gate(t: f64, on: f64, off: f64) -> f64 {
    if t >= on && t < off {
        1.0
    } else {
        0.0
    }
}

/// Sum of the notes, sampled at `sample_rate_hz` for `duration_secs`.
/// Harmonics at or above Nyquist are dropped.
pub fn render_notes(notes: &[Note], sample_rate_hz: u32, duration_secs: f64) -> Vec<f64> {
    let sr = sample_rate_hz as f64;
    let n = (duration_secs * sr).round() as usize;
    let mut out = vec![0.0; n];
    for note in notes {
        let mut phase = 0.0f64;
        for (i, o) in out.iter_mut().enumerate() {
            let t = i as f64 / sr;
            let env = note.envelope(t);
            let f0 = note.f0_hz * (1.0 + note.vibrato_depth * (TAU * note.vibrato_hz * t).sin());
            if env > 0.0 {
                let mut s = 0.0;
                for (h, a) in note.harmonics.iter().enumerate() {
                    if (h + 1) as f64 * f0 >= sr / 2.0 {
                        break;
                    }
                    s += a * ((h + 1) as f64 * phase).sin();
                }
                *o += env * s;
            }
            phase = (phase + TAU * f0 / sr) % (TAU * 64.0 * 27.0 * 25.0);
        }
    }
    out
}

fn add_noise(samples: &mut [f64], std_dev: f64, rng: &mut ChaCha8Rng) {
    if std_dev <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std_dev).expect("finite std dev");
    for s in samples {
        *s += normal.sample(rng);
    }
}

/// A few overlapping notes with vibrato and individual timbres over a
/// light noise floor.
pub fn harmonic_signal(seed: u64, sample_rate_hz: u32, duration_secs: f64) -> Result<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pitches = [146.83, 174.61, 196.0, 220.0, 261.63, 293.66];
    let step = duration_secs / 6.0;
    let mut notes = Vec::new();
    for (j, &base) in pitches.iter().enumerate() {
        let onset = j as f64 * step * 0.95;
        let len = step * rng.random_range(1.2..1.8);
        let harmonics = (1..=12).map(|h| rng.random_range(0.3..1.0) / h as f64).collect();
        notes.push(Note {
            f0_hz: base,
            onset_secs: onset,
            offset_secs: (onset + len).min(duration_secs),
            harmonics,
            vibrato_hz: rng.random_range(4.5..6.0),
            vibrato_depth: 0.004,
            ramp_secs: 0.03,
        });
    }
    let mut samples = render_notes(&notes, sample_rate_hz, duration_secs);
    add_noise(&mut samples, 2e-3, &mut rng);
    AudioBuffer::new(samples, sample_rate_hz)
}

/// Two notes whose intervals partly overlap. Returns the audio and each
/// note's `(onset, offset)`.
pub fn two_note_signal(sample_rate_hz: u32) -> Result<(AudioBuffer, [(f64, f64); 2])> {
    let gates = [(0.1, 1.6), (1.3, 2.9)];
    let a: Vec<f64> = (1..=8).map(|h| 0.8f64.powi(h - 1)).collect();
    let b: Vec<f64> = (1..=8).map(|h| 0.7f64.powi(h - 1)).collect();
    let notes = [
        Note::plain(220.0, gates[0].0, gates[0].1, a),
        Note::plain(311.13, gates[1].0, gates[1].1, b.iter().map(|x| 0.8 * x).collect()),
    ];
    let mut samples = render_notes(&notes, sample_rate_hz, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    add_noise(&mut samples, 1e-3, &mut rng);
    Ok((AudioBuffer::new(samples, sample_rate_hz)?, gates))
}

/// One formant resonance: center and half-width in Hz, and gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Formant {
    pub center_hz: f64,
    pub width_hz: f64,
    pub gain: f64,
}

/// A synthetic talker: a pitch range and a small vowel inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct Speaker {
    pub f0_range_hz: (f64, f64),
    pub vowels: Vec<[Formant; 3]>,
    /// Standard deviation of the breath noise relative to voiced amplitude.
    pub breath: f64,
}

impl Speaker {
    /// A random talker. `high` selects the upper pitch and formant range.
    pub fn random(seed: u64, high: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f0_lo, stretch) =
            if high { (rng.random_range(185.0..215.0), 1.2) } else { (rng.random_range(95.0..115.0), 1.0) };
        let base: [[f64; 3]; 4] =
            [[700.0, 1200.0, 2500.0], [400.0, 2000.0, 2700.0], [300.0, 850.0, 2300.0], [550.0, 1700.0, 2450.0]];
        let vowels = base
            .iter()
            .map(|fs| {
                let mut v = [Formant { center_hz: 0.0, width_hz: 0.0, gain: 0.0 }; 3];
                for (j, &f) in fs.iter().enumerate() {
                    v[j] = Formant {
                        center_hz: f * stretch * rng.random_range(0.92..1.08),
                        width_hz: rng.random_range(60.0..120.0) * (1.0 + j as f64 * 0.5),
                        gain: [1.0, 0.6, 0.3][j] * rng.random_range(0.8..1.2),
                    };
                }
                v
            })
            .collect();
        Self { f0_range_hz: (f0_lo, f0_lo * rng.random_range(1.3..1.45)), vowels, breath: 0.02 }
    }

    fn envelope(vowel: &[Formant; 3], f: f64) -> f64 {
        vowel.iter().map(|fm| fm.gain / (1.0 + ((f - fm.center_hz) / fm.width_hz).powi(2))).sum::<f64>() + 0.01
    }

    /// A babble of syllables with gliding pitch, separated by short pauses.
    pub fn utterance(&self, seed: u64, sample_rate_hz: u32, duration_secs: f64) -> Result<AudioBuffer> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sr = sample_rate_hz as f64;
        let n = (duration_secs * sr).round() as usize;
        let mut out = vec![0.0; n];
        let mut start = (rng.random_range(0.0..0.05) * sr) as usize;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        while start < n {
            let len = ((rng.random_range(0.09..0.22) * sr) as usize).min(n - start);
            let vowel = &self.vowels[rng.random_range(0..self.vowels.len())];
            let (lo, hi) = self.f0_range_hz;
            let f_a = rng.random_range(lo..hi);
            let f_b = (f_a * rng.random_range(0.85..1.15)).clamp(lo, hi);
            let loud = rng.random_range(0.5..1.0);
            let mut phase = 0.0f64;
            for i in 0..len {
                let x = i as f64 / len as f64;
                let f0 = f_a + (f_b - f_a) * x;
                let env = loud * (std::f64::consts::PI * x).sin();
                let mut s = 0.0;
                let mut h = 1;
                while h as f64 * f0 < sr / 2.0 {
                    s += Self::envelope(vowel, h as f64 * f0) / (h as f64).sqrt() * (h as f64 * phase).sin();
                    h += 1;
                }
                s += self.breath * normal.sample(&mut rng);
                out[start + i] += env * s;
                phase = (phase + TAU * f0 / sr) % (TAU * 1e6);
            }
            start += len + (rng.random_range(0.01..0.06) * sr) as usize;
        }
        AudioBuffer::new(out, sample_rate_hz)
    }
}
