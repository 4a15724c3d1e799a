use std::f64::consts::TAU;

use innmf::experiments::{full_batch, pearson};
use innmf::factorize::{innmf_fit, ActivationKind, Architecture, FitOptions, SpectralDictionary};
use innmf::separate::{
    bss_metrics, fit_mixture_activations, nmf_dictionary, nmf_separation, padded_stft, run_separation, SeparationJob,
};
use innmf::transforms::AudioBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SR: u32 = 8000;

/// Harmonic tone with a slow amplitude swell so activations vary in time,
/// over a little broadband noise that overlaps the other source.
fn tone(partials: &[(f64, f64)], swell_hz: f64, phase: f64) -> AudioBuffer {
    let n = SR as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(swell_hz.to_bits());
    let s = (0..n)
        .map(|i| {
            let t = i as f64 / SR as f64;
            let env = 0.6 + 0.4 * (TAU * swell_hz * t + phase).sin();
            env * partials.iter().map(|(f, a)| a * (TAU * f * t).sin()).sum::<f64>() + rng.random_range(-0.03..0.03)
        })
        .collect();
    AudioBuffer::new(s, SR).unwrap()
}

fn low() -> AudioBuffer {
    tone(&[(250.0, 0.6), (500.0, 0.3), (750.0, 0.15)], 1.5, 0.0)
}

fn high() -> AudioBuffer {
    tone(&[(1300.0, 0.5), (2600.0, 0.25)], 2.3, 1.0)
}

fn options() -> FitOptions {
    let arch = Architecture { encoding_freqs: 6, hidden: vec![32, 32], omega0: 30.0 };
    FitOptions { activations: ActivationKind::Table, spectral_arch: arch.clone(), activation_arch: arch }
}

fn dictionary(audio: &AudioBuffer, seed: u64) -> SpectralDictionary {
    let (_, pts) = padded_stft(audio, 256, 64).unwrap();
    let (model, _) = innmf_fit(&pts, 2, audio.nyquist_hz(), &full_batch(1e-2, 400, seed), &options()).unwrap();
    model.dictionary().unwrap()
}

fn sum(a: &AudioBuffer, b: &AudioBuffer) -> AudioBuffer {
    AudioBuffer::new(a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect(), a.sample_rate_hz).unwrap()
}

fn job(mixture: AudioBuffer, dictionaries: [SpectralDictionary; 2]) -> SeparationJob {
    SeparationJob {
        mixture,
        dictionaries,
        window_size: 256,
        hop: 64,
        config: full_batch(1e-2, 400, 9),
        options: options(),
    }
}

#[test]
fn orthogonal_noise_at_one_tenth_gives_20_db() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 4000;
    let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    // Gram-Schmidt a noise vector against both references.
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut noise: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y_perp: Vec<f64> = {
        let c = dot(&y, &r) / dot(&r, &r);
        y.iter().zip(&r).map(|(y, r)| y - c * r).collect()
    };
    for basis in [&r, &y_perp] {
        let c = dot(&noise, basis) / dot(basis, basis);
        noise.iter_mut().zip(basis.iter()).for_each(|(v, b)| *v -= c * b);
    }
    let scale = (dot(&r, &r) / dot(&noise, &noise)).sqrt();
    let est: Vec<f64> = r.iter().zip(&noise).map(|(r, v)| r + 0.1 * scale * v).collect();
    let buf = |v: Vec<f64>| AudioBuffer::new(v, SR).unwrap();
    let (est, r, y) = (buf(est), buf(r), buf(y));
    let m = bss_metrics(&est, &r, &y).unwrap();
    assert!((m.sdr_db - 20.0).abs() < 0.5, "{m:?}");
    let clean = bss_metrics(&r, &r, &y).unwrap();
    assert!(clean.sdr_db >= m.sdr_db);
}

#[test]
fn lone_source_gets_the_energy() {
    let dicts = [dictionary(&low(), 1), dictionary(&high(), 2)];
    let (_, pts) = padded_stft(&low(), 256, 64).unwrap();
    let (model, report) = fit_mixture_activations(&pts, &dicts, &full_batch(1e-2, 400, 3), &options()).unwrap();
    assert!(report.loss_curve.iter().all(|v| v.is_finite()));
    assert!(report.final_loss < report.loss_curve[0]);
    let own: f64 = model.predict_points_partial(&pts, 0..2).unwrap().iter().sum();
    let other: f64 = model.predict_points_partial(&pts, 2..4).unwrap().iter().sum();
    assert!(own / (own + other) > 0.9, "{own} vs {other}");
}

#[test]
fn two_tones_separate_cleanly_and_match_matrix_nmf() {
    let (a, b) = (low(), high());
    let dicts = [dictionary(&a, 1), dictionary(&b, 2)];
    let frozen = dicts.clone();
    let mix = sum(&a, &b);
    let ours = run_separation(&job(mix.clone(), dicts.clone()), Some([&a, &b])).unwrap();
    assert_eq!(dicts, frozen);
    let m = ours.metrics.unwrap();
    assert!(m[0].sdr_db > 10.0 && m[1].sdr_db > 10.0, "{m:?}");

    // Masks partition unity, and estimates add back to the mixture.
    for (x, y) in ours.masks[0].iter().zip(ours.masks[1].iter()) {
        assert!((x + y - 1.0).abs() < 1e-9 && (0.0..=1.0).contains(x) && (0.0..=1.0).contains(y));
    }
    for i in 0..mix.len() {
        assert!((ours.estimates[0].samples[i] + ours.estimates[1].samples[i] - mix.samples[i]).abs() < 1e-9);
    }

    // Swapping the dictionaries swaps the outputs.
    let swapped = run_separation(&job(mix.clone(), [dicts[1].clone(), dicts[0].clone()]), Some([&b, &a])).unwrap();
    assert!(pearson(&swapped.estimates[0].samples, &ours.estimates[1].samples) > 0.999);
    assert!(pearson(&swapped.estimates[1].samples, &ours.estimates[0].samples) > 0.999);

    let w1 = nmf_dictionary(&a, 2, 256, 64, 500, 4).unwrap();
    let w2 = nmf_dictionary(&b, 2, 256, 64, 500, 5).unwrap();
    let theirs = nmf_separation(&mix, [&w1, &w2], 256, 64, 500, 6, Some([&a, &b])).unwrap().metrics.unwrap();
    for s in 0..2 {
        assert!(theirs[s].sdr_db > 10.0, "{theirs:?}");
        assert!((theirs[s].sdr_db - m[s].sdr_db).abs() <= 1.0, "source {s}: {theirs:?} vs {m:?}");
    }
}
