use innmf::tfpoints::{
    compute_normalization, load_points, read_points, save_points, write_points, TFPoint, TFPointSet,
};
use innmf::transforms::{istft, stft, stft_to_points, AudioBuffer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point_set(seed: u64, n: usize) -> TFPointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| TFPoint::new(rng.random_range(0.0..3.0), rng.random_range(0.0..8000.0), rng.random_range(0.0..50.0)))
        .collect();
    TFPointSet::new(pts, "random").unwrap()
}

fn to_bytes(points: &TFPointSet) -> Vec<u8> {
    let mut out = Vec::new();
    write_points(points, &mut out).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn second_save_is_byte_identical(
        raw in prop::collection::vec((0.0f64..1e3, 0.0f64..2e4, 0.0f64..1e6), 1..60)
    ) {
        let pts = TFPointSet::new(raw.iter().map(|&(t, f, m)| TFPoint::new(t, f, m)).collect(), "p").unwrap();
        let first = to_bytes(&pts);
        let reloaded = read_points(first.as_slice(), "p").unwrap();
        prop_assert_eq!(first, to_bytes(&reloaded));
    }

    #[test]
    fn normalized_coordinates_are_in_unit_range(seed in 0u64..1000, n in 1usize..200) {
        let pts = point_set(seed, n);
        let norm = compute_normalization(&pts, 8000.0).unwrap();
        for p in pts.iter() {
            let (t, f) = (norm.normalize_t(p.t), norm.normalize_f(p.f));
            prop_assert!((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&f));
        }
        let mean = pts.iter().map(|p| p.m / norm.m_scale).sum::<f64>() / n as f64;
        if pts.mean_magnitude() > 0.0 {
            prop_assert!((mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_point_per_bin_and_frame(len in 300usize..3000, log_n in 4u32..9, hop_div in prop::sample::select(vec![2usize, 4])) {
        let n = 1usize << log_n;
        prop_assume!(len >= n);
        let audio = AudioBuffer::new((0..len).map(|i| (i as f64 * 0.37).sin()).collect(), 8000).unwrap();
        let grid = stft(&audio, n, n / hop_div).unwrap();
        prop_assert_eq!(stft_to_points(&grid).len(), (n / 2 + 1) * grid.num_frames());
    }
}

#[test]
fn file_round_trip_keeps_nine_digits() {
    let dir = tempfile::tempdir().unwrap();
    let pts = point_set(4, 100);
    let path = dir.path().join("p.csv");
    save_points(&pts, &path).unwrap();
    let back = load_points(&path).unwrap();
    assert_eq!(back.len(), 100);
    for (a, b) in pts.iter().zip(back.iter()) {
        for (x, y) in [(a.t, b.t), (a.f, b.f), (a.m, b.m)] {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(f64::MIN_POSITIVE), "{x} vs {y}");
        }
    }
}

#[test]
fn stft_energy_scales_linearly() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base: Vec<f64> = (0..4000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let energy = |scale: f64| {
        let audio = AudioBuffer::new(base.iter().map(|x| x * scale).collect(), 8000).unwrap();
        let spec = stft(&audio, 512, 128).unwrap().magnitudes().iter().map(|m| m * m).sum::<f64>();
        let time = audio.samples.iter().map(|x| x * x).sum::<f64>();
        spec / time
    };
    let reference = energy(1.0);
    for s in [1e-3, 0.5, 7.0, 1e4] {
        assert!((energy(s) / reference - 1.0).abs() < 1e-9);
    }
}

#[test]
fn chirp_round_trip_exceeds_100_db() {
    let sr = 16000.0;
    let samples: Vec<f64> = (0..16000)
        .map(|i| {
            let t = i as f64 / sr;
            let env = 0.5 + 0.5 * (std::f64::consts::TAU * 3.0 * t).sin();
            env * (std::f64::consts::TAU * (150.0 * t + 900.0 * t * t)).sin()
        })
        .collect();
    let audio = AudioBuffer::new(samples, 16000).unwrap();
    for n in [256, 1024, 2000] {
        let back = istft(&stft(&audio, n, n / 4).unwrap()).unwrap();
        let interior = n..audio.len() - n;
        let signal: f64 = interior.clone().map(|i| audio.samples[i].powi(2)).sum();
        let noise: f64 = interior.map(|i| (audio.samples[i] - back.samples[i]).powi(2)).sum();
        assert!(10.0 * (signal / noise).log10() > 100.0, "N={n}");
    }
}
