//! Synthetic data and the reproducible comparison experiments.
//!
//! Every experiment is a pure function of its config (seeds included) and
//! can write its results as CSV files for plotting or comparison.

pub mod synth;

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::factorize::{
    derive_seed, innmf_fit, kl_divergence, nmf_multiplicative, refit_activations, save_loss_curve, ActivationKind,
    Architecture, FitOptions, Optimizer, TrainConfig,
};
use crate::separate::{
    mix_at_0db, nmf_dictionary, nmf_separation, padded_stft, run_separation, BssMetrics, SeparationJob,
};
use crate::transforms::{stft, stft_to_points, AudioBuffer, TransformSpec};
use synth::{gate, two_note_signal, Speaker, SYNTH_SAMPLE_RATE};

/// Full-batch Adam, the setting all experiments train with.
pub fn full_batch(learning_rate: f64, epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate,
        epochs,
        batch_size: usize::MAX,
        seed,
        optimizer: Optimizer::ADAM,
        ..TrainConfig::default()
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += (x - ma) * (y - mb);
        aa += (x - ma) * (x - ma);
        bb += (y - mb) * (y - mb);
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa * bb).sqrt()
}

/// Writes a header and rows of pre-formatted fields.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Mean generalized KL of a dense factorization, in units of the matrix mean
/// (the same units iN-NMF reports after normalization).
pub fn normalized_matrix_kl(v: &Array2<f64>, approx: &Array2<f64>) -> f64 {
    let scale = v.mean().unwrap_or(1.0);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    kl_divergence(v, approx) / (scale * v.len() as f64)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

// ---------------------------------------------------------------------------
// Reconstruction KL across DFT sizes

#[derive(Debug, Clone)]
pub struct SizeGeneralizationConfig {
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub duration_secs: f64,
    pub k: usize,
    pub train_window: usize,
    /// Sizes at which activations are refit; the training size may be included.
    pub test_windows: Vec<usize>,
    pub train: TrainConfig,
    pub refit: TrainConfig,
    pub nmf_iterations: usize,
    pub spectral_arch: Architecture,
}

impl Default for SizeGeneralizationConfig {
    fn default() -> Self {
        Self {
            seed: 11,
            sample_rate_hz: 4000,
            duration_secs: 3.0,
            k: 8,
            train_window: 512,
            test_windows: vec![256, 384, 512, 640],
            train: full_batch(3e-3, 5000, 11),
            refit: full_batch(1e-2, 3000, 11),
            nmf_iterations: 3000,
            spectral_arch: Architecture { encoding_freqs: 7, hidden: vec![64, 64], omega0: 30.0 },
        }
    }
}

impl SizeGeneralizationConfig {
    /// The test signal: a gliding-pitch harmonic voice over breath noise.
    pub fn signal(&self) -> Result<AudioBuffer> {
        Speaker::random(self.seed, false).utterance(
            derive_seed(self.seed, 20, 0),
            self.sample_rate_hz,
            self.duration_secs,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub window_size: usize,
    pub innmf_kl: f64,
    pub nmf_kl: f64,
}

impl SizeRow {
    pub fn ratio(&self) -> f64 {
        self.innmf_kl / self.nmf_kl
    }
}

#[derive(Debug, Clone)]
pub struct SizeGeneralizationResult {
    pub train_window: usize,
    pub rows: Vec<SizeRow>,
    pub train_curve: Vec<f64>,
    pub refit_curves: Vec<Vec<f64>>,
    /// Normalized mean KL per multiplicative-update iteration.
    pub nmf_curves: Vec<Vec<f64>>,
}

impl SizeGeneralizationResult {
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_table(
            &dir.join("kl_by_size.csv"),
            &["window_size", "innmf_kl", "nmf_kl", "ratio"],
            self.rows.iter().map(|r| {
                vec![r.window_size.to_string(), r.innmf_kl.to_string(), r.nmf_kl.to_string(), r.ratio().to_string()]
            }),
        )?;
        save_loss_curve(&self.train_curve, dir.join(format!("innmf_train_{}.csv", self.train_window)))?;
        for (row, (refit, nmf)) in self.rows.iter().zip(self.refit_curves.iter().zip(&self.nmf_curves)) {
            save_loss_curve(refit, dir.join(format!("innmf_refit_{}.csv", row.window_size)))?;
            save_loss_curve(nmf, dir.join(format!("nmf_{}.csv", row.window_size)))?;
        }
        Ok(())
    }
}

/// Trains an iN-NMF dictionary at one DFT size, refits activations at every
/// test size, and compares against matrix NMF trained natively at each size.
pub fn size_generalization(cfg: &SizeGeneralizationConfig) -> Result<SizeGeneralizationResult> {
    let audio = cfg.signal()?;
    let nyquist = audio.nyquist_hz();
    let options = FitOptions {
        activations: ActivationKind::Table,
        spectral_arch: cfg.spectral_arch.clone(),
        activation_arch: cfg.spectral_arch.clone(),
    };
    let train_pts = stft_to_points(&stft(&audio, cfg.train_window, cfg.train_window / 4)?);
    let (model, report) = innmf_fit(&train_pts, cfg.k, nyquist, &cfg.train, &options)?;
    let dict = model.dictionary()?;

    let mut rows = Vec::new();
    let mut refit_curves = Vec::new();
    let mut nmf_curves = Vec::new();
    for &n in &cfg.test_windows {
        let grid = stft(&audio, n, n / 4)?;
        let (_, refit) = refit_activations(&stft_to_points(&grid), &dict, &cfg.refit, &options)?;
        let v = grid.magnitude_matrix();
        let (nmf, curve) = nmf_multiplicative(&v, cfg.k, cfg.nmf_iterations, cfg.seed)?;
        let unit = v.mean().unwrap_or(1.0) * v.len() as f64;
        rows.push(SizeRow {
            window_size: n,
            innmf_kl: refit.final_loss,
            nmf_kl: normalized_matrix_kl(&v, &nmf.reconstruct()),
        });
        refit_curves.push(refit.loss_curve);
        nmf_curves.push(curve.into_iter().map(|c| c / unit).collect());
    }
    Ok(SizeGeneralizationResult {
        train_window: cfg.train_window,
        rows,
        train_curve: report.loss_curve,
        refit_curves,
        nmf_curves,
    })
}

// ---------------------------------------------------------------------------
// Factorization of a hybrid representation

#[derive(Debug, Clone)]
pub struct HybridConfig {
    pub spec: String,
    pub k: usize,
    pub train: TrainConfig,
    pub spectral_arch: Architecture,
    pub activation_arch: Architecture,
    /// Spacing of the time grid on which activations are compared with gates.
    pub sample_step_secs: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        let arch = Architecture { encoding_freqs: 6, hidden: vec![64, 64], omega0: 30.0 };
        Self {
            spec: "stft:256,64@0-1;sin:512,128,-50@1-2;cqt:110,3520,12@2-3".into(),
            k: 2,
            train: full_batch(3e-3, 1000, 1),
            spectral_arch: arch.clone(),
            activation_arch: arch,
            sample_step_secs: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HybridResult {
    pub times: Vec<f64>,
    /// Activations sampled at `times`, `n x K`, columns permuted to match notes.
    pub activations: Array2<f64>,
    /// Ground-truth note gates, `n x 2`.
    pub gates: Array2<f64>,
    /// `correlations[j]`: activation matched to note `j` vs that note's gate.
    pub correlations: Vec<f64>,
    /// `permutation[j]`: learned component matched to note `j`.
    pub permutation: Vec<usize>,
    pub loss_curve: Vec<f64>,
    pub num_points: usize,
}

impl HybridResult {
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_table(
            &dir.join("hybrid_activations.csv"),
            &["t", "h1", "h2", "gate1", "gate2"],
            self.times.iter().enumerate().map(|(i, t)| {
                vec![
                    t.to_string(),
                    self.activations[(i, 0)].to_string(),
                    self.activations[(i, 1)].to_string(),
                    self.gates[(i, 0)].to_string(),
                    self.gates[(i, 1)].to_string(),
                ]
            }),
        )?;
        write_table(
            &dir.join("hybrid_correlation.csv"),
            &["note", "component", "correlation"],
            self.correlations
                .iter()
                .enumerate()
                .map(|(j, c)| vec![(j + 1).to_string(), (self.permutation[j] + 1).to_string(), c.to_string()]),
        )?;
        save_loss_curve(&self.loss_curve, dir.join("hybrid_loss_curve.csv"))
    }
}

/// Fits K = 2 to two notes seen through three different transforms in
/// consecutive time segments, then correlates the activation functions
/// with the notes' gates.
pub fn hybrid_notes(cfg: &HybridConfig) -> Result<HybridResult> {
    if cfg.k != 2 {
        return Err(Error::InvalidArgument("the two-note experiment needs K = 2".into()));
    }
    let (audio, note_gates) = two_note_signal(SYNTH_SAMPLE_RATE)?;
    let spec: TransformSpec = cfg.spec.parse()?;
    let points = spec.points(&audio)?;
    let options = FitOptions {
        activations: ActivationKind::Functions,
        spectral_arch: cfg.spectral_arch.clone(),
        activation_arch: cfg.activation_arch.clone(),
    };
    let (model, report) = innmf_fit(&points, cfg.k, audio.nyquist_hz(), &cfg.train, &options)?;

    let n = (audio.duration_secs() / cfg.sample_step_secs).floor() as usize;
    let times: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * cfg.sample_step_secs).collect();
    let h = model.sample_activations(&times)?;
    let gates = Array2::from_shape_fn((n, 2), |(i, j)| gate(times[i], note_gates[j].0, note_gates[j].1));
    let corr = |c: usize, j: usize| pearson(&h.column(c).to_vec(), &gates.column(j).to_vec());
    let straight = corr(0, 0) + corr(1, 1);
    let swapped = corr(1, 0) + corr(0, 1);
    let permutation = if straight >= swapped { vec![0, 1] } else { vec![1, 0] };
    let correlations = (0..2).map(|j| corr(permutation[j], j)).collect();
    let activations = Array2::from_shape_fn((n, 2), |(i, j)| h[(i, permutation[j])]);
    Ok(HybridResult {
        times,
        activations,
        gates,
        correlations,
        permutation,
        loss_curve: report.loss_curve,
        num_points: points.len(),
    })
}

// ---------------------------------------------------------------------------
// Dictionaries applied across representations

#[derive(Debug, Clone)]
pub struct CrossConfig {
    pub representations: Vec<String>,
    pub k: usize,
    pub train: TrainConfig,
    pub refit: TrainConfig,
    pub spectral_arch: Architecture,
    pub activation_arch: Architecture,
}

impl Default for CrossConfig {
    fn default() -> Self {
        let arch = Architecture { encoding_freqs: 6, hidden: vec![64, 64], omega0: 30.0 };
        Self {
            representations: vec!["stft:256,64".into(), "stft:1024,256".into(), "cqt:110,3520,12".into()],
            k: 2,
            train: full_batch(3e-3, 1000, 2),
            refit: full_batch(3e-3, 1000, 3),
            spectral_arch: arch.clone(),
            activation_arch: arch,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrossResult {
    pub representations: Vec<String>,
    /// `kl[d][r]`: dictionary trained on `d`, activations refit on `r`.
    pub kl: Vec<Vec<f64>>,
}

impl CrossResult {
    /// Own-representation KL and mean KL on the other representations.
    pub fn diagonal_vs_rest(&self, d: usize) -> (f64, f64) {
        let others: Vec<f64> = (0..self.kl.len()).filter(|&r| r != d).map(|r| self.kl[d][r]).collect();
        (self.kl[d][d], others.iter().sum::<f64>() / others.len() as f64)
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        let mut rows = Vec::new();
        for (d, name_d) in self.representations.iter().enumerate() {
            for (r, name_r) in self.representations.iter().enumerate() {
                rows.push(vec![name_d.clone(), name_r.clone(), self.kl[d][r].to_string()]);
            }
        }
        write_table(&dir.join("cross_kl.csv"), &["dictionary", "test", "mean_kl"], rows)
    }
}

/// Trains one model per representation of the two-note signal and refits
/// activations with each model's dictionary on every representation.
pub fn cross_representation(cfg: &CrossConfig) -> Result<CrossResult> {
    let (audio, _) = two_note_signal(SYNTH_SAMPLE_RATE)?;
    let options = FitOptions {
        activations: ActivationKind::Functions,
        spectral_arch: cfg.spectral_arch.clone(),
        activation_arch: cfg.activation_arch.clone(),
    };
    let point_sets =
        cfg.representations.iter().map(|r| r.parse::<TransformSpec>()?.points(&audio)).collect::<Result<Vec<_>>>()?;
    let mut kl = Vec::new();
    for train in &point_sets {
        let (model, _) = innmf_fit(train, cfg.k, audio.nyquist_hz(), &cfg.train, &options)?;
        let dict = model.dictionary()?;
        let row = point_sets
            .iter()
            .map(|test| Ok(refit_activations(test, &dict, &cfg.refit, &options)?.1.final_loss))
            .collect::<Result<Vec<f64>>>()?;
        kl.push(row);
    }
    Ok(CrossResult { representations: cfg.representations.clone(), kl })
}

// ---------------------------------------------------------------------------
// Separation with one dictionary size vs per-size matrix NMF

#[derive(Debug, Clone)]
pub struct ParityConfig {
    pub seed: u64,
    pub mixtures: usize,
    pub sample_rate_hz: u32,
    pub file_secs: f64,
    pub files_per_speaker: usize,
    pub train_files: usize,
    pub k: usize,
    pub dictionary_window: usize,
    pub test_windows: Vec<usize>,
    pub dictionary_train: TrainConfig,
    pub mixture_fit: TrainConfig,
    pub spectral_arch: Architecture,
    pub nmf_dictionary_iterations: usize,
    pub nmf_mixture_iterations: usize,
}

impl Default for ParityConfig {
    fn default() -> Self {
        Self {
            seed: 5,
            mixtures: 10,
            sample_rate_hz: 5000,
            file_secs: 0.5,
            files_per_speaker: 10,
            train_files: 8,
            k: 8,
            dictionary_window: 512,
            test_windows: vec![256, 512, 1024],
            dictionary_train: full_batch(3e-3, 1500, 5),
            mixture_fit: full_batch(1e-2, 1000, 6),
            spectral_arch: Architecture { encoding_freqs: 7, hidden: vec![64, 64], omega0: 30.0 },
            nmf_dictionary_iterations: 1000,
            nmf_mixture_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityRow {
    pub mixture: usize,
    pub method: String,
    pub window_size: usize,
    /// 1 or 2.
    pub source: usize,
    pub metrics: BssMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParitySummary {
    pub window_size: usize,
    pub source: usize,
    pub mean_sdr_innmf: f64,
    pub mean_sdr_nmf: f64,
    /// Mean over mixtures of |SDR(iN-NMF) − SDR(NMF)|.
    pub mean_abs_sdr_diff: f64,
}

impl ParitySummary {
    /// Difference of the mean SDRs, iN-NMF minus NMF.
    pub fn mean_sdr_gap(&self) -> f64 {
        self.mean_sdr_innmf - self.mean_sdr_nmf
    }
}

#[derive(Debug, Clone)]
pub struct ParityResult {
    pub rows: Vec<ParityRow>,
}

pub const METHOD_INNMF: &str = "innmf";
pub const METHOD_NMF: &str = "nmf";

impl ParityResult {
    fn sdr(&self, mixture: usize, method: &str, n: usize, source: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.mixture == mixture && r.method == method && r.window_size == n && r.source == source)
            .map(|r| r.metrics.sdr_db)
    }

    pub fn summary(&self) -> Vec<ParitySummary> {
        let mut windows: Vec<usize> = self.rows.iter().map(|r| r.window_size).collect();
        windows.sort_unstable();
        windows.dedup();
        let mut mixtures: Vec<usize> = self.rows.iter().map(|r| r.mixture).collect();
        mixtures.sort_unstable();
        mixtures.dedup();
        let mut out = Vec::new();
        for &n in &windows {
            for source in 1..=2 {
                let pairs: Vec<(f64, f64)> = mixtures
                    .iter()
                    .filter_map(|&m| Some((self.sdr(m, METHOD_INNMF, n, source)?, self.sdr(m, METHOD_NMF, n, source)?)))
                    .collect();
                let c = pairs.len().max(1) as f64;
                out.push(ParitySummary {
                    window_size: n,
                    source,
                    mean_sdr_innmf: pairs.iter().map(|p| p.0).sum::<f64>() / c,
                    mean_sdr_nmf: pairs.iter().map(|p| p.1).sum::<f64>() / c,
                    mean_abs_sdr_diff: pairs.iter().map(|p| (p.0 - p.1).abs()).sum::<f64>() / c,
                });
            }
        }
        out
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        ensure_dir(dir)?;
        write_table(
            &dir.join("separation_metrics.csv"),
            &["mixture", "method", "window_size", "source", "sdr_db", "sir_db", "sar_db"],
            self.rows.iter().map(|r| {
                vec![
                    r.mixture.to_string(),
                    r.method.clone(),
                    r.window_size.to_string(),
                    r.source.to_string(),
                    r.metrics.sdr_db.to_string(),
                    r.metrics.sir_db.to_string(),
                    r.metrics.sar_db.to_string(),
                ]
            }),
        )?;
        write_table(
            &dir.join("parity_summary.csv"),
            &["window_size", "source", "mean_sdr_innmf", "mean_sdr_nmf", "mean_sdr_gap", "mean_abs_sdr_diff"],
            self.summary().iter().map(|s| {
                vec![
                    s.window_size.to_string(),
                    s.source.to_string(),
                    s.mean_sdr_innmf.to_string(),
                    s.mean_sdr_nmf.to_string(),
                    s.mean_sdr_gap().to_string(),
                    s.mean_abs_sdr_diff.to_string(),
                ]
            }),
        )
    }
}

fn concat_audio(parts: &[AudioBuffer]) -> Result<AudioBuffer> {
    let sr = parts.first().map(|p| p.sample_rate_hz).unwrap_or(SYNTH_SAMPLE_RATE);
    AudioBuffer::new(parts.iter().flat_map(|p| p.samples.iter().copied()).collect(), sr)
}

/// Material for one mixture: per speaker, clean training audio and the
/// held-out audio that goes into the mixture.
pub struct ParityMaterial {
    pub train: [AudioBuffer; 2],
    pub test: [AudioBuffer; 2],
}

impl ParityConfig {
    pub fn material(&self, mixture: usize) -> Result<ParityMaterial> {
        let m = mixture as u64;
        let speakers = [
            Speaker::random(derive_seed(self.seed, 10, m), false),
            Speaker::random(derive_seed(self.seed, 11, m), true),
        ];
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (s, spk) in speakers.iter().enumerate() {
            let files = (0..self.files_per_speaker)
                .map(|f| {
                    spk.utterance(
                        derive_seed(self.seed, 12 + s as u64, m * 1000 + f as u64),
                        self.sample_rate_hz,
                        self.file_secs,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            train.push(concat_audio(&files[..self.train_files])?);
            test.push(concat_audio(&files[self.train_files..])?);
        }
        let [t1, t2]: [AudioBuffer; 2] = train.try_into().expect("two speakers");
        let [e1, e2]: [AudioBuffer; 2] = test.try_into().expect("two speakers");
        Ok(ParityMaterial { train: [t1, t2], test: [e1, e2] })
    }
}

/// For each mixture: iN-NMF dictionaries trained once at one DFT size and
/// used at every test size, versus matrix NMF retrained at every size.
pub fn separation_parity(cfg: &ParityConfig) -> Result<ParityResult> {
    let options = FitOptions {
        activations: ActivationKind::Table,
        spectral_arch: cfg.spectral_arch.clone(),
        activation_arch: cfg.spectral_arch.clone(),
    };
    let mut rows = Vec::new();
    for mixture in 0..cfg.mixtures {
        let mat = cfg.material(mixture)?;
        let (mix, r1, r2) = mix_at_0db(&mat.test[0], &mat.test[1])?;
        let gain = r2.rms() / mat.test[1].rms();
        let train = [mat.train[0].clone(), mat.train[1].scaled(gain)];
        let dict_seed = derive_seed(cfg.seed, 30, mixture as u64);
        let dictionaries = train
            .iter()
            .enumerate()
            .map(|(s, audio)| {
                let (_, pts) = padded_stft(audio, cfg.dictionary_window, cfg.dictionary_window / 4)?;
                let tc = TrainConfig { seed: derive_seed(dict_seed, s as u64, 0), ..cfg.dictionary_train.clone() };
                innmf_fit(&pts, cfg.k, audio.nyquist_hz(), &tc, &options)?.0.dictionary()
            })
            .collect::<Result<Vec<_>>>()?;
        let dictionaries: [_; 2] = dictionaries.try_into().expect("two dictionaries");
        for &n in &cfg.test_windows {
            let hop = n / 4;
            let job = SeparationJob {
                mixture: mix.clone(),
                dictionaries: dictionaries.clone(),
                window_size: n,
                hop,
                config: TrainConfig { seed: derive_seed(cfg.seed, 31, mixture as u64), ..cfg.mixture_fit.clone() },
                options: options.clone(),
            };
            let ours = run_separation(&job, Some([&r1, &r2]))?;
            let nmf_seed = derive_seed(cfg.seed, 32, mixture as u64 * 10_000 + n as u64);
            let w1 = nmf_dictionary(&train[0], cfg.k, n, hop, cfg.nmf_dictionary_iterations, nmf_seed)?;
            let w2 = nmf_dictionary(&train[1], cfg.k, n, hop, cfg.nmf_dictionary_iterations, nmf_seed ^ 1)?;
            let theirs =
                nmf_separation(&mix, [&w1, &w2], n, hop, cfg.nmf_mixture_iterations, nmf_seed ^ 2, Some([&r1, &r2]))?;
            for (method, res) in [(METHOD_INNMF, &ours), (METHOD_NMF, &theirs)] {
                let metrics = res.metrics.expect("references were supplied");
                for (s, m) in metrics.iter().enumerate() {
                    rows.push(ParityRow { mixture, method: method.into(), window_size: n, source: s + 1, metrics: *m });
                }
            }
        }
    }
    Ok(ParityResult { rows })
}
