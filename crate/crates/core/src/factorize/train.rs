//! Gradient-descent training of iN-NMF factors on point sets.
//!
//! Each step evaluates the prediction `Σ_k W_k(f_i) H_k(t_i)` for a batch of
//! points, takes the mean generalized KL against the normalized targets and
//! moves every trainable parameter along the negative gradient. Factor
//! functions are evaluated once per distinct coordinate in the batch and the
//! per-point gradients are pooled onto those coordinates before backprop, so
//! the cost scales with the number of distinct times and frequencies rather
//! than the number of points.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kl::{kl_pointwise, KL_FLOOR};
use super::model::{unique_coords, Factors, InnmfModel, LookupTable, SpectralDictionary};
use crate::error::{Error, Result};
use crate::inr::network::{encode_rows, sigmoid, softplus_inverse, BatchTrace};
use crate::inr::{EncodingConfig, GradientBuffer, InrFunction, DEFAULT_HIDDEN, DEFAULT_OMEGA0};
use crate::tfpoints::{compute_normalization, NormalizationInfo, TFPointSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const MOMENTUM: Optimizer = Optimizer::Momentum { beta: 0.9 };
    pub const ADAM: Optimizer = Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub kl_floor: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 2000,
            batch_size: 1024,
            seed: 0,
            kl_floor: KL_FLOOR,
            optimizer: Optimizer::MOMENTUM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be >= 1".into()));
        }
        if !(self.kl_floor > 0.0) {
            return Err(Error::InvalidArgument("KL floor must be positive".into()));
        }
        match self.optimizer {
            Optimizer::Momentum { beta } if !(0.0..1.0).contains(&beta) => {
                Err(Error::InvalidArgument(format!("momentum must be in [0,1), got {beta}")))
            }
            Optimizer::Adam { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                Err(Error::InvalidArgument("invalid Adam parameters".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Shape of one family of factor networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    /// Number of encoding frequencies (`J / 2`).
    pub encoding_freqs: usize,
    pub hidden: Vec<usize>,
    pub omega0: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            encoding_freqs: crate::inr::DEFAULT_ENCODING_FREQS,
            hidden: DEFAULT_HIDDEN.to_vec(),
            omega0: DEFAULT_OMEGA0,
        }
    }
}

impl Architecture {
    pub fn build(&self, seed: u64) -> Result<InrFunction> {
        InrFunction::init_with_omega(seed, EncodingConfig::geometric(self.encoding_freqs), &self.hidden, self.omega0)
    }
}

/// How activations are represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    /// One network per component over normalized time.
    Functions,
    /// One free value per distinct time (the regular-time shortcut).
    Table,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub activations: ActivationKind,
    pub spectral_arch: Architecture,
    pub activation_arch: Architecture,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            activations: ActivationKind::Functions,
            spectral_arch: Architecture::default(),
            activation_arch: Architecture { encoding_freqs: 6, ..Architecture::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Mean KL over all points for each epoch (computed batch by batch,
    /// before each batch's update).
    pub loss_curve: Vec<f64>,
    /// Mean KL over all points with the final parameters.
    pub final_loss: f64,
}

pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SPECTRAL: u64 = 1;
const STREAM_ACTIVATION: u64 = 2;
const STREAM_TABLE: u64 = 3;
const STREAM_SHUFFLE: u64 = 4;

/// First and second moment buffers for one parameter group.
#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n] }
    }
}

fn apply_step(opt: Optimizer, lr: f64, step: i32, params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64]) {
    match opt {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grads) {
                *p -= lr * g;
            }
        }
        Optimizer::Momentum { beta } => {
            for ((p, g), mv) in params.iter_mut().zip(grads).zip(m.iter_mut()) {
                *mv = beta * *mv + g;
                *p -= lr * *mv;
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            let c1 = 1.0 - beta1.powi(step);
            let c2 = 1.0 - beta2.powi(step);
            for (((p, g), mv), vv) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = beta1 * *mv + (1.0 - beta1) * g;
                *vv = beta2 * *vv + (1.0 - beta2) * g * g;
                *p -= lr * (*mv / c1) / ((*vv / c2).sqrt() + eps);
            }
        }
    }
}

/// Training state for one side (spectral or activation) of the model.
struct Side {
    factors: Factors,
    trainable: bool,
    /// Per point: index of its distinct coordinate (or table column).
    point_idx: Vec<usize>,
    /// Number of distinct coordinates (table columns for tables).
    n_unique: usize,
    /// Encoded distinct coordinates, for function factors.
    encoded: Option<Array2<f64>>,
    /// Values at every distinct coordinate when frozen, `n_unique x K`.
    frozen_values: Option<Array2<f64>>,
    traces: Vec<BatchTrace>,
    grads: Vec<GradientBuffer>,
    table_grad: Option<Array2<f64>>,
    moments: Vec<Moments>,
}

impl Side {
    /// `coords` are physical per-point coordinates; `normalize` maps them to
    /// function inputs.
    fn new(factors: Factors, trainable: bool, coords: &[f64], normalize: impl Fn(f64) -> f64) -> Result<Self> {
        let k = factors.rank();
        let (point_idx, n_unique, encoded) = match &factors {
            Factors::Functions(fs) => {
                let (unique, idx) = unique_coords(coords.iter().copied());
                let xs: Vec<f64> = unique.iter().map(|&c| normalize(c)).collect();
                let enc0 = fs[0].encoding();
                if fs.iter().any(|f| f.encoding() != enc0) {
                    return Err(Error::InvalidArgument(
                        "all factor functions on one side must share an encoding".into(),
                    ));
                }
                (idx, unique.len(), Some(encode_rows(enc0, &xs)))
            }
            Factors::Table(t) => {
                let idx = coords.iter().map(|&c| t.nearest(c)).collect();
                (idx, t.coords().len(), None)
            }
        };
        let mut side = Side {
            trainable,
            point_idx,
            n_unique,
            encoded,
            frozen_values: None,
            traces: vec![BatchTrace::default(); if matches!(factors, Factors::Functions(_)) { k } else { 0 }],
            grads: Vec::new(),
            table_grad: None,
            moments: Vec::new(),
            factors,
        };
        if trainable {
            match &side.factors {
                Factors::Functions(fs) => {
                    side.grads = fs.iter().map(GradientBuffer::for_function).collect();
                    side.moments = fs.iter().map(|f| Moments::new(f.num_params())).collect();
                }
                Factors::Table(t) => {
                    side.table_grad = Some(Array2::zeros(t.raw.dim()));
                    side.moments = vec![Moments::new(t.raw.len())];
                }
            }
        } else {
            let all: Vec<usize> = (0..side.n_unique).collect();
            side.frozen_values = Some(side.evaluate(&all));
        }
        Ok(side)
    }

    fn rank(&self) -> usize {
        self.factors.rank()
    }

    /// Values at the listed distinct coordinates, `list.len() x K`. Keeps
    /// traces for backprop when trainable.
    fn evaluate(&mut self, list: &[usize]) -> Array2<f64> {
        if let Some(frozen) = &self.frozen_values {
            return frozen.select(Axis(0), list);
        }
        let k = self.rank();
        let mut out = Array2::zeros((list.len(), k));
        match &self.factors {
            Factors::Functions(fs) => {
                let enc = self.encoded.as_ref().expect("functions carry encodings");
                let sub = if list.len() == self.n_unique && list.iter().enumerate().all(|(i, &u)| i == u) {
                    None
                } else {
                    Some(enc.select(Axis(0), list))
                };
                let view = sub.as_ref().unwrap_or(enc).view();
                for (c, f) in fs.iter().enumerate() {
                    f.forward_batch_into(view, &mut self.traces[c]);
                    out.column_mut(c).iter_mut().zip(&self.traces[c].values).for_each(|(o, v)| *o = *v);
                }
            }
            Factors::Table(t) => {
                for (r, &col) in list.iter().enumerate() {
                    for c in 0..k {
                        out[(r, c)] = t.value(c, col);
                    }
                }
            }
        }
        out
    }

    /// Backprop of `upstream` (`list.len() x K`, dL/dvalue) and one optimizer step.
    fn update(&mut self, list: &[usize], upstream: &Array2<f64>, opt: Optimizer, lr: f64, step: i32) {
        if !self.trainable {
            return;
        }
        match &mut self.factors {
            Factors::Functions(fs) => {
                for (c, f) in fs.iter_mut().enumerate() {
                    let g = &mut self.grads[c];
                    g.reset();
                    let col: Vec<f64> = upstream.column(c).to_vec();
                    f.backward_batch(&self.traces[c], &col, g);
                    let mom = &mut self.moments[c];
                    let mut offset = 0;
                    f.visit_params(g, |p, gr| {
                        let n = p.len();
                        apply_step(
                            opt,
                            lr,
                            step,
                            p,
                            gr,
                            &mut mom.m[offset..offset + n],
                            &mut mom.v[offset..offset + n],
                        );
                        offset += n;
                    });
                }
            }
            Factors::Table(t) => {
                let grad = self.table_grad.as_mut().expect("trainable table has a gradient");
                grad.fill(0.0);
                for (r, &col) in list.iter().enumerate() {
                    for c in 0..t.rank() {
                        grad[(c, col)] += upstream[(r, c)] * sigmoid(t.raw[(c, col)]);
                    }
                }
                let mom = &mut self.moments[0];
                apply_step(
                    opt,
                    lr,
                    step,
                    t.raw.as_slice_mut().expect("standard layout"),
                    grad.as_slice().expect("standard layout"),
                    &mut mom.m,
                    &mut mom.v,
                );
            }
        }
    }
}

/// Marks distinct indices of one batch in first-appearance order.
struct LocalIndex {
    stamp: Vec<u32>,
    local: Vec<usize>,
    batch: u32,
}

impl LocalIndex {
    fn new(n: usize) -> Self {
        Self { stamp: vec![u32::MAX; n], local: vec![0; n], batch: 0 }
    }

    /// Returns the distinct global indices and, per point, its local slot.
    fn build(&mut self, global: impl Iterator<Item = usize>) -> (Vec<usize>, Vec<usize>) {
        let mut list = Vec::new();
        let slots = global
            .map(|g| {
                if self.stamp[g] != self.batch {
                    self.stamp[g] = self.batch;
                    self.local[g] = list.len();
                    list.push(g);
                }
                self.local[g]
            })
            .collect();
        self.batch = self.batch.wrapping_add(1);
        if self.batch == u32::MAX {
            self.stamp.fill(u32::MAX);
            self.batch = 0;
        }
        (list, slots)
    }
}

struct Engine {
    spectral: Side,
    activation: Side,
    targets: Vec<f64>,
}

impl Engine {
    fn new(
        points: &TFPointSet,
        norm: &NormalizationInfo,
        spectral: Factors,
        spectral_trainable: bool,
        activations: Factors,
    ) -> Result<Self> {
        let fs: Vec<f64> = points.iter().map(|p| p.f).collect();
        let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
        let n = *norm;
        Ok(Self {
            spectral: Side::new(spectral, spectral_trainable, &fs, |f| n.normalize_f(f))?,
            activation: Side::new(activations, true, &ts, |t| n.normalize_t(t))?,
            targets: points.iter().map(|p| p.m / norm.m_scale).collect(),
        })
    }

    /// One pass over `order` in batches. Returns the summed KL of the
    /// visited points (pre-update values). With `lr == None` nothing is
    /// updated.
    fn pass(
        &mut self,
        order: &[usize],
        config: &TrainConfig,
        train: bool,
        step: &mut i32,
        li_f: &mut LocalIndex,
        li_t: &mut LocalIndex,
    ) -> f64 {
        let k = self.spectral.rank();
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (f_list, f_slot) = li_f.build(batch.iter().map(|&i| self.spectral.point_idx[i]));
            let (t_list, t_slot) = li_t.build(batch.iter().map(|&i| self.activation.point_idx[i]));
            let w = self.spectral.evaluate(&f_list);
            let h = self.activation.evaluate(&t_list);
            let mut up_w = Array2::<f64>::zeros(w.dim());
            let mut up_h = Array2::<f64>::zeros(h.dim());
            let scale = 1.0 / batch.len() as f64;
            for (b, &i) in batch.iter().enumerate() {
                let (fs, ts) = (f_slot[b], t_slot[b]);
                let wr = w.row(fs);
                let hr = h.row(ts);
                let pred: f64 = wr.iter().zip(hr.iter()).map(|(a, c)| a * c).sum();
                let m = self.targets[i];
                total += kl_pointwise(m, pred, config.kl_floor);
                if train {
                    let g = (1.0 - m / pred.max(config.kl_floor)) * scale;
                    for c in 0..k {
                        up_w[(fs, c)] += g * hr[c];
                        up_h[(ts, c)] += g * wr[c];
                    }
                }
            }
            if train {
                *step += 1;
                let (opt, lr) = (config.optimizer, config.learning_rate);
                self.spectral.update(&f_list, &up_w, opt, lr, *step);
                self.activation.update(&t_list, &up_h, opt, lr, *step);
            }
        }
        total
    }

    fn run(&mut self, config: &TrainConfig) -> Result<FitReport> {
        let n = self.targets.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_SHUFFLE, 0));
        let mut li_f = LocalIndex::new(self.spectral.n_unique);
        let mut li_t = LocalIndex::new(self.activation.n_unique);
        let mut step = 0;
        let mut curve = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            if config.batch_size < n {
                order.shuffle(&mut rng);
            }
            let loss = self.pass(&order, config, true, &mut step, &mut li_f, &mut li_t) / n as f64;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    detail: format!("mean KL became {loss}; try a smaller learning rate"),
                });
            }
            curve.push(loss);
        }
        let all: Vec<usize> = (0..n).collect();
        let eval = TrainConfig { batch_size: n.max(1), ..config.clone() };
        let final_loss = self.pass(&all, &eval, false, &mut step, &mut li_f, &mut li_t) / n as f64;
        if !final_loss.is_finite() {
            return Err(Error::Divergence { epoch: config.epochs, detail: format!("final mean KL is {final_loss}") });
        }
        Ok(FitReport { loss_curve: curve, final_loss })
    }
}

fn initial_activations(
    kind: ActivationKind,
    arch: &Architecture,
    k: usize,
    points: &TFPointSet,
    seed: u64,
) -> Result<Factors> {
    match kind {
        ActivationKind::Functions => Ok(Factors::Functions(
            (0..k).map(|c| arch.build(derive_seed(seed, STREAM_ACTIVATION, c as u64))).collect::<Result<_>>()?,
        )),
        ActivationKind::Table => {
            let mut times: Vec<f64> = unique_coords(points.iter().map(|p| p.t)).0;
            times.sort_by(f64::total_cmp);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_TABLE, 0));
            let dist = rand::distr::Uniform::new(0.5, 1.5).expect("valid range");
            let base = 1.0 / (k as f64 * std::f64::consts::LN_2);
            let raw = Array2::from_shape_simple_fn((k, times.len()), || {
                softplus_inverse(base * rand::distr::Distribution::sample(&dist, &mut rng))
            });
            Ok(Factors::Table(LookupTable::from_raw(times, raw)?))
        }
    }
}

fn check_points(points: &TFPointSet, k: usize) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("rank K must be at least 1".into()));
    }
    Ok(())
}

/// Learns K spectral and K activation factors jointly.
///
/// `nyquist_hz` sets the frequency normalization of the spectral functions.
pub fn innmf_fit(
    points: &TFPointSet,
    k: usize,
    nyquist_hz: f64,
    config: &TrainConfig,
    options: &FitOptions,
) -> Result<(InnmfModel, FitReport)> {
    check_points(points, k)?;
    config.validate()?;
    let norm = compute_normalization(points, nyquist_hz)?;
    let spectral = Factors::Functions(
        (0..k)
            .map(|c| options.spectral_arch.build(derive_seed(config.seed, STREAM_SPECTRAL, c as u64)))
            .collect::<Result<_>>()?,
    );
    let activations = initial_activations(options.activations, &options.activation_arch, k, points, config.seed)?;
    let mut engine = Engine::new(points, &norm, spectral, true, activations)?;
    let report = engine.run(config)?;
    let model = InnmfModel::new(engine.spectral.factors, engine.activation.factors, norm)?;
    Ok((model, report))
}

/// Learns activations for a frozen dictionary. The dictionary's functions
/// are never modified.
pub fn refit_activations(
    points: &TFPointSet,
    dictionary: &SpectralDictionary,
    config: &TrainConfig,
    options: &FitOptions,
) -> Result<(InnmfModel, FitReport)> {
    let k = dictionary.rank();
    check_points(points, k)?;
    config.validate()?;
    let norm = compute_normalization(points, dictionary.f_scale)?;
    let activations = initial_activations(options.activations, &options.activation_arch, k, points, config.seed)?;
    let spectral = Factors::Functions(dictionary.functions.clone());
    let mut engine = Engine::new(points, &norm, spectral, false, activations)?;
    let report = engine.run(config)?;
    let model = InnmfModel::new(engine.spectral.factors, engine.activation.factors, norm)?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tfpoints::TFPoint;

    fn rank_one_points() -> TFPointSet {
        let mut pts = Vec::new();
        for j in 0..24 {
            let t = j as f64 * 0.05;
            let b = 1.0 + 0.8 * (2.0 * t).sin();
            for i in 0..33 {
                let f = i as f64 * 125.0;
                let a = (-((f - 1500.0) / 700.0).powi(2)).exp() + 0.1;
                pts.push(TFPoint::new(t, f, a * b));
            }
        }
        TFPointSet::new(pts, "synthetic").unwrap()
    }

    fn small_options(kind: ActivationKind) -> FitOptions {
        let arch = Architecture { encoding_freqs: 4, hidden: vec![16, 16], omega0: DEFAULT_OMEGA0 };
        FitOptions { activations: kind, spectral_arch: arch.clone(), activation_arch: arch }
    }

    #[test]
    fn same_seed_same_curve() {
        let pts = rank_one_points();
        let cfg = TrainConfig { epochs: 20, batch_size: 100, seed: 9, ..TrainConfig::default() };
        let opts = small_options(ActivationKind::Functions);
        let (m1, r1) = innmf_fit(&pts, 1, 4000.0, &cfg, &opts).unwrap();
        let (m2, r2) = innmf_fit(&pts, 1, 4000.0, &cfg, &opts).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
        assert!(r1.loss_curve.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn refit_leaves_dictionary_untouched() {
        let pts = rank_one_points();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 10_000,
            learning_rate: 1e-2,
            optimizer: Optimizer::ADAM,
            ..TrainConfig::default()
        };
        let opts = small_options(ActivationKind::Table);
        let (model, _) = innmf_fit(&pts, 2, 4000.0, &cfg, &opts).unwrap();
        let dict = model.dictionary().unwrap();
        let before = dict.clone();
        let (refit, report) = refit_activations(&pts, &dict, &cfg, &opts).unwrap();
        assert_eq!(dict, before);
        assert_eq!(refit.dictionary().unwrap(), before);
        assert!(report.final_loss < report.loss_curve[0]);
    }

    #[test]
    fn rejects_bad_config() {
        let pts = rank_one_points();
        let opts = FitOptions::default();
        let bad = TrainConfig { learning_rate: 0.0, ..TrainConfig::default() };
        assert!(innmf_fit(&pts, 1, 4000.0, &bad, &opts).is_err());
        assert!(innmf_fit(&pts, 0, 4000.0, &TrainConfig::default(), &opts).is_err());
        let empty = TFPointSet::new(vec![], "").unwrap();
        assert!(matches!(innmf_fit(&empty, 1, 4000.0, &TrainConfig::default(), &opts), Err(Error::EmptyPointSet)));
    }

    #[test]
    fn divergence_is_reported() {
        let pts = rank_one_points();
        let cfg = TrainConfig {
            learning_rate: 1e200,
            epochs: 5,
            batch_size: 10_000,
            optimizer: Optimizer::Sgd,
            ..TrainConfig::default()
        };
        let err = innmf_fit(&pts, 1, 4000.0, &cfg, &small_options(ActivationKind::Table)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
    }
}
