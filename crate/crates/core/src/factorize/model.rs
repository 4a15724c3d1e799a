//! The iN-NMF model: `m̃(t, f) = m_scale · Σ_k W_k(f) H_k(t)`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::inr::io::{ActivationRecord, ModelFile};
use crate::inr::network::{encode_rows, softplus, softplus_inverse};
use crate::inr::InrFunction;
use crate::tfpoints::{NormalizationInfo, TFPointSet};

/// Sampled factor values on a sorted coordinate grid, stored as free reals
/// passed through softplus so gradient steps keep them non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    /// Physical coordinates (Hz or seconds), strictly increasing.
    coords: Vec<f64>,
    /// `K x coords.len()` pre-softplus parameters.
    pub raw: Array2<f64>,
}

impl LookupTable {
    pub fn from_raw(coords: Vec<f64>, raw: Array2<f64>) -> Result<Self> {
        if coords.is_empty() || raw.ncols() != coords.len() || raw.nrows() == 0 {
            return Err(Error::Shape(format!("table with {} coordinates and raw shape {:?}", coords.len(), raw.dim())));
        }
        if coords.windows(2).any(|w| w[1] <= w[0]) || coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("table coordinates must be strictly increasing".into()));
        }
        Ok(Self { coords, raw })
    }

    /// Builds a table holding the given non-negative `K x n` values.
    pub fn from_values(coords: Vec<f64>, values: &Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("table values must be non-negative".into()));
        }
        let raw = values.mapv(|v| if v > 0.0 { softplus_inverse(v) } else { -745.0 });
        Self::from_raw(coords, raw)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn rank(&self) -> usize {
        self.raw.nrows()
    }

    /// Index of the coordinate nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        match self.coords.binary_search_by(|c| c.total_cmp(&x)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.coords.len() => i - 1,
            Err(i) => {
                if x - self.coords[i - 1] <= self.coords[i] - x {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    #[inline]
    pub fn value(&self, k: usize, idx: usize) -> f64 {
        softplus(self.raw[(k, idx)])
    }

    /// `K x n` non-negative values.
    pub fn values(&self) -> Array2<f64> {
        self.raw.mapv(softplus)
    }
}

/// One side of the factorization: K functions or a K-row lookup table.
#[derive(Debug, Clone, PartialEq)]
pub enum Factors {
    Functions(Vec<InrFunction>),
    Table(LookupTable),
}

impl Factors {
    pub fn rank(&self) -> usize {
        match self {
            Factors::Functions(fs) => fs.len(),
            Factors::Table(t) => t.rank(),
        }
    }

    /// Values at many coordinates: row `i` holds all K factors at
    /// `physical[i]`. `normalize` maps physical coordinates to the
    /// functions' input domain.
    pub fn sample(&self, physical: &[f64], normalize: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
        let k = self.rank();
        let mut out = Array2::zeros((physical.len(), k));
        match self {
            Factors::Functions(fs) => {
                let xs: Vec<f64> = physical.iter().map(|&p| normalize(p)).collect();
                if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite normalized coordinate {x}")));
                }
                let mut enc_cache: Option<(&crate::inr::EncodingConfig, Array2<f64>)> = None;
                for (c, f) in fs.iter().enumerate() {
                    let reuse = matches!(&enc_cache, Some((e, _)) if *e == f.encoding());
                    if !reuse {
                        enc_cache = Some((f.encoding(), encode_rows(f.encoding(), &xs)));
                    }
                    let enc = &enc_cache.as_ref().expect("just filled").1;
                    let trace = f.forward_batch(enc.view());
                    for (r, v) in trace.values.iter().enumerate() {
                        out[(r, c)] = *v;
                    }
                }
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("non-finite factor value".into()));
                }
            }
            Factors::Table(t) => {
                for (r, &p) in physical.iter().enumerate() {
                    let idx = t.nearest(p);
                    for c in 0..k {
                        out[(r, c)] = t.value(c, idx);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// A frozen set of spectral functions with the frequency scale they were
/// trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDictionary {
    pub functions: Vec<InrFunction>,
    pub f_scale: f64,
}

impl SpectralDictionary {
    pub fn rank(&self) -> usize {
        self.functions.len()
    }

    /// Concatenates two dictionaries (they must share a frequency scale).
    pub fn concat(&self, other: &SpectralDictionary) -> Result<SpectralDictionary> {
        if self.f_scale != other.f_scale {
            return Err(Error::InvalidArgument(format!(
                "dictionaries use different frequency scales ({} vs {})",
                self.f_scale, other.f_scale
            )));
        }
        let mut functions = self.functions.clone();
        functions.extend(other.functions.iter().cloned());
        Ok(SpectralDictionary { functions, f_scale: self.f_scale })
    }

    /// `freqs.len() x K` dictionary sampled at physical frequencies.
    pub fn sample(&self, freqs: &[f64]) -> Result<Array2<f64>> {
        let scale = self.f_scale;
        Factors::Functions(self.functions.clone()).sample(freqs, |f| f / scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnmfModel {
    pub spectral: Factors,
    pub activations: Factors,
    pub norm: NormalizationInfo,
}

impl InnmfModel {
    pub fn new(spectral: Factors, activations: Factors, norm: NormalizationInfo) -> Result<Self> {
        if spectral.rank() == 0 || spectral.rank() != activations.rank() {
            return Err(Error::Shape(format!(
                "{} spectral factors but {} activation factors",
                spectral.rank(),
                activations.rank()
            )));
        }
        norm.validate()?;
        Ok(Self { spectral, activations, norm })
    }

    pub fn rank(&self) -> usize {
        self.spectral.rank()
    }

    /// The spectral functions as a reusable dictionary. Fails for
    /// table-valued spectral factors.
    pub fn dictionary(&self) -> Result<SpectralDictionary> {
        match &self.spectral {
            Factors::Functions(fs) => Ok(SpectralDictionary { functions: fs.clone(), f_scale: self.norm.f_scale }),
            Factors::Table(_) => {
                Err(Error::InvalidArgument("table-valued spectral factors cannot be reused as a dictionary".into()))
            }
        }
    }

    /// Spectral factors sampled at physical frequencies, `freqs.len() x K`.
    pub fn sample_spectral(&self, freqs: &[f64]) -> Result<Array2<f64>> {
        let n = self.norm;
        self.spectral.sample(freqs, |f| n.normalize_f(f))
    }

    /// Activation factors sampled at physical times, `times.len() x K`.
    pub fn sample_activations(&self, times: &[f64]) -> Result<Array2<f64>> {
        let n = self.norm;
        self.activations.sample(times, |t| n.normalize_t(t))
    }

    /// De-normalized prediction at one coordinate.
    pub fn predict(&self, t: f64, f: f64) -> Result<f64> {
        let w = self.sample_spectral(&[f])?;
        let h = self.sample_activations(&[t])?;
        let s: f64 = w.row(0).iter().zip(h.row(0)).map(|(a, b)| a * b).sum();
        Ok(s * self.norm.m_scale)
    }

    /// Predictions for every point, in point order. Each distinct
    /// coordinate is evaluated once.
    pub fn predict_points(&self, points: &TFPointSet) -> Result<Vec<f64>> {
        let (f_unique, f_idx) = unique_coords(points.iter().map(|p| p.f));
        let (t_unique, t_idx) = unique_coords(points.iter().map(|p| p.t));
        let w = self.sample_spectral(&f_unique)?;
        let h = self.sample_activations(&t_unique)?;
        Ok(f_idx
            .iter()
            .zip(&t_idx)
            .map(|(&fi, &ti)| w.row(fi).iter().zip(h.row(ti)).map(|(a, b)| a * b).sum::<f64>() * self.norm.m_scale)
            .collect())
    }

    /// Per-component predictions `m_scale · W_k(f) H_k(t)` summed over the
    /// components in `range`.
    pub fn predict_points_partial(&self, points: &TFPointSet, range: std::ops::Range<usize>) -> Result<Vec<f64>> {
        if range.end > self.rank() || range.start > range.end {
            return Err(Error::InvalidArgument(format!("component range {range:?} out of bounds")));
        }
        let (f_unique, f_idx) = unique_coords(points.iter().map(|p| p.f));
        let (t_unique, t_idx) = unique_coords(points.iter().map(|p| p.t));
        let w = self.sample_spectral(&f_unique)?;
        let h = self.sample_activations(&t_unique)?;
        Ok(f_idx
            .iter()
            .zip(&t_idx)
            .map(|(&fi, &ti)| range.clone().map(|k| w[(fi, k)] * h[(ti, k)]).sum::<f64>() * self.norm.m_scale)
            .collect())
    }

    pub fn to_file(&self) -> Result<ModelFile> {
        let spectral = match &self.spectral {
            Factors::Functions(fs) => fs.clone(),
            Factors::Table(_) => {
                return Err(Error::InvalidArgument("models with table-valued spectral factors cannot be saved".into()))
            }
        };
        let activations = match &self.activations {
            Factors::Functions(fs) => ActivationRecord::Functions(fs.clone()),
            Factors::Table(t) => ActivationRecord::Table {
                coords: t.coords().to_vec(),
                rows: t.rank(),
                raw: t.raw.iter().copied().collect(),
            },
        };
        Ok(ModelFile { normalization: self.norm, spectral, activations })
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        let activations = match file.activations {
            ActivationRecord::Functions(fs) => Factors::Functions(fs),
            ActivationRecord::Table { coords, rows, raw } => {
                let n = coords.len();
                let raw = Array2::from_shape_vec((rows, n), raw).map_err(|e| Error::ModelFormat(e.to_string()))?;
                Factors::Table(LookupTable::from_raw(coords, raw)?)
            }
        };
        InnmfModel::new(Factors::Functions(file.spectral), activations, file.normalization)
    }
}

/// Distinct values in first-appearance order, and each input's index
/// into them. Values are compared bitwise.
pub fn unique_coords(values: impl Iterator<Item = f64>) -> (Vec<f64>, Vec<usize>) {
    let mut map = std::collections::HashMap::new();
    let mut unique = Vec::new();
    let idx = values
        .map(|v| {
            *map.entry(v.to_bits()).or_insert_with(|| {
                unique.push(v);
                unique.len() - 1
            })
        })
        .collect();
    (unique, idx)
}
