//! Versioned JSON model files.
//!
//! Parameters are stored layer by layer as row-major flat lists of f64.
//! Floats are written in shortest round-trip form and parsed exactly, so
//! a saved model evaluates bitwise-identically after loading.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::encoding::EncodingConfig;
use super::network::{DenseLayer, InrFunction};
use crate::error::{Error, Result};
use crate::tfpoints::NormalizationInfo;

pub const MODEL_FORMAT: &str = "innmf-model";
pub const MODEL_VERSION: u32 = 1;

/// Activation factors as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationRecord {
    /// One network per component over normalized time.
    Functions(Vec<InrFunction>),
    /// Softplus-parameterized table, `rows x coords.len()` row-major, with
    /// coordinates in seconds.
    Table { coords: Vec<f64>, rows: usize, raw: Vec<f64> },
}

/// A collection of factor functions with their normalization constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub normalization: NormalizationInfo,
    pub spectral: Vec<InrFunction>,
    pub activations: ActivationRecord,
}

#[derive(Serialize, Deserialize)]
struct FunctionJson {
    layer_sizes: Vec<usize>,
    encoding_frequencies: Vec<f64>,
    omega0: f64,
    first_omega: f64,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ActivationJson {
    Functions { functions: Vec<FunctionJson> },
    Table { coords_sec: Vec<f64>, rows: usize, raw: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    k: usize,
    normalization: NormalizationInfo,
    spectral: Vec<FunctionJson>,
    activations: ActivationJson,
}

impl From<&InrFunction> for FunctionJson {
    fn from(f: &InrFunction) -> Self {
        FunctionJson {
            layer_sizes: f.layer_sizes(),
            encoding_frequencies: f.encoding().frequencies().to_vec(),
            omega0: f.omega0(),
            first_omega: f.first_omega(),
            weights: f.layers().iter().map(|l| l.weights.iter().copied().collect()).collect(),
            biases: f.layers().iter().map(|l| l.biases.to_vec()).collect(),
        }
    }
}

impl TryFrom<FunctionJson> for InrFunction {
    type Error = Error;

    fn try_from(j: FunctionJson) -> Result<Self> {
        let encoding = EncodingConfig::new(j.encoding_frequencies).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let n_layers = j.layer_sizes.len().saturating_sub(1);
        if j.weights.len() != n_layers || j.biases.len() != n_layers {
            return Err(Error::ModelFormat(format!(
                "{} layer sizes but {} weight and {} bias arrays",
                j.layer_sizes.len(),
                j.weights.len(),
                j.biases.len()
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (l, (w, b)) in j.weights.into_iter().zip(j.biases).enumerate() {
            let (fan_in, fan_out) = (j.layer_sizes[l], j.layer_sizes[l + 1]);
            let weights = Array2::from_shape_vec((fan_out, fan_in), w)
                .map_err(|_| Error::ModelFormat(format!("layer {l} weight count mismatch")))?;
            if b.len() != fan_out {
                return Err(Error::ModelFormat(format!("layer {l} bias count mismatch")));
            }
            layers.push(DenseLayer { weights, biases: Array1::from(b) });
        }
        InrFunction::from_parts(encoding, layers, j.omega0, j.first_omega)
            .map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

fn functions_from_json(list: Vec<FunctionJson>) -> Result<Vec<InrFunction>> {
    list.into_iter().map(InrFunction::try_from).collect()
}

impl ModelFile {
    pub fn k(&self) -> usize {
        self.spectral.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let activations = match &self.activations {
            ActivationRecord::Functions(fs) => {
                ActivationJson::Functions { functions: fs.iter().map(FunctionJson::from).collect() }
            }
            ActivationRecord::Table { coords, rows, raw } => {
                ActivationJson::Table { coords_sec: coords.clone(), rows: *rows, raw: raw.clone() }
            }
        };
        let env = Envelope {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            k: self.k(),
            normalization: self.normalization,
            spectral: self.spectral.iter().map(FunctionJson::from).collect(),
            activations,
        };
        serde_json::to_string_pretty(&env).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(MODEL_FORMAT) => {}
            other => return Err(Error::ModelFormat(format!("not an innmf model file (format {other:?})"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            other => {
                return Err(Error::ModelFormat(format!(
                    "unsupported model version {other:?}, expected {MODEL_VERSION}"
                )))
            }
        }
        let env: Envelope = serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
        env.normalization.validate().map_err(|e| Error::ModelFormat(e.to_string()))?;
        let spectral = functions_from_json(env.spectral)?;
        if spectral.len() != env.k || env.k == 0 {
            return Err(Error::ModelFormat(format!(
                "header says K={} but {} spectral functions are stored",
                env.k,
                spectral.len()
            )));
        }
        let activations = match env.activations {
            ActivationJson::Functions { functions } => {
                let fs = functions_from_json(functions)?;
                if fs.len() != env.k {
                    return Err(Error::ModelFormat(format!(
                        "K={} but {} activation functions are stored",
                        env.k,
                        fs.len()
                    )));
                }
                ActivationRecord::Functions(fs)
            }
            ActivationJson::Table { coords_sec, rows, raw } => {
                if rows != env.k || raw.len() != rows * coords_sec.len() {
                    return Err(Error::ModelFormat("activation table shape mismatch".into()));
                }
                ActivationRecord::Table { coords: coords_sec, rows, raw }
            }
        };
        Ok(ModelFile { normalization: env.normalization, spectral, activations })
    }
}

pub fn save_model(model: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ModelFile::from_json(&text)
}
