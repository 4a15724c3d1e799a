use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequencies (cycles per unit input) of a sin/cos positional encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    frequencies: Vec<f64>,
}

impl EncodingConfig {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::InvalidArgument("encoding needs at least one frequency".into()));
        }
        if frequencies.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::InvalidArgument("encoding frequencies must be positive".into()));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("encoding frequencies must be strictly increasing".into()));
        }
        Ok(Self { frequencies })
    }

    /// Octave ladder `1, 2, 4, ..., 2^(count-1)`.
    pub fn geometric(count: usize) -> Self {
        Self::new((0..count).map(|j| (j as f64).exp2()).collect()).expect("ladder is positive and increasing")
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Encoded dimension `J`.
    pub fn output_dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    /// Writes `[sin(2π σ_j x), cos(2π σ_j x)]` pairs into `out`.
    pub fn encode_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.output_dim());
        for (pair, &sigma) in out.chunks_exact_mut(2).zip(&self.frequencies) {
            let (s, c) = (TAU * sigma * x).sin_cos();
            pair[0] = s;
            pair[1] = c;
        }
    }
}

pub fn fourier_encode(x: f64, config: &EncodingConfig) -> Vec<f64> {
    let mut out = vec![0.0; config.output_dim()];
    config.encode_into(x, &mut out);
    out
}
