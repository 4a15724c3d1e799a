use ndarray::Array2;

use super::model::InnmfModel;
use crate::error::Result;
use crate::transforms::StftGrid;

/// The `bins x frames` matrix of model predictions on a regular grid,
/// built as the product of the sampled factors `W (bins x K) · Hᵀ`.
pub fn grid_collapse_check(model: &InnmfModel, grid: &StftGrid) -> Result<Array2<f64>> {
    let w = model.sample_spectral(&grid.bin_freqs())?;
    let h = model.sample_activations(&grid.frame_times())?;
    Ok(w.dot(&h.t()) * model.norm.m_scale)
}
