//! Non-negative factorization of point sets (iN-NMF) and of dense
//! matrices (classic multiplicative-update NMF).

pub mod collapse;
pub mod curve;
pub mod kl;
pub mod matrix_nmf;
pub mod model;
pub mod train;

pub use collapse::grid_collapse_check;
pub use curve::{save_loss_curve, write_loss_curve};
pub use kl::{kl_pointwise, mean_kl, KL_FLOOR};
pub use matrix_nmf::{kl_divergence, matrix_nmf_refit_h, nmf_multiplicative, MatrixNmfModel};
pub use model::{unique_coords, Factors, InnmfModel, LookupTable, SpectralDictionary};
pub use train::{
    derive_seed, innmf_fit, refit_activations, ActivationKind, Architecture, FitOptions, FitReport, Optimizer,
    TrainConfig,
};
