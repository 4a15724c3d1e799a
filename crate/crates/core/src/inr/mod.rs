//! Continuous non-negative factor functions: a Fourier positional encoding
//! followed by a sine-activated MLP with a softplus output.

pub mod encoding;
pub mod io;
pub mod network;

pub use encoding::{fourier_encode, EncodingConfig};
pub use io::{load_model, save_model, ActivationRecord, ModelFile};
pub use network::{softplus, softplus_inverse, BatchTrace, DenseLayer, GradientBuffer, InrFunction, DEFAULT_OMEGA0};

/// Default number of encoding frequencies (`J / 2`).
pub const DEFAULT_ENCODING_FREQS: usize = 8;
/// Default hidden layer sizes.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];
