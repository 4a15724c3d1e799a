//! Audio analysis front ends that produce [`TFPointSet`](crate::tfpoints::TFPointSet)s.

pub mod audio;
pub mod cqt;
pub mod descriptor;
pub mod sinusoidal;
pub mod stft;

pub use audio::AudioBuffer;
pub use cqt::{cqt_to_points, CqtConfig};
pub use descriptor::{Segment, Transform, TransformSpec};
pub use sinusoidal::sinusoidal_model_points;
pub use stft::{istft, stft, stft_to_points, StftGrid};
