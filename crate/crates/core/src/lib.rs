pub mod error;
pub mod experiments;
pub mod factorize;
pub mod inr;
pub mod separate;
pub mod tfpoints;
pub mod transforms;

pub use error::{Error, Result};
