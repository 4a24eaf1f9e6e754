//! Command-line side of the gated NARX identification toolkit: CSV and JSON
//! file formats, model checkpoints, a multi-seed benchmark harness and a
//! synthetic pH series for exercising the external-data path.

pub mod checkpoint;
pub mod error;
pub mod harness;
pub mod io;
pub mod surrogate;

pub use error::{Error, Result};
pub use fimgate_core;
