//! Embedded dynamic-importance learning for NARX system identification.
//!
//! A small feed-forward regressor reads a lagged window of past inputs and
//! outputs. Every window column is multiplied by a relevance score in `[0, 1]`
//! before the first layer. Three ways of producing those scores are provided:
//!
//! * a decision unit (affine map + sigmoid) fed with the lagged correlation
//!   matrix of the regressor, trained together with a first-order output
//!   variance alignment penalty;
//! * a drop-in layer of free element-wise weights;
//! * stochastic gates `clamp(mu + sigma * eps, 0, 1)` with a fixed `sigma`.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the experiment
//! harness and the command-line tool live in the `fimgate` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod datagen;
pub mod error;
pub mod eval;
pub mod fim;
pub mod gating;
pub mod nnet;
pub mod trainer;

mod rng;

pub use error::{Error, Result};
