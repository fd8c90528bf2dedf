//! Maximally divergent interval (MDI) detection on multivariate spatio-temporal data.
//!
//! The crate is `no_std` and only needs `alloc`. It covers the algorithmic side of the
//! detector: an order-5 data tensor with cumulative-sum range statistics, context
//! embeddings, Gaussian and kernel density models, divergence measures, interval
//! proposals and non-maximum suppression, plus the synthetic benchmark generator and the
//! evaluation metrics used to score detectors on it.
//!
//! File formats, the command-line front end and multi-threaded scanning live in the
//! companion `mdi` crate.
//!
//! Indices are 0-based and ranges half-open throughout; conversion to 1-based
//! coordinates happens at the IO boundary.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cumsum;
pub mod density;
pub mod divergence;
mod error;
pub mod eval;
pub mod linalg;
mod math;
pub mod pointwise;
pub mod preprocess;
pub mod search;
pub mod special;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use search::{detect, Detection, DetectorConfig};
pub use tensor::{DataTensor, Shape, SizeConstraints, SubBlock};
