//! File formats, parallel scanning and benchmark orchestration on top of [`mdi_core`].

pub mod bench;
pub mod csv_in;
mod error;
pub mod format;
pub mod parallel;
pub mod records;

pub use error::{MdiError, Result};
pub use mdi_core as core;
