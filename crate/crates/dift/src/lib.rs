//! File formats, dataset loading, exports and benchmarking for `dift-core`.
//!
//! - netpbm P5/P6 images ([`pnm`])
//! - CelebA landmark text files ([`landmarks`])
//! - binary model files ([`model_io`])
//! - heatmap, kernel, detection and loss outputs ([`export`])
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod dataset;
pub mod error;
pub mod export;
pub mod fsutil;
pub mod landmarks;
pub mod model_io;
pub mod pnm;

pub use error::{Error, Result};
