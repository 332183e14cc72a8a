#![cfg_attr(not(feature = "std"), no_std)]
//! Distance-to-feature training and saccaded search.
//!
//! A small patch-scoring CNN is trained to regress a piecewise-linear score of
//! the distance from a patch center to the nearest labeled feature of each
//! channel. At inference time the score can be evaluated densely over every
//! valid patch center, or sparsely: only at points sampled along dark/light
//! boundary chains, followed by coarse-to-fine hill climbing on the score.
//!
//! The crate is `no_std` + `alloc`. All I/O (netpbm images, landmark files,
//! model files, CSV) lives in the companion `dift` crate.
//!
//! # Features
//!
//! - `std` *(default)* – lets the GEMM backend use runtime CPU feature
//!   detection. Results are identical either way up to float reassociation
//!   inside the GEMM kernel.

// `!(x > y)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod gradcheck;
pub mod image;
pub mod network;
pub mod numerics;
pub mod rng;
pub mod saccade;
pub mod sampler;
pub mod score;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use network::{ArchConfig, LayerGrads, Model, ParamId};
pub use image::ImageBuf;

pub use rng::SeededRng;

pub use saccade::{Detection, ScoreField};
pub use score::{LandmarkChannels, Point, ScoreParams};
pub use tensor::Tensor;
