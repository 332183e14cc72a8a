//! Training-patch sampling: border-constrained coordinates, channel-first
//! patch extraction, and a synthetic labeled-scene generator.

mod patch;
mod synth;

pub use patch::{extract_patch, extract_patch_into, rand_coords, valid_center_count, PatchSpec};
pub use synth::{synth_dataset, synth_image, SynthSpec};

use alloc::string::String;

use crate::image::ImageBuf;
use crate::score::LandmarkChannels;

/// An image with its landmark channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub image: ImageBuf,
    pub landmarks: LandmarkChannels,
}

/// How training patch centers are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SamplingMode {
    /// Uniform over the valid center region.
    #[default]
    Uniform,
    /// Uniform over the saccade candidate points of the image (falls back to
    /// uniform when an image has none).
    SaccadeCentered,
}
