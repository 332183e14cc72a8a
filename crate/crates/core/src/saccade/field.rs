use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::network::Model;
use crate::score::Point;

/// Per-channel scores over the grid of patch centers `[border, W − border)`
/// × `[border, H − border)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreField {
    pub channels: usize,
    /// Grid width and height.
    pub width: usize,
    pub height: usize,
    /// Image coordinate of grid cell (0, 0) on both axes.
    pub border: usize,
    /// Channel-major, then row-major.
    pub data: Vec<f32>,
}

impl ScoreField {
    pub fn new(channels: usize, width: usize, height: usize, border: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * width * height {
            return Err(Error::shape("ScoreField", "data length", channels * width * height, data.len()));
        }
        Ok(ScoreField {
            channels,
            width,
            height,
            border,
            data,
        })
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    /// Score at image coordinate `p`, if `p` is on the grid.
    pub fn at(&self, channel: usize, p: Point) -> Option<f32> {
        let (x, y) = (p.x as i64 - self.border as i64, p.y as i64 - self.border as i64);
        if channel >= self.channels || x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return None;
        }
        Some(self.plane(channel)[y as usize * self.width + x as usize])
    }

    /// Image coordinate of grid cell `i` of a plane.
    pub fn point_of(&self, i: usize) -> Point {
        Point::new((i % self.width + self.border) as i32, (i / self.width + self.border) as i32)
    }

    /// Highest score of a channel and where it occurs (first in raster order).
    pub fn argmax(&self, channel: usize) -> (Point, f32) {
        let (i, v) = self
            .plane(channel)
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |best, (i, v)| if *v > best.1 { (i, *v) } else { best });
        (self.point_of(i), v)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        ScoreField {
            data: self.data.iter().map(|v| f(*v)).collect(),
            ..self.clone()
        }
    }
}

/// Network scores at every valid patch center of `img`.
pub fn dense_heatmap(model: &Model, img: &ImageBuf) -> Result<ScoreField> {
    let out = model.forward_dense(&img.to_planes())?;
    let [c, h, w] = *out.dims() else {
        unreachable!("forward_dense returns rank 3")
    };
    ScoreField::new(c, w, h, model.patch_size() / 2, out.into_data())
}

/// Three-level display quantization: below 0.5 → 0, [0.5, 0.8) → 0.5, else 0.8.
pub fn quantize_value(v: f32) -> f32 {
    if v >= 0.8 {
        0.8
    } else if v >= 0.5 {
        0.5
    } else {
        0.0
    }
}

pub fn quantize_heatmap(field: &ScoreField) -> ScoreField {
    field.map(quantize_value)
}
