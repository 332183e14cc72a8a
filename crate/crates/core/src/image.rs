use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit raster, row-major, channels interleaved (1 = gray, 3 = RGB).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::param("image channels", alloc::format!("must be 1 or 3, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::param("image size", alloc::format!("{width}x{height}")));
        }
        let want = width * height * channels;
        if data.len() != want {
            return Err(Error::shape("image", "data length", want, data.len()));
        }
        Ok(ImageBuf {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        ImageBuf {
            width,
            height,
            channels: 3,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// RGB at (x, y); gray images repeat the sample.
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 3 {
            [self.data[i], self.data[i + 1], self.data[i + 2]]
        } else {
            [self.data[i]; 3]
        }
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 3 {
            self.data[i..i + 3].copy_from_slice(&rgb);
        } else {
            self.data[i] = luma(rgb);
        }
    }

    /// Luminance plane, `round(0.299 R + 0.587 G + 0.114 B)`.
    pub fn luminance(&self) -> Vec<u8> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data.chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect()
    }

    /// Channel-first `[3, H, W]` floats in [0, 1]; gray is promoted to 3 planes.
    pub fn to_planes(&self) -> Tensor {
        let plane = self.width * self.height;
        let mut out = alloc::vec![0.0f32; 3 * plane];
        for i in 0..plane {
            for c in 0..3 {
                let s = if self.channels == 3 { self.data[i * 3 + c] } else { self.data[i] };
                out[c * plane + i] = s as f32 / 255.0;
            }
        }
        Tensor::new(&[3, self.height, self.width], out).expect("dims match")
    }
}

fn luma([r, g, b]: [u8; 3]) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}
