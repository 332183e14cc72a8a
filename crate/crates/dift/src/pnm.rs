//! Binary netpbm: P5 (gray) and P6 (RGB), maxval 255.

use std::path::Path;

use dift_core::ImageBuf;

use crate::error::{Error, Result};
use crate::fsutil;

/// Parses a P5/P6 image. Header comments (`#` to end of line) are allowed;
/// exactly one whitespace byte separates the maxval from the raster.
pub fn decode(bytes: &[u8]) -> std::result::Result<ImageBuf, String> {
    let mut pos = 0;
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err("not a binary PGM/PPM (expected P5 or P6)".into()),
    };
    pos += 2;
    let mut field = |name: &str| -> std::result::Result<usize, String> {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad or missing {name}"))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval} (only 255)"));
    }
    if width == 0 || height == 0 {
        return Err(format!("empty image {width}x{height}"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after maxval".into());
    }
    pos += 1;
    let need = width * height * channels;
    let raster = &bytes[pos..];
    if raster.len() != need {
        return Err(format!("raster has {} bytes, expected {need}", raster.len()));
    }
    ImageBuf::new(width, height, channels, raster.to_vec()).map_err(|e| e.to_string())
}

pub fn encode(img: &ImageBuf) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn read_image(path: &Path) -> Result<ImageBuf> {
    decode(&fsutil::read(path)?).map_err(|d| Error::format(path, None, d))
}

pub fn write_image(path: &Path, img: &ImageBuf) -> Result<()> {
    fsutil::write_atomic(path, &encode(img))
}
