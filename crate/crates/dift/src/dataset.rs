//! Image directories paired with landmark files.

use std::path::{Path, PathBuf};

use dift_core::sampler::{synth_dataset, LabeledImage, SynthSpec};
use dift_core::ImageBuf;

use crate::error::{Error, Result};
use crate::landmarks::{self, Grouping, LandmarkMap};
use crate::{fsutil, pnm};

/// `dir/name`, or the same stem with a `.ppm`/`.pgm` extension (landmark
/// files usually name the original JPEGs).
pub fn resolve_image(dir: &Path, name: &str) -> Option<PathBuf> {
    let direct = dir.join(name);
    if direct.is_file() {
        return Some(direct);
    }
    ["ppm", "pgm"].iter().map(|ext| direct.with_extension(ext)).find(|p| p.is_file())
}

/// Every landmark entry with its image. All paths are checked before any
/// image is decoded.
pub fn load_dataset(dir: &Path, landmarks_path: &Path, grouping: &Grouping) -> Result<Vec<LabeledImage>> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "image directory not found")));
    }
    let map = landmarks::load(landmarks_path, grouping)?;
    let paths = map
        .keys()
        .map(|name| {
            resolve_image(dir, name).ok_or_else(|| Error::format(landmarks_path, None, format!("no image file for entry {name} in {}", dir.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    map.into_iter()
        .zip(paths)
        .map(|((id, landmarks), path)| {
            let image = pnm::read_image(&path)?;
            if let Some((_, p)) = landmarks.iter_points().find(|(_, p)| !image.contains(p.x as i64, p.y as i64)) {
                return Err(Error::format(landmarks_path, None, format!("{id}: landmark {p:?} lies outside the image")));
            }
            Ok(LabeledImage { id, image, landmarks })
        })
        .collect()
}

/// Netpbm files in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_images(dir: &Path) -> Result<Vec<(String, ImageBuf)>> {
    list_images(dir)?
        .into_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, pnm::read_image(&p)?))
        })
        .collect()
}

pub const LANDMARK_FILE: &str = "landmarks.txt";

/// Writes `NNNNNN.ppm` scenes and a landmark file covering them; returns the
/// landmark file path.
pub fn write_synth_set(dir: &Path, count: usize, seed: u64, spec: &SynthSpec) -> Result<PathBuf> {
    fsutil::create_dir(dir)?;
    let set = synth_dataset(seed, count, spec)?;
    let mut map = LandmarkMap::new();
    for (i, item) in set.into_iter().enumerate() {
        let name = format!("{i:06}.ppm");
        pnm::write_image(&dir.join(&name), &item.image)?;
        map.insert(name, item.landmarks);
    }
    let path = dir.join(LANDMARK_FILE);
    landmarks::save(&path, &map, &Grouping::default())?;
    Ok(path)
}
