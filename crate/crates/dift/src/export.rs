//! Visual and tabular outputs: kernel images, heatmaps, detection and loss CSVs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dift_core::network::CONV1_K;
use dift_core::saccade::DetectionRun;
use dift_core::trainer::LossTrace;
use dift_core::{ImageBuf, Model, ParamId, Point, ScoreField};

use crate::error::Result;
use crate::{fsutil, pnm};

/// Min-max normalizes to 0–255; a constant input maps to 128.
pub fn normalize_u8(values: &[f32]) -> Vec<u8> {
    let (lo, hi) = values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo) * 255.0).round() as u8).collect()
}

/// conv1 kernels as gray images, averaged over the input color channels.
pub fn kernel_images(model: &Model) -> Vec<ImageBuf> {
    let w = model.param(ParamId::Conv1W);
    let [o, c, k, _] = *w.dims() else { unreachable!("conv weight is rank 4") };
    debug_assert_eq!(k, CONV1_K);
    let plane = k * k;
    (0..o)
        .map(|i| {
            let kernel = &w.data()[i * c * plane..(i + 1) * c * plane];
            let mean: Vec<f32> = (0..plane).map(|p| (0..c).map(|ch| kernel[ch * plane + p]).sum::<f32>() / c as f32).collect();
            ImageBuf::new(k, k, 1, normalize_u8(&mean)).expect("k*k gray")
        })
        .collect()
}

/// Writes `{prefix}{i}.pgm` for each conv1 kernel; returns the paths.
pub fn export_kernels(model: &Model, prefix: &Path) -> Result<Vec<PathBuf>> {
    kernel_images(model)
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let mut name = prefix.as_os_str().to_owned();
            name.push(format!("{i}.pgm"));
            let path = PathBuf::from(name);
            pnm::write_image(&path, img)?;
            Ok(path)
        })
        .collect()
}

fn to_gray(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// One channel at image size: scores clamped to [0, 1] and scaled to 255,
/// zero where no patch fits.
pub fn channel_image(field: &ScoreField, channel: usize, width: usize, height: usize) -> ImageBuf {
    let mut data = vec![0u8; width * height];
    let plane = field.plane(channel);
    for y in 0..field.height {
        for x in 0..field.width {
            data[(y + field.border) * width + x + field.border] = to_gray(plane[y * field.width + x]);
        }
    }
    ImageBuf::new(width, height, 1, data).expect("sized above")
}

/// Channels 0, 1, 2 as red, green, blue.
pub fn combined_image(field: &ScoreField, width: usize, height: usize) -> ImageBuf {
    let mut img = ImageBuf::filled(width, height, [0, 0, 0]);
    for y in 0..field.height {
        for x in 0..field.width {
            let mut rgb = [0u8; 3];
            for (c, v) in rgb.iter_mut().enumerate().take(field.channels) {
                *v = to_gray(field.plane(c)[y * field.width + x]);
            }
            img.set_rgb(x + field.border, y + field.border, rgb);
        }
    }
    img
}

/// Writes `{stem}_c{i}.pgm` per channel and `{stem}_rgb.ppm`.
pub fn write_heatmaps(field: &ScoreField, width: usize, height: usize, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for c in 0..field.channels {
        let p = dir.join(format!("{stem}_c{c}.pgm"));
        pnm::write_image(&p, &channel_image(field, c, width, height))?;
        paths.push(p);
    }
    let p = dir.join(format!("{stem}_rgb.ppm"));
    pnm::write_image(&p, &combined_image(field, width, height))?;
    paths.push(p);
    Ok(paths)
}

pub const CHANNEL_COLORS: [[u8; 3]; 3] = [[255, 0, 0], [0, 255, 0], [0, 0, 255]];

/// Copy of `img` with a colored cross at each detection.
pub fn annotate(img: &ImageBuf, run: &DetectionRun) -> ImageBuf {
    let mut out = ImageBuf::filled(img.width(), img.height(), [0; 3]);
    for y in 0..img.height() {
        for x in 0..img.width() {
            out.set_rgb(x, y, img.rgb(x, y));
        }
    }
    for d in &run.detections {
        let color = CHANNEL_COLORS.get(d.channel).copied().unwrap_or([255, 255, 0]);
        for t in -4..=4 {
            for p in [d.point.offset(t, 0), d.point.offset(0, t)] {
                if out.contains(p.x as i64, p.y as i64) {
                    out.set_rgb(p.x as usize, p.y as usize, color);
                }
            }
        }
    }
    out
}

/// `channel,x,y,score,evals` rows and a `# evals=N` footer.
pub fn detections_csv(run: &DetectionRun) -> String {
    let mut s = String::from("channel,x,y,score,evals\n");
    for d in &run.detections {
        writeln!(s, "{},{},{},{},{}", d.channel, d.point.x, d.point.y, d.score, d.evals_used).expect("string write");
    }
    writeln!(s, "# evals={}", run.evals).expect("string write");
    s
}

pub fn loss_csv(trace: &LossTrace) -> String {
    let mut s = String::from("batch,loss,running_mean\n");
    for (i, (l, m)) in trace.losses.iter().zip(&trace.running_mean).enumerate() {
        writeln!(s, "{i},{l},{m}").expect("string write");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fsutil::write_atomic(path, text.as_bytes())
}

/// Parses the rows of a detections CSV back into `(channel, point, score)`.
pub fn parse_detections_csv(text: &str) -> Option<(Vec<(usize, Point, f32)>, Option<usize>)> {
    let mut rows = Vec::new();
    let mut evals = None;
    for line in text.lines().skip(1) {
        if let Some(n) = line.strip_prefix("# evals=") {
            evals = Some(n.parse().ok()?);
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return None;
        }
        rows.push((f[0].parse().ok()?, Point::new(f[1].parse().ok()?, f[2].parse().ok()?), f[3].parse().ok()?));
    }
    Some((rows, evals))
}
