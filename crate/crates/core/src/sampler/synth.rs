use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::LabeledImage;
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::rng::SeededRng;
use crate::score::{euclid_dist, LandmarkChannels, Point};

const LAYOUT_ATTEMPTS: usize = 1000;
const TRIES_PER_FEATURE: usize = 64;

/// Layout and appearance of a synthetic scene. Channel `c` is rendered as
/// shape class `c`: ring, filled disc, cross.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    /// Features per channel.
    pub counts: [usize; 3],
    /// Outer feature radius range in pixels.
    pub radius: (f32, f32),
    /// Minimum distance of a feature center from any image edge.
    pub margin: usize,
    /// Minimum center distance between features of different channels (strict).
    pub min_cross_dist: f64,
    /// Minimum center distance between features of the same channel (strict).
    pub min_same_dist: f64,
    /// Background clutter rectangles and line segments.
    pub clutter_rects: usize,
    pub clutter_lines: usize,
    /// Value-noise texture: lattice spacing and peak amplitude in gray levels.
    pub texture_cell: usize,
    pub texture_amp: f32,
    /// Texture fades out within this distance of any landmark (smooth skin).
    pub skin_radius: f32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            width: 178,
            height: 218,
            counts: [2, 1, 2],
            radius: (6.0, 8.0),
            margin: 17,
            min_cross_dist: 80.0,
            min_same_dist: 40.0,
            clutter_rects: 10,
            clutter_lines: 8,
            texture_cell: 4,
            texture_amp: 20.0,
            skin_radius: 40.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Feature {
    channel: usize,
    at: Point,
    radius: f32,
    tone: [u8; 3],
}

fn place(spec: &SynthSpec, rng: &mut SeededRng) -> Result<Vec<(usize, Point)>> {
    let (m, w, h) = (spec.margin as i64, spec.width as i64, spec.height as i64);
    if w - 2 * m < 1 || h - 2 * m < 1 {
        return Err(Error::ImageTooSmall {
            id: None,
            width: spec.width,
            height: spec.height,
            needed: 2 * spec.margin,
        });
    }
    let order: Vec<usize> = (0..3).flat_map(|c| core::iter::repeat_n(c, spec.counts[c])).collect();
    'layout: for _ in 0..LAYOUT_ATTEMPTS {
        let mut placed: Vec<(usize, Point)> = Vec::with_capacity(order.len());
        for &c in &order {
            let found = (0..TRIES_PER_FEATURE).find_map(|_| {
                let p = Point::new(rng.range_inclusive(m, w - m - 1) as i32, rng.range_inclusive(m, h - m - 1) as i32);
                let ok = placed.iter().all(|(oc, q)| {
                    let d = euclid_dist(p, *q);
                    if *oc == c {
                        d > spec.min_same_dist
                    } else {
                        d > spec.min_cross_dist
                    }
                });
                ok.then_some(p)
            });
            match found {
                Some(p) => placed.push((c, p)),
                None => continue 'layout,
            }
        }
        return Ok(placed);
    }
    Err(Error::Placement {
        attempts: LAYOUT_ATTEMPTS,
    })
}

fn clamp_u8(v: f32) -> u8 {
    libm::roundf(v).clamp(0.0, 255.0) as u8
}

fn shade(base: [u8; 3], delta: f32) -> [u8; 3] {
    base.map(|c| clamp_u8(c as f32 + delta))
}

fn covers(f: &Feature, dx: f32, dy: f32) -> bool {
    let r = f.radius;
    match f.channel {
        // ring of width ~3 px
        0 => {
            let d = libm::sqrtf(dx * dx + dy * dy);
            d <= r && d >= r - 3.0
        }
        1 => dx * dx + dy * dy <= r * r,
        // plus sign, arm thickness 3 px
        _ => (dx.abs() <= 1.5 && dy.abs() <= r) || (dy.abs() <= 1.5 && dx.abs() <= r),
    }
}

/// Two-tone blotches from thresholded value noise, faded out near landmarks.
fn add_texture(img: &mut ImageBuf, layout: &[(usize, Point)], spec: &SynthSpec, rng: &mut SeededRng) {
    let (w, h) = (img.width(), img.height());
    let cell = spec.texture_cell.max(1);
    let (gw, gh) = (w / cell + 2, h / cell + 2);
    let lattice: Vec<f32> = (0..gw * gh).map(|_| rng.uniform_f32(-1.0, 1.0)).collect();
    let fade = 4.0;
    for y in 0..h {
        for x in 0..w {
            let near = layout
                .iter()
                .map(|(_, p)| {
                    let (dx, dy) = ((x as i32 - p.x) as f32, (y as i32 - p.y) as f32);
                    libm::sqrtf(dx * dx + dy * dy)
                })
                .fold(f32::INFINITY, f32::min);
            let mask = ((near - spec.skin_radius) / fade).clamp(0.0, 1.0);
            if mask == 0.0 {
                continue;
            }
            let (fx, fy) = (x as f32 / cell as f32, y as f32 / cell as f32);
            let (ix, iy) = (fx as usize, fy as usize);
            let (tx, ty) = (fx - ix as f32, fy - iy as f32);
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
            let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
            let v = (top * (1.0 - ty) + bottom * ty).signum() * spec.texture_amp * mask;
            let px = img.rgb(x, y);
            img.set_rgb(x, y, shade(px, v));
        }
    }
}

/// Deterministic labeled scene: features on a noisy, cluttered background.
/// Landmarks are the exact (integer) feature centers.
pub fn synth_image(seed: u64, spec: &SynthSpec) -> Result<LabeledImage> {
    let mut rng = SeededRng::new(seed);
    let layout = place(spec, &mut rng)?;
    let (w, h) = (spec.width, spec.height);

    let base = rng.uniform_f32(125.0, 165.0);
    let tint = [0; 3].map(|_: u8| rng.uniform_f32(-12.0, 12.0));
    let (gx, gy) = (rng.uniform_f32(-15.0, 15.0), rng.uniform_f32(-15.0, 15.0));
    let mut img = ImageBuf::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            let ramp = gx * (x as f32 / w as f32 - 0.5) + gy * (y as f32 / h as f32 - 0.5);
            let px = tint.map(|t| clamp_u8(base + t + ramp + rng.uniform_f32(-4.0, 4.0)));
            img.set_rgb(x, y, px);
        }
    }
    if spec.texture_amp > 0.0 {
        add_texture(&mut img, &layout, spec, &mut rng);
    }

    let features: Vec<Feature> = layout
        .iter()
        .map(|&(channel, at)| {
            let tone = rng.uniform_f32(25.0, 70.0);
            Feature {
                channel,
                at,
                radius: rng.uniform_f32(spec.radius.0, spec.radius.1),
                tone: [0; 3].map(|_: u8| clamp_u8(tone + rng.uniform_f32(-12.0, 12.0))),
            }
        })
        .collect();
    let clear = spec.radius.1 + 5.0;
    let near_feature = |x: f32, y: f32| {
        features.iter().any(|f| {
            let (dx, dy) = (x - f.at.x as f32, y - f.at.y as f32);
            dx * dx + dy * dy <= clear * clear
        })
    };

    let offset = |rng: &mut SeededRng| {
        let mag = rng.uniform_f32(18.0, 45.0);
        if rng.below(2) == 0 {
            mag
        } else {
            -mag
        }
    };
    for _ in 0..spec.clutter_rects {
        let (rw, rh) = (rng.range_inclusive(4, 26) as usize, rng.range_inclusive(4, 26) as usize);
        let x0 = rng.below(w as u64) as usize;
        let y0 = rng.below(h as u64) as usize;
        let delta = offset(&mut rng);
        for y in y0..(y0 + rh).min(h) {
            for x in x0..(x0 + rw).min(w) {
                if !near_feature(x as f32, y as f32) {
                    let px = img.rgb(x, y);
                    img.set_rgb(x, y, shade(px, delta));
                }
            }
        }
    }
    for _ in 0..spec.clutter_lines {
        let (x0, y0) = (rng.uniform_f32(0.0, w as f32), rng.uniform_f32(0.0, h as f32));
        let angle = rng.uniform_f32(0.0, core::f32::consts::PI);
        let len = rng.uniform_f32(12.0, 45.0);
        let delta = offset(&mut rng);
        let (dx, dy) = (libm::cosf(angle), libm::sinf(angle));
        let mut touched = vec![false; w * h];
        for step in 0..(len as usize * 2) {
            let t = step as f32 * 0.5;
            for thick in [0.0f32, 1.0] {
                let x = libm::roundf(x0 + dx * t - dy * thick);
                let y = libm::roundf(y0 + dy * t + dx * thick);
                if x < 0.0 || y < 0.0 || x >= w as f32 || y >= h as f32 || near_feature(x, y) {
                    continue;
                }
                let (xi, yi) = (x as usize, y as usize);
                if !core::mem::replace(&mut touched[yi * w + xi], true) {
                    let px = img.rgb(xi, yi);
                    img.set_rgb(xi, yi, shade(px, delta));
                }
            }
        }
    }
    for f in &features {
        let r = libm::ceilf(f.radius) as i32 + 1;
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (f.at.x + dx, f.at.y + dy);
                if img.contains(x as i64, y as i64) && covers(f, dx as f32, dy as f32) {
                    img.set_rgb(x as usize, y as usize, f.tone);
                }
            }
        }
    }

    let mut channels: Vec<(alloc::string::String, Vec<Point>)> = LandmarkChannels::DEFAULT_NAMES
        .iter()
        .map(|n| (n.to_string(), Vec::new()))
        .collect();
    for f in &features {
        channels[f.channel].1.push(f.at);
    }
    Ok(LabeledImage {
        id: alloc::format!("synth-{seed}"),
        image: img,
        landmarks: LandmarkChannels::new(channels),
    })
}

/// `count` scenes whose seeds are drawn in sequence from `seed`, so a longer
/// set extends a shorter one.
pub fn synth_dataset(seed: u64, count: usize, spec: &SynthSpec) -> Result<Vec<LabeledImage>> {
    let mut rng = SeededRng::new(seed);
    (0..count).map(|_| synth_image(rng.next_u64(), spec)).collect()
}
