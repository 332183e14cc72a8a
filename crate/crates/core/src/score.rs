//! Distance-to-feature targets: Euclidean distance, the piecewise-linear score
//! profile, and multi-channel landmark target vectors.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Integer pixel position; `x` is the column, `y` the row, origin top-left.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Point::new(self.x + dx, self.y + dy)
    }
}

/// Euclidean distance in pixels.
pub fn euclid_dist(a: Point, b: Point) -> f64 {
    let dx = (a.x - b.x) as f64;
    let dy = (a.y - b.y) as f64;
    libm::sqrt(dx * dx + dy * dy)
}

/// Breakpoints of the score profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreParams {
    pub d_inner: f64,
    pub d_outer: f64,
    /// Score at `d_inner`.
    pub s_knee: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            d_inner: 20.0,
            d_outer: 40.0,
            s_knee: 0.25,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_inner > 0.0 && self.d_inner < self.d_outer) {
            return Err(Error::param(
                "score params",
                alloc::format!("need 0 < d_inner < d_outer, got {} / {}", self.d_inner, self.d_outer),
            ));
        }
        if !(self.s_knee > 0.0 && self.s_knee < 1.0) {
            return Err(Error::param("score params", alloc::format!("s_knee must be in (0,1), got {}", self.s_knee)));
        }
        Ok(())
    }
}

/// Target score for a patch whose center is `d` pixels from the nearest feature.
///
/// Linear from 1 at `d = 0` to `s_knee` at `d_inner`, linear to 0 at `d_outer`,
/// and 0 beyond. With the defaults this is `1 − 3d/80`, then `1/2 − d/80`.
pub fn score_fn(d: f64, params: &ScoreParams) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::NegativeDistance(d));
    }
    let ScoreParams {
        d_inner,
        d_outer,
        s_knee,
    } = *params;
    Ok(if d <= d_inner {
        1.0 - (1.0 - s_knee) * d / d_inner
    } else if d <= d_outer {
        s_knee * (d_outer - d) / (d_outer - d_inner)
    } else {
        0.0
    })
}

/// Ordered feature channels, each a named set of landmark points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LandmarkChannels {
    pub channels: Vec<(String, Vec<Point>)>,
}

impl LandmarkChannels {
    pub const DEFAULT_NAMES: [&'static str; 3] = ["eyes", "nose", "mouth_corners"];

    pub fn new(channels: Vec<(String, Vec<Point>)>) -> Self {
        LandmarkChannels { channels }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn points(&self, channel: usize) -> &[Point] {
        &self.channels[channel].1
    }

    pub fn iter_points(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        self.channels
            .iter()
            .enumerate()
            .flat_map(|(c, (_, pts))| pts.iter().map(move |p| (c, *p)))
    }

    /// Distance from `p` to the nearest point of `channel`.
    pub fn min_dist(&self, p: Point, channel: usize) -> Result<f64> {
        let (name, pts) = &self.channels[channel];
        pts.iter()
            .map(|q| euclid_dist(p, *q))
            .reduce(f64::min)
            .ok_or_else(|| Error::EmptyChannel { channel: name.clone() })
    }
}

/// Per-channel target scores at `p`, written into `out` (length = channel count).
pub fn target_into(p: Point, landmarks: &LandmarkChannels, params: &ScoreParams, out: &mut [f32]) -> Result<()> {
    if out.len() != landmarks.len() {
        return Err(Error::shape("target_vector", "channel", landmarks.len(), out.len()));
    }
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = score_fn(landmarks.min_dist(p, c)?, params)? as f32;
    }
    Ok(())
}

pub fn target_vector(p: Point, landmarks: &LandmarkChannels, params: &ScoreParams) -> Result<Vec<f32>> {
    let mut out = alloc::vec![0.0; landmarks.len()];
    target_into(p, landmarks, params, &mut out)?;
    Ok(out)
}
