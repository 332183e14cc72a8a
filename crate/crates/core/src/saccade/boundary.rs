use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::score::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryParams {
    /// Side of the box used for the local mean (odd).
    pub window: usize,
    /// Dead zone around the local mean, in gray levels.
    pub min_contrast: u8,
    /// Chains shorter than this are discarded.
    pub min_chain: usize,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        BoundaryParams {
            window: 15,
            min_contrast: 8,
            min_chain: 4,
        }
    }
}

/// 8-connected chains of dark pixels that touch a light pixel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BoundaryChains {
    pub width: usize,
    pub height: usize,
    pub chains: Vec<Vec<Point>>,
}

impl BoundaryChains {
    /// Boundary pixels kept in chains.
    pub fn pixel_count(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn fraction(&self) -> f64 {
        self.pixel_count() as f64 / (self.width * self.height) as f64
    }
}

/// −1 dark, 0 dead zone, +1 light, relative to the clipped box mean.
fn sign_map(lum: &[u8], w: usize, h: usize, params: &BoundaryParams) -> Vec<i8> {
    // summed-area table with a zero row/column
    let mut sat = vec![0u64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u64;
        for x in 0..w {
            row += lum[y * w + x] as u64;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let r = params.window / 2;
    let mc = params.min_contrast as i64;
    let mut signs = vec![0i8; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let n = ((y1 - y0) * (x1 - x0)) as i64;
            let sum = (sat[y1 * (w + 1) + x1] + sat[y0 * (w + 1) + x0] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]) as i64;
            // compare l against mean ± mc without division
            let d = lum[y * w + x] as i64 * n - sum;
            signs[y * w + x] = if d > mc * n {
                1
            } else if d < -mc * n {
                -1
            } else {
                0
            };
        }
    }
    signs
}

const FOUR: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
/// Linking order: 4-neighbors first, then diagonals.
const LINK: [(i32, i32); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

/// Dark/light boundary chains of an image.
///
/// A pixel is on a boundary when it is dark (below its local mean by more
/// than `min_contrast`) and one of its 4-neighbors is light. Boundary pixels
/// are linked into 8-connected chains in raster discovery order.
pub fn boundary_chains(img: &ImageBuf, params: &BoundaryParams) -> Result<BoundaryChains> {
    let (w, h) = (img.width(), img.height());
    if params.window == 0 || params.window.is_multiple_of(2) {
        return Err(Error::param("boundary window", alloc::format!("must be odd, got {}", params.window)));
    }
    if params.window > w || params.window > h {
        return Err(Error::ImageTooSmall {
            id: None,
            width: w,
            height: h,
            needed: params.window - 1,
        });
    }
    let signs = sign_map(&img.luminance(), w, h, params);
    let inside = |x: i32, y: i32| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h;
    let mut boundary = vec![false; w * h];
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            if signs[y as usize * w + x as usize] != -1 {
                continue;
            }
            boundary[y as usize * w + x as usize] = FOUR.iter().any(|(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                inside(nx, ny) && signs[ny as usize * w + nx as usize] == 1
            });
        }
    }

    let mut visited = vec![false; w * h];
    let step = |from: Point, visited: &mut Vec<bool>| -> Option<Point> {
        LINK.iter().find_map(|(dx, dy)| {
            let (nx, ny) = (from.x + dx, from.y + dy);
            if !inside(nx, ny) {
                return None;
            }
            let i = ny as usize * w + nx as usize;
            (boundary[i] && !visited[i]).then(|| {
                visited[i] = true;
                Point::new(nx, ny)
            })
        })
    };
    let mut chains = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !boundary[i] || visited[i] {
                continue;
            }
            visited[i] = true;
            let start = Point::new(x as i32, y as i32);
            let mut forward = vec![start];
            while let Some(next) = step(*forward.last().expect("non-empty"), &mut visited) {
                forward.push(next);
            }
            let mut backward = Vec::new();
            let mut cur = start;
            while let Some(next) = step(cur, &mut visited) {
                backward.push(next);
                cur = next;
            }
            if backward.len() + forward.len() >= params.min_chain {
                backward.reverse();
                backward.extend(forward);
                chains.push(backward);
            }
        }
    }
    Ok(BoundaryChains {
        width: w,
        height: h,
        chains,
    })
}

/// Every `stride`-th chain pixel that is a legal patch center for `border`.
pub fn saccade_points(chains: &BoundaryChains, stride: usize, border: usize) -> Vec<Point> {
    let b = border as i32;
    let (w, h) = (chains.width as i32, chains.height as i32);
    chains
        .chains
        .iter()
        .flat_map(|c| c.iter().step_by(stride.max(1)))
        .filter(|p| p.x >= b && p.y >= b && p.x < w - b && p.y < h - b)
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::sampler::{synth_image, SynthSpec};

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> ImageBuf {
        let data = (0..w * h).map(|i| f(i % w, i / w)).collect();
        ImageBuf::new(w, h, 1, data).unwrap()
    }

    fn is_chain(c: &[Point]) -> bool {
        c.windows(2).all(|p| (p[0].x - p[1].x).abs() <= 1 && (p[0].y - p[1].y).abs() <= 1 && p[0] != p[1])
    }

    #[test]
    fn uniform_image_has_no_boundaries() {
        let chains = boundary_chains(&gray(40, 30, |_, _| 77), &BoundaryParams::default()).unwrap();
        assert_eq!(chains.pixel_count(), 0);
    }

    #[test]
    fn step_edge_is_one_chain() {
        let img = gray(40, 50, |x, _| if x < 20 { 0 } else { 255 });
        let chains = boundary_chains(&img, &BoundaryParams::default()).unwrap();
        assert_eq!(chains.chains.len(), 1);
        let c = &chains.chains[0];
        assert_eq!(c.len(), 50);
        assert!(c.iter().all(|p| p.x == 19));
        assert!(is_chain(c));
    }

    #[test]
    fn window_larger_than_image() {
        assert!(boundary_chains(&gray(10, 30, |_, _| 0), &BoundaryParams::default()).is_err());
        let even = BoundaryParams {
            window: 4,
            ..BoundaryParams::default()
        };
        assert!(boundary_chains(&gray(30, 30, |_, _| 0), &even).is_err());
    }

    #[test]
    fn chains_are_disjoint_and_connected() {
        let s = synth_image(4, &SynthSpec::default()).unwrap();
        let chains = boundary_chains(&s.image, &BoundaryParams::default()).unwrap();
        let mut seen = alloc::collections::BTreeSet::new();
        for c in &chains.chains {
            assert!(c.len() >= 4);
            assert!(is_chain(c));
            for p in c {
                assert!(seen.insert(*p), "{p:?} in two chains");
            }
        }
    }

    #[test]
    fn invariant_under_luminance_offset() {
        let mut rng = SeededRng::new(3);
        let base: Vec<u8> = (0..60 * 50).map(|_| 40 + rng.below(170) as u8).collect();
        let params = BoundaryParams {
            min_contrast: 0,
            ..BoundaryParams::default()
        };
        let reference = boundary_chains(&ImageBuf::new(60, 50, 1, base.clone()).unwrap(), &params).unwrap();
        assert!(reference.pixel_count() > 0);
        for b in [30i16, -30] {
            let shifted: Vec<u8> = base.iter().map(|v| (*v as i16 + b) as u8).collect();
            let other = boundary_chains(&ImageBuf::new(60, 50, 1, shifted).unwrap(), &params).unwrap();
            assert_eq!(other, reference);
        }
    }

    #[test]
    fn synthetic_density_in_range() {
        for seed in 0..20 {
            let s = synth_image(seed, &SynthSpec::default()).unwrap();
            let f = boundary_chains(&s.image, &BoundaryParams::default()).unwrap().fraction();
            assert!((0.05..=0.20).contains(&f), "seed {seed}: {f}");
        }
    }

    #[test]
    fn saccade_point_sampling() {
        let chains = BoundaryChains {
            width: 100,
            height: 100,
            chains: vec![(0..23).map(|i| Point::new(20 + i, 50)).collect(), (0..4).map(|i| Point::new(5, 10 + i)).collect()],
        };
        let pts = saccade_points(&chains, 5, 17);
        let want: Vec<Point> = [20, 25, 30, 35, 40].iter().map(|x| Point::new(*x, 50)).collect();
        assert_eq!(pts, want);
        assert_eq!(saccade_points(&chains, 1, 17).len(), 23);
        assert_eq!(saccade_points(&chains, 1, 0).len(), 27);
        assert!(saccade_points(&BoundaryChains::default(), 5, 0).is_empty());
    }

    #[test]
    fn face_scale_counts() {
        // 5,200 boundary pixels at stride 5 give about 1,040 starts
        let chains = BoundaryChains {
            width: 400,
            height: 400,
            chains: (0..52).map(|k| (0..100).map(|i| Point::new(50 + i, 50 + k * 5)).collect()).collect(),
        };
        assert_eq!(chains.pixel_count(), 5_200);
        assert_eq!(saccade_points(&chains, 5, 0).len(), 1_040);
    }
}
