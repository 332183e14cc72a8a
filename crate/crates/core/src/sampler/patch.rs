use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::rng::SeededRng;
use crate::score::Point;
use crate::tensor::Tensor;

/// Square patch geometry. Centers are kept at least `border` px from every edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSpec {
    pub size: usize,
    pub border: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec::new(35)
    }
}

impl PatchSpec {
    /// Border defaults to `⌊size/2⌋`, the smallest that keeps patches inside.
    pub const fn new(size: usize) -> Self {
        PatchSpec { size, border: size / 2 }
    }

    pub fn with_border(self, border: usize) -> Self {
        PatchSpec { border, ..self }
    }

    pub fn half(&self) -> usize {
        self.size / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size.is_multiple_of(2) {
            return Err(Error::param("patch size", alloc::format!("must be odd and positive, got {}", self.size)));
        }
        if self.border < self.half() {
            return Err(Error::param(
                "patch border",
                alloc::format!("{} is below half the patch size {}", self.border, self.half()),
            ));
        }
        Ok(())
    }

    /// Whether `p` is a legal patch center in a `width × height` image.
    pub fn admits(&self, width: usize, height: usize, p: Point) -> bool {
        let b = self.border as i64;
        let (x, y) = (p.x as i64, p.y as i64);
        x >= b && y >= b && x < width as i64 - b && y < height as i64 - b
    }

    pub fn check_image(&self, width: usize, height: usize) -> Result<()> {
        if width <= 2 * self.border || height <= 2 * self.border {
            return Err(Error::ImageTooSmall {
                id: None,
                width,
                height,
                needed: 2 * self.border,
            });
        }
        Ok(())
    }
}

/// Number of legal patch centers, `(w − 2b)·(h − 2b)`.
pub fn valid_center_count(width: usize, height: usize, spec: &PatchSpec) -> usize {
    width.saturating_sub(2 * spec.border) * height.saturating_sub(2 * spec.border)
}

/// Uniform center over `[b, w−b−1] × [b, h−b−1]`.
pub fn rand_coords(width: usize, height: usize, spec: &PatchSpec, rng: &mut SeededRng) -> Result<Point> {
    spec.check_image(width, height)?;
    let b = spec.border as i64;
    let x = rng.range_inclusive(b, width as i64 - b - 1);
    let y = rng.range_inclusive(b, height as i64 - b - 1);
    Ok(Point::new(x as i32, y as i32))
}

/// Writes the `[3, size, size]` patch centered at `center` into `out`.
pub fn extract_patch_into(img: &ImageBuf, center: Point, size: usize, out: &mut [f32]) -> Result<()> {
    let half = (size / 2) as i64;
    let (x0, y0) = (center.x as i64 - half, center.y as i64 - half);
    let (x1, y1) = (x0 + size as i64 - 1, y0 + size as i64 - 1);
    if !img.contains(x0, y0) || !img.contains(x1, y1) {
        return Err(Error::OutOfBounds {
            what: "patch center",
            x: center.x as i64,
            y: center.y as i64,
        });
    }
    if out.len() != 3 * size * size {
        return Err(Error::shape("extract_patch", "output length", 3 * size * size, out.len()));
    }
    let (w, ch, data) = (img.width(), img.channels(), img.data());
    let plane = size * size;
    for row in 0..size {
        let src_row = (y0 as usize + row) * w + x0 as usize;
        for col in 0..size {
            let i = (src_row + col) * ch;
            let o = row * size + col;
            if ch == 3 {
                out[o] = data[i] as f32 / 255.0;
                out[plane + o] = data[i + 1] as f32 / 255.0;
                out[2 * plane + o] = data[i + 2] as f32 / 255.0;
            } else {
                let v = data[i] as f32 / 255.0;
                out[o] = v;
                out[plane + o] = v;
                out[2 * plane + o] = v;
            }
        }
    }
    Ok(())
}

/// Channel-first patch with samples scaled to [0, 1]. Never clamps at edges.
pub fn extract_patch(img: &ImageBuf, center: Point, size: usize) -> Result<Tensor> {
    let mut out = alloc::vec![0.0; 3 * size * size];
    extract_patch_into(img, center, size, &mut out)?;
    Tensor::new(&[3, size, size], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn coords_respect_border() {
        let spec = PatchSpec::new(35);
        assert_eq!(spec.border, 17);
        let mut rng = SeededRng::new(0);
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (i32::MAX, 0, i32::MAX, 0);
        for _ in 0..10_000 {
            let p = rand_coords(178, 218, &spec, &mut rng).unwrap();
            assert!((17..=160).contains(&p.x) && (17..=200).contains(&p.y));
            min_x = min_x.min(p.x);
            max_x = max_x.max(p.x);
            min_y = min_y.min(p.y);
            max_y = max_y.max(p.y);
        }
        assert_eq!((min_x, max_x, min_y, max_y), (17, 160, 17, 200));
    }

    #[test]
    fn degenerate_domain_and_errors() {
        let spec = PatchSpec::new(35);
        let mut rng = SeededRng::new(1);
        for _ in 0..20 {
            assert_eq!(rand_coords(35, 35, &spec, &mut rng).unwrap(), Point::new(17, 17));
        }
        assert!(matches!(rand_coords(34, 100, &spec, &mut rng), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn coords_are_seeded() {
        let spec = PatchSpec::new(35);
        let draw = |seed| {
            let mut rng = SeededRng::new(seed);
            (0..50).map(|_| rand_coords(178, 218, &spec, &mut rng).unwrap()).collect::<alloc::vec::Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn coordinate_histogram_is_near_uniform() {
        let spec = PatchSpec::new(35);
        let mut rng = SeededRng::new(12);
        // 4×4 bins over the 144×184 domain (36×46 px each)
        let mut bins = [0u32; 16];
        let n = 100_000;
        for _ in 0..n {
            let p = rand_coords(178, 218, &spec, &mut rng).unwrap();
            let bx = (p.x - 17) as usize / 36;
            let by = (p.y - 17) as usize / 46;
            bins[by * 4 + bx] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = bins.iter().map(|&b| (b as f64 - expected).powi(2) / expected).sum();
        // 15 dof; the 0.999 quantile is about 37.7
        assert!(chi2 < 37.7, "chi2 {chi2}");
        for b in bins {
            assert!(((b as f64 - expected) / expected).abs() < 0.05);
        }
    }

    #[test]
    fn countable_centers() {
        assert_eq!(valid_center_count(178, 218, &PatchSpec::new(35)), 26_496);
        assert_eq!(valid_center_count(178, 218, &PatchSpec::new(35).with_border(30)), 118 * 158);
    }

    #[test]
    fn white_and_impulse_patches() {
        let img = ImageBuf::filled(50, 40, [255, 255, 255]);
        let t = extract_patch(&img, Point::new(20, 20), 35).unwrap();
        assert!(t.data().iter().all(|v| *v == 1.0));

        let mut img = ImageBuf::filled(50, 40, [0, 0, 0]);
        img.set_rgb(25, 19, [255, 0, 0]);
        let t = extract_patch(&img, Point::new(25, 19), 35).unwrap();
        assert_eq!(t.at(&[0, 17, 17]), 1.0);
        assert_eq!(t.data().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn gray_promotes_to_three_planes() {
        let data = (0..40 * 40).map(|i| (i % 251) as u8).collect();
        let img = ImageBuf::new(40, 40, 1, data).unwrap();
        let t = extract_patch(&img, Point::new(20, 20), 35).unwrap();
        let plane = 35 * 35;
        assert_eq!(&t.data()[..plane], &t.data()[plane..2 * plane]);
        assert_eq!(&t.data()[..plane], &t.data()[2 * plane..]);
    }

    #[test]
    fn out_of_bounds_is_an_error() {
        let img = ImageBuf::filled(50, 40, [0, 0, 0]);
        assert!(extract_patch(&img, Point::new(16, 20), 35).is_err());
        assert!(extract_patch(&img, Point::new(33, 20), 35).is_err());
        assert!(extract_patch(&img, Point::new(32, 22), 35).is_ok());
        let mut buf = vec![0.0; 10];
        assert!(extract_patch_into(&img, Point::new(20, 20), 35, &mut buf).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(PatchSpec::new(34).validate().is_err());
        assert!(PatchSpec::new(35).with_border(10).validate().is_err());
        assert!(PatchSpec::new(35).with_border(30).validate().is_ok());
    }
}
