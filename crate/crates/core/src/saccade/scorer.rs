use alloc::vec;
use alloc::vec::Vec;

use super::field::{dense_heatmap, ScoreField};
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::network::{Model, Tape};
use crate::sampler::extract_patch_into;
use crate::score::{target_into, LandmarkChannels, Point, ScoreParams};
use crate::tensor::Tensor;

/// Something that predicts per-channel scores for a patch center.
pub trait PatchScorer {
    fn channels(&self) -> usize;

    /// Centers closer than this to an image edge are not scored.
    fn border(&self) -> usize;

    /// Writes the scores at `center` into `out` (length [`channels`](Self::channels)).
    fn score_at(&mut self, img: &ImageBuf, center: Point, out: &mut [f32]) -> Result<()>;

    /// Scores at every valid center. The default calls `score_at` per point.
    fn score_field(&mut self, img: &ImageBuf) -> Result<ScoreField> {
        let b = self.border();
        let c = self.channels();
        let (w, h) = (img.width().saturating_sub(2 * b), img.height().saturating_sub(2 * b));
        if w == 0 || h == 0 {
            return Err(Error::ImageTooSmall {
                id: None,
                width: img.width(),
                height: img.height(),
                needed: 2 * b + 1,
            });
        }
        let mut data = vec![0.0; c * w * h];
        let mut buf = vec![0.0; c];
        for y in 0..h {
            for x in 0..w {
                self.score_at(img, Point::new((x + b) as i32, (y + b) as i32), &mut buf)?;
                for (ch, v) in buf.iter().enumerate() {
                    data[ch * w * h + y * w + x] = *v;
                }
            }
        }
        ScoreField::new(c, w, h, b, data)
    }
}

/// Scores patches with a trained model, one forward pass per point.
pub struct NetworkScorer<'m> {
    model: &'m Model,
    tape: Tape,
    patch: Vec<f32>,
}

impl<'m> NetworkScorer<'m> {
    pub fn new(model: &'m Model) -> Self {
        let s = model.patch_size();
        NetworkScorer {
            model,
            tape: Tape::new(),
            patch: vec![0.0; 3 * s * s],
        }
    }
}

impl PatchScorer for NetworkScorer<'_> {
    fn channels(&self) -> usize {
        self.model.channels()
    }

    fn border(&self) -> usize {
        self.model.patch_size() / 2
    }

    fn score_at(&mut self, img: &ImageBuf, center: Point, out: &mut [f32]) -> Result<()> {
        let s = self.model.patch_size();
        extract_patch_into(img, center, s, &mut self.patch)?;
        let batch = Tensor::new(&[1, 3, s, s], core::mem::take(&mut self.patch))?;
        let pred = self.model.forward_with(&batch, &mut self.tape);
        self.patch = batch.into_data();
        let pred = pred?;
        out.copy_from_slice(pred.data());
        Ok(())
    }

    fn score_field(&mut self, img: &ImageBuf) -> Result<ScoreField> {
        dense_heatmap(self.model, img)
    }
}

/// A perfect scorer: the exact target score from known landmarks. Ignores
/// image content.
#[derive(Clone, Debug)]
pub struct AnalyticScorer {
    pub landmarks: LandmarkChannels,
    pub params: ScoreParams,
    pub border: usize,
}

impl PatchScorer for AnalyticScorer {
    fn channels(&self) -> usize {
        self.landmarks.len()
    }

    fn border(&self) -> usize {
        self.border
    }

    fn score_at(&mut self, img: &ImageBuf, center: Point, out: &mut [f32]) -> Result<()> {
        let b = self.border as i64;
        let (x, y) = (center.x as i64, center.y as i64);
        if x < b || y < b || x >= img.width() as i64 - b || y >= img.height() as i64 - b {
            return Err(Error::OutOfBounds {
                what: "score center",
                x,
                y,
            });
        }
        target_into(center, &self.landmarks, &self.params, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ArchConfig;
    use crate::rng::SeededRng;
    use alloc::string::String;

    #[test]
    fn network_point_and_field_agree() {
        let model = Model::init(ArchConfig::default(), &mut SeededRng::new(2)).unwrap();
        let img = crate::sampler::synth_image(5, &Default::default()).unwrap().image;
        let mut scorer = NetworkScorer::new(&model);
        let field = scorer.score_field(&img).unwrap();
        let mut out = [0.0; 3];
        for p in [Point::new(17, 17), Point::new(160, 200), Point::new(90, 100)] {
            scorer.score_at(&img, p, &mut out).unwrap();
            for c in 0..3 {
                assert!((field.at(c, p).unwrap() - out[c]).abs() < 1e-5);
            }
        }
        assert!(scorer.score_at(&img, Point::new(16, 50), &mut out).is_err());
    }

    #[test]
    fn analytic_field() {
        let lm = LandmarkChannels::new(vec![(String::from("a"), vec![Point::new(30, 30)])]);
        let mut scorer = AnalyticScorer {
            landmarks: lm,
            params: ScoreParams::default(),
            border: 5,
        };
        let img = ImageBuf::filled(60, 50, [0, 0, 0]);
        let field = scorer.score_field(&img).unwrap();
        assert_eq!((field.width, field.height), (50, 40));
        assert_eq!(field.argmax(0), (Point::new(30, 30), 1.0));
        assert_eq!(field.at(0, Point::new(50, 30)), Some(0.25));
        let mut out = [0.0];
        assert!(scorer.score_at(&img, Point::new(55, 30), &mut out).is_err());
    }
}
