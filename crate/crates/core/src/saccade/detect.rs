use alloc::vec::Vec;

use super::boundary::{boundary_chains, saccade_points, BoundaryParams};
use super::climb::{ClimbParams, EvalCache};
use super::scorer::PatchScorer;
use super::Detection;
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::score::{euclid_dist, Point};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DetectMode {
    /// Score every valid center, keep thresholded local maxima.
    Dense,
    /// Climb from boundary-chain points.
    #[default]
    Saccade,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectParams {
    pub threshold: f32,
    pub nms_radius: f64,
    /// Channels scoring below this at a start point are not climbed.
    pub min_start_score: f32,
    pub stride: usize,
    pub boundary: BoundaryParams,
    pub climb: ClimbParams,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            threshold: 0.5,
            nms_radius: 20.0,
            min_start_score: 0.05,
            stride: 5,
            boundary: BoundaryParams::default(),
            climb: ClimbParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRun {
    pub detections: Vec<Detection>,
    /// Distinct centers scored.
    pub evals: usize,
    /// Climb start points (0 in dense mode).
    pub starts: usize,
}

/// Greedy per-channel non-maximum suppression. Candidates are taken by
/// descending score (raster order on ties); any candidate within `radius` of
/// a kept detection of the same channel is dropped.
pub fn nms(mut candidates: Vec<Detection>, radius: f64) -> Vec<Detection> {
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.channel.cmp(&b.channel))
            .then((a.point.y, a.point.x).cmp(&(b.point.y, b.point.x)))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for d in candidates {
        if kept.iter().all(|k| k.channel != d.channel || euclid_dist(k.point, d.point) > radius) {
            kept.push(d);
        }
    }
    kept
}

/// Feature detections in `img`.
pub fn detect<S: PatchScorer>(scorer: &mut S, img: &ImageBuf, mode: DetectMode, params: &DetectParams) -> Result<DetectionRun> {
    if !(params.nms_radius >= 0.0) {
        return Err(Error::param("nms_radius", "must be non-negative"));
    }
    match mode {
        DetectMode::Dense => detect_dense(scorer, img, params),
        DetectMode::Saccade => detect_saccade(scorer, img, params),
    }
}

fn detect_dense<S: PatchScorer>(scorer: &mut S, img: &ImageBuf, params: &DetectParams) -> Result<DetectionRun> {
    let field = scorer.score_field(img)?;
    let (w, h) = (field.width as i64, field.height as i64);
    let mut candidates = Vec::new();
    for c in 0..field.channels {
        let plane = field.plane(c);
        for y in 0..h {
            for x in 0..w {
                let v = plane[(y * w + x) as usize];
                if !(v >= params.threshold) {
                    continue;
                }
                let peak = (-1..=1).all(|dy| {
                    (-1..=1).all(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx < 0 || ny < 0 || nx >= w || ny >= h || v >= plane[(ny * w + nx) as usize]
                    })
                });
                if peak {
                    candidates.push(Detection {
                        channel: c,
                        point: field.point_of((y * w + x) as usize),
                        score: v,
                        evals_used: 0,
                    });
                }
            }
        }
    }
    Ok(DetectionRun {
        detections: nms(candidates, params.nms_radius),
        evals: field.width * field.height,
        starts: 0,
    })
}

fn detect_saccade<S: PatchScorer>(scorer: &mut S, img: &ImageBuf, params: &DetectParams) -> Result<DetectionRun> {
    params.climb.validate()?;
    let chains = boundary_chains(img, &params.boundary)?;
    let starts: Vec<Point> = saccade_points(&chains, params.stride, scorer.border());
    let mut cache = EvalCache::new(scorer, img);
    let mut candidates = Vec::new();
    let mut initial = Vec::with_capacity(cache.channels());
    for &start in &starts {
        initial.clear();
        initial.extend_from_slice(cache.scores(start)?);
        for (c, v) in initial.iter().enumerate() {
            if !(*v >= params.min_start_score) {
                continue;
            }
            let climb = cache.climb(start, c, &params.climb)?;
            if climb.score >= params.threshold {
                candidates.push(Detection {
                    channel: c,
                    point: climb.point,
                    score: climb.score,
                    evals_used: climb.evals,
                });
            }
        }
    }
    Ok(DetectionRun {
        detections: nms(candidates, params.nms_radius),
        evals: cache.evals(),
        starts: starts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saccade::AnalyticScorer;
    use crate::sampler::{synth_image, SynthSpec};
    use crate::score::{LandmarkChannels, ScoreParams};
    use alloc::vec;
    use proptest::prelude::*;

    fn det(channel: usize, x: i32, y: i32, score: f32) -> Detection {
        Detection {
            channel,
            point: Point::new(x, y),
            score,
            evals_used: 0,
        }
    }

    #[test]
    fn nms_keeps_strongest() {
        let kept = nms(vec![det(0, 10, 10, 0.6), det(0, 25, 10, 0.9), det(1, 10, 10, 0.7), det(0, 50, 10, 0.6)], 20.0);
        assert_eq!(kept, vec![det(0, 25, 10, 0.9), det(1, 10, 10, 0.7), det(0, 50, 10, 0.6)]);
        // exactly at the radius is suppressed
        assert_eq!(nms(vec![det(0, 0, 0, 1.0), det(0, 20, 0, 0.9)], 20.0).len(), 1);
    }

    fn analytic_for(seed: u64) -> (ImageBuf, AnalyticScorer) {
        let s = synth_image(seed, &SynthSpec::default()).unwrap();
        let scorer = AnalyticScorer {
            landmarks: s.landmarks,
            params: ScoreParams::default(),
            border: 17,
        };
        (s.image, scorer)
    }

    #[test]
    fn dense_finds_every_landmark() {
        let (img, mut scorer) = analytic_for(11);
        let run = detect(&mut scorer, &img, DetectMode::Dense, &DetectParams::default()).unwrap();
        assert_eq!(run.evals, 144 * 184);
        let mut found: Vec<(usize, Point)> = run.detections.iter().map(|d| (d.channel, d.point)).collect();
        let mut want: Vec<(usize, Point)> = scorer.landmarks.iter_points().collect();
        found.sort_by_key(|(c, p)| (*c, p.y, p.x));
        want.sort_by_key(|(c, p)| (*c, p.y, p.x));
        assert_eq!(found, want);
    }

    #[test]
    fn saccade_finds_landmarks_cheaply() {
        for seed in 0..5 {
            let (img, mut scorer) = analytic_for(seed);
            let run = detect(&mut scorer, &img, DetectMode::Saccade, &DetectParams::default()).unwrap();
            assert!(run.starts > 0);
            assert!(run.evals < 144 * 184 / 10, "seed {seed}: {} evals", run.evals);
            for (c, p) in scorer.landmarks.iter_points() {
                assert!(
                    run.detections.iter().any(|d| d.channel == c && euclid_dist(d.point, p) <= 2.0),
                    "seed {seed}: missed {c} {p:?}"
                );
            }
        }
    }

    #[test]
    fn rejects_negative_radius() {
        let (img, mut scorer) = analytic_for(0);
        let p = DetectParams {
            nms_radius: -1.0,
            ..DetectParams::default()
        };
        assert!(detect(&mut scorer, &img, DetectMode::Dense, &p).is_err());
    }

    #[test]
    fn empty_landmarks_is_an_error() {
        let (img, _) = analytic_for(0);
        let mut scorer = AnalyticScorer {
            landmarks: LandmarkChannels::new(vec![(alloc::string::String::from("x"), vec![])]),
            params: ScoreParams::default(),
            border: 17,
        };
        assert!(detect(&mut scorer, &img, DetectMode::Dense, &DetectParams::default()).is_err());
    }

    #[test]
    fn zero_model_detects_nothing() {
        let model = crate::Model::zeros(crate::ArchConfig::default()).unwrap();
        let (img, _) = analytic_for(3);
        let mut scorer = crate::saccade::NetworkScorer::new(&model);
        let dense = detect(&mut scorer, &img, DetectMode::Dense, &DetectParams::default()).unwrap();
        assert!(dense.detections.is_empty());
        let sacc = detect(&mut scorer, &img, DetectMode::Saccade, &DetectParams::default()).unwrap();
        assert!(sacc.detections.is_empty());
        // every start is scored once and skipped
        assert!(sacc.evals <= sacc.starts && sacc.evals > 0);
    }

    #[test]
    fn tolerates_scores_outside_unit_range() {
        let mut model = crate::Model::zeros(crate::ArchConfig::default()).unwrap();
        model.param_mut(crate::ParamId::Linear5B).data_mut().copy_from_slice(&[1.5, -0.5, 0.7]);
        let (img, _) = analytic_for(3);
        let mut scorer = crate::saccade::NetworkScorer::new(&model);
        let dense = detect(&mut scorer, &img, DetectMode::Dense, &DetectParams::default()).unwrap();
        assert!(dense.detections.iter().any(|d| d.channel == 0 && d.score == 1.5));
        assert!(dense.detections.iter().all(|d| d.channel != 1));
        let sacc = detect(&mut scorer, &img, DetectMode::Saccade, &DetectParams::default()).unwrap();
        assert!(sacc.detections.iter().all(|d| d.score >= 0.5));
        let q = crate::saccade::quantize_heatmap(&crate::saccade::dense_heatmap(&model, &img).unwrap());
        assert_eq!(q.plane(0)[0], 0.8);
        assert_eq!(q.plane(1)[0], 0.0);
    }

    proptest! {
        #[test]
        fn nms_output_is_separated(pts in proptest::collection::vec((0usize..2, 0i32..100, 0i32..100, 0.0f32..1.0), 0..60), r in 0.0f64..30.0) {
            let cands: Vec<Detection> = pts.iter().map(|(c, x, y, s)| det(*c, *x, *y, *s)).collect();
            let kept = nms(cands.clone(), r);
            for (i, a) in kept.iter().enumerate() {
                prop_assert!(cands.contains(a));
                for b in &kept[i + 1..] {
                    prop_assert!(a.channel != b.channel || euclid_dist(a.point, b.point) > r);
                }
            }
            // every dropped candidate is covered by a kept one at least as strong
            for c in &cands {
                prop_assert!(kept.iter().any(|k| k.channel == c.channel && euclid_dist(k.point, c.point) <= r.max(0.0) && k.score >= c.score) || kept.contains(c));
            }
        }
    }
}
