use alloc::vec;
use alloc::vec::Vec;

use super::scorer::PatchScorer;
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::score::Point;

/// Probe order; earlier directions win ties.
const DIRS: [(i32, i32); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClimbParams {
    /// Probe distances, coarse to fine.
    pub steps: Vec<usize>,
    pub max_iters: usize,
}

impl Default for ClimbParams {
    fn default() -> Self {
        ClimbParams {
            steps: vec![4, 2, 1],
            max_iters: 50,
        }
    }
}

impl ClimbParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() || self.steps.contains(&0) {
            return Err(Error::param("climb steps", "need at least one positive step"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Climb {
    pub point: Point,
    pub score: f32,
    /// Scorer calls made by this climb (cache hits are free).
    pub evals: usize,
    pub iterations: usize,
}

/// Memoized scores for one image. Each center is scored at most once.
pub struct EvalCache<'a, S: PatchScorer> {
    scorer: &'a mut S,
    img: &'a ImageBuf,
    channels: usize,
    border: i32,
    slots: Vec<Option<u32>>,
    values: Vec<f32>,
}

impl<'a, S: PatchScorer> EvalCache<'a, S> {
    pub fn new(scorer: &'a mut S, img: &'a ImageBuf) -> Self {
        let channels = scorer.channels();
        let border = scorer.border() as i32;
        EvalCache {
            scorer,
            img,
            channels,
            border,
            slots: vec![None; img.width() * img.height()],
            values: Vec::new(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Distinct centers scored so far.
    pub fn evals(&self) -> usize {
        self.values.len() / self.channels.max(1)
    }

    /// Whether `p` is a legal center.
    pub fn admits(&self, p: Point) -> bool {
        let b = self.border;
        p.x >= b && p.y >= b && p.x < self.img.width() as i32 - b && p.y < self.img.height() as i32 - b
    }

    pub fn scores(&mut self, p: Point) -> Result<&[f32]> {
        if !self.admits(p) {
            return Err(Error::OutOfBounds {
                what: "climb point",
                x: p.x as i64,
                y: p.y as i64,
            });
        }
        let i = p.y as usize * self.img.width() + p.x as usize;
        let c = self.channels;
        let slot = match self.slots[i] {
            Some(s) => s as usize,
            None => {
                let s = self.values.len() / c;
                self.values.resize(self.values.len() + c, 0.0);
                self.scorer.score_at(self.img, p, &mut self.values[s * c..])?;
                self.slots[i] = Some(s as u32);
                s
            }
        };
        Ok(&self.values[slot * c..(slot + 1) * c])
    }

    /// Climbs `channel` from `start`, reusing scores already in the cache.
    ///
    /// At each step size the eight neighbors are probed and the climb moves to
    /// the best one only if it strictly improves; otherwise the step shrinks.
    /// A start with no positive score is returned unchanged.
    pub fn climb(&mut self, start: Point, channel: usize, params: &ClimbParams) -> Result<Climb> {
        params.validate()?;
        if channel >= self.channels {
            return Err(Error::param("channel", alloc::format!("{channel} out of range for {} channels", self.channels)));
        }
        let before = self.evals();
        let mut cur = start;
        let mut best = self.scores(start)?[channel];
        let mut iterations = 0;
        let mut step = 0;
        // flat zero region: no gradient to follow
        let plateau = !(best > 0.0);
        while !plateau && step < params.steps.len() && iterations < params.max_iters {
            iterations += 1;
            let s = params.steps[step] as i32;
            let mut next = None;
            let mut next_score = best;
            for (dx, dy) in DIRS {
                let q = cur.offset(dx * s, dy * s);
                if !self.admits(q) {
                    continue;
                }
                let v = self.scores(q)?[channel];
                if v > next_score {
                    next = Some(q);
                    next_score = v;
                }
            }
            match next {
                Some(q) => {
                    cur = q;
                    best = next_score;
                }
                None => step += 1,
            }
        }
        Ok(Climb {
            point: cur,
            score: best,
            evals: self.evals() - before,
            iterations,
        })
    }
}

/// Single climb on a fresh cache.
pub fn hill_climb<S: PatchScorer>(
    scorer: &mut S,
    img: &ImageBuf,
    start: Point,
    channel: usize,
    params: &ClimbParams,
) -> Result<Climb> {
    EvalCache::new(scorer, img).climb(start, channel, params)
}
