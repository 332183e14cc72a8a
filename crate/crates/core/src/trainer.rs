//! SGD-with-momentum training on DiFT targets, one source image per batch.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::{LayerGrads, Model, Tape};
use crate::numerics::{mse_loss, mse_loss_backward};
use crate::rng::SeededRng;
use crate::saccade::{boundary_chains, saccade_points, BoundaryParams};
use crate::sampler::{extract_patch_into, rand_coords, LabeledImage, PatchSpec, SamplingMode};
use crate::score::{target_into, Point, ScoreParams};
use crate::tensor::Tensor;

/// Random stream ids derived from [`TrainConfig::seed`].
pub const INIT_STREAM: u64 = 0;
const SAMPLING_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    pub seed: u64,
    pub patch: PatchSpec,
    pub score: ScoreParams,
    pub sampling: SamplingMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batches: 1000,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
            patch: PatchSpec::default(),
            score: ScoreParams::default(),
            sampling: SamplingMode::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::param("lr", alloc::format!("must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum", alloc::format!("must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size", "must be at least 1"));
        }
        self.patch.validate()?;
        self.score.validate()
    }
}

/// Per-batch losses and their running mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub losses: Vec<f32>,
    pub running_mean: Vec<f64>,
    sum: f64,
}

impl LossTrace {
    pub fn push(&mut self, loss: f32) {
        self.sum += loss as f64;
        self.losses.push(loss);
        self.running_mean.push(self.sum / self.losses.len() as f64);
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    /// Mean loss over batches `range`.
    pub fn window_mean(&self, range: core::ops::Range<usize>) -> f64 {
        let w = &self.losses[range];
        w.iter().map(|v| *v as f64).sum::<f64>() / w.len() as f64
    }
}

/// Momentum buffers, one per parameter tensor, starting at zero.
#[derive(Clone, Debug)]
pub struct SgdState {
    velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn new(model: &Model) -> Self {
        SgdState {
            velocity: model.params().map(|(_, t)| Tensor::zeros(t.dims())).collect(),
        }
    }
}

/// `v ← μ·v + g; θ ← θ − lr·v` for every parameter.
pub fn sgd_step(model: &mut Model, grads: &LayerGrads, state: &mut SgdState, lr: f32, momentum: f32) -> Result<()> {
    for ((id, g), v) in crate::network::ParamId::ALL.iter().zip(&grads.params).zip(&state.velocity) {
        let want = model.param(*id).dims();
        if g.dims() != want || v.dims() != want {
            return Err(Error::shape("sgd_step", id.name(), model.param(*id).len(), g.len()));
        }
    }
    for ((id, g), v) in crate::network::ParamId::ALL.iter().zip(&grads.params).zip(&mut state.velocity) {
        let theta = model.param_mut(*id).data_mut();
        for ((t, v), g) in theta.iter_mut().zip(v.data_mut()).zip(g.data()) {
            *v = momentum * *v + *g;
            *t -= lr * *v;
        }
    }
    Ok(())
}

fn check_dataset(model: &Model, dataset: &[LabeledImage], cfg: &TrainConfig) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::param("dataset", "is empty"));
    }
    if cfg.patch.size != model.patch_size() {
        return Err(Error::ArchMismatch(alloc::format!(
            "patch size {} but model expects {}",
            cfg.patch.size,
            model.patch_size()
        )));
    }
    for item in dataset {
        let (w, h) = (item.image.width(), item.image.height());
        if w <= 2 * cfg.patch.border || h <= 2 * cfg.patch.border {
            return Err(Error::ImageTooSmall {
                id: Some(item.id.clone()),
                width: w,
                height: h,
                needed: 2 * cfg.patch.border,
            });
        }
        if item.landmarks.len() != model.channels() {
            return Err(Error::ArchMismatch(alloc::format!(
                "image {} has {} landmark channels, model outputs {}",
                item.id,
                item.landmarks.len(),
                model.channels()
            )));
        }
        for (name, pts) in &item.landmarks.channels {
            if pts.is_empty() {
                return Err(Error::EmptyChannel { channel: name.clone() });
            }
        }
    }
    Ok(())
}

/// Draws one training batch from a single image.
pub struct BatchSampler<'a> {
    dataset: &'a [LabeledImage],
    cfg: &'a TrainConfig,
    rng: SeededRng,
    saccade_cache: Vec<Option<Vec<Point>>>,
}

impl<'a> BatchSampler<'a> {
    pub fn new(dataset: &'a [LabeledImage], cfg: &'a TrainConfig) -> Self {
        BatchSampler {
            dataset,
            cfg,
            rng: SeededRng::stream(cfg.seed, SAMPLING_STREAM),
            saccade_cache: alloc::vec![None; dataset.len()],
        }
    }

    fn center(&mut self, index: usize) -> Result<Point> {
        let item = &self.dataset[index];
        let (w, h) = (item.image.width(), item.image.height());
        if self.cfg.sampling == SamplingMode::SaccadeCentered {
            if self.saccade_cache[index].is_none() {
                let chains = boundary_chains(&item.image, &BoundaryParams::default())?;
                self.saccade_cache[index] = Some(saccade_points(&chains, 5, self.cfg.patch.border));
            }
            let pts = self.saccade_cache[index].as_ref().expect("filled above");
            if !pts.is_empty() {
                return Ok(pts[self.rng.below(pts.len() as u64) as usize]);
            }
        }
        rand_coords(w, h, &self.cfg.patch, &mut self.rng)
    }

    /// Fills `inputs` (`[B,3,S,S]`) and `targets` (`[B,C]`); returns the image index.
    pub fn next_batch(&mut self, inputs: &mut Tensor, targets: &mut Tensor) -> Result<usize> {
        let index = self.rng.below(self.dataset.len() as u64) as usize;
        let s = self.cfg.patch.size;
        let c = targets.dims()[1];
        for j in 0..self.cfg.batch_size {
            let center = self.center(index)?;
            let item = &self.dataset[index];
            extract_patch_into(&item.image, center, s, &mut inputs.data_mut()[j * 3 * s * s..(j + 1) * 3 * s * s])?;
            target_into(center, &item.landmarks, &self.cfg.score, &mut targets.data_mut()[j * c..(j + 1) * c])?;
        }
        Ok(index)
    }
}

/// Runs `cfg.batches` SGD steps. `observer` sees `(batch, loss, running_mean)`
/// after every step.
pub fn train_with(
    mut model: Model,
    dataset: &[LabeledImage],
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, f32, f64),
) -> Result<(Model, LossTrace)> {
    cfg.validate()?;
    check_dataset(&model, dataset, cfg)?;
    let (s, c, b) = (cfg.patch.size, model.channels(), cfg.batch_size);
    let mut sampler = BatchSampler::new(dataset, cfg);
    let mut dropout_rng = SeededRng::stream(cfg.seed, DROPOUT_STREAM);
    let mut state = SgdState::new(&model);
    let mut tape = Tape::new();
    let mut inputs = Tensor::zeros(&[b, 3, s, s]);
    let mut targets = Tensor::zeros(&[b, c]);
    let mut trace = LossTrace::default();

    for batch in 0..cfg.batches {
        sampler.next_batch(&mut inputs, &mut targets)?;
        let out = model.forward_train(&inputs, &mut dropout_rng, &mut tape)?;
        let loss = mse_loss(&out, &targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { batch });
        }
        let grads = model.backward(&tape, &mse_loss_backward(&out, &targets)?, false)?;
        sgd_step(&mut model, &grads, &mut state, cfg.lr, cfg.momentum)?;
        trace.push(loss);
        observer(batch, loss, *trace.running_mean.last().expect("just pushed"));
    }
    Ok((model, trace))
}

pub fn train(model: Model, dataset: &[LabeledImage], cfg: &TrainConfig) -> Result<(Model, LossTrace)> {
    train_with(model, dataset, cfg, |_, _, _| {})
}
