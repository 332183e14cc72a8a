//! The fixed patch-scoring network.
//!
//! ```text
//! [B,3,S,S] -conv1 16x16-> [B,9,S-15,S-15] -drop,mish-> -conv2 11x11-> [B,18,S-25,S-25]
//!   -flatten spatial-> [B,18,side²] -drop,mish-> -linear1 (per channel row)-> [B,18,50]
//!   -flatten-> [B,900] -drop,mish-> 256 -drop,mish-> 64 -drop,mish-> 16 -drop,mish-> C
//! ```
//!
//! No activation follows the last affine layer, so predictions are unbounded.

mod dense;
mod forward;

pub use forward::Tape;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const CONV1_OUT: usize = 9;
pub const CONV1_K: usize = 16;
pub const CONV2_OUT: usize = 18;
pub const CONV2_K: usize = 11;
/// Width of the per-channel spatial embedding (linear1 output).
pub const ROW_EMBED: usize = 50;
pub const HIDDEN: [usize; 3] = [256, 64, 16];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArchConfig {
    pub patch_size: usize,
    /// Output channels, one per landmark channel.
    pub channels: usize,
    pub dropout: f32,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            patch_size: 35,
            channels: 3,
            dropout: 0.0,
        }
    }
}

impl ArchConfig {
    /// Side of the conv2 output map.
    pub fn side(&self) -> usize {
        self.patch_size + 2 - CONV1_K - CONV2_K
    }

    /// Flattened spatial size feeding linear1.
    pub fn spatial(&self) -> usize {
        self.side() * self.side()
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < CONV1_K + CONV2_K - 1 || self.patch_size.is_multiple_of(2) {
            return Err(Error::param(
                "patch size",
                format!("must be odd and at least {}, got {}", CONV1_K + CONV2_K - 1, self.patch_size),
            ));
        }
        if self.channels == 0 {
            return Err(Error::param("output channels", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param("dropout p", format!("must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn param_dims(&self, id: ParamId) -> Vec<usize> {
        use ParamId::*;
        let c = self.channels;
        match id {
            Conv1W => alloc::vec![CONV1_OUT, 3, CONV1_K, CONV1_K],
            Conv1B => alloc::vec![CONV1_OUT],
            Conv2W => alloc::vec![CONV2_OUT, CONV1_OUT, CONV2_K, CONV2_K],
            Conv2B => alloc::vec![CONV2_OUT],
            Linear1W => alloc::vec![ROW_EMBED, self.spatial()],
            Linear1B => alloc::vec![ROW_EMBED],
            Linear2W => alloc::vec![HIDDEN[0], ROW_EMBED * CONV2_OUT],
            Linear2B => alloc::vec![HIDDEN[0]],
            Linear3W => alloc::vec![HIDDEN[1], HIDDEN[0]],
            Linear3B => alloc::vec![HIDDEN[1]],
            Linear4W => alloc::vec![HIDDEN[2], HIDDEN[1]],
            Linear4B => alloc::vec![HIDDEN[2]],
            Linear5W => alloc::vec![c, HIDDEN[2]],
            Linear5B => alloc::vec![c],
        }
    }

    pub fn param_count(&self) -> usize {
        ParamId::ALL
            .iter()
            .map(|id| self.param_dims(*id).iter().product::<usize>())
            .sum()
    }
}

/// Parameter tensors in storage (and file) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamId {
    Conv1W,
    Conv1B,
    Conv2W,
    Conv2B,
    Linear1W,
    Linear1B,
    Linear2W,
    Linear2B,
    Linear3W,
    Linear3B,
    Linear4W,
    Linear4B,
    Linear5W,
    Linear5B,
}

impl ParamId {
    pub const ALL: [ParamId; 14] = [
        ParamId::Conv1W,
        ParamId::Conv1B,
        ParamId::Conv2W,
        ParamId::Conv2B,
        ParamId::Linear1W,
        ParamId::Linear1B,
        ParamId::Linear2W,
        ParamId::Linear2B,
        ParamId::Linear3W,
        ParamId::Linear3B,
        ParamId::Linear4W,
        ParamId::Linear4B,
        ParamId::Linear5W,
        ParamId::Linear5B,
    ];

    pub fn name(self) -> &'static str {
        [
            "conv1.w", "conv1.b", "conv2.w", "conv2.b", "linear1.w", "linear1.b", "linear2.w", "linear2.b",
            "linear3.w", "linear3.b", "linear4.w", "linear4.b", "linear5.w", "linear5.b",
        ][self as usize]
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        ParamId::ALL.into_iter().find(|id| id.name() == name)
    }

    /// Index of the layer (0..7) the parameter belongs to.
    pub fn layer(self) -> usize {
        self as usize / 2
    }

    pub fn is_bias(self) -> bool {
        self as usize % 2 == 1
    }

    /// Fan-in of the owning layer.
    pub fn fan_in(self, arch: &ArchConfig) -> usize {
        let w = ParamId::ALL[self.layer() * 2];
        arch.param_dims(w)[1..].iter().product()
    }
}

/// How the parameters were initialized; recorded in model files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum InitScheme {
    /// All parameters zero.
    Zero = 0,
    /// Weights ~ U(−1/√fan_in, 1/√fan_in), biases zero.
    UniformFanIn = 1,
}

impl InitScheme {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(InitScheme::Zero),
            1 => Some(InitScheme::UniformFanIn),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: ArchConfig,
    init: InitScheme,
    params: Vec<Tensor>,
}

/// Gradients for every parameter, plus the input gradient when requested.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub params: Vec<Tensor>,
    pub input: Option<Tensor>,
}

impl LayerGrads {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id as usize]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id as usize]
    }
}

impl Model {
    pub fn zeros(arch: ArchConfig) -> Result<Model> {
        arch.validate()?;
        let params = ParamId::ALL.iter().map(|id| Tensor::zeros(&arch.param_dims(*id))).collect();
        Ok(Model {
            arch,
            init: InitScheme::Zero,
            params,
        })
    }

    /// Uniform fan-in initialization; deterministic per generator state.
    pub fn init(arch: ArchConfig, rng: &mut SeededRng) -> Result<Model> {
        let mut model = Model::zeros(arch)?;
        model.init = InitScheme::UniformFanIn;
        for id in ParamId::ALL {
            if id.is_bias() {
                continue;
            }
            let bound = 1.0 / libm::sqrtf(id.fan_in(&arch) as f32);
            for v in model.params[id as usize].data_mut() {
                *v = rng.uniform_f32(-bound, bound);
            }
        }
        Ok(model)
    }

    /// Assembles a model from tensors in [`ParamId::ALL`] order.
    pub fn from_params(arch: ArchConfig, init: InitScheme, params: Vec<Tensor>) -> Result<Model> {
        arch.validate()?;
        if params.len() != ParamId::ALL.len() {
            return Err(Error::ArchMismatch(format!("expected 14 tensors, got {}", params.len())));
        }
        for (id, t) in ParamId::ALL.iter().zip(&params) {
            let want = arch.param_dims(*id);
            if t.dims() != want.as_slice() {
                return Err(Error::ArchMismatch(format!("{} has dims {:?}, expected {:?}", id.name(), t.dims(), want)));
            }
        }
        Ok(Model { arch, init, params })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn init_scheme(&self) -> InitScheme {
        self.init
    }

    pub fn param(&self, id: ParamId) -> &Tensor {
        &self.params[id as usize]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id as usize]
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        ParamId::ALL.iter().copied().zip(&self.params)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn patch_size(&self) -> usize {
        self.arch.patch_size
    }

    pub fn channels(&self) -> usize {
        self.arch.channels
    }

    /// Zeroed gradient container matching this model.
    pub fn zero_grads(&self) -> LayerGrads {
        LayerGrads {
            params: self.params.iter().map(|t| Tensor::zeros(t.dims())).collect(),
            input: None,
        }
    }
}
