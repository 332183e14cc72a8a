//! Finite-difference verification of [`Model::backward`].
//!
//! The numeric side runs its own naive, loop-based forward pass in `f64`; it
//! shares nothing with the GEMM kernels except the parameter values.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::{ArchConfig, LayerGrads, Model, ParamId, Tape, CONV1_K, CONV1_OUT, CONV2_K, CONV2_OUT, ROW_EMBED};
use crate::numerics::mse_loss_backward;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Parameters sampled per layer (weights and bias pooled); a layer with
    /// fewer parameters is checked exhaustively.
    pub per_layer: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-3,
            per_layer: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter with the worst relative error.
    pub worst: (ParamId, usize),
    pub checked: usize,
    /// Count of checked parameters per layer.
    pub per_layer: [usize; 7],
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn mish64(x: f64) -> f64 {
    let sp = if x > 20.0 { x } else { libm::log1p(libm::exp(x)) };
    x * libm::tanh(sp)
}

/// Naive f64 copy of the network.
struct Oracle {
    arch: ArchConfig,
    params: Vec<Vec<f64>>,
}

impl Oracle {
    fn new(model: &Model) -> Self {
        Oracle {
            arch: *model.arch(),
            params: model.params().map(|(_, t)| t.data().iter().map(|v| *v as f64).collect()).collect(),
        }
    }

    fn p(&self, id: ParamId) -> &[f64] {
        &self.params[id as usize]
    }

    fn conv(&self, x: &[f64], c: usize, hw: usize, o: usize, k: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
        let ohw = hw - k + 1;
        let mut out = vec![0.0; o * ohw * ohw];
        for oc in 0..o {
            for y in 0..ohw {
                for xx in 0..ohw {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for i in 0..k {
                            let xrow = &x[(ic * hw + y + i) * hw + xx..][..k];
                            let wrow = &w[((oc * c + ic) * k + i) * k..][..k];
                            acc += xrow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    out[(oc * ohw + y) * ohw + xx] = acc;
                }
            }
        }
        out
    }

    fn affine(x: &[f64], rows: usize, n: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
        let m = b.len();
        let mut out = vec![0.0; rows * m];
        for r in 0..rows {
            for j in 0..m {
                out[r * m + j] = b[j] + x[r * n..(r + 1) * n].iter().zip(&w[j * n..(j + 1) * n]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        out
    }

    /// Affine output of layer `l` (0..7) given its input.
    fn layer(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let s = self.arch.patch_size;
        let spatial = self.arch.spatial();
        let w = self.p(ParamId::ALL[2 * l]);
        let b = self.p(ParamId::ALL[2 * l + 1]);
        match l {
            0 => self.conv(x, 3, s, CONV1_OUT, CONV1_K, w, b),
            1 => self.conv(x, CONV1_OUT, s - CONV1_K + 1, CONV2_OUT, CONV2_K, w, b),
            2 => Self::affine(x, CONV2_OUT, spatial, w, b),
            3 => Self::affine(x, 1, CONV2_OUT * ROW_EMBED, w, b),
            _ => Self::affine(x, 1, x.len(), w, b),
        }
    }

    /// Inputs to every layer for the current parameters.
    fn inputs(&self, patch: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![patch.to_vec()];
        for l in 0..6 {
            let mut a = self.layer(l, &acts[l]);
            a.iter_mut().for_each(|v| *v = mish64(*v));
            acts.push(a);
        }
        acts
    }

    fn loss_from(&self, l: usize, input: &[f64], target: &[f64]) -> f64 {
        let mut a = input.to_vec();
        for k in l..7 {
            a = self.layer(k, &a);
            if k < 6 {
                a.iter_mut().for_each(|v| *v = mish64(*v));
            }
        }
        a.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / a.len() as f64
    }
}

/// Analytic gradients of the MSE loss for one patch.
pub fn analytic_grads(model: &Model, patch: &Tensor, target: &Tensor) -> Result<LayerGrads> {
    let s = model.patch_size();
    let c = model.channels();
    let batch = patch.clone().reshape(&[1, 3, s, s])?;
    let target = target.clone().reshape(&[1, c])?;
    let mut tape = Tape::new();
    let out = model.forward_train(&batch, &mut SeededRng::new(0), &mut tape)?;
    model.backward(&tape, &mse_loss_backward(&out, &target)?, true)
}

/// Compares `analytic` against central differences of the `f64` oracle loss.
pub fn compare_gradients(
    model: &Model,
    patch: &Tensor,
    target: &Tensor,
    analytic: &LayerGrads,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(cfg.eps > 0.0) {
        return Err(Error::param("eps", alloc::format!("must be positive, got {}", cfg.eps)));
    }
    let s = model.patch_size();
    if patch.len() != 3 * s * s {
        return Err(Error::shape("grad_check", "patch", 3 * s * s, patch.len()));
    }
    if target.len() != model.channels() {
        return Err(Error::shape("grad_check", "target", model.channels(), target.len()));
    }
    let mut oracle = Oracle::new(model);
    let patch64: Vec<f64> = patch.data().iter().map(|v| *v as f64).collect();
    let target64: Vec<f64> = target.data().iter().map(|v| *v as f64).collect();
    let inputs = oracle.inputs(&patch64);
    let mut rng = SeededRng::new(cfg.seed);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (ParamId::Conv1W, 0),
        checked: 0,
        per_layer: [0; 7],
    };
    for layer in 0..7 {
        let (wid, bid) = (ParamId::ALL[2 * layer], ParamId::ALL[2 * layer + 1]);
        let (nw, nb) = (oracle.p(wid).len(), oracle.p(bid).len());
        let total = nw + nb;
        let picks: Vec<usize> = if cfg.per_layer >= total {
            (0..total).collect()
        } else {
            (0..cfg.per_layer).map(|_| rng.below(total as u64) as usize).collect()
        };
        for flat in picks {
            let (id, idx) = if flat < nw { (wid, flat) } else { (bid, flat - nw) };
            let orig = oracle.params[id as usize][idx];
            oracle.params[id as usize][idx] = orig + cfg.eps;
            let plus = oracle.loss_from(layer, &inputs[layer], &target64);
            oracle.params[id as usize][idx] = orig - cfg.eps;
            let minus = oracle.loss_from(layer, &inputs[layer], &target64);
            oracle.params[id as usize][idx] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let err = relative_error(analytic.get(id).data()[idx] as f64, numeric);
            if err > report.max_rel_error || report.checked == 0 {
                report.max_rel_error = err;
                report.worst = (id, idx);
            }
            report.checked += 1;
            report.per_layer[layer] += 1;
        }
    }
    Ok(report)
}

/// Worst relative error between the network's analytic gradients and `f64`
/// central differences, over a random subsample of parameters per layer.
/// Dropout is disabled for the check.
pub fn grad_check(model: &Model, patch: &Tensor, target: &Tensor, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut model = model.clone();
    if model.arch().dropout != 0.0 {
        let arch = ArchConfig {
            dropout: 0.0,
            ..*model.arch()
        };
        let params = model.params().map(|(_, t)| t.clone()).collect();
        model = Model::from_params(arch, model.init_scheme(), params)?;
    }
    let analytic = analytic_grads(&model, patch, target)?;
    compare_gradients(&model, patch, target, &analytic, cfg)
}
