use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Softplus input above this is passed through unchanged.
const SOFTPLUS_CLAMP: f32 = 20.0;

#[inline]
fn softplus(x: f32) -> f32 {
    if x > SOFTPLUS_CLAMP {
        x
    } else {
        libm::log1pf(libm::expf(x))
    }
}

/// `x · tanh(ln(1 + eˣ))`.
#[inline]
pub fn mish_scalar(x: f32) -> f32 {
    x * libm::tanhf(softplus(x))
}

/// d/dx mish = tanh(sp) + x · sech²(sp) · σ(x).
#[inline]
pub fn mish_grad_scalar(x: f32) -> f32 {
    let t = libm::tanhf(softplus(x));
    let sigmoid = 1.0 / (1.0 + libm::expf(-x.max(-SOFTPLUS_CLAMP * 4.0)));
    t + x * (1.0 - t * t) * sigmoid
}

pub(crate) fn mish_in_place(x: &mut [f32]) {
    for v in x {
        *v = mish_scalar(*v);
    }
}

/// `grad[i] *= mish'(pre[i])`.
pub(crate) fn mish_backward_in_place(pre: &[f32], grad: &mut [f32]) {
    for (g, x) in grad.iter_mut().zip(pre) {
        *g *= mish_grad_scalar(*x);
    }
}

pub fn mish(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    mish_in_place(y.data_mut());
    y
}

/// Upstream gradient pulled back through mish evaluated at `input`.
pub fn mish_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if input.dims() != grad_out.dims() {
        return Err(Error::shape("mish_backward", "element count", input.len(), grad_out.len()));
    }
    let mut g = grad_out.clone();
    mish_backward_in_place(input.data(), g.data_mut());
    Ok(g)
}

/// Per-element multipliers for inverted dropout: 0 or 1/(1−p).
pub(crate) fn dropout_mask(n: usize, p: f32, rng: &mut SeededRng) -> Vec<f32> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.unit_f32() < p { 0.0 } else { keep }).collect()
}

/// Inverted dropout. Identity in inference mode or when `p == 0`.
pub fn dropout(x: &Tensor, p: f32, training: bool, rng: &mut SeededRng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::param("dropout p", alloc::format!("must be in [0, 1), got {p}")));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.len(), p, rng);
    let mut y = x.clone();
    for (v, m) in y.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    Ok(y)
}
