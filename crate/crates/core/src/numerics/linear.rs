use alloc::vec;

use super::gemm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `out[r, m] = bias[m] + Σ_n x[r, n] · w[m, n]` for `rows` rows.
pub(crate) fn linear_forward_rows(x: &[f32], rows: usize, n: usize, w: &[f32], m: usize, bias: &[f32], out: &mut [f32]) {
    for r in 0..rows {
        out[r * m..(r + 1) * m].copy_from_slice(bias);
    }
    gemm(rows, n, m, x, (n, 1), w, (1, n), 1.0, out, (m, 1));
}

/// Accumulates `dw`/`db`; overwrites `dx` when given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward_rows(
    x: &[f32],
    rows: usize,
    n: usize,
    w: &[f32],
    m: usize,
    grad_out: &[f32],
    dw: &mut [f32],
    db: &mut [f32],
    dx: Option<&mut [f32]>,
) {
    for r in 0..rows {
        for (d, g) in db.iter_mut().zip(&grad_out[r * m..(r + 1) * m]) {
            *d += *g;
        }
    }
    // dw[m, n] += Σ_r grad_out[r, m] · x[r, n]
    gemm(m, rows, n, grad_out, (1, m), x, (n, 1), 1.0, dw, (n, 1));
    if let Some(dx) = dx {
        // dx[r, n] = Σ_m grad_out[r, m] · w[m, n]
        gemm(rows, m, n, grad_out, (m, 1), w, (n, 1), 0.0, dx, (n, 1));
    }
}

fn check(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let [m, n] = *weight.dims() else {
        return Err(Error::Rank {
            op: "linear",
            detail: alloc::format!("weight must be [M,N], got {:?}", weight.dims()),
        });
    };
    let last = *input.dims().last().expect("rank >= 1");
    if last != n {
        return Err(Error::shape("linear", "last", n, last));
    }
    if bias.dims() != [m] {
        return Err(Error::shape("linear", "bias", m, bias.len()));
    }
    Ok((input.len() / n, n, m))
}

/// Affine map over the last axis, broadcast over leading axes.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (rows, n, m) = check(input, weight, bias)?;
    let mut out = vec![0.0; rows * m];
    linear_forward_rows(input.data(), rows, n, weight.data(), m, bias.data(), &mut out);
    let mut dims = input.dims().to_vec();
    *dims.last_mut().expect("rank >= 1") = m;
    Tensor::new(&dims, out)
}

#[derive(Clone, Debug)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn linear_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<LinearGrads> {
    let m = weight.dims()[0];
    let (rows, n, m) = check(input, weight, &Tensor::zeros(&[m]))?;
    if grad_out.len() != rows * m {
        return Err(Error::shape("linear_backward", "grad_out", rows * m, grad_out.len()));
    }
    let mut dx = vec![0.0; input.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; m];
    linear_backward_rows(input.data(), rows, n, weight.data(), m, grad_out.data(), &mut dw, &mut db, Some(&mut dx));
    Ok(LinearGrads {
        input: Tensor::new(input.dims(), dx)?,
        weight: Tensor::new(weight.dims(), dw)?,
        bias: Tensor::new(&[m], db)?,
    })
}
