//! Dense layer kernels: valid cross-correlation, affine maps, Mish, inverted
//! dropout and mean-squared error, each with its hand-written backward.
//!
//! Tensor-level functions validate shapes and allocate their outputs. The
//! slice-level `pub(crate)` kernels underneath are what the network's batched
//! forward and backward passes call directly.

mod act;
mod conv;
mod linear;
mod loss;

pub use act::{dropout, mish, mish_backward, mish_grad_scalar, mish_scalar};
pub use conv::{conv2d_valid, conv2d_valid_backward, ConvGrads};
pub use linear::{linear, linear_backward, LinearGrads};
pub use loss::{mse_loss, mse_loss_backward};

pub(crate) use act::{dropout_mask, mish_backward_in_place, mish_in_place};
pub(crate) use conv::{conv_backward_sample, conv_forward_sample, im2col, ConvGeom};
pub(crate) use linear::{linear_backward_rows, linear_forward_rows};

/// `c = a·b + beta·c` for row/column-strided matrices, `a` is m×k, `b` is k×n.
///
/// Panics if any stride walks outside its slice.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: c out of range");
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    assert!(last(m, k, rsa, csa) < a.len(), "gemm: a out of range");
    assert!(last(k, n, rsb, csb) < b.len(), "gemm: b out of range");
    // SAFETY: every index the kernel touches is bounded by the asserts above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
