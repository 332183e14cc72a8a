use alloc::vec;
use alloc::vec::Vec;

use super::gemm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Upper bound on im2col scratch (floats) before the output is split into row bands.
const MAX_COLS: usize = 1 << 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
}

impl ConvGeom {
    pub fn oh(&self) -> usize {
        self.h - self.k + 1
    }
    pub fn ow(&self) -> usize {
        self.w - self.k + 1
    }
    pub fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }
    pub fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }
    pub fn out_len(&self) -> usize {
        self.o * self.oh() * self.ow()
    }
    /// Output rows per im2col band.
    pub fn band_rows(&self) -> usize {
        (MAX_COLS / (self.ckk() * self.ow())).clamp(1, self.oh())
    }
}

/// Unfold output rows `row0..row1` into `cols`, laid out `[c·k·k, rows·ow]`.
pub(crate) fn im2col(input: &[f32], g: &ConvGeom, row0: usize, row1: usize, cols: &mut [f32]) {
    let (k, w, ow) = (g.k, g.w, g.ow());
    let n = (row1 - row0) * ow;
    for c in 0..g.c {
        let plane = &input[c * g.h * w..(c + 1) * g.h * w];
        for i in 0..k {
            for j in 0..k {
                let r = (c * k + i) * k + j;
                let dst = &mut cols[r * n..(r + 1) * n];
                for (yy, y) in (row0..row1).enumerate() {
                    let src = (y + i) * w + j;
                    dst[yy * ow..(yy + 1) * ow].copy_from_slice(&plane[src..src + ow]);
                }
            }
        }
    }
}

/// Fold `cols` (full output, `[c·k·k, oh·ow]`) back onto `dinput`, accumulating.
pub(crate) fn col2im_add(cols: &[f32], g: &ConvGeom, dinput: &mut [f32]) {
    let (k, w, oh, ow) = (g.k, g.w, g.oh(), g.ow());
    let n = oh * ow;
    for c in 0..g.c {
        let plane = &mut dinput[c * g.h * w..(c + 1) * g.h * w];
        for i in 0..k {
            for j in 0..k {
                let r = (c * k + i) * k + j;
                let src = &cols[r * n..(r + 1) * n];
                for y in 0..oh {
                    let dst = &mut plane[(y + i) * w + j..(y + i) * w + j + ow];
                    for (d, s) in dst.iter_mut().zip(&src[y * ow..(y + 1) * ow]) {
                        *d += *s;
                    }
                }
            }
        }
    }
}

/// One image through a valid cross-correlation. `scratch` is resized as needed;
/// when `keep_cols` is set it ends up holding the full unfolded input.
pub(crate) fn conv_forward_sample(
    input: &[f32],
    g: &ConvGeom,
    weight: &[f32],
    bias: &[f32],
    out: &mut [f32],
    scratch: &mut Vec<f32>,
    keep_cols: bool,
) {
    let (oh, ow, ckk) = (g.oh(), g.ow(), g.ckk());
    let plane = oh * ow;
    for (o, b) in bias.iter().enumerate() {
        out[o * plane..(o + 1) * plane].fill(*b);
    }
    let band = if keep_cols { oh } else { g.band_rows() };
    let mut row0 = 0;
    while row0 < oh {
        let row1 = (row0 + band).min(oh);
        let n = (row1 - row0) * ow;
        scratch.resize(ckk * n, 0.0);
        im2col(input, g, row0, row1, scratch);
        gemm(
            g.o,
            ckk,
            n,
            weight,
            (ckk, 1),
            scratch,
            (n, 1),
            1.0,
            &mut out[row0 * ow..],
            (plane, 1),
        );
        row0 = row1;
    }
}

/// Accumulates weight and bias gradients for one image given its unfolded
/// input; optionally writes (overwrites) the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward_sample(
    cols: &[f32],
    g: &ConvGeom,
    weight: &[f32],
    grad_out: &[f32],
    dweight: &mut [f32],
    dbias: &mut [f32],
    dinput: Option<&mut [f32]>,
    dcols: &mut Vec<f32>,
) {
    let (ckk, n) = (g.ckk(), g.oh() * g.ow());
    for (o, db) in dbias.iter_mut().enumerate() {
        *db += grad_out[o * n..(o + 1) * n].iter().sum::<f32>();
    }
    // dW[o, r] += Σ_p grad_out[o, p] · cols[r, p]
    gemm(g.o, n, ckk, grad_out, (n, 1), cols, (1, n), 1.0, dweight, (ckk, 1));
    if let Some(dinput) = dinput {
        // dcols[r, p] = Σ_o W[o, r] · grad_out[o, p]
        dcols.resize(ckk * n, 0.0);
        gemm(ckk, g.o, n, weight, (1, ckk), grad_out, (n, 1), 0.0, dcols, (n, 1));
        dinput.fill(0.0);
        col2im_add(dcols, g, dinput);
    }
}

fn geometry(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<(usize, ConvGeom)> {
    let (batch, c, h, w) = match *input.dims() {
        [c, h, w] => (None, c, h, w),
        [b, c, h, w] => (Some(b), c, h, w),
        _ => {
            return Err(Error::Rank {
                op: "conv2d_valid",
                detail: alloc::format!("input must be [C,H,W] or [B,C,H,W], got {:?}", input.dims()),
            })
        }
    };
    let [o, wc, kh, kw] = *weight.dims() else {
        return Err(Error::Rank {
            op: "conv2d_valid",
            detail: alloc::format!("weight must be [O,C,K,K], got {:?}", weight.dims()),
        });
    };
    if kh != kw {
        return Err(Error::shape("conv2d_valid", "kernel width", kh, kw));
    }
    if wc != c {
        return Err(Error::shape("conv2d_valid", "channel", wc, c));
    }
    if h < kh {
        return Err(Error::shape("conv2d_valid", "height", kh, h));
    }
    if w < kw {
        return Err(Error::shape("conv2d_valid", "width", kw, w));
    }
    if bias.dims() != [o] {
        return Err(Error::shape("conv2d_valid", "bias", o, bias.len()));
    }
    Ok((batch.map_or(0, |b| b), ConvGeom { c, h, w, o, k: kh }))
}

/// Valid (no padding), stride-1 cross-correlation plus per-channel bias.
///
/// Accepts `[C,H,W]` or batched `[B,C,H,W]` input; weight is `[O,C,K,K]`.
pub fn conv2d_valid(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (batch, g) = geometry(input, weight, bias)?;
    let samples = batch.max(1);
    let mut out = vec![0.0; samples * g.out_len()];
    let mut scratch = Vec::new();
    for s in 0..samples {
        conv_forward_sample(
            &input.data()[s * g.in_len()..(s + 1) * g.in_len()],
            &g,
            weight.data(),
            bias.data(),
            &mut out[s * g.out_len()..(s + 1) * g.out_len()],
            &mut scratch,
            false,
        );
    }
    let dims: Vec<usize> = if batch == 0 {
        vec![g.o, g.oh(), g.ow()]
    } else {
        vec![batch, g.o, g.oh(), g.ow()]
    };
    Tensor::new(&dims, out)
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Gradients of [`conv2d_valid`] given the upstream gradient of its output.
pub fn conv2d_valid_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<ConvGrads> {
    let o = weight.dims().first().copied().unwrap_or(0);
    let bias = Tensor::zeros(&[o.max(1)]);
    let (batch, g) = geometry(input, weight, &bias)?;
    let samples = batch.max(1);
    if grad_out.len() != samples * g.out_len() {
        return Err(Error::shape("conv2d_valid_backward", "grad_out", samples * g.out_len(), grad_out.len()));
    }
    let mut dinput = vec![0.0; input.len()];
    let mut dweight = vec![0.0; weight.len()];
    let mut dbias = vec![0.0; o];
    let (mut cols, mut dcols) = (Vec::new(), Vec::new());
    for s in 0..samples {
        let x = &input.data()[s * g.in_len()..(s + 1) * g.in_len()];
        cols.resize(g.ckk() * g.oh() * g.ow(), 0.0);
        im2col(x, &g, 0, g.oh(), &mut cols);
        conv_backward_sample(
            &cols,
            &g,
            weight.data(),
            &grad_out.data()[s * g.out_len()..(s + 1) * g.out_len()],
            &mut dweight,
            &mut dbias,
            Some(&mut dinput[s * g.in_len()..(s + 1) * g.in_len()]),
            &mut dcols,
        );
    }
    Ok(ConvGrads {
        input: Tensor::new(input.dims(), dinput)?,
        weight: Tensor::new(weight.dims(), dweight)?,
        bias: Tensor::new(&[o], dbias)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    /// Six nested loops, no unfolding.
    fn naive(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
        let [c, h, w] = *input.dims() else { panic!() };
        let [o, _, k, _] = *weight.dims() else { panic!() };
        let (oh, ow) = (h - k + 1, w - k + 1);
        let mut out = Tensor::zeros(&[o, oh, ow]);
        for oc in 0..o {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = bias.at(&[oc]) as f64;
                    for ic in 0..c {
                        for i in 0..k {
                            for j in 0..k {
                                acc += input.at(&[ic, y + i, x + j]) as f64 * weight.at(&[oc, ic, i, j]) as f64;
                            }
                        }
                    }
                    out.set(&[oc, y, x], acc as f32);
                }
            }
        }
        out
    }

    fn random(dims: &[usize], rng: &mut SeededRng) -> Tensor {
        Tensor::from_fn(dims, |_| rng.uniform_f32(-1.0, 1.0))
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = SeededRng::new(1);
        let w = random(&[4, 2, 3, 3], &mut rng);
        let b = Tensor::new(&[4], alloc::vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let out = conv2d_valid(&Tensor::zeros(&[2, 6, 5]), &w, &b).unwrap();
        assert_eq!(out.dims(), &[4, 4, 3]);
        for o in 0..4 {
            for y in 0..4 {
                for x in 0..3 {
                    assert_eq!(out.at(&[o, y, x]), b.at(&[o]));
                }
            }
        }
    }

    #[test]
    fn impulse_response() {
        let mut input = Tensor::zeros(&[1, 3, 3]);
        input.set(&[0, 1, 1], 1.0);
        let w = Tensor::new(&[1, 1, 1, 1], alloc::vec![2.0]).unwrap();
        let out = conv2d_valid(&input, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out.dims(), &[1, 3, 3]);
        for y in 0..3 {
            for x in 0..3 {
                let want = if (y, x) == (1, 1) { 2.0 } else { 0.0 };
                assert_eq!(out.at(&[0, y, x]), want);
            }
        }
    }

    #[test]
    fn appendix_layer_shapes_and_naive_agreement() {
        let mut rng = SeededRng::new(7);
        let x = random(&[3, 35, 35], &mut rng);
        let w1 = random(&[9, 3, 16, 16], &mut rng);
        let b1 = random(&[9], &mut rng);
        let y1 = conv2d_valid(&x, &w1, &b1).unwrap();
        assert_eq!(y1.dims(), &[9, 20, 20]);
        let oracle = naive(&x, &w1, &b1);
        let worst = y1.data().iter().zip(oracle.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(worst <= 1e-4, "worst abs diff {worst}");

        let w2 = random(&[18, 9, 11, 11], &mut rng);
        let b2 = random(&[18], &mut rng);
        let y2 = conv2d_valid(&y1, &w2, &b2).unwrap();
        assert_eq!(y2.dims(), &[18, 10, 10]);
    }

    #[test]
    fn batched_matches_per_sample() {
        let mut rng = SeededRng::new(2);
        let xb = random(&[3, 2, 8, 9], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let yb = conv2d_valid(&xb, &w, &b).unwrap();
        assert_eq!(yb.dims(), &[3, 3, 6, 7]);
        for s in 0..3 {
            let xs = Tensor::new(&[2, 8, 9], xb.data()[s * 144..(s + 1) * 144].to_vec()).unwrap();
            let ys = conv2d_valid(&xs, &w, &b).unwrap();
            assert_eq!(ys.data(), &yb.data()[s * 126..(s + 1) * 126]);
        }
    }

    #[test]
    fn banded_path_matches_naive_on_wide_input() {
        // ckk·ow large enough that the output is split into several bands
        let mut rng = SeededRng::new(4);
        let x = random(&[3, 60, 1500], &mut rng);
        let w = random(&[2, 3, 16, 16], &mut rng);
        let b = random(&[2], &mut rng);
        let g = ConvGeom { c: 3, h: 60, w: 1500, o: 2, k: 16 };
        assert!(g.band_rows() < g.oh());
        let y = conv2d_valid(&x, &w, &b).unwrap();
        let oracle = naive(&x, &w, &b);
        let worst = y.data().iter().zip(oracle.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(worst <= 1e-4, "worst abs diff {worst}");
    }

    #[test]
    fn dimension_errors_name_axis() {
        let x = Tensor::zeros(&[2, 5, 5]);
        let b = Tensor::zeros(&[1]);
        let err = conv2d_valid(&x, &Tensor::zeros(&[1, 3, 3, 3]), &b).unwrap_err();
        assert!(matches!(err, Error::Shape { axis: "channel", .. }));
        let err = conv2d_valid(&x, &Tensor::zeros(&[1, 2, 6, 6]), &b).unwrap_err();
        assert!(matches!(err, Error::Shape { axis: "height", .. }));
        let err = conv2d_valid(&Tensor::zeros(&[2, 6, 4]), &Tensor::zeros(&[1, 2, 5, 5]), &b).unwrap_err();
        assert!(matches!(err, Error::Shape { axis: "width", .. }));
        let err = conv2d_valid(&x, &Tensor::zeros(&[1, 2, 3, 3]), &Tensor::zeros(&[2])).unwrap_err();
        assert!(matches!(err, Error::Shape { axis: "bias", .. }));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeededRng::new(11);
        let x = random(&[2, 6, 7], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let up = random(&[3, 4, 5], &mut rng);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let y = naive(x, w, b);
            y.data().iter().zip(up.data()).map(|(a, u)| *a as f64 * *u as f64).sum()
        };
        let grads = conv2d_valid_backward(&x, &w, &up).unwrap();
        let eps = 1e-2f32;
        let check = |analytic: f32, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * eps as f64);
            assert!((analytic as f64 - numeric).abs() < 2e-3, "{analytic} vs {numeric}");
        };
        for idx in [0, 5, 17, 53] {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp.data_mut()[idx] += eps;
            wm.data_mut()[idx] -= eps;
            check(grads.weight.data()[idx], loss(&x, &wp, &b), loss(&x, &wm, &b));
        }
        for idx in [0, 13, 41, 83] {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[idx] += eps;
            xm.data_mut()[idx] -= eps;
            check(grads.input.data()[idx], loss(&xp, &w, &b), loss(&xm, &w, &b));
        }
        for idx in 0..3 {
            let want: f32 = up.data()[idx * 20..(idx + 1) * 20].iter().sum();
            assert!((grads.bias.data()[idx] - want).abs() < 1e-5);
        }
    }
}
