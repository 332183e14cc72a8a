//! Whole-image evaluation. conv1, conv2 and linear1 are translation
//! equivariant, so one pass over the image computes their outputs for every
//! patch center at once; the remaining layers run per location as GEMMs.

use alloc::vec::Vec;

use super::{Model, ParamId, CONV1_K, CONV1_OUT, CONV2_K, CONV2_OUT, HIDDEN, ROW_EMBED};
use crate::error::{Error, Result};
use crate::numerics::{conv_forward_sample, gemm, im2col, mish_in_place, ConvGeom};
use crate::tensor::Tensor;

/// Locations per band of the per-location layers.
const BAND_LOCATIONS: usize = 2048;

fn affine_columns(w: &[f32], bias: &[f32], m: usize, k: usize, x: &[f32], n: usize, out: &mut Vec<f32>) {
    out.resize(m * n, 0.0);
    for (r, b) in bias.iter().enumerate() {
        out[r * n..(r + 1) * n].fill(*b);
    }
    gemm(m, k, n, w, (k, 1), x, (n, 1), 1.0, out, (n, 1));
}

impl Model {
    /// Scores for every patch center of a `[3, H, W]` image.
    ///
    /// Returns `[C, H − S + 1, W − S + 1]`; entry `(c, y, x)` is the score of the
    /// patch centered at `(x + S/2, y + S/2)`. Matches per-patch [`Model::forward`]
    /// up to float reassociation.
    pub fn forward_dense(&self, planes: &Tensor) -> Result<Tensor> {
        let [3, h, w] = *planes.dims() else {
            return Err(Error::Rank {
                op: "forward_dense",
                detail: alloc::format!("image must be [3,H,W], got {:?}", planes.dims()),
            });
        };
        let s = self.arch.patch_size;
        if h < s {
            return Err(Error::shape("forward_dense", "height", s, h));
        }
        if w < s {
            return Err(Error::shape("forward_dense", "width", s, w));
        }

        let g1 = ConvGeom {
            c: 3,
            h,
            w,
            o: CONV1_OUT,
            k: CONV1_K,
        };
        let mut map1 = alloc::vec![0.0; g1.out_len()];
        let mut scratch = Vec::new();
        conv_forward_sample(
            planes.data(),
            &g1,
            self.param(ParamId::Conv1W).data(),
            self.param(ParamId::Conv1B).data(),
            &mut map1,
            &mut scratch,
            false,
        );
        mish_in_place(&mut map1);

        let g2 = ConvGeom {
            c: CONV1_OUT,
            h: g1.oh(),
            w: g1.ow(),
            o: CONV2_OUT,
            k: CONV2_K,
        };
        let mut map2 = alloc::vec![0.0; g2.out_len()];
        conv_forward_sample(
            &map1,
            &g2,
            self.param(ParamId::Conv2W).data(),
            self.param(ParamId::Conv2B).data(),
            &mut map2,
            &mut scratch,
            false,
        );
        mish_in_place(&mut map2);
        drop(map1);

        // linear1 acts on each conv2 channel as a side×side kernel with ROW_EMBED outputs
        let side = self.arch.side();
        let gl = ConvGeom {
            c: 1,
            h: g2.oh(),
            w: g2.ow(),
            o: ROW_EMBED,
            k: side,
        };
        let (fh, fw) = (gl.oh(), gl.ow());
        let channels = self.arch.channels;
        let mut field = alloc::vec![0.0; channels * fh * fw];
        let plane2 = g2.oh() * g2.ow();
        let band_rows = (BAND_LOCATIONS / fw).max(1);
        let features = CONV2_OUT * ROW_EMBED;
        let (mut feat, mut h1, mut h2, mut h3, mut out) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let w1 = self.param(ParamId::Linear1W).data();
        let b1 = self.param(ParamId::Linear1B).data();

        let mut row0 = 0;
        while row0 < fh {
            let row1 = (row0 + band_rows).min(fh);
            let n = (row1 - row0) * fw;
            feat.resize(features * n, 0.0);
            scratch.resize(side * side * n, 0.0);
            for c in 0..CONV2_OUT {
                im2col(&map2[c * plane2..(c + 1) * plane2], &gl, row0, row1, &mut scratch);
                let block = &mut feat[c * ROW_EMBED * n..(c + 1) * ROW_EMBED * n];
                for (r, b) in b1.iter().enumerate() {
                    block[r * n..(r + 1) * n].fill(*b);
                }
                gemm(ROW_EMBED, side * side, n, w1, (side * side, 1), &scratch, (n, 1), 1.0, block, (n, 1));
            }
            mish_in_place(&mut feat);

            let p = |id| self.param(id).data();
            affine_columns(p(ParamId::Linear2W), p(ParamId::Linear2B), HIDDEN[0], features, &feat, n, &mut h1);
            mish_in_place(&mut h1);
            affine_columns(p(ParamId::Linear3W), p(ParamId::Linear3B), HIDDEN[1], HIDDEN[0], &h1, n, &mut h2);
            mish_in_place(&mut h2);
            affine_columns(p(ParamId::Linear4W), p(ParamId::Linear4B), HIDDEN[2], HIDDEN[1], &h2, n, &mut h3);
            mish_in_place(&mut h3);
            affine_columns(p(ParamId::Linear5W), p(ParamId::Linear5B), channels, HIDDEN[2], &h3, n, &mut out);
            for c in 0..channels {
                field[c * fh * fw + row0 * fw..c * fh * fw + row1 * fw].copy_from_slice(&out[c * n..(c + 1) * n]);
            }
            row0 = row1;
        }
        Tensor::new(&[channels, fh, fw], field)
    }
}
