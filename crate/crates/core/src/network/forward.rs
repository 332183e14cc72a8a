use alloc::vec::Vec;

use super::{Model, ParamId, CONV1_K, CONV1_OUT, CONV2_K, CONV2_OUT, HIDDEN, ROW_EMBED};
use crate::error::{Error, Result};
use crate::numerics::{
    conv_backward_sample, conv_forward_sample, dropout_mask, linear_backward_rows, linear_forward_rows,
    mish_backward_in_place, mish_in_place, ConvGeom,
};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Number of drop → mish stages between affine layers.
const STAGES: usize = 6;

/// Activations recorded by a training forward pass, consumed by
/// [`Model::backward`]. Buffers are reused across calls.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    batch: usize,
    recorded: bool,
    /// Unfolded patches for conv1 and unfolded stage-0 activations for conv2.
    conv1_cols: Vec<f32>,
    conv2_cols: Vec<f32>,
    /// Post-dropout, pre-mish values per stage.
    pre: [Vec<f32>; STAGES],
    /// Post-mish values per stage (inputs to the next affine layer).
    act: [Vec<f32>; STAGES],
    mask: [Option<Vec<f32>>; STAGES],
    scratch: Vec<f32>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn is_recorded(&self) -> bool {
        self.recorded
    }
}

struct Geoms {
    conv1: ConvGeom,
    conv2: ConvGeom,
}

impl Model {
    fn geoms(&self) -> Geoms {
        let s = self.arch.patch_size;
        let s1 = s - CONV1_K + 1;
        Geoms {
            conv1: ConvGeom {
                c: 3,
                h: s,
                w: s,
                o: CONV1_OUT,
                k: CONV1_K,
            },
            conv2: ConvGeom {
                c: CONV1_OUT,
                h: s1,
                w: s1,
                o: CONV2_OUT,
                k: CONV2_K,
            },
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let s = self.arch.patch_size;
        let [b, c, h, w] = *batch.dims() else {
            return Err(Error::Rank {
                op: "forward",
                detail: alloc::format!("batch must be [B,3,S,S], got {:?}", batch.dims()),
            });
        };
        if c != 3 {
            return Err(Error::shape("forward", "channel", 3, c));
        }
        if h != s {
            return Err(Error::shape("forward", "height", s, h));
        }
        if w != s {
            return Err(Error::shape("forward", "width", s, w));
        }
        Ok(b)
    }

    /// Inference forward pass: `[B,3,S,S]` → `[B,C]`.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        self.forward_with(batch, &mut Tape::new())
    }

    /// Inference forward pass reusing `tape`'s buffers. Leaves the tape unrecorded.
    pub fn forward_with(&self, batch: &Tensor, tape: &mut Tape) -> Result<Tensor> {
        self.run(batch, None, tape, None)
    }

    /// Training-mode forward pass that records everything `backward` needs.
    pub fn forward_train(&self, batch: &Tensor, rng: &mut SeededRng, tape: &mut Tape) -> Result<Tensor> {
        self.run(batch, Some(rng), tape, None)
    }

    /// Inference forward pass that also returns every intermediate shape.
    pub fn forward_instrumented(&self, batch: &Tensor) -> Result<(Tensor, Vec<Vec<usize>>)> {
        let mut shapes = Vec::new();
        let out = self.run(batch, None, &mut Tape::new(), Some(&mut shapes))?;
        Ok((out, shapes))
    }

    fn run(
        &self,
        batch: &Tensor,
        train_rng: Option<&mut SeededRng>,
        tape: &mut Tape,
        mut shapes: Option<&mut Vec<Vec<usize>>>,
    ) -> Result<Tensor> {
        let b = self.check_batch(batch)?;
        let g = self.geoms();
        let side = self.arch.side();
        let spatial = self.arch.spatial();
        let record = train_rng.is_some();
        let p = self.arch.dropout;
        let mut rng = train_rng;
        tape.batch = b;
        tape.recorded = false;

        let mut note = |dims: &[usize]| {
            if let Some(s) = shapes.as_deref_mut() {
                s.push(dims.to_vec());
            }
        };

        // drop → mish on stage `i`, leaving pre-activation in `pre[i]` and the result in `act[i]`.
        let activate = |tape: &mut Tape, i: usize, rng: &mut Option<&mut SeededRng>| {
            let n = tape.pre[i].len();
            tape.mask[i] = None;
            if let Some(rng) = rng.as_deref_mut() {
                if p > 0.0 {
                    let mask = dropout_mask(n, p, rng);
                    for (v, m) in tape.pre[i].iter_mut().zip(&mask) {
                        *v *= *m;
                    }
                    tape.mask[i] = Some(mask);
                }
            }
            let Tape { pre, act, .. } = tape;
            act[i].clear();
            act[i].extend_from_slice(&pre[i]);
            mish_in_place(&mut act[i]);
        };

        // conv1
        let (in1, out1) = (g.conv1.in_len(), g.conv1.out_len());
        let cols1 = g.conv1.ckk() * g.conv1.oh() * g.conv1.ow();
        tape.pre[0].resize(b * out1, 0.0);
        if record {
            tape.conv1_cols.resize(b * cols1, 0.0);
        }
        for s in 0..b {
            let x = &batch.data()[s * in1..(s + 1) * in1];
            let out = &mut tape.pre[0][s * out1..(s + 1) * out1];
            let (w, bias) = (self.param(ParamId::Conv1W).data(), self.param(ParamId::Conv1B).data());
            if record {
                let mut cols = core::mem::take(&mut tape.scratch);
                conv_forward_sample(x, &g.conv1, w, bias, out, &mut cols, true);
                tape.conv1_cols[s * cols1..(s + 1) * cols1].copy_from_slice(&cols);
                tape.scratch = cols;
            } else {
                conv_forward_sample(x, &g.conv1, w, bias, out, &mut tape.scratch, false);
            }
        }
        note(&[b, CONV1_OUT, g.conv1.oh(), g.conv1.ow()]);
        activate(tape, 0, &mut rng);

        // conv2
        let (in2, out2) = (g.conv2.in_len(), g.conv2.out_len());
        let cols2 = g.conv2.ckk() * g.conv2.oh() * g.conv2.ow();
        tape.pre[1].resize(b * out2, 0.0);
        if record {
            tape.conv2_cols.resize(b * cols2, 0.0);
        }
        for s in 0..b {
            let (w, bias) = (self.param(ParamId::Conv2W).data(), self.param(ParamId::Conv2B).data());
            let Tape {
                act, pre, scratch, conv2_cols, ..
            } = &mut *tape;
            let x = &act[0][s * in2..(s + 1) * in2];
            let out = &mut pre[1][s * out2..(s + 1) * out2];
            conv_forward_sample(x, &g.conv2, w, bias, out, scratch, true);
            if record {
                conv2_cols[s * cols2..(s + 1) * cols2].copy_from_slice(&scratch[..cols2]);
            }
        }
        note(&[b, CONV2_OUT, side, side]);
        note(&[b, CONV2_OUT, spatial]);
        activate(tape, 1, &mut rng);

        // linear1 over each channel's flattened map, then flatten channels
        let rows = b * CONV2_OUT;
        tape.pre[2].resize(rows * ROW_EMBED, 0.0);
        {
            let Tape { act, pre, .. } = &mut *tape;
            linear_forward_rows(
                &act[1],
                rows,
                spatial,
                self.param(ParamId::Linear1W).data(),
                ROW_EMBED,
                self.param(ParamId::Linear1B).data(),
                &mut pre[2],
            );
        }
        note(&[b, CONV2_OUT, ROW_EMBED]);
        note(&[b, CONV2_OUT * ROW_EMBED]);
        activate(tape, 2, &mut rng);

        let dense = [
            (ParamId::Linear2W, ParamId::Linear2B, CONV2_OUT * ROW_EMBED, HIDDEN[0]),
            (ParamId::Linear3W, ParamId::Linear3B, HIDDEN[0], HIDDEN[1]),
            (ParamId::Linear4W, ParamId::Linear4B, HIDDEN[1], HIDDEN[2]),
        ];
        for (i, (wid, bid, n, m)) in dense.into_iter().enumerate() {
            let stage = i + 3;
            tape.pre[stage].resize(b * m, 0.0);
            let Tape { act, pre, .. } = &mut *tape;
            linear_forward_rows(
                &act[stage - 1],
                b,
                n,
                self.param(wid).data(),
                m,
                self.param(bid).data(),
                &mut pre[stage],
            );
            note(&[b, m]);
            activate(tape, stage, &mut rng);
        }

        let c = self.arch.channels;
        let mut out = alloc::vec![0.0; b * c];
        linear_forward_rows(
            &tape.act[STAGES - 1],
            b,
            HIDDEN[2],
            self.param(ParamId::Linear5W).data(),
            c,
            self.param(ParamId::Linear5B).data(),
            &mut out,
        );
        note(&[b, c]);
        tape.recorded = record;
        Tensor::new(&[b, c], out)
    }

    /// Reverse pass through the recorded forward. `grad_out` is d loss / d
    /// output (`[B,C]`). The input gradient is computed only when asked for.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor, want_input: bool) -> Result<super::LayerGrads> {
        if !tape.recorded {
            return Err(Error::BackwardBeforeForward);
        }
        let b = tape.batch;
        let c = self.arch.channels;
        if grad_out.dims() != [b, c] {
            return Err(Error::shape("backward", "grad_out", b * c, grad_out.len()));
        }
        let g = self.geoms();
        let spatial = self.arch.spatial();
        let mut grads = self.zero_grads();

        // Pull a gradient w.r.t. act[i] back to the affine output feeding stage i.
        let through_stage = |i: usize, grad: &mut Vec<f32>| {
            mish_backward_in_place(&tape.pre[i], grad);
            if let Some(mask) = &tape.mask[i] {
                for (v, m) in grad.iter_mut().zip(mask) {
                    *v *= *m;
                }
            }
        };

        let mut upstream = grad_out.data().to_vec();
        let dense = [
            (ParamId::Linear5W, ParamId::Linear5B, HIDDEN[2], c),
            (ParamId::Linear4W, ParamId::Linear4B, HIDDEN[1], HIDDEN[2]),
            (ParamId::Linear3W, ParamId::Linear3B, HIDDEN[0], HIDDEN[1]),
            (ParamId::Linear2W, ParamId::Linear2B, CONV2_OUT * ROW_EMBED, HIDDEN[0]),
        ];
        for (k, (wid, bid, n, m)) in dense.into_iter().enumerate() {
            let stage = STAGES - 1 - k;
            let mut dx = alloc::vec![0.0; b * n];
            let (dw, db) = split_grads(&mut grads.params, wid, bid);
            linear_backward_rows(&tape.act[stage], b, n, self.param(wid).data(), m, &upstream, dw, db, Some(&mut dx));
            through_stage(stage, &mut dx);
            upstream = dx;
        }

        let rows = b * CONV2_OUT;
        let mut dx = alloc::vec![0.0; rows * spatial];
        {
            let (dw, db) = split_grads(&mut grads.params, ParamId::Linear1W, ParamId::Linear1B);
            let w = self.param(ParamId::Linear1W).data();
            linear_backward_rows(&tape.act[1], rows, spatial, w, ROW_EMBED, &upstream, dw, db, Some(&mut dx));
        }
        through_stage(1, &mut dx);
        upstream = dx;

        let (in2, out2, cols2) = (
            g.conv2.in_len(),
            g.conv2.out_len(),
            g.conv2.ckk() * g.conv2.oh() * g.conv2.ow(),
        );
        let mut dx = alloc::vec![0.0; b * in2];
        let mut dcols = Vec::new();
        {
            let (dw, db) = split_grads(&mut grads.params, ParamId::Conv2W, ParamId::Conv2B);
            for s in 0..b {
                conv_backward_sample(
                    &tape.conv2_cols[s * cols2..(s + 1) * cols2],
                    &g.conv2,
                    self.param(ParamId::Conv2W).data(),
                    &upstream[s * out2..(s + 1) * out2],
                    dw,
                    db,
                    Some(&mut dx[s * in2..(s + 1) * in2]),
                    &mut dcols,
                );
            }
        }
        through_stage(0, &mut dx);
        upstream = dx;

        let (in1, out1, cols1) = (
            g.conv1.in_len(),
            g.conv1.out_len(),
            g.conv1.ckk() * g.conv1.oh() * g.conv1.ow(),
        );
        let mut dinput = want_input.then(|| alloc::vec![0.0; b * in1]);
        {
            let (dw, db) = split_grads(&mut grads.params, ParamId::Conv1W, ParamId::Conv1B);
            for s in 0..b {
                conv_backward_sample(
                    &tape.conv1_cols[s * cols1..(s + 1) * cols1],
                    &g.conv1,
                    self.param(ParamId::Conv1W).data(),
                    &upstream[s * out1..(s + 1) * out1],
                    dw,
                    db,
                    dinput.as_mut().map(|d| &mut d[s * in1..(s + 1) * in1]),
                    &mut dcols,
                );
            }
        }
        if let Some(d) = dinput {
            let s = self.arch.patch_size;
            grads.input = Some(Tensor::new(&[b, 3, s, s], d)?);
        }
        Ok(grads)
    }
}

fn split_grads(params: &mut [Tensor], w: ParamId, bias: ParamId) -> (&mut [f32], &mut [f32]) {
    debug_assert_eq!(bias as usize, w as usize + 1);
    let (lo, hi) = params.split_at_mut(bias as usize);
    (lo[w as usize].data_mut(), hi[0].data_mut())
}

#[cfg(test)]
mod tests {
    use super::super::ArchConfig;
    use super::*;
    use crate::numerics::{conv2d_valid, linear, mish, mse_loss, mse_loss_backward};

    fn random_batch(b: usize, s: usize, rng: &mut SeededRng) -> Tensor {
        Tensor::from_fn(&[b, 3, s, s], |_| rng.unit_f32())
    }

    /// Layer-by-layer composition of the public tensor ops.
    fn reference_forward(model: &Model, patch: &Tensor) -> Tensor {
        let p = |id| model.param(id);
        let a = conv2d_valid(patch, p(ParamId::Conv1W), p(ParamId::Conv1B)).unwrap();
        let a = mish(&a);
        let a = conv2d_valid(&a, p(ParamId::Conv2W), p(ParamId::Conv2B)).unwrap();
        let side = model.arch().side();
        let a = mish(&a.reshape(&[18, side * side]).unwrap());
        let a = linear(&a, p(ParamId::Linear1W), p(ParamId::Linear1B)).unwrap();
        let mut a = mish(&a.reshape(&[900]).unwrap());
        for (w, bias) in [
            (ParamId::Linear2W, ParamId::Linear2B),
            (ParamId::Linear3W, ParamId::Linear3B),
            (ParamId::Linear4W, ParamId::Linear4B),
        ] {
            a = mish(&linear(&a, p(w), p(bias)).unwrap());
        }
        linear(&a, p(ParamId::Linear5W), p(ParamId::Linear5B)).unwrap()
    }

    #[test]
    fn shape_chain_matches_appendix() {
        let model = Model::init(ArchConfig::default(), &mut SeededRng::new(0)).unwrap();
        let (out, shapes) = model.forward_instrumented(&Tensor::zeros(&[2, 3, 35, 35])).unwrap();
        assert_eq!(out.dims(), &[2, 3]);
        let want: Vec<Vec<usize>> = alloc::vec![
            alloc::vec![2, 9, 20, 20],
            alloc::vec![2, 18, 10, 10],
            alloc::vec![2, 18, 100],
            alloc::vec![2, 18, 50],
            alloc::vec![2, 900],
            alloc::vec![2, 256],
            alloc::vec![2, 64],
            alloc::vec![2, 16],
            alloc::vec![2, 3],
        ];
        assert_eq!(shapes, want);
    }

    #[test]
    fn matches_composition_of_tensor_ops() {
        let mut rng = SeededRng::new(1);
        for patch_size in [35, 31] {
            let arch = ArchConfig {
                patch_size,
                ..ArchConfig::default()
            };
            let model = Model::init(arch, &mut rng).unwrap();
            let batch = random_batch(3, patch_size, &mut rng);
            let out = model.forward(&batch).unwrap();
            let n = 3 * patch_size * patch_size;
            for s in 0..3 {
                let patch = Tensor::new(&[3, patch_size, patch_size], batch.data()[s * n..(s + 1) * n].to_vec()).unwrap();
                let want = reference_forward(&model, &patch);
                for c in 0..3 {
                    assert!((out.at(&[s, c]) - want.at(&[c])).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn zero_model_and_identical_rows() {
        let mut rng = SeededRng::new(2);
        let zero = Model::zeros(ArchConfig::default()).unwrap();
        let out = zero.forward(&random_batch(4, 35, &mut rng)).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));

        let model = Model::init(ArchConfig::default(), &mut rng).unwrap();
        let one = random_batch(1, 35, &mut rng);
        let mut rep = Vec::new();
        for _ in 0..5 {
            rep.extend_from_slice(one.data());
        }
        let out = model.forward(&Tensor::new(&[5, 3, 35, 35], rep).unwrap()).unwrap();
        for s in 1..5 {
            assert_eq!(&out.data()[s * 3..s * 3 + 3], &out.data()[..3]);
        }
    }

    #[test]
    fn train_forward_without_dropout_equals_inference() {
        let mut rng = SeededRng::new(3);
        let model = Model::init(ArchConfig::default(), &mut rng).unwrap();
        let batch = random_batch(3, 35, &mut rng);
        let mut tape = Tape::new();
        let train = model.forward_train(&batch, &mut rng, &mut tape).unwrap();
        assert_eq!(train, model.forward(&batch).unwrap());
        assert!(tape.is_recorded());
    }

    #[test]
    fn dropout_in_training_only() {
        let mut rng = SeededRng::new(4);
        let arch = ArchConfig {
            dropout: 0.5,
            ..ArchConfig::default()
        };
        let model = Model::init(arch, &mut rng).unwrap();
        let batch = random_batch(2, 35, &mut rng);
        assert_eq!(model.forward(&batch).unwrap(), model.forward(&batch).unwrap());
        let mut tape = Tape::new();
        let a = model.forward_train(&batch, &mut SeededRng::new(9), &mut tape).unwrap();
        let b = model.forward_train(&batch, &mut SeededRng::new(9), &mut tape).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, model.forward(&batch).unwrap());
    }

    #[test]
    fn batch_shape_errors() {
        let model = Model::zeros(ArchConfig::default()).unwrap();
        assert!(matches!(
            model.forward(&Tensor::zeros(&[1, 3, 31, 31])),
            Err(Error::Shape { axis: "height", .. })
        ));
        assert!(model.forward(&Tensor::zeros(&[3, 35, 35])).is_err());
        assert!(matches!(
            model.forward(&Tensor::zeros(&[1, 1, 35, 35])),
            Err(Error::Shape { axis: "channel", .. })
        ));
    }

    #[test]
    fn backward_requires_recorded_forward() {
        let model = Model::zeros(ArchConfig::default()).unwrap();
        let mut tape = Tape::new();
        let up = Tensor::zeros(&[1, 3]);
        assert_eq!(model.backward(&tape, &up, false), Err(Error::BackwardBeforeForward));
        // an inference pass does not record
        model.forward_with(&Tensor::zeros(&[1, 3, 35, 35]), &mut tape).unwrap();
        assert_eq!(model.backward(&tape, &up, false), Err(Error::BackwardBeforeForward));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = SeededRng::new(5);
        let model = Model::init(ArchConfig::default(), &mut rng).unwrap();
        let batch = random_batch(2, 35, &mut rng);
        let mut tape = Tape::new();
        let out = model.forward_train(&batch, &mut rng, &mut tape).unwrap();
        // gradient of mse at its minimum
        let up = mse_loss_backward(&out, &out).unwrap();
        assert_eq!(mse_loss(&out, &out).unwrap(), 0.0);
        let grads = model.backward(&tape, &up, true).unwrap();
        assert!(grads.params.iter().all(|t| t.data().iter().all(|v| *v == 0.0)));
        assert!(grads.input.unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_gradient_is_sum_of_sample_gradients() {
        let mut rng = SeededRng::new(6);
        let model = Model::init(ArchConfig::default(), &mut rng).unwrap();
        let batch = random_batch(2, 35, &mut rng);
        let up = Tensor::from_fn(&[2, 3], |i| 0.3 - 0.2 * i as f32);
        let mut tape = Tape::new();
        model.forward_train(&batch, &mut rng, &mut tape).unwrap();
        let both = model.backward(&tape, &up, true).unwrap();
        let n = 3 * 35 * 35;
        let mut summed = model.zero_grads();
        for s in 0..2 {
            let one = Tensor::new(&[1, 3, 35, 35], batch.data()[s * n..(s + 1) * n].to_vec()).unwrap();
            model.forward_train(&one, &mut rng, &mut tape).unwrap();
            let g = model
                .backward(&tape, &Tensor::new(&[1, 3], up.data()[s * 3..s * 3 + 3].to_vec()).unwrap(), true)
                .unwrap();
            for (acc, t) in summed.params.iter_mut().zip(&g.params) {
                for (a, v) in acc.data_mut().iter_mut().zip(t.data()) {
                    *a += *v;
                }
            }
            assert_eq!(&both.input.as_ref().unwrap().data()[s * n..(s + 1) * n], g.input.unwrap().data());
        }
        for (a, b) in summed.params.iter().zip(&both.params) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-6 + 1e-4 * y.abs());
            }
        }
    }
}
