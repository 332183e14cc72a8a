use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.rank() != 2 {
        return Err(Error::Rank {
            op: "mse_loss",
            detail: alloc::format!("prediction must be [B,C], got {:?}", pred.dims()),
        });
    }
    if target.rank() != 2 {
        return Err(Error::Rank {
            op: "mse_loss",
            detail: alloc::format!("target must be [B,C], got {:?}", target.dims()),
        });
    }
    for (axis, (p, t)) in ["batch", "channel"].into_iter().zip(pred.dims().iter().zip(target.dims())) {
        if p != t {
            return Err(Error::shape("mse_loss", axis, *p, *t));
        }
    }
    Ok(())
}

/// Mean of squared differences over all `B·C` elements. No broadcasting.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f32> {
    check(pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = (*p - *t) as f64;
            d * d
        })
        .sum();
    Ok((sum / pred.len() as f64) as f32)
}

/// d loss / d pred = 2 (pred − target) / (B·C).
pub fn mse_loss_backward(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    check(pred, target)?;
    let scale = 2.0 / pred.len() as f32;
    let mut g = pred.clone();
    for (v, t) in g.data_mut().iter_mut().zip(target.data()) {
        *v = (*v - *t) * scale;
    }
    Ok(g)
}
