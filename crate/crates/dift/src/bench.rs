//! Dense-vs-saccade comparison and threaded whole-image scoring.

use std::fmt::Write as _;
use std::time::Instant;

use dift_core::saccade::{detect, DetectMode, DetectParams, Detection, NetworkScorer};
use dift_core::score::euclid_dist;
use dift_core::{ImageBuf, Model, ScoreField};

use crate::error::Result;

/// Runs `f` over `items` on up to `threads` scoped threads, keeping order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Dense scores computed in horizontal strips on up to `threads` threads.
pub fn dense_heatmap_threaded(model: &Model, img: &ImageBuf, threads: usize) -> Result<ScoreField> {
    let s = model.patch_size();
    if threads <= 1 || img.height() < s {
        return Ok(dift_core::saccade::dense_heatmap(model, img)?);
    }
    let rows = img.height() - s + 1;
    let per = rows.div_ceil(threads);
    let starts: Vec<usize> = (0..rows).step_by(per).collect();
    let row_bytes = img.width() * img.channels();
    let strips = par_map(&starts, threads, |&y0| {
        let y1 = (y0 + per).min(rows);
        let strip = ImageBuf::new(img.width(), y1 - y0 + s - 1, img.channels(), img.data()[y0 * row_bytes..(y1 + s - 1) * row_bytes].to_vec())?;
        dift_core::saccade::dense_heatmap(model, &strip)
    });
    let strips = strips.into_iter().collect::<dift_core::Result<Vec<_>>>()?;
    let (c, w) = (strips[0].channels, strips[0].width);
    let mut data = Vec::with_capacity(c * w * rows);
    for ch in 0..c {
        for f in &strips {
            data.extend_from_slice(f.plane(ch));
        }
    }
    Ok(ScoreField::new(c, w, rows, s / 2, data)?)
}

/// Per channel, the fraction of dense detections matched by a saccade
/// detection within `tol` px; `None` when dense found nothing.
pub fn agreement(dense: &[Detection], saccade: &[Detection], channels: usize, tol: f64) -> Vec<Option<f64>> {
    (0..channels)
        .map(|c| {
            let want: Vec<&Detection> = dense.iter().filter(|d| d.channel == c).collect();
            if want.is_empty() {
                return None;
            }
            let hit = want
                .iter()
                .filter(|d| saccade.iter().any(|s| s.channel == c && euclid_dist(s.point, d.point) <= tol))
                .count();
            Some(hit as f64 / want.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub image: String,
    pub dense_evals: usize,
    pub saccade_evals: usize,
    pub dense_ms: f64,
    pub saccade_ms: f64,
    pub agreement: Vec<Option<f64>>,
    /// Total dense detections and how many saccade matched.
    pub dense_hits: (usize, usize),
}

impl BenchRow {
    pub fn ratio(&self) -> f64 {
        self.saccade_evals as f64 / self.dense_evals as f64
    }
}

pub const AGREEMENT_TOL: f64 = 5.0;

pub fn bench_image(model: &Model, name: &str, img: &ImageBuf, params: &DetectParams) -> Result<BenchRow> {
    let mut scorer = NetworkScorer::new(model);
    let t = Instant::now();
    let dense = detect(&mut scorer, img, DetectMode::Dense, params)?;
    let dense_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let sacc = detect(&mut scorer, img, DetectMode::Saccade, params)?;
    let saccade_ms = t.elapsed().as_secs_f64() * 1e3;
    let agreement = agreement(&dense.detections, &sacc.detections, model.channels(), AGREEMENT_TOL);
    let matched = dense
        .detections
        .iter()
        .filter(|d| sacc.detections.iter().any(|s| s.channel == d.channel && euclid_dist(s.point, d.point) <= AGREEMENT_TOL))
        .count();
    Ok(BenchRow {
        image: name.to_string(),
        dense_evals: dense.evals,
        saccade_evals: sacc.evals,
        dense_ms,
        saccade_ms,
        agreement,
        dense_hits: (dense.detections.len(), matched),
    })
}

pub fn benchmark(model: &Model, images: &[(String, ImageBuf)], params: &DetectParams, threads: usize) -> Result<Vec<BenchRow>> {
    par_map(images, threads, |(name, img)| bench_image(model, name, img, params))
        .into_iter()
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// One row per image and a final `mean` row. Empty agreement cells mean the
/// dense scan found nothing in that channel.
pub fn report_csv(rows: &[BenchRow], channels: usize) -> String {
    let mut s = String::from("image,dense_evals,saccade_evals,ratio,dense_ms,saccade_ms");
    for c in 0..channels {
        write!(s, ",agree_c{c}").expect("string write");
    }
    s.push('\n');
    for r in rows {
        write!(s, "{},{},{},{:.5},{:.2},{:.2}", r.image, r.dense_evals, r.saccade_evals, r.ratio(), r.dense_ms, r.saccade_ms).expect("string write");
        for a in &r.agreement {
            write!(s, ",{}", cell(*a)).expect("string write");
        }
        s.push('\n');
    }
    let m = |f: &dyn Fn(&BenchRow) -> f64| cell(mean(rows.iter().map(f)));
    write!(
        s,
        "mean,{},{},{},{},{}",
        m(&|r| r.dense_evals as f64),
        m(&|r| r.saccade_evals as f64),
        m(&|r| r.ratio()),
        m(&|r| r.dense_ms),
        m(&|r| r.saccade_ms)
    )
    .expect("string write");
    for c in 0..channels {
        write!(s, ",{}", cell(mean(rows.iter().filter_map(|r| r.agreement.get(c).copied().flatten())))).expect("string write");
    }
    s.push('\n');
    s
}
