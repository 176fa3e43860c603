//! Forward-mode tracking losses: heatmap focal loss, L1 regression and
//! generalized IoU.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::head::TrackOutput;
use crate::tensor::RealTensor;

/// Logs are taken of `max(p, LOG_EPS)`.
pub const LOG_EPS: f64 = 1e-12;
pub const FOCAL_ALPHA: i32 = 2;
pub const FOCAL_GAMMA: i32 = 4;
/// Spread of the target heatmap, in cells.
pub const HEATMAP_SIGMA: f64 = 1.0;

fn corners(b: &BBox) -> Result<[f64; 4]> {
    if !b.is_valid() {
        return Err(Error::InvalidInput(format!("degenerate box {b:?}")));
    }
    Ok([b.x0(), b.y0(), b.x1(), b.y1()])
}

/// Generalized IoU. Areas come from the corner extents, so `giou(a, a)` is
/// exactly 1.
pub fn giou(a: &BBox, b: &BBox) -> Result<f64> {
    let [ax0, ay0, ax1, ay1] = corners(a)?;
    let [bx0, by0, bx1, by1] = corners(b)?;
    let area_a = (ax1 - ax0) * (ay1 - ay0);
    let area_b = (bx1 - bx0) * (by1 - by0);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = area_a + area_b - inter;
    let enclosure = (ax1.max(bx1) - ax0.min(bx0)) * (ay1.max(by1) - ay0.min(by0));
    Ok(inter / union - (enclosure - union) / enclosure)
}

/// `1 - GIoU`, in `[0, 2)`.
pub fn giou_loss(pred: &BBox, gt: &BBox) -> Result<f64> {
    Ok(1.0 - giou(pred, gt)?)
}

/// Heatmap focal loss normalized by the number of cells whose target is
/// exactly 1.
pub fn focal_loss(cls: &RealTensor, target: &RealTensor) -> Result<f64> {
    target.expect_same_shape(cls.shape())?;
    let mut sum = 0.0;
    let mut positives = 0usize;
    for (&p, &t) in cls.data().iter().zip(target.data()) {
        if t == 1.0 {
            positives += 1;
            sum -= (1.0 - p).powi(FOCAL_ALPHA) * p.max(LOG_EPS).ln();
        } else {
            sum -= (1.0 - t).powi(FOCAL_GAMMA) * p.powi(FOCAL_ALPHA) * (1.0 - p).max(LOG_EPS).ln();
        }
    }
    if positives == 0 {
        return Err(Error::InvalidInput("target heatmap has no positive cell".into()));
    }
    Ok(sum / positives as f64)
}

/// Mean absolute error over `(dx, dy, w, h)`.
pub fn l1_loss(pred: &[f64; 4], gt: &[f64; 4]) -> f64 {
    pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub focal: f64,
    pub l1: f64,
    pub giou: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            focal: 1.0,
            l1: 5.0,
            giou: 2.0,
        }
    }
}

pub fn total_loss(focal: f64, l1: f64, giou: f64, w: &LossWeights) -> f64 {
    w.focal * focal + w.l1 * l1 + w.giou * giou
}

/// Gaussian heatmap peaking at exactly 1 on `cell = (row, col)`.
pub fn gaussian_heatmap(h: usize, w: usize, cell: (usize, usize), sigma: f64) -> Result<RealTensor> {
    if !(sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    if cell.0 >= h || cell.1 >= w {
        return Err(Error::param("cell", format!("{cell:?} outside a {h}x{w} grid")));
    }
    let (ci, cj) = (cell.0 as f64, cell.1 as f64);
    RealTensor::from_fn(&[h, w], |k| {
        let (i, j) = ((k / w) as f64, (k % w) as f64);
        (-((i - ci).powi(2) + (j - cj).powi(2)) / (2.0 * sigma * sigma)).exp()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameLoss {
    pub focal: f64,
    pub l1: f64,
    pub giou: f64,
    pub total: f64,
}

/// Losses of one head output against a ground-truth box normalized to the
/// search region. Regression targets are read at the ground-truth cell.
pub fn frame_loss(out: &TrackOutput, gt: &BBox, w: &LossWeights) -> Result<FrameLoss> {
    let (gh, gw) = (out.cls.shape()[0], out.cls.shape()[1]);
    let fx = gt.cx * gw as f64;
    let fy = gt.cy * gh as f64;
    let j = (fx.floor().max(0.0) as usize).min(gw - 1);
    let i = (fy.floor().max(0.0) as usize).min(gh - 1);
    let target = gaussian_heatmap(gh, gw, (i, j), HEATMAP_SIGMA)?;
    let o = out.offset.offset(&[i, j, 0]);
    let pred = [out.offset.data()[o], out.offset.data()[o + 1], out.size.data()[o], out.size.data()[o + 1]];
    let truth = [fx - j as f64 - 0.5, fy - i as f64 - 0.5, gt.w, gt.h];
    let focal = focal_loss(&out.cls, &target)?;
    let l1 = l1_loss(&pred, &truth);
    let g = giou_loss(&out.bbox, gt)?;
    Ok(FrameLoss {
        focal,
        l1,
        giou: g,
        total: total_loss(focal, l1, g, w),
    })
}
