//! Success rate, precision and normalized precision over a sequence.

use std::fmt::Write as _;

use crate::bbox::BBox;
use crate::error::{Error, Result};

pub const PRECISION_PX: f64 = 20.0;
/// Success thresholds `0, 0.05, ..., 1`.
pub const SR_STEPS: usize = 20;
/// Normalized precision thresholds `0, 0.025, ..., 0.5`.
pub const NPR_STEPS: usize = 20;
pub const NPR_MAX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub sr_thresholds: Vec<f64>,
    /// Fraction of frames with IoU at or above each threshold.
    pub sr_curve: Vec<f64>,
    pub sr_auc: f64,
    /// Fraction of frames whose center error is at most 20 px.
    pub pr20: f64,
    pub npr_thresholds: Vec<f64>,
    pub npr_curve: Vec<f64>,
    pub npr_auc: f64,
}

fn fraction(values: &[f64], pass: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| pass(v)).count() as f64 / values.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sr_thresholds() -> Vec<f64> {
    (0..=SR_STEPS).map(|k| k as f64 / SR_STEPS as f64).collect()
}

pub fn npr_thresholds() -> Vec<f64> {
    (0..=NPR_STEPS).map(|k| k as f64 * NPR_MAX / NPR_STEPS as f64).collect()
}

/// Center error divided by the ground-truth diagonal.
pub fn normalized_distance(pred: &BBox, gt: &BBox) -> f64 {
    pred.center_distance(gt) / (gt.w * gt.w + gt.h * gt.h).sqrt()
}

/// Fraction of frames with IoU at or above `threshold`.
pub fn success_at(ious: &[f64], threshold: f64) -> f64 {
    fraction(ious, |v| v >= threshold)
}

pub fn compute_metrics(pred: &[BBox], gt: &[BBox]) -> Result<Metrics> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} ground-truth boxes",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no frames to evaluate".into()));
    }
    if let Some(b) = gt.iter().find(|b| !b.is_valid()) {
        return Err(Error::InvalidInput(format!("degenerate ground-truth box {b:?}")));
    }
    let ious: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| p.iou(g)).collect();
    let dists: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| p.center_distance(g)).collect();
    let ndists: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| normalized_distance(p, g)).collect();

    let sr_thresholds = sr_thresholds();
    let sr_curve: Vec<f64> = sr_thresholds.iter().map(|&t| success_at(&ious, t)).collect();
    let npr_thresholds = npr_thresholds();
    let npr_curve: Vec<f64> = npr_thresholds.iter().map(|&t| fraction(&ndists, |d| d <= t)).collect();
    Ok(Metrics {
        sr_auc: mean(&sr_curve),
        sr_curve,
        sr_thresholds,
        pr20: fraction(&dists, |d| d <= PRECISION_PX),
        npr_auc: mean(&npr_curve),
        npr_curve,
        npr_thresholds,
    })
}

impl Metrics {
    /// Curve value at the threshold closest to `t`.
    pub fn sr_at(&self, t: f64) -> f64 {
        let k = ((t * SR_STEPS as f64).round() as usize).min(SR_STEPS);
        self.sr_curve[k]
    }

    /// `metric,threshold,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,threshold,value\n");
        let mut row = |m: &str, t: f64, v: f64| writeln!(out, "{m},{t},{v}").expect("writing to a String");
        row("pr", PRECISION_PX, self.pr20);
        row("sr_auc", f64::NAN, self.sr_auc);
        row("npr_auc", f64::NAN, self.npr_auc);
        for (t, v) in self.sr_thresholds.iter().zip(&self.sr_curve) {
            row("sr", *t, *v);
        }
        for (t, v) in self.npr_thresholds.iter().zip(&self.npr_curve) {
            row("npr", *t, *v);
        }
        out
    }
}
