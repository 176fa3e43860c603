use crate::error::{Error, Result};
use crate::tensor::RealTensor;

/// Source taps and weight for output index `i` along an axis of length
/// `src` resized to `dst` (half-pixel centers, edge-clamped).
fn taps(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let scale = src as f64 / dst as f64;
    let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (pos.floor() as usize).min(src - 1);
    let hi = (lo + 1).min(src - 1);
    let frac = if lo == src - 1 { 0.0 } else { pos - lo as f64 };
    (lo, hi, frac)
}

/// Bilinear resize of `[H, W, C]` to `[out_h, out_w, C]`.
pub fn bilinear_resize(x: &RealTensor, out_h: usize, out_w: usize) -> Result<RealTensor> {
    x.expect_rank(3)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::param("size", "output size must be positive"));
    }
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let rows: Vec<_> = (0..out_h).map(|i| taps(i, h, out_h)).collect();
    let cols: Vec<_> = (0..out_w).map(|j| taps(j, w, out_w)).collect();
    let d = x.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            for k in 0..c {
                let p00 = d[(r0 * w + c0) * c + k];
                let p01 = d[(r0 * w + c1) * c + k];
                let p10 = d[(r1 * w + c0) * c + k];
                let p11 = d[(r1 * w + c1) * c + k];
                let top = p00 + (p01 - p00) * fc;
                let bottom = p10 + (p11 - p10) * fc;
                out.push(top + (bottom - top) * fr);
            }
        }
    }
    RealTensor::new(vec![out_h, out_w, c], out)
}
