use super::EventStream;
use crate::error::{Error, Result};
use crate::tensor::{chw_to_hwc, RealTensor};

/// `[B, H, W]` signed event mass.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub bins: usize,
    pub data: RealTensor,
}

impl VoxelGrid {
    /// The grid as an `[H, W, B]` image, one channel per bin.
    pub fn to_hwc(&self) -> RealTensor {
        chw_to_hwc(&self.data).expect("voxel data is rank 3")
    }
}

/// Rasterizes a window into `bins` temporal bins.
///
/// Each event at integer pixel `(x, y)` deposits `p * max(0, 1 - |b - t*|)`
/// into bin `b`, where `t* = (t - t0) / (t1 - t0) * (bins - 1)`.
pub fn voxelize(w: &EventStream, bins: usize, t0: u64, t1: u64) -> Result<VoxelGrid> {
    if bins < 2 {
        return Err(Error::param("bins", format!("need at least 2 bins, got {bins}")));
    }
    if t1 <= t0 {
        return Err(Error::param("window", format!("empty window [{t0}, {t1})")));
    }
    let (width, height) = (w.width as usize, w.height as usize);
    let mut data = RealTensor::zeros(&[bins, height, width])?;
    let span = (t1 - t0) as f64;
    let last = (bins - 1) as f64;
    let grid = data.data_mut();
    for e in &w.events {
        if u32::from(e.x) >= w.width || u32::from(e.y) >= w.height {
            return Err(Error::OutOfBounds {
                x: e.x.into(),
                y: e.y.into(),
                width: w.width,
                height: w.height,
            });
        }
        let ts = (e.t as f64 - t0 as f64) / span * last;
        let lo = ts.floor();
        let p = f64::from(e.p);
        for b in [lo, lo + 1.0] {
            if b < 0.0 || b > last {
                continue;
            }
            let weight = (1.0 - (b - ts).abs()).max(0.0);
            if weight > 0.0 {
                let idx = (b as usize * height + e.y as usize) * width + e.x as usize;
                grid[idx] += p * weight;
            }
        }
    }
    Ok(VoxelGrid { bins, data })
}
