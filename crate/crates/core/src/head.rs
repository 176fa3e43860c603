//! Center-based tracking head: classification, offset and size maps over
//! the search grid and the box decoded at the classification peak.

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::numerics::{batch_norm, conv2d, relu, sigmoid};
use crate::tensor::RealTensor;
use crate::weights::{batch_norm_specs, Init, WeightBundle, WeightSpec};

/// Offsets are clamped to this magnitude so the refined center stays next to
/// the peak cell.
pub const OFFSET_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn {
    pub kernel: RealTensor,
    pub bn_scale: RealTensor,
    pub bn_shift: RealTensor,
    pub bn_mean: RealTensor,
    pub bn_var: RealTensor,
}

impl ConvBn {
    fn specs(prefix: &str, cin: usize, cout: usize) -> Vec<WeightSpec> {
        let mut v = vec![WeightSpec::new(
            format!("{prefix}.kernel"),
            vec![3, 3, cin, cout],
            Init::glorot_conv(3, cin, cout),
        )];
        v.extend(batch_norm_specs(&format!("{prefix}.bn"), cout));
        v
    }

    fn from_bundle(bundle: &WeightBundle, prefix: &str) -> Result<Self> {
        let g = |n: &str| bundle.get(&format!("{prefix}.{n}")).cloned();
        Ok(Self {
            kernel: g("kernel")?,
            bn_scale: g("bn.scale")?,
            bn_shift: g("bn.shift")?,
            bn_mean: g("bn.mean")?,
            bn_var: g("bn.var")?,
        })
    }

    fn forward(&self, x: &RealTensor) -> Result<RealTensor> {
        let y = conv2d(x, &self.kernel, None, 1, 1)?;
        batch_norm(&y, &self.bn_scale, &self.bn_shift, &self.bn_mean, &self.bn_var)
    }
}

/// Conv-BN-ReLU from `C` to `C/2`, then Conv-BN to the branch output.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub hidden: ConvBn,
    pub out: ConvBn,
}

impl Branch {
    fn forward(&self, x: &RealTensor) -> Result<RealTensor> {
        self.out.forward(&self.hidden.forward(x)?.map(|&v| relu(v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub cls: Branch,
    pub offset: Branch,
    pub size: Branch,
}

const BRANCHES: [(&str, usize); 3] = [("cls", 1), ("offset", 2), ("size", 2)];

impl HeadWeights {
    pub fn specs(prefix: &str, dim: usize) -> Vec<WeightSpec> {
        let mut v = Vec::new();
        for (name, out) in BRANCHES {
            v.extend(ConvBn::specs(&format!("{prefix}.{name}.0"), dim, dim / 2));
            v.extend(ConvBn::specs(&format!("{prefix}.{name}.1"), dim / 2, out));
        }
        v
    }

    pub fn from_bundle(bundle: &WeightBundle, prefix: &str) -> Result<Self> {
        let branch = |name: &str| -> Result<Branch> {
            Ok(Branch {
                hidden: ConvBn::from_bundle(bundle, &format!("{prefix}.{name}.0"))?,
                out: ConvBn::from_bundle(bundle, &format!("{prefix}.{name}.1"))?,
            })
        };
        Ok(Self {
            cls: branch("cls")?,
            offset: branch("offset")?,
            size: branch("size")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    /// `[H, W]` in `(0, 1)`.
    pub cls: RealTensor,
    /// `[H, W, 2]` as `(dx, dy)` in cells, within `[-0.5, 0.5]`.
    pub offset: RealTensor,
    /// `[H, W, 2]` as `(w, h)` relative to the search region, in `(0, 1)`.
    pub size: RealTensor,
    /// `(row, col)` of the classification peak.
    pub peak: (usize, usize),
    /// Normalized to the search region.
    pub bbox: BBox,
}

/// Row-major first maximum of a `[H, W]` map.
pub fn peak_of(cls: &RealTensor) -> Result<(usize, usize)> {
    cls.expect_rank(2)?;
    let w = cls.shape()[1];
    let mut best = 0;
    for (i, &v) in cls.data().iter().enumerate() {
        if v > cls.data()[best] {
            best = i;
        }
    }
    Ok((best / w, best % w))
}

/// Box at the peak: `cx = (j + 0.5 + dx) / W`, `cy = (i + 0.5 + dy) / H`.
pub fn decode_bbox(cls: &RealTensor, offset: &RealTensor, size: &RealTensor) -> Result<((usize, usize), BBox)> {
    let (h, w) = (cls.shape()[0], cls.shape().get(1).copied().unwrap_or(0));
    offset.expect_shape(&[h, w, 2])?;
    size.expect_shape(&[h, w, 2])?;
    let (i, j) = peak_of(cls)?;
    let o = offset.offset(&[i, j, 0]);
    let (dx, dy) = (offset.data()[o], offset.data()[o + 1]);
    let (bw, bh) = (size.data()[o], size.data()[o + 1]);
    let bbox = BBox::new(
        (j as f64 + 0.5 + dx) / w as f64,
        (i as f64 + 0.5 + dy) / h as f64,
        bw,
        bh,
    );
    Ok(((i, j), bbox))
}

/// Runs the three branches over `[H, W, C]` search features.
pub fn head_forward(x: &RealTensor, w: &HeadWeights) -> Result<TrackOutput> {
    x.expect_rank(3)?;
    let cin = w.cls.hidden.kernel.shape()[2];
    if x.shape()[2] != cin {
        return Err(Error::shape(format!(
            "head expects {cin} channels, features have {}",
            x.shape()[2]
        )));
    }
    let (h, wd) = (x.shape()[0], x.shape()[1]);
    let cls = w.cls.forward(x)?.map(|&v| sigmoid(v)).reshape(vec![h, wd])?;
    let offset = w.offset.forward(x)?.map(|&v| v.clamp(-OFFSET_LIMIT, OFFSET_LIMIT));
    let size = w.size.forward(x)?.map(|&v| sigmoid(v));
    let (peak, bbox) = decode_bbox(&cls, &offset, &size)?;
    Ok(TrackOutput {
        cls,
        offset,
        size,
        peak,
        bbox,
    })
}
