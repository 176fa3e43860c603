//! Motion features from event voxels: per-bin encoding, alignment to the RGB
//! token grid, temporal differences and pooling into motion tokens.

use crate::error::{Error, Result};
use crate::fusion::LEAKY_SLOPE;
use crate::numerics::{batch_norm, bilinear_resize, conv2d, leaky_relu};
use crate::tensor::RealTensor;
use crate::weights::{batch_norm_specs, Init, WeightBundle, WeightSpec};

/// Channel widths of the four stride-2 stages before the final width `C`.
pub const ENCODER_WIDTHS: [usize; 3] = [16, 32, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStage {
    pub kernel: RealTensor,
    pub bias: RealTensor,
    pub bn_scale: RealTensor,
    pub bn_shift: RealTensor,
    pub bn_mean: RealTensor,
    pub bn_var: RealTensor,
}

impl EncoderStage {
    fn forward(&self, x: &RealTensor) -> Result<RealTensor> {
        let y = conv2d(x, &self.kernel, Some(&self.bias), 2, 1)?;
        let y = batch_norm(&y, &self.bn_scale, &self.bn_shift, &self.bn_mean, &self.bn_var)?;
        Ok(y.map(|&v| leaky_relu(v, LEAKY_SLOPE)))
    }
}

/// Four Conv(3x3, stride 2)-BN-LeakyReLU stages, shared by every bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub stages: Vec<EncoderStage>,
}

fn stage_channels(dim: usize) -> [(usize, usize); 4] {
    let [a, b, c] = ENCODER_WIDTHS;
    [(1, a), (a, b), (b, c), (c, dim)]
}

impl EncoderWeights {
    pub fn specs(prefix: &str, dim: usize) -> Vec<WeightSpec> {
        let mut v = Vec::new();
        for (i, (cin, cout)) in stage_channels(dim).into_iter().enumerate() {
            let p = format!("{prefix}.{i}");
            v.push(WeightSpec::new(format!("{p}.kernel"), vec![3, 3, cin, cout], Init::glorot_conv(3, cin, cout)));
            v.push(WeightSpec::new(format!("{p}.bias"), vec![cout], Init::Zeros));
            v.extend(batch_norm_specs(&format!("{p}.bn"), cout));
        }
        v
    }

    pub fn from_bundle(bundle: &WeightBundle, prefix: &str) -> Result<Self> {
        let stages = (0..4)
            .map(|i| {
                let g = |n: &str| bundle.get(&format!("{prefix}.{i}.{n}")).cloned();
                Ok(EncoderStage {
                    kernel: g("kernel")?,
                    bias: g("bias")?,
                    bn_scale: g("bn.scale")?,
                    bn_shift: g("bn.shift")?,
                    bn_mean: g("bn.mean")?,
                    bn_var: g("bn.var")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for s in &stages {
            if s.bn_var.data().iter().any(|&v| v <= 0.0) {
                return Err(Error::InvalidInput("batch-norm variance must be positive".into()));
            }
        }
        Ok(Self { stages })
    }

    pub fn out_dim(&self) -> usize {
        self.stages.last().map_or(0, |s| s.kernel.shape()[3])
    }
}

/// Encodes every bin of a `[B, S, S]` voxel region independently, giving
/// `[B, S/16, S/16, C]`.
pub fn event_encode(voxels: &RealTensor, w: &EncoderWeights) -> Result<RealTensor> {
    voxels.expect_rank(3)?;
    let (bins, h, wd) = (voxels.shape()[0], voxels.shape()[1], voxels.shape()[2]);
    if h % 16 != 0 || wd % 16 != 0 {
        return Err(Error::shape(format!("voxel region {h}x{wd} is not divisible by 16")));
    }
    let plane = h * wd;
    let mut out = Vec::new();
    let mut out_shape = Vec::new();
    for b in 0..bins {
        let mut x = RealTensor::new(vec![h, wd, 1], voxels.data()[b * plane..(b + 1) * plane].to_vec())?;
        for stage in &w.stages {
            x = stage.forward(&x)?;
        }
        out_shape = x.shape().to_vec();
        out.extend_from_slice(x.data());
    }
    let mut shape = vec![bins];
    shape.extend(out_shape);
    RealTensor::new(shape, out)
}

/// Resizes every bin of `[B, h, w, C]` to `[B, out_h, out_w, C]`.
pub fn warp_to_reference(f: &RealTensor, out_h: usize, out_w: usize) -> Result<RealTensor> {
    f.expect_rank(4)?;
    let (bins, h, w, c) = (f.shape()[0], f.shape()[1], f.shape()[2], f.shape()[3]);
    if (h, w) == (out_h, out_w) {
        return Ok(f.clone());
    }
    let plane = h * w * c;
    let mut out = Vec::with_capacity(bins * out_h * out_w * c);
    for b in 0..bins {
        let x = RealTensor::new(vec![h, w, c], f.data()[b * plane..(b + 1) * plane].to_vec())?;
        out.extend_from_slice(bilinear_resize(&x, out_h, out_w)?.data());
    }
    RealTensor::new(vec![bins, out_h, out_w, c], out)
}

/// `D_j = f[j + s] - f[j]` along the leading bin axis.
pub fn diff_maps(f: &RealTensor, stride: usize) -> Result<RealTensor> {
    let bins = f.shape()[0];
    if stride == 0 || stride >= bins {
        return Err(Error::param(
            "stride",
            format!("must lie in 1..={} for {bins} bins, got {stride}", bins.saturating_sub(1)),
        ));
    }
    let plane = f.len() / bins;
    let d = f.data();
    let out: Vec<f64> = (0..bins - stride)
        .flat_map(|j| (0..plane).map(move |k| d[(j + stride) * plane + k] - d[j * plane + k]))
        .collect();
    let mut shape = f.shape().to_vec();
    shape[0] = bins - stride;
    RealTensor::new(shape, out)
}

/// Template and search motion tokens, `[N_z, C]` and `[N_x, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionTokens {
    pub template: RealTensor,
    pub search: RealTensor,
}

/// Mean over the difference-map axis of `[M, h, w, C]`, flattened to
/// `[h*w, C]` in row-major grid order.
pub fn pool_diffs(diffs: &RealTensor) -> Result<RealTensor> {
    diffs.expect_rank(4)?;
    let (m, h, w, c) = (diffs.shape()[0], diffs.shape()[1], diffs.shape()[2], diffs.shape()[3]);
    let plane = h * w * c;
    let mut acc = vec![0.0; plane];
    for j in 0..m {
        for (a, v) in acc.iter_mut().zip(&diffs.data()[j * plane..(j + 1) * plane]) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= m as f64);
    RealTensor::new(vec![h * w, c], acc)
}

pub fn global_motion(template_diffs: &RealTensor, search_diffs: &RealTensor) -> Result<MotionTokens> {
    Ok(MotionTokens {
        template: pool_diffs(template_diffs)?,
        search: pool_diffs(search_diffs)?,
    })
}
