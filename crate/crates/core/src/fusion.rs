//! Frequency-domain fusion of an RGB region with its event voxel region.
//!
//! Both regions are transformed with [`fft2`], split into amplitude and
//! phase, enhanced by a 3x3 convolution with LeakyReLU, and the RGB branch
//! is modulated by a channel-softmax attention map computed against the
//! event branch. The event spectrum is high-pass filtered first so that
//! only its edge and motion content reaches the RGB stream. The fused
//! spectrum passes through a 1x1 conv-ReLU-conv block applied to its real
//! and imaginary parts before returning to the spatial domain.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{
    amp_phase, conv2d, fft2_real, gaussian_mask_2d, ifft2, l2_normalize, leaky_relu, linear, polar_to_complex, relu,
    softmax_in_place, MaskKind,
};
use crate::tensor::RealTensor;
use crate::weights::{Init, WeightBundle, WeightSpec};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Two 1x1 kernels shared between the real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct FfcWeights {
    pub first: RealTensor,
    pub second: RealTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DapaWeights {
    pub amp_rgb: RealTensor,
    pub phase_rgb: RealTensor,
    pub amp_evt: RealTensor,
    pub phase_evt: RealTensor,
    /// `None` bypasses the spectral conv block.
    pub ffc: Option<FfcWeights>,
}

impl DapaWeights {
    pub fn specs(prefix: &str, rgb_channels: usize, bins: usize, fused: usize) -> Vec<WeightSpec> {
        let conv = |name: &str, cin: usize, k: usize| {
            WeightSpec::new(format!("{prefix}.{name}"), vec![k, k, cin, fused], Init::glorot_conv(k, cin, fused))
        };
        vec![
            conv("amp_rgb", rgb_channels, 3),
            conv("phase_rgb", rgb_channels, 3),
            conv("amp_evt", bins, 3),
            conv("phase_evt", bins, 3),
            conv("ffc1", fused, 1),
            conv("ffc2", fused, 1),
        ]
    }

    pub fn from_bundle(bundle: &WeightBundle, prefix: &str) -> Result<Self> {
        let get = |n: &str| bundle.get(&format!("{prefix}.{n}")).cloned();
        Ok(Self {
            amp_rgb: get("amp_rgb")?,
            phase_rgb: get("phase_rgb")?,
            amp_evt: get("amp_evt")?,
            phase_evt: get("phase_evt")?,
            ffc: Some(FfcWeights {
                first: get("ffc1")?,
                second: get("ffc2")?,
            }),
        })
    }

    pub fn fused_channels(&self) -> usize {
        self.amp_rgb.shape()[3]
    }

    fn validate(&self) -> Result<()> {
        let mut all = vec![&self.amp_rgb, &self.phase_rgb, &self.amp_evt, &self.phase_evt];
        if let Some(f) = &self.ffc {
            all.push(&f.first);
            all.push(&f.second);
        }
        for t in all {
            t.ensure_finite("fusion weights")?;
        }
        Ok(())
    }
}

/// Channel-softmax weights `softmax_c(norm(base) * norm(guide))` at every
/// spatial or frequency position of `[H, W, C]` inputs.
pub fn attention_weights(base: &RealTensor, guide: &RealTensor) -> Result<RealTensor> {
    base.expect_rank(3)?;
    guide.expect_same_shape(base.shape())?;
    let nb = l2_normalize(base, 2)?;
    let ng = l2_normalize(guide, 2)?;
    let mut m = nb.zip_map(&ng, |a, b| a * b)?;
    let c = base.shape()[2];
    m.data_mut().chunks_mut(c).for_each(softmax_in_place);
    Ok(m)
}

/// `M * base + base` with `M` from [`attention_weights`].
pub fn ap_attention(base: &RealTensor, guide: &RealTensor) -> Result<RealTensor> {
    let m = attention_weights(base, guide)?;
    m.zip_map(base, |w, b| w * b + b)
}

fn enhance(x: &RealTensor, kernel: &RealTensor) -> Result<RealTensor> {
    Ok(conv2d(x, kernel, None, 1, 1)?.map(|&v| leaky_relu(v, LEAKY_SLOPE)))
}

fn ffc_part(x: &RealTensor, w: &FfcWeights) -> Result<RealTensor> {
    let hidden = conv2d(x, &w.first, None, 1, 0)?.map(|&v| relu(v));
    conv2d(&hidden, &w.second, None, 1, 0)
}

/// Fuses `rgb: [H, W, 3]` with `evt: [H, W, B]` into `[H, W, C_f]`.
pub fn dapa_fuse(rgb: &RealTensor, evt: &RealTensor, w: &DapaWeights, sigma_hp: f64) -> Result<RealTensor> {
    rgb.expect_rank(3)?;
    evt.expect_rank(3)?;
    if rgb.shape()[..2] != evt.shape()[..2] {
        return Err(Error::shape(format!(
            "rgb {:?} and event {:?} regions differ in size",
            rgb.shape(),
            evt.shape()
        )));
    }
    w.validate()?;
    let (h, wd) = (rgb.shape()[0], rgb.shape()[1]);
    let highpass = gaussian_mask_2d(h, wd, sigma_hp, MaskKind::Highpass)?;

    let rgb_spec = fft2_real(rgb)?;
    let mut evt_spec = fft2_real(evt)?;
    let bins = evt.shape()[2];
    for (i, px) in evt_spec.data_mut().chunks_mut(bins).enumerate() {
        let g = highpass.values.data()[i];
        px.iter_mut().for_each(|z| *z *= g);
    }

    let rgb_pair = amp_phase(&rgb_spec)?;
    let evt_pair = amp_phase(&evt_spec)?;
    let amp = ap_attention(&enhance(&rgb_pair.amplitude, &w.amp_rgb)?, &enhance(&evt_pair.amplitude, &w.amp_evt)?)?;
    let phase = ap_attention(&enhance(&rgb_pair.phase, &w.phase_rgb)?, &enhance(&evt_pair.phase, &w.phase_evt)?)?;
    let mut fused = polar_to_complex(&amp, &phase)?;

    if let Some(ffc) = &w.ffc {
        let re = ffc_part(&fused.re(), ffc)?;
        let im = ffc_part(&fused.im(), ffc)?;
        fused = re.zip_map(&im, |&a, &b| Complex64::new(a, b))?;
    }
    Ok(ifft2(&fused)?.re())
}

/// Linear patch projection: `[P*P*C_in, C]` plus a `[C]` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbed {
    pub patch: usize,
    pub proj: RealTensor,
    pub bias: RealTensor,
}

impl PatchEmbed {
    pub fn specs(prefix: &str, patch: usize, cin: usize, dim: usize) -> Vec<WeightSpec> {
        vec![
            WeightSpec::new(format!("{prefix}.proj"), vec![patch * patch * cin, dim], Init::glorot(patch * patch * cin, dim)),
            WeightSpec::new(format!("{prefix}.bias"), vec![dim], Init::Zeros),
        ]
    }

    pub fn from_bundle(bundle: &WeightBundle, prefix: &str, patch: usize) -> Result<Self> {
        Ok(Self {
            patch,
            proj: bundle.get(&format!("{prefix}.proj"))?.clone(),
            bias: bundle.get(&format!("{prefix}.bias"))?.clone(),
        })
    }
}

/// Flattened patch features with their source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeq {
    pub tokens: RealTensor,
    pub rows: usize,
    pub cols: usize,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Splits `[H, W, C_in]` into non-overlapping patches in row-major order and
/// projects each flattened `(row, col, channel)` patch.
pub fn patch_embed(x: &RealTensor, pe: &PatchEmbed) -> Result<TokenSeq> {
    x.expect_rank(3)?;
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let p = pe.patch;
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::shape(format!("{h}x{w} region is not divisible into {p}x{p} patches")));
    }
    pe.proj.expect_rank(2)?;
    if pe.proj.shape()[0] != p * p * c {
        return Err(Error::shape(format!(
            "projection expects {} inputs, patches have {}",
            pe.proj.shape()[0],
            p * p * c
        )));
    }
    let (rows, cols) = (h / p, w / p);
    let mut flat = Vec::with_capacity(rows * cols * p * p * c);
    for r in 0..rows {
        for q in 0..cols {
            for i in 0..p {
                let start = ((r * p + i) * w + q * p) * c;
                flat.extend_from_slice(&x.data()[start..start + p * c]);
            }
        }
    }
    let patches = RealTensor::new(vec![rows * cols, p * p * c], flat)?;
    Ok(TokenSeq {
        tokens: linear(&patches, &pe.proj, Some(&pe.bias))?,
        rows,
        cols,
    })
}
