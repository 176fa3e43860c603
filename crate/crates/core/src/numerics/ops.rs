//! Elementwise and reduction kernels shared by the network stages.

use crate::error::{Error, Result};
use crate::tensor::RealTensor;

/// (outer, len, inner) strides for iterating slices along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::shape(format!("axis {axis} out of range for {shape:?}")));
    }
    Ok((
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    ))
}

fn for_each_slice(x: &mut RealTensor, axis: usize, mut f: impl FnMut(&mut [f64])) -> Result<()> {
    let (outer, len, inner) = axis_split(x.shape(), axis)?;
    let data = x.data_mut();
    let mut buf = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = data[base + k * inner];
            }
            f(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                data[base + k * inner] = *b;
            }
        }
    }
    Ok(())
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Max-subtracted softmax over `axis`.
pub fn softmax(x: &RealTensor, axis: usize) -> Result<RealTensor> {
    x.ensure_finite("softmax input")?;
    let mut out = x.clone();
    for_each_slice(&mut out, axis, softmax_in_place)?;
    Ok(out)
}

pub const L2_EPS: f64 = 1e-12;

/// Divides each slice along `axis` by `max(||slice||_2, 1e-12)`.
pub fn l2_normalize(x: &RealTensor, axis: usize) -> Result<RealTensor> {
    x.ensure_finite("l2_normalize input")?;
    let mut out = x.clone();
    for_each_slice(&mut out, axis, |v| {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(L2_EPS);
        v.iter_mut().for_each(|a| *a /= norm);
    })?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Lowpass,
    Highpass,
}

/// Gaussian weights over unshifted FFT frequency indices.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMask {
    pub values: RealTensor,
    pub sigma: f64,
    pub kind: MaskKind,
}

/// Distance from DC of frequency index `k` on a length-`n` axis, wrapping.
fn wrap_distance(k: usize, n: usize) -> f64 {
    k.min(n - k) as f64
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param("sigma", format!("must be positive and finite, got {sigma}")));
    }
    Ok(())
}

pub fn gaussian_mask_2d(h: usize, w: usize, sigma: f64, kind: MaskKind) -> Result<GaussianMask> {
    check_sigma(sigma)?;
    let two_s2 = 2.0 * sigma * sigma;
    let values = RealTensor::from_fn(&[h, w], |i| {
        let du = wrap_distance(i / w, h);
        let dv = wrap_distance(i % w, w);
        let low = (-(du * du + dv * dv) / two_s2).exp();
        match kind {
            MaskKind::Lowpass => low,
            MaskKind::Highpass => 1.0 - low,
        }
    })?;
    Ok(GaussianMask { values, sigma, kind })
}

pub fn gaussian_window_1d(n: usize, sigma: f64) -> Result<GaussianMask> {
    check_sigma(sigma)?;
    if n == 0 {
        return Err(Error::param("n", "window length must be positive"));
    }
    let two_s2 = 2.0 * sigma * sigma;
    let values = RealTensor::from_fn(&[n], |k| {
        let d = wrap_distance(k, n);
        (-(d * d) / two_s2).exp()
    })?;
    Ok(GaussianMask {
        values,
        sigma,
        kind: MaskKind::Lowpass,
    })
}

pub fn leaky_relu(v: f64, slope: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        slope * v
    }
}

pub fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2))
}

/// `[n, k] x [k, m]`.
pub fn matmul(a: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
    a.expect_rank(2)?;
    b.expect_rank(2)?;
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let (k2, m) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::shape(format!("matmul {:?} x {:?}", a.shape(), b.shape())));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    RealTensor::new(vec![n, m], out)
}

/// `[n, k] x [m, k]^T`.
pub fn matmul_transposed(a: &RealTensor, b: &RealTensor) -> Result<RealTensor> {
    a.expect_rank(2)?;
    b.expect_rank(2)?;
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let (m, k2) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::shape(format!("matmul_t {:?} x {:?}^T", a.shape(), b.shape())));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let ar = &ad[i * k..(i + 1) * k];
        for j in 0..m {
            let br = &bd[j * k..(j + 1) * k];
            out[i * m + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    RealTensor::new(vec![n, m], out)
}

/// `x W + b` for `x: [n, in]`, `W: [in, out]`, `b: [out]`.
pub fn linear(x: &RealTensor, w: &RealTensor, b: Option<&RealTensor>) -> Result<RealTensor> {
    let mut y = matmul(x, w)?;
    if let Some(b) = b {
        let m = w.shape()[1];
        b.expect_shape(&[m])?;
        for row in y.data_mut().chunks_mut(m) {
            for (v, bv) in row.iter_mut().zip(b.data()) {
                *v += bv;
            }
        }
    }
    Ok(y)
}

/// Per-row layer normalization of `[n, c]` with affine parameters.
pub fn layer_norm(x: &RealTensor, gamma: &RealTensor, beta: &RealTensor, eps: f64) -> Result<RealTensor> {
    x.expect_rank(2)?;
    let c = x.shape()[1];
    gamma.expect_shape(&[c])?;
    beta.expect_shape(&[c])?;
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let x = RealTensor::zeros(&[4]).unwrap();
        assert_eq!(softmax(&x, 0).unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let x = RealTensor::scalar_vec(vec![1000.0, 0.0]).unwrap();
        let y = softmax(&x, 0).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1] < 1e-300);
        assert!(y.is_finite());
    }

    #[test]
    fn softmax_respects_axis() {
        let x = RealTensor::from_fn(&[2, 3, 4], |i| (i as f64 * 0.3).sin() * 5.0).unwrap();
        let y = softmax(&x, 1).unwrap();
        for a in 0..2 {
            for c in 0..4 {
                let s: f64 = (0..3).map(|b| *y.at(&[a, b, c])).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        assert!(softmax(&x, 3).is_err());
    }

    #[test]
    fn l2_normalize_cases() {
        let x = RealTensor::scalar_vec(vec![3.0, 4.0]).unwrap();
        let y = l2_normalize(&x, 0).unwrap();
        assert!((y.data()[0] - 0.6).abs() < 1e-15 && (y.data()[1] - 0.8).abs() < 1e-15);
        let z = l2_normalize(&RealTensor::zeros(&[3]).unwrap(), 0).unwrap();
        assert_eq!(z.data(), &[0.0; 3]);
    }

    #[test]
    fn gaussian_mask_hand_values() {
        let low = gaussian_mask_2d(8, 8, 2.0, MaskKind::Lowpass).unwrap();
        assert_eq!(*low.values.at(&[0, 0]), 1.0);
        assert!((low.values.at(&[4, 0]) - (-2f64).exp()).abs() < 1e-15);
        // index 6 wraps to distance 2
        assert_eq!(low.values.at(&[6, 0]), low.values.at(&[2, 0]));
        let high = gaussian_mask_2d(8, 8, 2.0, MaskKind::Highpass).unwrap();
        assert_eq!(*high.values.at(&[0, 0]), 0.0);
        assert!(high.values.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(gaussian_mask_2d(8, 8, 0.0, MaskKind::Lowpass).is_err());
        assert!(gaussian_mask_2d(8, 8, -1.0, MaskKind::Highpass).is_err());
    }

    #[test]
    fn gaussian_window_hand_values() {
        let w = gaussian_window_1d(8, 2.0).unwrap();
        assert_eq!(w.values.data()[0], 1.0);
        assert!((w.values.data()[4] - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(gaussian_window_1d(1, 3.0).unwrap().values.data(), &[1.0]);
        assert!(gaussian_window_1d(0, 1.0).is_err());
        assert!(gaussian_window_1d(4, 0.0).is_err());
    }

    #[test]
    fn matmul_small() {
        let a = RealTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = RealTensor::new(vec![2, 1], vec![5.0, 6.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[17.0, 39.0]);
        let bt = RealTensor::new(vec![1, 2], vec![5.0, 6.0]).unwrap();
        assert_eq!(matmul_transposed(&a, &bt).unwrap().data(), &[17.0, 39.0]);
        assert!(matmul(&a, &bt).is_err());
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_zero_mean_unit_var() {
        let x = RealTensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = RealTensor::full(&[4], 1.0).unwrap();
        let b = RealTensor::zeros(&[4]).unwrap();
        let y = layer_norm(&x, &g, &b, 0.0).unwrap();
        assert!(y.sum().abs() < 1e-12);
        assert!((y.norm_sq() / 4.0 - 1.0).abs() < 1e-12);
    }
}
