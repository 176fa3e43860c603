use crate::error::{Error, Result};
use crate::tensor::RealTensor;

/// Output extent of a convolution along one axis.
pub fn conv_out_len(len: usize, k: usize, stride: usize, padding: usize) -> usize {
    (len + 2 * padding - k) / stride + 1
}

/// Zero-padded cross-correlation of `x: [H, W, Cin]` with
/// `kernel: [k, k, Cin, Cout]`, plus an optional `[Cout]` bias.
pub fn conv2d(
    x: &RealTensor,
    kernel: &RealTensor,
    bias: Option<&RealTensor>,
    stride: usize,
    padding: usize,
) -> Result<RealTensor> {
    x.expect_rank(3)?;
    kernel.expect_rank(4)?;
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ks = kernel.shape();
    let (k, cout) = (ks[0], ks[3]);
    if ks[1] != k || ks[2] != cin {
        return Err(Error::shape(format!(
            "kernel {ks:?} does not fit input {:?}",
            x.shape()
        )));
    }
    if k % 2 == 0 {
        return Err(Error::param("kernel", format!("kernel size must be odd, got {k}")));
    }
    if stride == 0 {
        return Err(Error::param("stride", "must be at least 1"));
    }
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(Error::shape(format!("kernel {k} larger than padded input {h}x{w}")));
    }
    if let Some(b) = bias {
        b.expect_shape(&[cout])?;
    }
    let oh = conv_out_len(h, k, stride, padding);
    let ow = conv_out_len(w, k, stride, padding);
    let xd = x.data();
    let kd = kernel.data();
    let mut out = vec![0.0; oh * ow * cout];
    for oi in 0..oh {
        for oj in 0..ow {
            let acc = &mut out[(oi * ow + oj) * cout..(oi * ow + oj + 1) * cout];
            if let Some(b) = bias {
                acc.copy_from_slice(b.data());
            }
            for di in 0..k {
                let ii = (oi * stride + di) as isize - padding as isize;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for dj in 0..k {
                    let jj = (oj * stride + dj) as isize - padding as isize;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    let px = &xd[(ii as usize * w + jj as usize) * cin..][..cin];
                    let kbase = (di * k + dj) * cin * cout;
                    for (ci, &v) in px.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let krow = &kd[kbase + ci * cout..][..cout];
                        for (a, kv) in acc.iter_mut().zip(krow) {
                            *a += v * kv;
                        }
                    }
                }
            }
        }
    }
    RealTensor::new(vec![oh, ow, cout], out)
}

/// Inference-mode batch normalization over the trailing channel axis.
pub fn batch_norm(
    x: &RealTensor,
    scale: &RealTensor,
    shift: &RealTensor,
    mean: &RealTensor,
    var: &RealTensor,
) -> Result<RealTensor> {
    let c = *x.shape().last().expect("tensor has at least one axis");
    for p in [scale, shift, mean, var] {
        p.expect_shape(&[c])?;
    }
    let inv: Vec<f64> = var.data().iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut out = x.clone();
    for px in out.data_mut().chunks_mut(c) {
        for (k, v) in px.iter_mut().enumerate() {
            *v = scale.data()[k] * (*v - mean.data()[k]) * inv[k] + shift.data()[k];
        }
    }
    Ok(out)
}

pub const BN_EPS: f64 = 1e-5;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_passes_through() {
        let x = RealTensor::from_fn(&[4, 5, 2], |i| i as f64 - 3.0).unwrap();
        let mut k = RealTensor::zeros(&[1, 1, 2, 2]).unwrap();
        *k.at_mut(&[0, 0, 0, 0]) = 1.0;
        *k.at_mut(&[0, 0, 1, 1]) = 1.0;
        assert_eq!(conv2d(&x, &k, None, 1, 0).unwrap(), x);
    }

    #[test]
    fn box_filter_on_constant() {
        let x = RealTensor::full(&[5, 5, 1], 1.0).unwrap();
        let k = RealTensor::full(&[3, 3, 1, 1], 1.0).unwrap();
        let y = conv2d(&x, &k, None, 1, 1).unwrap();
        assert_eq!(y.shape(), &[5, 5, 1]);
        assert_eq!(*y.at(&[2, 2, 0]), 9.0);
        assert_eq!(*y.at(&[0, 0, 0]), 4.0);
        assert_eq!(*y.at(&[0, 2, 0]), 6.0);
    }

    #[test]
    fn strided_output_dims() {
        assert_eq!(conv_out_len(224, 3, 2, 1), 112);
        assert_eq!(conv_out_len(112, 3, 2, 1), 56);
        assert_eq!(conv_out_len(7, 3, 2, 1), 4);
        let x = RealTensor::zeros(&[7, 9, 1]).unwrap();
        let k = RealTensor::zeros(&[3, 3, 1, 4]).unwrap();
        assert_eq!(conv2d(&x, &k, None, 2, 1).unwrap().shape(), &[4, 5, 4]);
    }

    #[test]
    fn rejects_even_kernels_and_channel_mismatch() {
        let x = RealTensor::zeros(&[4, 4, 2]).unwrap();
        assert!(conv2d(&x, &RealTensor::zeros(&[2, 2, 2, 1]).unwrap(), None, 1, 0).is_err());
        assert!(conv2d(&x, &RealTensor::zeros(&[3, 3, 3, 1]).unwrap(), None, 1, 1).is_err());
    }

    #[test]
    fn batch_norm_inference() {
        let x = RealTensor::new(vec![1, 2], vec![3.0, -1.0]).unwrap();
        let ones = RealTensor::full(&[2], 1.0).unwrap();
        let zeros = RealTensor::zeros(&[2]).unwrap();
        let mean = RealTensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let var = RealTensor::new(vec![2], vec![4.0 - BN_EPS, 1.0 - BN_EPS]).unwrap();
        let y = batch_norm(&x, &ones, &zeros, &mean, &var).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!((y.data()[1] + 1.0).abs() < 1e-12);
    }
}
