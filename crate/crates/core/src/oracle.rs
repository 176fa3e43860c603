//! Slow reference evaluations used to cross-check the fast paths.
//!
//! Nothing here is used by the pipeline itself.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, RealTensor};

/// Largest axis length [`dft2_oracle`] accepts.
pub const ORACLE_MAX_DIM: usize = 64;

/// `exp(-2*pi*i * num / den)` with the quarter turns snapped to exact values.
fn kernel(num: usize, den: usize) -> Complex64 {
    let r = num % den;
    match (4 * r % den, 4 * r / den) {
        (0, 0) => Complex64::new(1.0, 0.0),
        (0, 1) => Complex64::new(0.0, -1.0),
        (0, 2) => Complex64::new(-1.0, 0.0),
        (0, 3) => Complex64::new(0.0, 1.0),
        _ => {
            let theta = -2.0 * PI * r as f64 / den as f64;
            Complex64::new(theta.cos(), theta.sin())
        }
    }
}

/// Literal double sum
/// `X(u,v) = 1/sqrt(HW) * sum_h sum_w x(h,w) exp(-2*pi*i*(h*u/H + w*v/W))`.
pub fn dft2_oracle(x: &ComplexTensor) -> Result<ComplexTensor> {
    x.expect_rank(2)?;
    let (h, w) = (x.shape()[0], x.shape()[1]);
    if h > ORACLE_MAX_DIM || w > ORACLE_MAX_DIM {
        return Err(Error::param(
            "dims",
            format!("oracle limited to {ORACLE_MAX_DIM} per axis, got {h}x{w}"),
        ));
    }
    let norm = 1.0 / ((h * w) as f64).sqrt();
    let mut out = Vec::with_capacity(h * w);
    for u in 0..h {
        for v in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for hh in 0..h {
                for ww in 0..w {
                    // h*u/H + w*v/W over the common denominator H*W
                    let num = hh * u * w + ww * v * h;
                    acc += x.data()[hh * w + ww] * kernel(num, h * w);
                }
            }
            out.push(acc * norm);
        }
    }
    ComplexTensor::new(vec![h, w], out)
}

pub fn dft2_oracle_real(x: &RealTensor) -> Result<ComplexTensor> {
    dft2_oracle(&x.to_complex())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_is_identity() {
        let x = RealTensor::new(vec![1, 1], vec![2.75]).unwrap();
        assert_eq!(dft2_oracle_real(&x).unwrap().data(), &[Complex64::new(2.75, 0.0)]);
    }

    #[test]
    fn constant_two_by_two() {
        let x = RealTensor::full(&[2, 2], 1.0).unwrap();
        let spec = dft2_oracle_real(&x).unwrap();
        assert_eq!(spec.data()[0], Complex64::new(2.0, 0.0));
        assert!(spec.data()[1..].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn guards_large_inputs() {
        let x = RealTensor::zeros(&[65, 2]).unwrap();
        assert!(dft2_oracle_real(&x).is_err());
    }
}
