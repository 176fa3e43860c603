//! Unitary discrete Fourier transforms.
//!
//! Every transform here carries a `1/sqrt(n)` factor per axis in both
//! directions, so a 2D transform of an `H x W` plane is scaled by
//! `1/sqrt(H*W)` and Parseval's identity holds without correction.
//!
//! Power-of-two lengths use an iterative radix-2 Cooley-Tukey kernel. Other
//! lengths use either the direct `O(n^2)` sum or Bluestein's chirp-z
//! re-expression on a radix-2 kernel, whichever has the lower operation
//! count under [`fft_flops`].

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, RealTensor};

/// Which kernel evaluates a length-`n` transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FftPath {
    Radix2,
    Direct,
    Bluestein,
}

/// `exp(sign * 2*pi*i * k / n)`, exact at quarter turns.
pub(crate) fn unit_root(k: usize, n: usize, sign: f64) -> Complex64 {
    let r = k % n;
    if (4 * r).is_multiple_of(n) {
        let (re, im) = match 4 * r / n {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        return Complex64::new(re, sign * im);
    }
    // Keep the angle in (-pi, pi] for accuracy.
    let signed = if 2 * r > n { r as f64 - n as f64 } else { r as f64 };
    let theta = 2.0 * PI * signed / n as f64;
    Complex64::new(theta.cos(), sign * theta.sin())
}

fn log2_exact(n: usize) -> u32 {
    n.trailing_zeros()
}

fn bluestein_len(n: usize) -> usize {
    (2 * n - 1).next_power_of_two()
}

fn path_flops(n: usize, path: FftPath) -> u64 {
    let n64 = n as u64;
    match path {
        FftPath::Radix2 => 5 * n64 * u64::from(log2_exact(n)),
        FftPath::Direct => 8 * n64 * n64,
        FftPath::Bluestein => {
            let m = bluestein_len(n) as u64;
            let lg = u64::from(log2_exact(m as usize));
            // Three radix-2 transforms plus the chirp and kernel products.
            3 * 5 * m * lg + 6 * (2 * n64 + m)
        }
    }
}

/// The kernel [`FftPlan::new`] selects for length `n`.
pub fn auto_path(n: usize) -> FftPath {
    if n.is_power_of_two() {
        FftPath::Radix2
    } else if path_flops(n, FftPath::Direct) <= path_flops(n, FftPath::Bluestein) {
        FftPath::Direct
    } else {
        FftPath::Bluestein
    }
}

/// Analytic floating-point operation count of one length-`n` transform on
/// the automatically selected path.
pub fn fft_flops(n: usize) -> u64 {
    path_flops(n, auto_path(n))
}

#[derive(Debug, Clone)]
enum Kernel {
    Radix2 { twiddles: Vec<Complex64> },
    Direct { roots: Vec<Complex64> },
    Bluestein {
        chirp: Vec<Complex64>,
        kernel_spectrum: Vec<Complex64>,
        inner: Box<FftPlan>,
    },
}

/// A reusable, unnormalized length-`n` transform.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    kernel: Kernel,
}

impl FftPlan {
    pub fn new(n: usize) -> Self {
        Self::with_path(n, auto_path(n)).expect("auto path is always valid")
    }

    pub fn with_path(n: usize, path: FftPath) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "transform length must be positive"));
        }
        let kernel = match path {
            FftPath::Radix2 => {
                if !n.is_power_of_two() {
                    return Err(Error::param("n", format!("radix-2 needs a power of two, got {n}")));
                }
                Kernel::Radix2 {
                    twiddles: (0..n / 2).map(|k| unit_root(k, n, -1.0)).collect(),
                }
            }
            FftPath::Direct => Kernel::Direct {
                roots: (0..n).map(|k| unit_root(k, n, -1.0)).collect(),
            },
            FftPath::Bluestein => {
                let m = bluestein_len(n);
                // chirp_k = exp(-i*pi*k^2/n) = root of order 2n at k^2 mod 2n.
                let chirp: Vec<Complex64> = (0..n)
                    .map(|k| unit_root((k * k) % (2 * n), 2 * n, -1.0))
                    .collect();
                let inner = FftPlan::with_path(m, FftPath::Radix2)?;
                let mut b = vec![Complex64::new(0.0, 0.0); m];
                b[0] = chirp[0].conj();
                for k in 1..n {
                    b[k] = chirp[k].conj();
                    b[m - k] = chirp[k].conj();
                }
                inner.forward(&mut b);
                Kernel::Bluestein {
                    chirp,
                    kernel_spectrum: b,
                    inner: Box::new(inner),
                }
            }
        };
        Ok(Self { n, kernel })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn path(&self) -> FftPath {
        match self.kernel {
            Kernel::Radix2 { .. } => FftPath::Radix2,
            Kernel::Direct { .. } => FftPath::Direct,
            Kernel::Bluestein { .. } => FftPath::Bluestein,
        }
    }

    /// In-place `X_k = sum_t x_t exp(-2*pi*i*k*t/n)`, no normalization.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        match &self.kernel {
            Kernel::Radix2 { twiddles } => radix2(buf, twiddles),
            Kernel::Direct { roots } => direct(buf, roots),
            Kernel::Bluestein {
                chirp,
                kernel_spectrum,
                inner,
            } => {
                let m = inner.len();
                let mut a = vec![Complex64::new(0.0, 0.0); m];
                for (k, (x, w)) in buf.iter().zip(chirp).enumerate() {
                    a[k] = x * w;
                }
                inner.forward(&mut a);
                for (ak, bk) in a.iter_mut().zip(kernel_spectrum) {
                    *ak *= bk;
                }
                inner.inverse(&mut a);
                let scale = 1.0 / m as f64;
                for (k, out) in buf.iter_mut().enumerate() {
                    *out = a[k] * chirp[k] * scale;
                }
            }
        }
    }

    /// In-place `x_t = sum_k X_k exp(+2*pi*i*k*t/n)`, no normalization.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        for v in buf.iter_mut() {
            *v = v.conj();
        }
    }
}

fn radix2(buf: &mut [Complex64], twiddles: &[Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * step];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn direct(buf: &mut [Complex64], roots: &[Complex64]) {
    let n = buf.len();
    let input = buf.to_vec();
    for (k, out) in buf.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (t, x) in input.iter().enumerate() {
            acc += x * roots[(k * t) % n];
        }
        *out = acc;
    }
}

/// Applies a unitary transform along `axis` of a row-major buffer.
fn transform_axis(data: &mut [Complex64], shape: &[usize], axis: usize, plan: &FftPlan, inverse: bool) {
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let scale = 1.0 / (len as f64).sqrt();
    let mut line = vec![Complex64::new(0.0, 0.0); len];
    for o in 0..outer {
        let base = o * len * inner;
        for i in 0..inner {
            for (k, v) in line.iter_mut().enumerate() {
                *v = data[base + k * inner + i];
            }
            if inverse {
                plan.inverse(&mut line);
            } else {
                plan.forward(&mut line);
            }
            for (k, v) in line.iter().enumerate() {
                data[base + k * inner + i] = v * scale;
            }
        }
    }
}

fn planar_transform(x: &ComplexTensor, inverse: bool, what: &str) -> Result<ComplexTensor> {
    if !(x.ndim() == 2 || x.ndim() == 3) {
        return Err(Error::shape(format!(
            "{what} expects [H, W] or [H, W, C], got {:?}",
            x.shape()
        )));
    }
    x.ensure_finite(what)?;
    let shape = x.shape().to_vec();
    let mut data = x.data().to_vec();
    let rows = FftPlan::new(shape[0]);
    let cols = FftPlan::new(shape[1]);
    transform_axis(&mut data, &shape, 1, &cols, inverse);
    transform_axis(&mut data, &shape, 0, &rows, inverse);
    ComplexTensor::new(shape, data)
}

/// Unitary 2D forward transform of `[H, W]`, or of every channel of `[H, W, C]`.
pub fn fft2(x: &ComplexTensor) -> Result<ComplexTensor> {
    planar_transform(x, false, "fft2 input")
}

/// [`fft2`] of a real tensor.
pub fn fft2_real(x: &RealTensor) -> Result<ComplexTensor> {
    x.ensure_finite("fft2 input")?;
    fft2(&x.to_complex())
}

/// Unitary 2D inverse transform; the exact inverse of [`fft2`].
pub fn ifft2(x: &ComplexTensor) -> Result<ComplexTensor> {
    planar_transform(x, true, "ifft2 input")
}

/// Unitary 1D transform along the leading axis of `[N]` or `[N, C]`,
/// independently for every column.
pub fn fft_rows(x: &ComplexTensor, inverse: bool) -> Result<ComplexTensor> {
    x.ensure_finite("token-axis transform input")?;
    let shape = x.shape().to_vec();
    let mut data = x.data().to_vec();
    let plan = FftPlan::new(shape[0]);
    transform_axis(&mut data, &shape, 0, &plan, inverse);
    ComplexTensor::new(shape, data)
}

/// Unitary 1D transform of a slice with an explicit kernel choice.
pub fn fft1d_with(x: &[Complex64], path: FftPath, inverse: bool) -> Result<Vec<Complex64>> {
    let plan = FftPlan::with_path(x.len(), path)?;
    let mut buf = x.to_vec();
    if inverse {
        plan.inverse(&mut buf);
    } else {
        plan.forward(&mut buf);
    }
    let scale = 1.0 / (x.len() as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(buf)
}
