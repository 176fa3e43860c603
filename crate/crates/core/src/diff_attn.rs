//! Differential attention over motion tokens with frequency-domain
//! subtraction.
//!
//! Two softmax attention maps share one value projection. Their outputs are
//! transformed along the token axis, subtracted as `F(A1) - lambda * F(A2)`,
//! filtered by a Gaussian low-pass window and transformed back. Common-mode
//! attention noise cancels in the subtraction and high token-frequency
//! residue is attenuated by the window.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    fft_rows, gaussian_window_1d, gelu, layer_norm, linear, matmul, matmul_transposed, softmax_in_place,
};
use crate::tensor::{ComplexTensor, RealTensor};
use crate::weights::{Init, WeightBundle, WeightSpec};

pub const LN_EPS: f64 = 1e-5;
/// Largest imaginary part tolerated after the inverse token transform.
pub const IMAG_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionVariant {
    /// Differential attention with spectral subtraction and windowing.
    DiffFft,
    /// Differential attention subtracted directly in the token domain.
    Diff,
    /// Single softmax attention with full-width projections.
    Standard,
}

/// Gaussian window over token-axis frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// `sigma = N / 4`.
    Auto,
    Sigma(f64),
    /// `f = 1` everywhere.
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffAttnWeights {
    pub w_q: RealTensor,
    pub w_k: RealTensor,
    pub w_v: RealTensor,
    pub w_o: RealTensor,
    pub ln1_gamma: RealTensor,
    pub ln1_beta: RealTensor,
    pub ln2_gamma: RealTensor,
    pub ln2_beta: RealTensor,
    pub ffn1: RealTensor,
    pub ffn1_bias: RealTensor,
    pub ffn2: RealTensor,
    pub ffn2_bias: RealTensor,
    pub lambda: f64,
    pub window: Window,
    pub variant: AttentionVariant,
}

impl DiffAttnWeights {
    pub fn specs(prefix: &str, dim: usize) -> Vec<WeightSpec> {
        let p = |n: &str| format!("{prefix}.{n}");
        let mut v: Vec<WeightSpec> = ["w_q", "w_k", "w_v", "w_o"]
            .iter()
            .map(|n| WeightSpec::new(p(n), vec![dim, dim], Init::glorot(dim, dim)))
            .collect();
        for ln in ["ln1", "ln2"] {
            v.push(WeightSpec::new(p(&format!("{ln}.gamma")), vec![dim], Init::Ones));
            v.push(WeightSpec::new(p(&format!("{ln}.beta")), vec![dim], Init::Zeros));
        }
        v.push(WeightSpec::new(p("ffn1"), vec![dim, 4 * dim], Init::glorot(dim, 4 * dim)));
        v.push(WeightSpec::new(p("ffn1_bias"), vec![4 * dim], Init::Zeros));
        v.push(WeightSpec::new(p("ffn2"), vec![4 * dim, dim], Init::glorot(4 * dim, dim)));
        v.push(WeightSpec::new(p("ffn2_bias"), vec![dim], Init::Zeros));
        v
    }

    pub fn from_bundle(
        bundle: &WeightBundle,
        prefix: &str,
        lambda: f64,
        window: Window,
        variant: AttentionVariant,
    ) -> Result<Self> {
        let g = |n: &str| bundle.get(&format!("{prefix}.{n}")).cloned();
        Ok(Self {
            w_q: g("w_q")?,
            w_k: g("w_k")?,
            w_v: g("w_v")?,
            w_o: g("w_o")?,
            ln1_gamma: g("ln1.gamma")?,
            ln1_beta: g("ln1.beta")?,
            ln2_gamma: g("ln2.gamma")?,
            ln2_beta: g("ln2.beta")?,
            ffn1: g("ffn1")?,
            ffn1_bias: g("ffn1_bias")?,
            ffn2: g("ffn2")?,
            ffn2_bias: g("ffn2_bias")?,
            lambda,
            window,
            variant,
        })
    }

    pub fn dim(&self) -> usize {
        self.w_q.shape()[0]
    }
}

/// Row-wise `softmax(q k^T / sqrt(d))`.
pub fn attention_scores(q: &RealTensor, k: &RealTensor, d: usize) -> Result<RealTensor> {
    let mut s = matmul_transposed(q, k)?;
    let scale = 1.0 / (d as f64).sqrt();
    let n = s.shape()[1];
    for row in s.data_mut().chunks_mut(n) {
        row.iter_mut().for_each(|v| *v *= scale);
        softmax_in_place(row);
    }
    Ok(s)
}

fn column_halves(x: &RealTensor) -> Result<(RealTensor, RealTensor)> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let h = c / 2;
    let mut a = Vec::with_capacity(n * h);
    let mut b = Vec::with_capacity(n * h);
    for row in x.data().chunks(c) {
        a.extend_from_slice(&row[..h]);
        b.extend_from_slice(&row[h..]);
    }
    Ok((RealTensor::new(vec![n, h], a)?, RealTensor::new(vec![n, h], b)?))
}

/// `(softmax(Q1 K1^T / sqrt(d)), softmax(Q2 K2^T / sqrt(d)), V)` with
/// `d = C / 2`.
pub fn differential_maps(x: &RealTensor, w: &DiffAttnWeights) -> Result<(RealTensor, RealTensor, RealTensor)> {
    let dim = w.dim();
    if !dim.is_multiple_of(2) {
        return Err(Error::Config {
            key: "embed_dim".into(),
            reason: format!("differential attention needs an even width, got {dim}"),
        });
    }
    let (q1, q2) = column_halves(&matmul(x, &w.w_q)?)?;
    let (k1, k2) = column_halves(&matmul(x, &w.w_k)?)?;
    let v = matmul(x, &w.w_v)?;
    let d = dim / 2;
    Ok((attention_scores(&q1, &k1, d)?, attention_scores(&q2, &k2, d)?, v))
}

fn window_values(window: Window, n: usize) -> Result<Option<RealTensor>> {
    match window {
        Window::Disabled => Ok(None),
        Window::Auto => Ok(Some(gaussian_window_1d(n, n as f64 / 4.0)?.values)),
        Window::Sigma(s) => Ok(Some(gaussian_window_1d(n, s)?.values)),
    }
}

/// The attention operator before the output projection.
pub fn attention_operator(x: &RealTensor, w: &DiffAttnWeights) -> Result<RealTensor> {
    x.expect_rank(2)?;
    let (n, c) = (x.shape()[0], x.shape()[1]);
    if c != w.dim() {
        return Err(Error::shape(format!("tokens have width {c}, weights expect {}", w.dim())));
    }
    match w.variant {
        AttentionVariant::Standard => {
            let q = matmul(x, &w.w_q)?;
            let k = matmul(x, &w.w_k)?;
            let v = matmul(x, &w.w_v)?;
            matmul(&attention_scores(&q, &k, c)?, &v)
        }
        AttentionVariant::Diff => {
            let (a1, a2, v) = differential_maps(x, w)?;
            let att1 = matmul(&a1, &v)?;
            let att2 = matmul(&a2, &v)?;
            att1.zip_map(&att2, |p, q| p - w.lambda * q)
        }
        AttentionVariant::DiffFft => {
            let (a1, a2, v) = differential_maps(x, w)?;
            let f1 = fft_rows(&matmul(&a1, &v)?.to_complex(), false)?;
            let f2 = fft_rows(&matmul(&a2, &v)?.to_complex(), false)?;
            let mut spec: ComplexTensor = f1.zip_map(&f2, |p, q| p - q * w.lambda)?;
            if let Some(f) = window_values(w.window, n)? {
                for (row, g) in spec.data_mut().chunks_mut(c).zip(f.data()) {
                    row.iter_mut().for_each(|z| *z *= *g);
                }
            }
            let back = fft_rows(&spec, true)?;
            let residue = back.data().iter().map(|z: &Complex64| z.im.abs()).fold(0.0, f64::max);
            if residue >= IMAG_TOLERANCE {
                return Err(Error::Numerical(format!(
                    "inverse token transform left an imaginary residue of {residue:e}"
                )));
            }
            Ok(back.re())
        }
    }
}

/// Operator output followed by the output projection.
pub fn diff_fft_attention(x: &RealTensor, w: &DiffAttnWeights) -> Result<RealTensor> {
    matmul(&attention_operator(x, w)?, &w.w_o)
}

/// Pre-norm residual block: attention, then a GELU feed-forward network.
pub fn diff_fft_block(x: &RealTensor, w: &DiffAttnWeights) -> Result<RealTensor> {
    let h = x.add(&diff_fft_attention(&layer_norm(x, &w.ln1_gamma, &w.ln1_beta, LN_EPS)?, w)?)?;
    let normed = layer_norm(&h, &w.ln2_gamma, &w.ln2_beta, LN_EPS)?;
    let hidden = linear(&normed, &w.ffn1, Some(&w.ffn1_bias))?.map(|&v| gelu(v));
    h.add(&linear(&hidden, &w.ffn2, Some(&w.ffn2_bias))?)
}
