//! Slow, loop-based reference evaluations shared by the integration tests.
//! Each one is written directly from the definition and shares no code with
//! the library path it checks, apart from `dft2_oracle`.

#![allow(dead_code)]

use apmtrack_core::fusion::DapaWeights;
use apmtrack_core::oracle::dft2_oracle;
use apmtrack_core::rng::SeededRng;
use apmtrack_core::{ComplexTensor, RealTensor};
use num_complex::Complex64;

pub fn random_tensor(shape: &[usize], rng: &mut SeededRng, lo: f64, hi: f64) -> RealTensor {
    RealTensor::from_fn(shape, |_| rng.uniform(lo, hi)).unwrap()
}

/// Zero-padded cross-correlation, `x: [H, W, Cin]`, `k: [k, k, Cin, Cout]`.
pub fn conv_oracle(x: &RealTensor, k: &RealTensor, stride: usize, pad: usize) -> RealTensor {
    let (h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (ks, cout) = (k.shape()[0], k.shape()[3]);
    let oh = (h + 2 * pad - ks) / stride + 1;
    let ow = (w + 2 * pad - ks) / stride + 1;
    let mut out = vec![0.0; oh * ow * cout];
    for i in 0..oh {
        for j in 0..ow {
            for o in 0..cout {
                let mut acc = 0.0;
                for di in 0..ks {
                    for dj in 0..ks {
                        let (ii, jj) = ((i * stride + di) as isize - pad as isize, (j * stride + dj) as isize - pad as isize);
                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                            continue;
                        }
                        for c in 0..cin {
                            acc += x.at(&[ii as usize, jj as usize, c]) * k.at(&[di, dj, c, o]);
                        }
                    }
                }
                out[(i * ow + j) * cout + o] = acc;
            }
        }
    }
    RealTensor::new(vec![oh, ow, cout], out).unwrap()
}

/// `softmax_c(b/|b| * g/|g|) * b + b` at every position of `[H, W, C]`.
pub fn ap_attention_oracle(base: &RealTensor, guide: &RealTensor) -> RealTensor {
    let c = base.shape()[2];
    let mut out = Vec::with_capacity(base.len());
    for (b, g) in base.data().chunks(c).zip(guide.data().chunks(c)) {
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let logits: Vec<f64> = b.iter().zip(g).map(|(x, y)| (x / nb) * (y / ng)).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(b.iter().zip(&e).map(|(x, w)| w / s * x + x));
    }
    RealTensor::new(base.shape().to_vec(), out).unwrap()
}

fn channel(x: &ComplexTensor, c: usize) -> ComplexTensor {
    let (h, w, n) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    ComplexTensor::new(vec![h, w], (0..h * w).map(|i| x.data()[i * n + c]).collect()).unwrap()
}

/// Per-channel unitary 2-D DFT by the double sum; `inverse` by conjugation.
pub fn dft_channels(x: &ComplexTensor, inverse: bool) -> ComplexTensor {
    let (h, w, n) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![Complex64::new(0.0, 0.0); h * w * n];
    for c in 0..n {
        let mut plane = channel(x, c);
        if inverse {
            plane = plane.map(|z| z.conj());
        }
        let mut spec = dft2_oracle(&plane).unwrap();
        if inverse {
            spec = spec.map(|z| z.conj());
        }
        for (i, z) in spec.data().iter().enumerate() {
            out[i * n + c] = *z;
        }
    }
    ComplexTensor::new(vec![h, w, n], out).unwrap()
}

fn angle(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let p = z.im.atan2(z.re);
    if p == -std::f64::consts::PI {
        -p
    } else {
        p
    }
}

fn enhance(x: &RealTensor, k: &RealTensor) -> RealTensor {
    conv_oracle(x, k, 1, 1).map(|&v| if v >= 0.0 { v } else { 0.01 * v })
}

/// Stage-by-stage frequency fusion of `rgb: [H, W, 3]` and `evt: [H, W, B]`.
pub fn dapa_oracle(rgb: &RealTensor, evt: &RealTensor, w: &DapaWeights, sigma: f64) -> RealTensor {
    let (h, wd) = (rgb.shape()[0], rgb.shape()[1]);
    let rs = dft_channels(&rgb.map(|&v| Complex64::new(v, 0.0)), false);
    let mut es = dft_channels(&evt.map(|&v| Complex64::new(v, 0.0)), false);
    let b = evt.shape()[2];
    for u in 0..h {
        for v in 0..wd {
            let (du, dv) = (u.min(h - u) as f64, v.min(wd - v) as f64);
            let g = 1.0 - (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp();
            for c in 0..b {
                es.data_mut()[(u * wd + v) * b + c] *= g;
            }
        }
    }
    let amp = |s: &ComplexTensor| s.map(|z| (z.re * z.re + z.im * z.im).sqrt());
    let pha = |s: &ComplexTensor| s.map(|&z| angle(z));
    let a = ap_attention_oracle(&enhance(&amp(&rs), &w.amp_rgb), &enhance(&amp(&es), &w.amp_evt));
    let p = ap_attention_oracle(&enhance(&pha(&rs), &w.phase_rgb), &enhance(&pha(&es), &w.phase_evt));
    let mut re = a.zip_map(&p, |a, p| a * p.cos()).unwrap();
    let mut im = a.zip_map(&p, |a, p| a * p.sin()).unwrap();
    if let Some(f) = &w.ffc {
        let block = |x: &RealTensor| conv_oracle(&conv_oracle(x, &f.first, 1, 0).map(|&v| v.max(0.0)), &f.second, 1, 0);
        re = block(&re);
        im = block(&im);
    }
    let spec = re.zip_map(&im, |&r, &i| Complex64::new(r, i)).unwrap();
    dft_channels(&spec, true).map(|z| z.re)
}

/// `softmax(q k^T / sqrt(d)) v` by explicit loops over `[N, *]` rows.
pub fn attention_oracle(q: &RealTensor, k: &RealTensor, v: &RealTensor, d: usize) -> RealTensor {
    let (n, dv) = (q.shape()[0], v.shape()[1]);
    let dq = q.shape()[1];
    let mut out = vec![0.0; n * dv];
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|j| (0..dq).map(|c| q.at(&[i, c]) * k.at(&[j, c])).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        for j in 0..n {
            for c in 0..dv {
                out[i * dv + c] += e[j] / s * v.at(&[j, c]);
            }
        }
    }
    RealTensor::new(vec![n, dv], out).unwrap()
}

/// `x w` for `x: [N, A]`, `w: [A, B]`.
pub fn matmul_oracle(x: &RealTensor, w: &RealTensor) -> RealTensor {
    let (n, a, b) = (x.shape()[0], x.shape()[1], w.shape()[1]);
    RealTensor::from_fn(&[n, b], |i| (0..a).map(|t| x.at(&[i / b, t]) * w.at(&[t, i % b])).sum()).unwrap()
}

/// Columns `lo..hi` of a rank-2 tensor.
pub fn columns(x: &RealTensor, lo: usize, hi: usize) -> RealTensor {
    let n = x.shape()[0];
    RealTensor::from_fn(&[n, hi - lo], |i| *x.at(&[i / (hi - lo), lo + i % (hi - lo)])).unwrap()
}

/// Top-`k` by a full stable sort on descending score, returned ascending.
pub fn topk_oracle(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = scores.iter().copied().zip(0..).collect();
    // stable sort keeps the lower index first among equal scores
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut idx: Vec<usize> = order[..k].iter().map(|p| p.1).collect();
    idx.sort();
    idx
}
