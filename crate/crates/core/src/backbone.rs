//! Generic pre-norm transformer stack over joint template and search tokens.

use crate::diff_attn::{attention_scores, LN_EPS};
use crate::error::{Error, Result};
use crate::numerics::{gelu, layer_norm, linear, matmul};
use crate::tensor::RealTensor;
use crate::weights::{Init, WeightBundle, WeightSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneLayer {
    pub ln1_gamma: RealTensor,
    pub ln1_beta: RealTensor,
    pub w_q: RealTensor,
    pub w_k: RealTensor,
    pub w_v: RealTensor,
    pub w_o: RealTensor,
    pub ln2_gamma: RealTensor,
    pub ln2_beta: RealTensor,
    pub ffn1: RealTensor,
    pub ffn1_bias: RealTensor,
    pub ffn2: RealTensor,
    pub ffn2_bias: RealTensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub layers: Vec<BackboneLayer>,
    pub heads: usize,
}

impl BackboneWeights {
    pub fn layer_specs(prefix: &str, dim: usize) -> Vec<WeightSpec> {
        let p = |n: &str| format!("{prefix}.{n}");
        let mut v = vec![
            WeightSpec::new(p("ln1.gamma"), vec![dim], Init::Ones),
            WeightSpec::new(p("ln1.beta"), vec![dim], Init::Zeros),
        ];
        for n in ["w_q", "w_k", "w_v", "w_o"] {
            v.push(WeightSpec::new(p(n), vec![dim, dim], Init::glorot(dim, dim)));
        }
        v.extend([
            WeightSpec::new(p("ln2.gamma"), vec![dim], Init::Ones),
            WeightSpec::new(p("ln2.beta"), vec![dim], Init::Zeros),
            WeightSpec::new(p("ffn1"), vec![dim, 4 * dim], Init::glorot(dim, 4 * dim)),
            WeightSpec::new(p("ffn1_bias"), vec![4 * dim], Init::Zeros),
            WeightSpec::new(p("ffn2"), vec![4 * dim, dim], Init::glorot(4 * dim, dim)),
            WeightSpec::new(p("ffn2_bias"), vec![dim], Init::Zeros),
        ]);
        v
    }

    pub fn specs(prefix: &str, dim: usize, depth: usize) -> Vec<WeightSpec> {
        (0..depth)
            .flat_map(|l| Self::layer_specs(&format!("{prefix}.{l}"), dim))
            .collect()
    }

    pub fn from_bundle(bundle: &WeightBundle, prefix: &str, depth: usize, heads: usize) -> Result<Self> {
        let layers = (0..depth)
            .map(|l| {
                let g = |n: &str| bundle.get(&format!("{prefix}.{l}.{n}")).cloned();
                Ok(BackboneLayer {
                    ln1_gamma: g("ln1.gamma")?,
                    ln1_beta: g("ln1.beta")?,
                    w_q: g("w_q")?,
                    w_k: g("w_k")?,
                    w_v: g("w_v")?,
                    w_o: g("w_o")?,
                    ln2_gamma: g("ln2.gamma")?,
                    ln2_beta: g("ln2.beta")?,
                    ffn1: g("ffn1")?,
                    ffn1_bias: g("ffn1_bias")?,
                    ffn2: g("ffn2")?,
                    ffn2_bias: g("ffn2_bias")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(l) = layers.first() {
            let dim = l.w_q.shape()[0];
            if heads == 0 || dim % heads != 0 {
                return Err(Error::param("heads", format!("{heads} heads do not divide width {dim}")));
            }
        }
        Ok(Self { layers, heads })
    }
}

fn columns(x: &RealTensor, start: usize, width: usize) -> Result<RealTensor> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let data = x.data().chunks(c).flat_map(|r| r[start..start + width].iter().copied()).collect();
    RealTensor::new(vec![n, width], data)
}

/// Multi-head scaled dot-product attention; heads split the width evenly.
pub fn multi_head_attention(x: &RealTensor, layer: &BackboneLayer, heads: usize) -> Result<RealTensor> {
    let (n, c) = (x.shape()[0], x.shape()[1]);
    let d = c / heads;
    let q = matmul(x, &layer.w_q)?;
    let k = matmul(x, &layer.w_k)?;
    let v = matmul(x, &layer.w_v)?;
    let mut merged = vec![0.0; n * c];
    for h in 0..heads {
        let s = attention_scores(&columns(&q, h * d, d)?, &columns(&k, h * d, d)?, d)?;
        let o = matmul(&s, &columns(&v, h * d, d)?)?;
        for (dst, src) in merged.chunks_mut(c).zip(o.data().chunks(d)) {
            dst[h * d..(h + 1) * d].copy_from_slice(src);
        }
    }
    matmul(&RealTensor::new(vec![n, c], merged)?, &layer.w_o)
}

fn layer_forward(x: &RealTensor, l: &BackboneLayer, heads: usize) -> Result<RealTensor> {
    let h = x.add(&multi_head_attention(&layer_norm(x, &l.ln1_gamma, &l.ln1_beta, LN_EPS)?, l, heads)?)?;
    let normed = layer_norm(&h, &l.ln2_gamma, &l.ln2_beta, LN_EPS)?;
    let hidden = linear(&normed, &l.ffn1, Some(&l.ffn1_bias))?.map(|&v| gelu(v));
    h.add(&linear(&hidden, &l.ffn2, Some(&l.ffn2_bias))?)
}

/// Runs every layer over `[N, C]` tokens; depth 0 is the identity.
pub fn backbone_forward(tokens: &RealTensor, w: &BackboneWeights) -> Result<RealTensor> {
    tokens.expect_rank(2)?;
    let mut x = tokens.clone();
    for l in &w.layers {
        x = layer_forward(&x, l, w.heads)?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::weights::init_from_specs;

    fn tokens(n: usize, c: usize) -> RealTensor {
        let mut rng = SeededRng::new(9);
        RealTensor::from_fn(&[n, c], |_| rng.uniform(-1.0, 1.0)).unwrap()
    }

    #[test]
    fn zero_depth_is_identity() {
        let w = BackboneWeights::from_bundle(&WeightBundle::new(), "b", 0, 4).unwrap();
        let x = tokens(5, 8);
        assert_eq!(backbone_forward(&x, &w).unwrap(), x);
    }

    #[test]
    fn shape_and_determinism() {
        let b = init_from_specs(&BackboneWeights::specs("b", 16, 2), 1);
        let w = BackboneWeights::from_bundle(&b, "b", 2, 4).unwrap();
        let x = tokens(160, 16);
        let y = backbone_forward(&x, &w).unwrap();
        assert_eq!(y.shape(), &[160, 16]);
        assert_eq!(y, backbone_forward(&x, &w).unwrap());
        assert!(BackboneWeights::from_bundle(&b, "b", 2, 3).is_err());
    }

    #[test]
    fn single_head_matches_plain_attention() {
        let b = init_from_specs(&BackboneWeights::specs("b", 8, 1), 2);
        let w = BackboneWeights::from_bundle(&b, "b", 1, 1).unwrap();
        let l = &w.layers[0];
        let x = tokens(6, 8);
        let q = matmul(&x, &l.w_q).unwrap();
        let k = matmul(&x, &l.w_k).unwrap();
        let v = matmul(&x, &l.w_v).unwrap();
        let direct = matmul(&matmul(&attention_scores(&q, &k, 8).unwrap(), &v).unwrap(), &l.w_o).unwrap();
        assert!(multi_head_attention(&x, l, 1).unwrap().max_abs_diff(&direct) < 1e-14);
    }
}
