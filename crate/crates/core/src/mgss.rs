//! Motion-guided spatial sparsification of search tokens.
//!
//! A per-token MLP scores motion features, the spread of the scores sets a
//! token budget, and only the top-scoring RGB search tokens are kept. Event
//! tokens at the kept positions are weighted by their scores and added, and
//! the result is scattered back onto the full grid with zero rows elsewhere.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{linear, relu, sigmoid};
use crate::rng::SeededRng;
use crate::tensor::RealTensor;
use crate::weights::{Init, WeightBundle, WeightSpec};

/// Largest population variance of values in `[0, 1]`.
pub const MAX_UNIT_VARIANCE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    /// `K_min + (K_max - K_min) * exp(-beta x)`
    Exp,
    /// `K_max - (K_max - K_min) * beta x`
    Linear,
    /// `K_min + (K_max - K_min) * (1 + x)^-beta`
    Power,
}

/// Per-token scores in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub scores: Vec<f64>,
}

impl ScoreMap {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidInput(format!("score {s} outside [0, 1]")));
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Population variance. The mean is accumulated relative to the first
    /// score, so a constant map has variance exactly 0.
    pub fn variance(&self) -> f64 {
        let n = self.scores.len() as f64;
        let shift = self.scores.first().copied().unwrap_or(0.0);
        let mean = shift + self.scores.iter().map(|s| s - shift).sum::<f64>() / n;
        self.scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n
    }
}

/// Budget bounds and decay shape for the adaptive token count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KParams {
    pub k_min: usize,
    pub k_max: usize,
    pub beta: u32,
    pub decay: Decay,
}

impl KParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(Error::param(
                "k_min",
                format!("need 1 <= k_min <= k_max, got {} and {}", self.k_min, self.k_max),
            ));
        }
        if self.beta == 0 {
            return Err(Error::param("beta", "must be a positive integer"));
        }
        Ok(())
    }

    /// Budget for a normalized variance `x` in `[0, 1]`, rounded to nearest
    /// and clamped to `[k_min, k_max]`.
    pub fn k_at(&self, x: f64) -> Result<usize> {
        self.validate()?;
        let (lo, hi) = (self.k_min as f64, self.k_max as f64);
        let b = f64::from(self.beta);
        let k = match self.decay {
            Decay::Exp => lo + (hi - lo) * (-b * x).exp(),
            Decay::Linear => hi + (hi - lo) * (-b * x),
            Decay::Power => lo + (hi - lo) * (1.0 + x).powf(-b),
        };
        Ok(k.round().clamp(lo, hi) as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsePlan {
    pub k: usize,
    /// Ascending, distinct.
    pub indices: Vec<usize>,
    pub variance: f64,
    pub variance_norm: f64,
}

/// Adaptive budget with `indices` left empty.
pub fn adaptive_k(scores: &ScoreMap, params: &KParams) -> Result<SparsePlan> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty score map".into()));
    }
    let variance = scores.variance();
    let variance_norm = (variance / MAX_UNIT_VARIANCE).min(1.0);
    Ok(SparsePlan {
        k: params.k_at(variance_norm)?,
        indices: Vec::new(),
        variance,
        variance_norm,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MgssWeights {
    pub fc1: RealTensor,
    pub fc1_bias: RealTensor,
    pub fc2: RealTensor,
    pub fc2_bias: RealTensor,
}

impl MgssWeights {
    pub fn specs(prefix: &str, dim: usize) -> Vec<WeightSpec> {
        let h = dim / 2;
        vec![
            WeightSpec::new(format!("{prefix}.fc1"), vec![dim, h], Init::glorot(dim, h)),
            WeightSpec::new(format!("{prefix}.fc1_bias"), vec![h], Init::Zeros),
            WeightSpec::new(format!("{prefix}.fc2"), vec![h, 1], Init::glorot(h, 1)),
            WeightSpec::new(format!("{prefix}.fc2_bias"), vec![1], Init::Zeros),
        ]
    }

    pub fn from_bundle(bundle: &WeightBundle, prefix: &str) -> Result<Self> {
        let g = |n: &str| bundle.get(&format!("{prefix}.{n}")).cloned();
        let w = Self {
            fc1: g("fc1")?,
            fc1_bias: g("fc1_bias")?,
            fc2: g("fc2")?,
            fc2_bias: g("fc2_bias")?,
        };
        for (name, t) in [("fc1", &w.fc1), ("fc1_bias", &w.fc1_bias), ("fc2", &w.fc2), ("fc2_bias", &w.fc2_bias)] {
            t.ensure_finite(name)?;
        }
        Ok(w)
    }
}

/// Per-token `sigmoid(fc2(relu(fc1(x))))` over `[N, C]` motion tokens.
pub fn score_estimate(dx: &RealTensor, w: &MgssWeights) -> Result<ScoreMap> {
    dx.expect_rank(2)?;
    let hidden = linear(dx, &w.fc1, Some(&w.fc1_bias))?.map(|&v| relu(v));
    let out = linear(&hidden, &w.fc2, Some(&w.fc2_bias))?;
    ScoreMap::new(out.data().iter().map(|&v| sigmoid(v)).collect())
}

/// Indices of the `k` largest scores, ties to the lower index, returned
/// ascending.
pub fn topk_indices(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::param("k", format!("must lie in 1..={}, got {k}", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    Ok(order)
}

pub fn gather_rows(tokens: &RealTensor, indices: &[usize]) -> Result<RealTensor> {
    tokens.expect_rank(2)?;
    let (n, c) = (tokens.shape()[0], tokens.shape()[1]);
    let mut out = Vec::with_capacity(indices.len() * c);
    for &i in indices {
        if i >= n {
            return Err(Error::shape(format!("row {i} out of range for {n} tokens")));
        }
        out.extend_from_slice(&tokens.data()[i * c..(i + 1) * c]);
    }
    RealTensor::new(vec![indices.len(), c], out)
}

/// Top-`k` rows of `tokens` by score, with the plan recording the choice.
pub fn topk_select(tokens: &RealTensor, scores: &ScoreMap, k: usize) -> Result<(RealTensor, Vec<usize>)> {
    if tokens.shape().first() != Some(&scores.len()) {
        return Err(Error::shape(format!(
            "{} scores for tokens of shape {:?}",
            scores.len(),
            tokens.shape()
        )));
    }
    let idx = topk_indices(&scores.scores, k)?;
    Ok((gather_rows(tokens, &idx)?, idx))
}

/// `k` distinct indices drawn uniformly from `0..n`, ascending.
pub fn random_drop(n: usize, k: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::param("k", format!("must lie in 1..={n}, got {k}")));
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool.sort_unstable();
    Ok(pool)
}

/// `rgb_sel + S[idx] * evt[idx]` scattered onto `[N, C]`; unselected rows
/// are exactly zero.
pub fn fuse_and_scatter(
    rgb_sel: &RealTensor,
    evt_tokens: &RealTensor,
    scores: &ScoreMap,
    indices: &[usize],
) -> Result<RealTensor> {
    evt_tokens.expect_rank(2)?;
    let (n, c) = (evt_tokens.shape()[0], evt_tokens.shape()[1]);
    rgb_sel.expect_shape(&[indices.len(), c])?;
    if scores.len() != n {
        return Err(Error::shape(format!("{} scores for {n} event tokens", scores.len())));
    }
    if indices.windows(2).any(|p| p[0] >= p[1]) || indices.last().is_some_and(|&i| i >= n) {
        return Err(Error::InvalidInput(format!(
            "plan indices must be ascending, distinct and below {n}"
        )));
    }
    let mut out = vec![0.0; n * c];
    let evt = evt_tokens.data();
    for (row, &i) in indices.iter().enumerate() {
        let s = scores.scores[i];
        let dst = &mut out[i * c..(i + 1) * c];
        let src = &rgb_sel.data()[row * c..(row + 1) * c];
        for ((d, r), e) in dst.iter_mut().zip(src).zip(&evt[i * c..(i + 1) * c]) {
            *d = r + s * e;
        }
    }
    RealTensor::new(vec![n, c], out)
}

/// `frame_id,K,variance,indices` with indices separated by `;`.
pub fn plans_to_csv(plans: &[(usize, SparsePlan)]) -> String {
    let mut out = String::from("frame_id,K,variance,indices\n");
    for (frame, p) in plans {
        let idx: Vec<String> = p.indices.iter().map(usize::to_string).collect();
        writeln!(out, "{frame},{},{:.17e},{}", p.k, p.variance, idx.join(";")).expect("writing to a String");
    }
    out
}
