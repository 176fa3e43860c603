//! Pipeline configuration loaded from TOML. Every key is optional; unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diff_attn::{AttentionVariant, Window};
use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::mgss::{Decay, KParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Frequency-domain fusion before patch embedding.
    Dapa,
    /// Sum of separate RGB and event patch embeddings.
    Add,
    /// RGB and event tokens side by side through the backbone.
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsifyMode {
    /// Motion-scored adaptive top-K.
    Mgss,
    /// Adaptive K with uniformly drawn positions.
    Random,
    /// Keep every search token.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub template_size: usize,
    pub search_size: usize,
    pub patch: usize,
    pub bins: usize,
    pub stride: usize,
    pub embed_dim: usize,
    pub fused_dim: usize,
    /// Event high-pass spread in frequency bins; `0.1 * region size` when
    /// unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_hp: Option<f64>,
    /// Token-frequency window spread; `N / 4` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_w: Option<f64>,
    pub lambda: f64,
    pub beta: u32,
    /// `N_x / 2` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_min: Option<usize>,
    /// `N_x` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    pub decay: Decay,
    pub fusion: FusionMode,
    pub sparsify: SparsifyMode,
    pub attention: AttentionVariant,
    pub diff_depth: usize,
    pub backbone_depth: usize,
    pub backbone_heads: usize,
    pub seed: u64,
    pub template_factor: f64,
    pub search_factor: f64,
    pub frame_period_us: u64,
    /// Events in `[t - window, t)` belong to the frame at `t`; defaults to
    /// one frame period.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_window_us: Option<u64>,
    pub loss_weights: LossWeights,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            template_size: 112,
            search_size: 224,
            patch: 16,
            bins: 5,
            stride: 1,
            embed_dim: 128,
            fused_dim: 16,
            sigma_hp: None,
            sigma_w: None,
            lambda: 0.8,
            beta: 2,
            k_min: None,
            k_max: None,
            decay: Decay::Exp,
            fusion: FusionMode::Dapa,
            sparsify: SparsifyMode::Mgss,
            attention: AttentionVariant::DiffFft,
            diff_depth: 1,
            backbone_depth: 12,
            backbone_heads: 4,
            seed: 7,
            template_factor: 2.0,
            search_factor: 4.0,
            frame_period_us: 10_000,
            event_window_us: None,
            loss_weights: LossWeights::default(),
        }
    }
}

/// Key named by a deserialization error: the unknown field itself, or the
/// key on the line the error points at.
fn offending_key(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message();
    if msg.starts_with("unknown field") {
        if let Some(k) = msg.split('`').nth(1) {
            return k.to_string();
        }
    }
    e.span()
        .and_then(|span| {
            let start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
            let line = text[start..].lines().next()?;
            let (key, _) = line.split_once('=')?;
            Some(key.trim().to_string())
        })
        .unwrap_or_else(|| "<document>".into())
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            key: offending_key(text, &e),
            reason: e.message().trim().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("template_size", self.template_size),
            ("search_size", self.search_size),
            ("patch", self.patch),
            ("embed_dim", self.embed_dim),
            ("fused_dim", self.fused_dim),
            ("backbone_heads", self.backbone_heads),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(bad(key, "must be positive"));
            }
        }
        for (key, size) in [("template_size", self.template_size), ("search_size", self.search_size)] {
            if size % self.patch != 0 {
                return Err(bad(key, format!("{size} is not divisible by patch {}", self.patch)));
            }
            if size % 16 != 0 {
                return Err(bad(key, format!("{size} is not divisible by the motion encoder stride 16")));
            }
        }
        if !self.embed_dim.is_multiple_of(2) {
            return Err(bad("embed_dim", "must be even"));
        }
        if !self.embed_dim.is_multiple_of(self.backbone_heads) {
            return Err(bad("backbone_heads", "must divide embed_dim"));
        }
        if self.bins < 2 {
            return Err(bad("bins", "need at least 2 time bins"));
        }
        if self.stride == 0 || self.stride >= self.bins {
            return Err(bad("stride", format!("must lie in 1..{}", self.bins)));
        }
        if self.beta == 0 {
            return Err(bad("beta", "must be a positive integer"));
        }
        for (key, v) in [("sigma_hp", self.sigma_hp), ("sigma_w", self.sigma_w)] {
            if let Some(s) = v {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(bad(key, "must be positive and finite"));
                }
            }
        }
        if !self.lambda.is_finite() {
            return Err(bad("lambda", "must be finite"));
        }
        for (key, f) in [("template_factor", self.template_factor), ("search_factor", self.search_factor)] {
            if !(f > 0.0 && f.is_finite()) {
                return Err(bad(key, "must be positive and finite"));
            }
        }
        if self.frame_period_us == 0 {
            return Err(bad("frame_period_us", "must be positive"));
        }
        if self.event_window_us == Some(0) {
            return Err(bad("event_window_us", "must be positive"));
        }
        let n_x = self.search_tokens();
        let (k_min, k_max) = (self.k_min(), self.k_max());
        if k_max == 0 || k_max > n_x {
            return Err(bad("k_max", format!("must lie in 1..={n_x}")));
        }
        if k_min == 0 || k_min > k_max {
            return Err(bad("k_min", format!("must lie in 1..={k_max}")));
        }
        let w = self.loss_weights;
        if [w.focal, w.l1, w.giou].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(bad("loss_weights", "weights must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn template_grid(&self) -> usize {
        self.template_size / self.patch
    }

    pub fn search_grid(&self) -> usize {
        self.search_size / self.patch
    }

    /// `N_z`.
    pub fn template_tokens(&self) -> usize {
        self.template_grid().pow(2)
    }

    /// `N_x`.
    pub fn search_tokens(&self) -> usize {
        self.search_grid().pow(2)
    }

    pub fn k_min(&self) -> usize {
        self.k_min.unwrap_or(self.search_tokens() / 2)
    }

    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or(self.search_tokens())
    }

    pub fn k_params(&self) -> KParams {
        KParams {
            k_min: self.k_min(),
            k_max: self.k_max(),
            beta: self.beta,
            decay: self.decay,
        }
    }

    pub fn sigma_hp_for(&self, size: usize) -> f64 {
        self.sigma_hp.unwrap_or(0.1 * size as f64)
    }

    pub fn window(&self) -> Window {
        self.sigma_w.map_or(Window::Auto, Window::Sigma)
    }

    pub fn event_window_us(&self) -> u64 {
        self.event_window_us.unwrap_or(self.frame_period_us)
    }
}
