//! Analytic floating-point operation counts for a tracking run.
//!
//! A multiply-accumulate counts as two operations. Elementwise work (norms,
//! activations, masks, softmax) is not counted. Template-side work happens
//! once per sequence; everything on the search side happens every frame.

use std::fmt::Write as _;

use crate::config::{FusionMode, PipelineConfig, SparsifyMode};
use crate::diff_attn::AttentionVariant;
use crate::model::RGB_CHANNELS;
use crate::motion::ENCODER_WIDTHS;
use crate::numerics::{conv_out_len, fft_flops};

pub fn conv_flops(k: usize, cin: usize, cout: usize, h_out: usize, w_out: usize) -> u64 {
    2 * (k * k * cin * cout * h_out * w_out) as u64
}

pub fn linear_flops(inputs: usize, outputs: usize, n: usize) -> u64 {
    2 * (inputs * outputs * n) as u64
}

/// One `[n, d] x [d, n]` or `[n, n] x [n, d]` product.
pub fn attention_product_flops(n: usize, d: usize) -> u64 {
    2 * (n * n * d) as u64
}

/// Row transforms then column transforms over `channels` planes.
pub fn fft2_flops(h: usize, w: usize, channels: usize) -> u64 {
    channels as u64 * (h as u64 * fft_flops(w) + w as u64 * fft_flops(h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: &'static str,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopsReport {
    pub frames: usize,
    pub stages: Vec<Stage>,
    pub total: u64,
    pub baseline_stages: Vec<Stage>,
    pub baseline_total: u64,
    /// Backbone input tokens per frame in the configured mode.
    pub backbone_tokens: Vec<usize>,
    /// Retained search tokens per frame.
    pub selected: Vec<usize>,
    /// Backbone input tokens per frame for the concatenation baseline.
    pub baseline_tokens: usize,
}

fn dapa_flops(cfg: &PipelineConfig, s: usize) -> u64 {
    let (b, cf) = (cfg.bins, cfg.fused_dim);
    let transforms = fft2_flops(s, s, RGB_CHANNELS + b) + fft2_flops(s, s, cf);
    let enhance = 2 * conv_flops(3, RGB_CHANNELS, cf, s, s) + 2 * conv_flops(3, b, cf, s, s);
    let ffc = 2 * 2 * conv_flops(1, cf, cf, s, s);
    transforms + enhance + ffc
}

fn encoder_flops(cfg: &PipelineConfig, s: usize) -> u64 {
    let [a, b, c] = ENCODER_WIDTHS;
    let chans = [(1, a), (a, b), (b, c), (c, cfg.embed_dim)];
    let mut size = s;
    let mut total = 0;
    for (cin, cout) in chans {
        size = conv_out_len(size, 3, 2, 1);
        total += conv_flops(3, cin, cout, size, size);
    }
    cfg.bins as u64 * total
}

fn diff_block_flops(cfg: &PipelineConfig, n: usize) -> u64 {
    let c = cfg.embed_dim;
    let projections = 4 * linear_flops(c, c, n);
    let attention = match cfg.attention {
        AttentionVariant::Standard => 2 * attention_product_flops(n, c),
        AttentionVariant::Diff | AttentionVariant::DiffFft => {
            2 * (attention_product_flops(n, c / 2) + attention_product_flops(n, c))
        }
    };
    let spectral = match cfg.attention {
        AttentionVariant::DiffFft => 3 * c as u64 * fft_flops(n),
        _ => 0,
    };
    let ffn = linear_flops(c, 4 * c, n) + linear_flops(4 * c, c, n);
    cfg.diff_depth as u64 * (projections + attention + spectral + ffn)
}

/// Per-frame backbone cost at `n` input tokens.
pub fn backbone_flops(cfg: &PipelineConfig, n: usize) -> u64 {
    let c = cfg.embed_dim;
    let d = c / cfg.backbone_heads;
    let per_layer = 4 * linear_flops(c, c, n)
        + cfg.backbone_heads as u64 * 2 * attention_product_flops(n, d)
        + linear_flops(c, 4 * c, n)
        + linear_flops(4 * c, c, n);
    cfg.backbone_depth as u64 * per_layer
}

fn head_flops(cfg: &PipelineConfig) -> u64 {
    let (c, g) = (cfg.embed_dim, cfg.search_grid());
    [1, 2, 2]
        .iter()
        .map(|&out| conv_flops(3, c, c / 2, g, g) + conv_flops(3, c / 2, out, g, g))
        .sum()
}

fn embed_flops(cfg: &PipelineConfig, cin: usize, n: usize) -> u64 {
    linear_flops(cfg.patch * cfg.patch * cin, cfg.embed_dim, n)
}

fn concat_stages(cfg: &PipelineConfig, frames: usize) -> (Vec<Stage>, usize) {
    let f = frames as u64;
    let (nz, nx) = (cfg.template_tokens(), cfg.search_tokens());
    let tokens = 2 * (nz + nx);
    let embed = embed_flops(cfg, RGB_CHANNELS, nz)
        + embed_flops(cfg, cfg.bins, nz)
        + f * (embed_flops(cfg, RGB_CHANNELS, nx) + embed_flops(cfg, cfg.bins, nx));
    let stages = vec![
        Stage { name: "patch_embed", flops: embed },
        Stage { name: "backbone", flops: f * backbone_flops(cfg, tokens) },
        Stage { name: "head", flops: f * head_flops(cfg) },
    ];
    (stages, tokens)
}

/// Counts for the configured mode over `selected.len()` frames, where
/// `selected[i]` is the number of retained search tokens in frame `i`, and
/// for the concatenation baseline over the same frames.
pub fn flops_report(cfg: &PipelineConfig, selected: &[usize]) -> FlopsReport {
    let frames = selected.len();
    let f = frames as u64;
    let (nz, nx) = (cfg.template_tokens(), cfg.search_tokens());
    let (baseline_stages, baseline_tokens) = concat_stages(cfg, frames);

    let (stages, backbone_tokens, kept) = if cfg.fusion == FusionMode::Concat {
        (baseline_stages.clone(), vec![baseline_tokens; frames], vec![nx; frames])
    } else {
        let kept: Vec<usize> = match cfg.sparsify {
            SparsifyMode::None => vec![nx; frames],
            SparsifyMode::Mgss | SparsifyMode::Random => selected.to_vec(),
        };
        let tokens: Vec<usize> = kept.iter().map(|k| nz + k).collect();
        let mut stages = Vec::new();
        let fusion = match cfg.fusion {
            FusionMode::Dapa => {
                stages.push(Stage {
                    name: "dapa",
                    flops: dapa_flops(cfg, cfg.template_size) + f * dapa_flops(cfg, cfg.search_size),
                });
                embed_flops(cfg, cfg.fused_dim, nz) + f * embed_flops(cfg, cfg.fused_dim, nx)
            }
            _ => {
                embed_flops(cfg, RGB_CHANNELS, nz)
                    + embed_flops(cfg, cfg.bins, nz)
                    + f * (embed_flops(cfg, RGB_CHANNELS, nx) + embed_flops(cfg, cfg.bins, nx))
            }
        };
        let event_tokens = match cfg.fusion {
            FusionMode::Dapa => f * embed_flops(cfg, cfg.bins, nx),
            _ => 0,
        };
        stages.push(Stage { name: "patch_embed", flops: fusion + event_tokens });
        stages.push(Stage {
            name: "motion_encoder",
            flops: encoder_flops(cfg, cfg.template_size) + f * encoder_flops(cfg, cfg.search_size),
        });
        stages.push(Stage { name: "diff_attention", flops: f * diff_block_flops(cfg, nz + nx) });
        let h = cfg.embed_dim / 2;
        stages.push(Stage {
            name: "mgss",
            flops: f * (linear_flops(cfg.embed_dim, h, nx) + linear_flops(h, 1, nx)),
        });
        stages.push(Stage {
            name: "backbone",
            flops: tokens.iter().map(|&n| backbone_flops(cfg, n)).sum(),
        });
        stages.push(Stage { name: "head", flops: f * head_flops(cfg) });
        (stages, tokens, kept)
    };

    FlopsReport {
        frames,
        total: stages.iter().map(|s| s.flops).sum(),
        stages,
        baseline_total: baseline_stages.iter().map(|s| s.flops).sum(),
        baseline_stages,
        backbone_tokens,
        selected: kept,
        baseline_tokens,
    }
}

impl FlopsReport {
    pub fn stage(&self, name: &str) -> Option<u64> {
        self.stages.iter().find(|s| s.name == name).map(|s| s.flops)
    }

    /// `section,name,value` rows: stage counts, totals and per-frame tokens.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,value\n");
        let mut row = |section: &str, name: &str, value: String| {
            writeln!(out, "{section},{name},{value}").expect("writing to a String");
        };
        for s in &self.stages {
            row("configured", s.name, s.flops.to_string());
        }
        row("configured", "total", self.total.to_string());
        for s in &self.baseline_stages {
            row("concat", s.name, s.flops.to_string());
        }
        row("concat", "total", self.baseline_total.to_string());
        for (i, (t, k)) in self.backbone_tokens.iter().zip(&self.selected).enumerate() {
            row("tokens", &format!("frame{i}"), format!("{t}:{k}"));
        }
        row("tokens", "concat", self.baseline_tokens.to_string());
        out
    }
}
