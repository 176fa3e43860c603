//! Weight manifest for a configuration and the assembled model.

use crate::backbone::BackboneWeights;
use crate::config::PipelineConfig;
use crate::diff_attn::DiffAttnWeights;
use crate::error::Result;
use crate::fusion::{DapaWeights, PatchEmbed};
use crate::head::HeadWeights;
use crate::mgss::MgssWeights;
use crate::motion::EncoderWeights;
use crate::weights::{init_from_specs, WeightBundle, WeightSpec};

pub const RGB_CHANNELS: usize = 3;

/// Every parameter the pipeline reads, for any fusion, sparsification or
/// attention mode, in initialization order.
pub fn manifest(cfg: &PipelineConfig) -> Vec<WeightSpec> {
    let c = cfg.embed_dim;
    let mut v = DapaWeights::specs("dapa", RGB_CHANNELS, cfg.bins, cfg.fused_dim);
    v.extend(PatchEmbed::specs("patch.fused", cfg.patch, cfg.fused_dim, c));
    v.extend(PatchEmbed::specs("patch.rgb", cfg.patch, RGB_CHANNELS, c));
    v.extend(PatchEmbed::specs("patch.evt", cfg.patch, cfg.bins, c));
    v.extend(EncoderWeights::specs("motion", c));
    for i in 0..cfg.diff_depth {
        v.extend(DiffAttnWeights::specs(&format!("diff.{i}"), c));
    }
    v.extend(MgssWeights::specs("mgss", c));
    v.extend(BackboneWeights::specs("backbone", c, cfg.backbone_depth));
    v.extend(HeadWeights::specs("head", c));
    v
}

/// Glorot-uniform weights, zero biases and identity batch-norm statistics
/// drawn from one seeded stream.
pub fn init_weights(cfg: &PipelineConfig, seed: u64) -> WeightBundle {
    init_from_specs(&manifest(cfg), seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dapa: DapaWeights,
    pub patch_fused: PatchEmbed,
    pub patch_rgb: PatchEmbed,
    pub patch_evt: PatchEmbed,
    pub motion: EncoderWeights,
    pub diff: Vec<DiffAttnWeights>,
    pub mgss: MgssWeights,
    pub backbone: BackboneWeights,
    pub head: HeadWeights,
}

impl Model {
    pub fn from_bundle(bundle: &WeightBundle, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        bundle.check(&manifest(cfg))?;
        let diff = (0..cfg.diff_depth)
            .map(|i| DiffAttnWeights::from_bundle(bundle, &format!("diff.{i}"), cfg.lambda, cfg.window(), cfg.attention))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dapa: DapaWeights::from_bundle(bundle, "dapa")?,
            patch_fused: PatchEmbed::from_bundle(bundle, "patch.fused", cfg.patch)?,
            patch_rgb: PatchEmbed::from_bundle(bundle, "patch.rgb", cfg.patch)?,
            patch_evt: PatchEmbed::from_bundle(bundle, "patch.evt", cfg.patch)?,
            motion: EncoderWeights::from_bundle(bundle, "motion")?,
            diff,
            mgss: MgssWeights::from_bundle(bundle, "mgss")?,
            backbone: BackboneWeights::from_bundle(bundle, "backbone", cfg.backbone_depth, cfg.backbone_heads)?,
            head: HeadWeights::from_bundle(bundle, "head")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PipelineConfig {
        PipelineConfig {
            embed_dim: 16,
            backbone_depth: 2,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn seeds_control_the_bundle() {
        let cfg = small();
        let a = init_weights(&cfg, 7);
        assert_eq!(a, init_weights(&cfg, 7));
        assert_ne!(a, init_weights(&cfg, 8));
        assert!(Model::from_bundle(&a, &cfg).is_ok());
    }

    #[test]
    fn missing_or_misshapen_weights_are_rejected() {
        let cfg = small();
        let bundle = init_weights(&cfg, 1);
        let deeper = PipelineConfig { backbone_depth: 3, ..cfg.clone() };
        assert!(Model::from_bundle(&bundle, &deeper).is_err());
        let wider = PipelineConfig { embed_dim: 32, ..cfg };
        assert!(Model::from_bundle(&bundle, &wider).is_err());
    }
}
