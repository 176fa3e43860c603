//! Forward pipeline for RGB/event single-object tracking.
//!
//! RGB and event-voxel regions are fused in the frequency domain
//! ([`fusion`]), event motion features drive a differential attention block
//! ([`diff_attn`]) whose scores choose which search tokens reach the
//! transformer ([`mgss`]), and a center head ([`head`]) predicts the box.
//! [`tracker`] runs the loop over a sequence.

pub mod backbone;
pub mod bbox;
pub mod config;
pub mod container;
pub mod diff_attn;
pub mod error;
pub mod events;
pub mod fixtures;
pub mod flops;
pub mod fusion;
pub mod head;
pub mod loss;
pub mod metrics;
pub mod mgss;
pub mod model;
pub mod motion;
pub mod numerics;
pub mod oracle;
pub mod pnm;
pub mod rng;
pub mod sequence;
pub mod tensor;
pub mod tracker;
pub mod weights;

pub use bbox::BBox;
pub use config::{FusionMode, PipelineConfig, SparsifyMode};
pub use diff_attn::AttentionVariant;
pub use error::{Error, Result};
pub use tensor::{ComplexTensor, RealTensor};
