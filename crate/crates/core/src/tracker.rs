//! Per-frame forward tracking.
//!
//! The template is cropped once from the first frame. Every later frame is
//! searched around the previous prediction: RGB and event regions are fused,
//! motion tokens pick the search tokens that reach the backbone, event
//! tokens are added back at the kept positions, and the head predicts the
//! box on the full search grid.

use std::fmt::Write as _;
use std::path::Path;

use crate::backbone::backbone_forward;
use crate::bbox::BBox;
use crate::config::{FusionMode, PipelineConfig, SparsifyMode};
use crate::diff_attn::diff_fft_block;
use crate::error::{Error, Result};
use crate::events::{crop_region, search_to_image, slice_window, voxelize, CropFill, EventStream, RegionCrop};
use crate::flops::{flops_report, FlopsReport};
use crate::fusion::{dapa_fuse, patch_embed};
use crate::head::{head_forward, TrackOutput};
use crate::loss::{frame_loss, FrameLoss};
use crate::mgss::{
    adaptive_k, fuse_and_scatter, gather_rows, plans_to_csv, random_drop, score_estimate, topk_indices, SparsePlan,
};
use crate::model::Model;
use crate::motion::{diff_maps, event_encode, pool_diffs, warp_to_reference};
use crate::rng::SeededRng;
use crate::sequence::{boxes_to_csv, load_sequence, Sequence, WEIGHTS_FILE};
use crate::tensor::{hwc_to_chw, RealTensor};
use crate::weights::WeightBundle;

pub const TRAJECTORY_CSV: &str = "trajectory.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const PLANS_CSV: &str = "plans.csv";
pub const FLOPS_CSV: &str = "flops.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: usize,
    /// Frame pixels.
    pub bbox: BBox,
    /// `None` for the initialization frame.
    pub output: Option<TrackOutput>,
    /// `None` for the initialization frame and in concatenation mode.
    pub plan: Option<SparsePlan>,
    pub backbone_tokens: usize,
    pub loss: Option<FrameLoss>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRun {
    pub frames: Vec<FrameResult>,
    pub flops: FlopsReport,
}

impl TrackRun {
    pub fn trajectory(&self) -> Vec<BBox> {
        self.frames.iter().map(|f| f.bbox).collect()
    }

    pub fn trajectory_csv(&self) -> String {
        boxes_to_csv(&self.trajectory())
    }

    /// One row per tracked frame.
    pub fn report_csv(&self) -> String {
        let mut out = String::from("frame,K,backbone_tokens,variance,cx,cy,w,h,focal,l1,giou,total\n");
        for f in self.frames.iter().skip(1) {
            let (k, var) = f.plan.as_ref().map_or((String::new(), String::new()), |p| {
                (p.k.to_string(), format!("{:.9}", p.variance))
            });
            let loss = f.loss.map_or(",,,".to_string(), |l| {
                format!("{:.9},{:.9},{:.9},{:.9}", l.focal, l.l1, l.giou, l.total)
            });
            let b = f.bbox;
            writeln!(
                out,
                "{},{k},{},{var},{:.6},{:.6},{:.6},{:.6},{loss}",
                f.frame, f.backbone_tokens, b.cx, b.cy, b.w, b.h
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn plans_csv(&self) -> String {
        let plans: Vec<(usize, SparsePlan)> = self
            .frames
            .iter()
            .filter_map(|f| f.plan.clone().map(|p| (f.frame, p)))
            .collect();
        plans_to_csv(&plans)
    }

    /// Writes trajectory, report, plan and FLOPs CSVs into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            (TRAJECTORY_CSV, self.trajectory_csv()),
            (REPORT_CSV, self.report_csv()),
            (PLANS_CSV, self.plans_csv()),
            (FLOPS_CSV, self.flops.to_csv()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Smallest box side kept after clipping, in pixels.
pub const MIN_BOX_PX: f64 = 4.0;

/// Clips a box to the `width x height` frame, keeping at least
/// [`MIN_BOX_PX`] on each side.
pub fn clip_box(b: &BBox, width: f64, height: f64) -> BBox {
    let x0 = b.x0().clamp(0.0, width - MIN_BOX_PX);
    let y0 = b.y0().clamp(0.0, height - MIN_BOX_PX);
    let x1 = b.x1().clamp(x0 + MIN_BOX_PX, width);
    let y1 = b.y1().clamp(y0 + MIN_BOX_PX, height);
    BBox::from_corner(x0, y0, x1 - x0, y1 - y0)
}

/// Box in frame pixels mapped into a crop, normalized to `[0, 1]` across it.
pub fn image_to_search(crop: &RegionCrop, b: &BBox) -> BBox {
    let s = crop.side as f64;
    BBox::new((b.cx - crop.x0 as f64) / s, (b.cy - crop.y0 as f64) / s, b.w / s, b.h / s)
}

/// RGB and event-voxel crops of one region.
struct Region {
    rgb: RegionCrop,
    evt: RealTensor,
}

fn crop_pair(frame: &RealTensor, voxels: &RealTensor, bbox: &BBox, factor: f64, size: usize) -> Result<Region> {
    let rgb = crop_region(frame, bbox, factor, size, CropFill::ChannelMean)?;
    let evt = crop_region(voxels, bbox, factor, size, CropFill::Zero)?.pixels;
    Ok(Region { rgb, evt })
}

/// Image tokens fed to the backbone and event tokens kept for fusion.
struct RegionTokens {
    image: RealTensor,
    event: RealTensor,
}

fn region_tokens(region: &Region, cfg: &PipelineConfig, model: &Model, size: usize) -> Result<RegionTokens> {
    let event = patch_embed(&region.evt, &model.patch_evt)?.tokens;
    let image = match cfg.fusion {
        FusionMode::Dapa => {
            let fused = dapa_fuse(&region.rgb.pixels, &region.evt, &model.dapa, cfg.sigma_hp_for(size))?;
            patch_embed(&fused, &model.patch_fused)?.tokens
        }
        FusionMode::Add => patch_embed(&region.rgb.pixels, &model.patch_rgb)?.tokens.add(&event)?,
        FusionMode::Concat => patch_embed(&region.rgb.pixels, &model.patch_rgb)?.tokens,
    };
    Ok(RegionTokens { image, event })
}

/// Temporal difference maps of the encoded voxel region, `[M, g, g, C]`.
fn motion_diffs(region: &Region, cfg: &PipelineConfig, model: &Model, grid: usize) -> Result<RealTensor> {
    let f = event_encode(&hwc_to_chw(&region.evt)?, &model.motion)?;
    diff_maps(&warp_to_reference(&f, grid, grid)?, cfg.stride)
}

struct Template {
    tokens: RegionTokens,
    /// Pooled template motion tokens; absent in concat mode.
    motion: Option<RealTensor>,
}

struct Step {
    output: TrackOutput,
    plan: Option<SparsePlan>,
    backbone_tokens: usize,
}

pub struct Tracker<'a> {
    cfg: &'a PipelineConfig,
    model: &'a Model,
    events: &'a EventStream,
    rng: SeededRng,
}

impl<'a> Tracker<'a> {
    pub fn new(cfg: &'a PipelineConfig, model: &'a Model, events: &'a EventStream) -> Self {
        Self {
            cfg,
            model,
            events,
            rng: SeededRng::new(cfg.seed),
        }
    }

    /// Full-sensor voxel grid `[H, W, B]` of the window ending at `t`.
    fn voxels_at(&self, frame: usize, t: u64) -> Result<RealTensor> {
        let span = self.cfg.event_window_us();
        let t0 = t.checked_sub(span).ok_or(Error::MissingEventWindow(frame))?;
        let window = slice_window(self.events, t0, t)?;
        Ok(voxelize(&window, self.cfg.bins, t0, t)?.to_hwc())
    }

    fn template(&self, frame: &RealTensor, t: u64, bbox: &BBox) -> Result<Template> {
        let cfg = self.cfg;
        let voxels = self.voxels_at(0, t)?;
        let region = crop_pair(frame, &voxels, bbox, cfg.template_factor, cfg.template_size)?;
        let tokens = region_tokens(&region, cfg, self.model, cfg.template_size)?;
        let motion = match cfg.fusion {
            FusionMode::Concat => None,
            _ => Some(pool_diffs(&motion_diffs(&region, cfg, self.model, cfg.template_grid())?)?),
        };
        Ok(Template { tokens, motion })
    }

    fn step(&mut self, template: &Template, region: &Region) -> Result<Step> {
        let cfg = self.cfg;
        let model = self.model;
        let g = cfg.search_grid();
        let nz = cfg.template_tokens();
        let search = region_tokens(region, cfg, model, cfg.search_size)?;

        if cfg.fusion == FusionMode::Concat {
            let input = RealTensor::concat_rows(&[
                &template.tokens.image,
                &template.tokens.event,
                &search.image,
                &search.event,
            ])?;
            let n = input.shape()[0];
            let out = backbone_forward(&input, &model.backbone)?;
            let nx = cfg.search_tokens();
            let rgb = out.slice_rows(2 * nz, 2 * nz + nx)?;
            let evt = out.slice_rows(2 * nz + nx, n)?;
            let features = rgb.add(&evt)?.reshape(vec![g, g, cfg.embed_dim])?;
            return Ok(Step {
                output: head_forward(&features, &model.head)?,
                plan: None,
                backbone_tokens: n,
            });
        }

        let motion_search = pool_diffs(&motion_diffs(region, cfg, model, g)?)?;
        let motion_template = template.motion.as_ref().expect("template motion outside concat mode");
        let mut d = RealTensor::concat_rows(&[motion_template, &motion_search])?;
        for block in &model.diff {
            d = diff_fft_block(&d, block)?;
        }
        let dx = d.slice_rows(nz, d.shape()[0])?;
        let scores = score_estimate(&dx, &model.mgss)?;
        let mut plan = adaptive_k(&scores, &cfg.k_params())?;
        let n_x = scores.len();
        plan.indices = match cfg.sparsify {
            SparsifyMode::Mgss => topk_indices(&scores.scores, plan.k)?,
            SparsifyMode::Random => random_drop(n_x, plan.k, &mut self.rng)?,
            SparsifyMode::None => (0..n_x).collect(),
        };
        plan.k = plan.indices.len();

        let selected = gather_rows(&search.image, &plan.indices)?;
        let input = RealTensor::concat_rows(&[&template.tokens.image, &selected])?;
        let n = input.shape()[0];
        let out = backbone_forward(&input, &model.backbone)?.slice_rows(nz, n)?;
        let fused = fuse_and_scatter(&out, &search.event, &scores, &plan.indices)?;
        let features = fused.reshape(vec![g, g, cfg.embed_dim])?;
        Ok(Step {
            output: head_forward(&features, &model.head)?,
            plan: Some(plan),
            backbone_tokens: n,
        })
    }
}

fn check_sequence(seq: &Sequence) -> Result<()> {
    if seq.frames.is_empty() || seq.frames.len() != seq.timestamps.len() {
        return Err(Error::InvalidInput(format!(
            "{} frames with {} timestamps",
            seq.frames.len(),
            seq.timestamps.len()
        )));
    }
    if seq.timestamps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("frame timestamps must increase".into()));
    }
    for (i, f) in seq.frames.iter().enumerate() {
        if f.ndim() != 3 || f.shape()[2] != 3 {
            return Err(Error::shape(format!("frame {i} has shape {:?}, expected [H, W, 3]", f.shape())));
        }
        if (f.shape()[1] as u32, f.shape()[0] as u32) != (seq.events.width, seq.events.height) {
            return Err(Error::shape(format!(
                "frame {i} is {}x{}, events come from a {}x{} sensor",
                f.shape()[1],
                f.shape()[0],
                seq.events.width,
                seq.events.height
            )));
        }
    }
    if seq.frames[0].shape()[0] < MIN_BOX_PX as usize || seq.frames[0].shape()[1] < MIN_BOX_PX as usize {
        return Err(Error::shape("frames are smaller than the minimum box"));
    }
    if !seq.init_bbox.is_valid() {
        return Err(Error::InvalidInput(format!("degenerate initial box {:?}", seq.init_bbox)));
    }
    Ok(())
}

/// Tracks every frame after the first, starting from `seq.init_bbox`.
pub fn track_forward(seq: &Sequence, cfg: &PipelineConfig, model: &Model) -> Result<TrackRun> {
    cfg.validate()?;
    check_sequence(seq)?;
    let mut tracker = Tracker::new(cfg, model, &seq.events);
    let template = tracker.template(&seq.frames[0], seq.timestamps[0], &seq.init_bbox)?;
    let gt = seq.groundtruth.as_ref();

    let mut results = vec![FrameResult {
        frame: 0,
        bbox: seq.init_bbox,
        output: None,
        plan: None,
        backbone_tokens: 0,
        loss: None,
    }];
    let mut prev = seq.init_bbox;
    for i in 1..seq.frames.len() {
        let voxels = tracker.voxels_at(i, seq.timestamps[i])?;
        let region = crop_pair(&seq.frames[i], &voxels, &prev, cfg.search_factor, cfg.search_size)?;
        let step = tracker.step(&template, &region)?;
        let raw = search_to_image(&region.rgb, &step.output.bbox);
        if !raw.is_valid() {
            return Err(Error::Numerical(format!("frame {i} produced a degenerate box {raw:?}")));
        }
        let (h, w) = (seq.frames[i].shape()[0] as f64, seq.frames[i].shape()[1] as f64);
        let bbox = clip_box(&raw, w, h);
        let loss = match gt {
            Some(g) => Some(frame_loss(&step.output, &image_to_search(&region.rgb, &g[i]), &cfg.loss_weights)?),
            None => None,
        };
        results.push(FrameResult {
            frame: i,
            bbox,
            output: Some(step.output),
            plan: step.plan,
            backbone_tokens: step.backbone_tokens,
            loss,
        });
        prev = bbox;
    }

    let kept: Vec<usize> = results
        .iter()
        .skip(1)
        .map(|r| r.plan.as_ref().map_or(cfg.search_tokens(), |p| p.k))
        .collect();
    Ok(TrackRun {
        frames: results,
        flops: flops_report(cfg, &kept),
    })
}

/// Loads a sequence directory, tracks it and writes the CSV outputs to
/// `out`. Weights come from `weights` or the sequence's own bundle.
pub fn run_track(seq_dir: &Path, cfg: &PipelineConfig, weights: Option<&Path>, out: &Path) -> Result<TrackRun> {
    let seq = load_sequence(seq_dir)?;
    let default_weights = seq_dir.join(WEIGHTS_FILE);
    let bundle = WeightBundle::load(weights.unwrap_or(&default_weights))?;
    let model = Model::from_bundle(&bundle, cfg)?;
    let run = track_forward(&seq, cfg, &model)?;
    run.write(out)?;
    Ok(run)
}
