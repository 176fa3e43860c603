use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use apmtrack_core::config::{FusionMode, PipelineConfig, SparsifyMode};
use apmtrack_core::container::{encode, StoredTensor};
use apmtrack_core::diff_attn::AttentionVariant;
use apmtrack_core::events::{parse_events, slice_window, voxelize, EventFormat};
use apmtrack_core::fixtures::gen_fixtures;
use apmtrack_core::flops::flops_report;
use apmtrack_core::fusion::{dapa_fuse, patch_embed};
use apmtrack_core::metrics::compute_metrics;
use apmtrack_core::model::{init_weights, Model};
use apmtrack_core::numerics::bilinear_resize;
use apmtrack_core::pnm::read_pnm;
use apmtrack_core::sequence::parse_boxes_csv;
use apmtrack_core::tracker::run_track;
use apmtrack_core::weights::WeightBundle;

#[derive(Parser)]
#[command(name = "apmtrack", version, about = "RGB/event tracking pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    fusion: Option<Fusion>,
    #[arg(long, global = true, value_enum)]
    sparsify: Option<Sparsify>,
    #[arg(long, global = true, value_enum)]
    attn: Option<Attn>,
    /// Output directory (or file for `voxelize` and `fuse`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fusion {
    Dapa,
    Add,
    Concat,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sparsify {
    Mgss,
    Random,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Attn {
    DiffFft,
    Diff,
    Standard,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic fixture sequence and a weight bundle.
    GenFixtures,
    /// Rasterize an event window into a voxel grid (APMT, tensor `voxels`).
    Voxelize {
        #[arg(long)]
        events: PathBuf,
        /// Sensor width, required for CSV input.
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        #[arg(long)]
        t0: u64,
        #[arg(long)]
        t1: u64,
    },
    /// Fuse a frame with an event window at search resolution (APMT,
    /// tensors `fused` and `tokens`).
    Fuse {
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        t0: u64,
        #[arg(long)]
        t1: u64,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Track a sequence directory and write trajectory/report CSVs.
    Track {
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Score a trajectory against ground truth.
    Metrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Analytic FLOPs for the configured mode and the concatenation baseline.
    BenchFlops {
        /// Plans CSV from a `track` run; otherwise every frame keeps `--k`.
        #[arg(long)]
        plans: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1)]
        frames: usize,
    },
}

fn config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(f) = g.fusion {
        cfg.fusion = match f {
            Fusion::Dapa => FusionMode::Dapa,
            Fusion::Add => FusionMode::Add,
            Fusion::Concat => FusionMode::Concat,
        };
    }
    if let Some(s) = g.sparsify {
        cfg.sparsify = match s {
            Sparsify::Mgss => SparsifyMode::Mgss,
            Sparsify::Random => SparsifyMode::Random,
            Sparsify::None => SparsifyMode::None,
        };
    }
    if let Some(a) = g.attn {
        cfg.attention = match a {
            Attn::DiffFft => AttentionVariant::DiffFft,
            Attn::Diff => AttentionVariant::Diff,
            Attn::Standard => AttentionVariant::Standard,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_path(g: &Global) -> Result<&Path> {
    g.out.as_deref().context("--out is required for this command")
}

fn event_format(path: &Path, width: Option<u32>, height: Option<u32>) -> Result<EventFormat> {
    if path.extension().is_some_and(|e| e == "csv") {
        match (width, height) {
            (Some(width), Some(height)) => Ok(EventFormat::Csv { width, height }),
            _ => bail!("CSV events carry no geometry; pass --width and --height"),
        }
    } else {
        Ok(EventFormat::Bin)
    }
}

fn write_tensors(path: &Path, entries: Vec<(&str, StoredTensor)>) -> Result<()> {
    let owned: Vec<(String, StoredTensor)> = entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    std::fs::write(path, encode(&owned)?).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = config(g)?;
    match cli.command {
        Command::GenFixtures => {
            let out = out_path(g)?;
            let fx = gen_fixtures(cfg.seed, out, &cfg)?;
            println!(
                "wrote {} frames and {} events to {}",
                fx.frames.len(),
                fx.events.len(),
                out.display()
            );
        }
        Command::Voxelize { events, width, height, t0, t1 } => {
            let bytes = std::fs::read(&events).with_context(|| format!("reading {}", events.display()))?;
            let stream = parse_events(&bytes, event_format(&events, width, height)?)?;
            let grid = voxelize(&slice_window(&stream, t0, t1)?, cfg.bins, t0, t1)?;
            write_tensors(out_path(g)?, vec![("voxels", StoredTensor::F64(grid.data))])?;
        }
        Command::Fuse { rgb, events, t0, t1, weights } => {
            let frame = read_pnm(&rgb)?;
            if frame.shape()[2] != 3 {
                bail!("{} is not an RGB image", rgb.display());
            }
            let (h, w) = (frame.shape()[0] as u32, frame.shape()[1] as u32);
            let bytes = std::fs::read(&events).with_context(|| format!("reading {}", events.display()))?;
            let stream = parse_events(&bytes, event_format(&events, Some(w), Some(h))?)?;
            let voxels = voxelize(&slice_window(&stream, t0, t1)?, cfg.bins, t0, t1)?.to_hwc();
            let s = cfg.search_size;
            let bundle = match weights {
                Some(p) => WeightBundle::load(&p)?,
                None => init_weights(&cfg, cfg.seed),
            };
            let model = Model::from_bundle(&bundle, &cfg)?;
            let fused = dapa_fuse(
                &bilinear_resize(&frame, s, s)?,
                &bilinear_resize(&voxels, s, s)?,
                &model.dapa,
                cfg.sigma_hp_for(s),
            )?;
            let tokens = patch_embed(&fused, &model.patch_fused)?.tokens;
            write_tensors(
                out_path(g)?,
                vec![("fused", StoredTensor::F64(fused)), ("tokens", StoredTensor::F64(tokens))],
            )?;
        }
        Command::Track { seq, weights } => {
            let out = out_path(g)?;
            let run = run_track(&seq, &cfg, weights.as_deref(), out)?;
            println!(
                "tracked {} frames; FLOPs {} (concat baseline {})",
                run.frames.len(),
                run.flops.total,
                run.flops.baseline_total
            );
        }
        Command::Metrics { pred, gt } => {
            let read = |p: &Path| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()));
            let m = compute_metrics(&parse_boxes_csv(&read(&pred)?)?, &parse_boxes_csv(&read(&gt)?)?)?;
            println!("PR@20={:.4} SR_AUC={:.4} NPR_AUC={:.4}", m.pr20, m.sr_auc, m.npr_auc);
            if let Some(out) = &g.out {
                std::fs::write(out, m.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            }
        }
        Command::BenchFlops { plans, k, frames } => {
            let selected: Vec<usize> = match (plans, k) {
                (Some(p), _) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    text.lines()
                        .skip(1)
                        .filter(|l| !l.trim().is_empty())
                        .map(|l| {
                            l.split(',')
                                .nth(1)
                                .and_then(|v| v.parse().ok())
                                .with_context(|| format!("bad plan row `{l}`"))
                        })
                        .collect::<Result<_>>()?
                }
                (None, k) => vec![k.unwrap_or(cfg.k_max()); frames],
            };
            let report = flops_report(&cfg, &selected);
            let csv = report.to_csv();
            match &g.out {
                Some(out) => std::fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
