//! Synthetic sequence: a bright square moving at constant velocity over a
//! static textured background, with events from thresholded brightness
//! changes between finely spaced renderings.

use std::fmt::Write as _;
use std::path::Path;

use crate::bbox::BBox;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::events::{Event, EventStream};
use crate::model::init_weights;
use crate::pnm::write_pnm;
use crate::rng::SeededRng;
use crate::sequence::{boxes_to_csv, EVENTS_CSV, FRAMES_CSV, FRAMES_DIR, GROUNDTRUTH_CSV, WEIGHTS_FILE};
use crate::tensor::RealTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub square: f64,
    /// Top-left corner of the square in frame 0.
    pub start: (f64, f64),
    /// Pixels per frame.
    pub velocity: (f64, f64),
    pub period_us: u64,
    /// Renderings per frame interval used for event generation.
    pub substeps: u64,
    pub threshold: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            frames: 8,
            square: 24.0,
            start: (40.0, 40.0),
            velocity: (5.0, 2.5),
            period_us: 10_000,
            substeps: 5,
            threshold: 0.1,
        }
    }
}

pub const SQUARE_RGB: [f64; 3] = [0.95, 0.95, 0.9];

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub frames: Vec<RealTensor>,
    /// Frame `i` is captured at `(i + 1) * period_us`.
    pub timestamps: Vec<u64>,
    pub events: EventStream,
    pub groundtruth: Vec<BBox>,
}

/// Per-pixel random texture, `[H, W, 3]`.
pub fn background(spec: &FixtureSpec, seed: u64) -> Result<RealTensor> {
    let mut rng = SeededRng::new(seed);
    let mut data = Vec::with_capacity(spec.width * spec.height * 3);
    for _ in 0..spec.width * spec.height {
        let v = 0.15 + 0.25 * rng.unit();
        data.extend_from_slice(&[v, 0.9 * v + 0.05, 0.8 * v + 0.1]);
    }
    RealTensor::new(vec![spec.height, spec.width, 3], data)
}

fn overlap(px: usize, lo: f64, len: f64) -> f64 {
    let p = px as f64;
    ((p + 1.0).min(lo + len) - p.max(lo)).clamp(0.0, 1.0)
}

/// The scene with the square's top-left corner at `pos`, anti-aliased by
/// pixel coverage.
pub fn render(spec: &FixtureSpec, bg: &RealTensor, pos: (f64, f64)) -> RealTensor {
    let mut img = bg.clone();
    let w = spec.width;
    let x_range = (pos.0.floor().max(0.0) as usize)..((pos.0 + spec.square).ceil().max(0.0) as usize).min(w);
    let y_range =
        (pos.1.floor().max(0.0) as usize)..((pos.1 + spec.square).ceil().max(0.0) as usize).min(spec.height);
    for y in y_range {
        let cy = overlap(y, pos.1, spec.square);
        for x in x_range.clone() {
            let cov = cy * overlap(x, pos.0, spec.square);
            let px = &mut img.data_mut()[(y * w + x) * 3..][..3];
            for (v, s) in px.iter_mut().zip(SQUARE_RGB) {
                *v = *v * (1.0 - cov) + s * cov;
            }
        }
    }
    img
}

pub fn gray(img: &RealTensor) -> Vec<f64> {
    img.data().chunks(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect()
}

/// Events at pixels whose gray level changed by more than `threshold`,
/// polarity by the sign of the change, all stamped `t`.
pub fn frame_difference_events(prev: &[f64], next: &[f64], width: usize, threshold: f64, t: u64) -> Vec<Event> {
    prev.iter()
        .zip(next)
        .enumerate()
        .filter(|(_, (a, b))| (*b - *a).abs() > threshold)
        .map(|(i, (a, b))| Event {
            t,
            x: (i % width) as u16,
            y: (i / width) as u16,
            p: if b > a { 1 } else { -1 },
        })
        .collect()
}

/// Top-left corner of the square at time `t`.
pub fn square_at(spec: &FixtureSpec, t: f64) -> (f64, f64) {
    let frames = t / spec.period_us as f64 - 1.0;
    (spec.start.0 + spec.velocity.0 * frames, spec.start.1 + spec.velocity.1 * frames)
}

pub fn synth_sequence(spec: &FixtureSpec, seed: u64) -> Result<Fixture> {
    if spec.frames == 0 || spec.substeps == 0 || !spec.period_us.is_multiple_of(2 * spec.substeps) {
        return Err(Error::param(
            "fixture",
            "need frames > 0 and a period divisible by twice the substep count",
        ));
    }
    let bg = background(spec, seed)?;
    let period = spec.period_us;
    let timestamps: Vec<u64> = (1..=spec.frames as u64).map(|i| i * period).collect();
    let frames = timestamps.iter().map(|&t| render(spec, &bg, square_at(spec, t as f64))).collect();

    let step = period / spec.substeps;
    let mut events = Vec::new();
    let mut prev = gray(&render(spec, &bg, square_at(spec, 0.0)));
    for k in 1..=spec.substeps * spec.frames as u64 {
        let next = gray(&render(spec, &bg, square_at(spec, (k * step) as f64)));
        // stamped mid-interval
        let t = k * step - step / 2;
        events.extend(frame_difference_events(&prev, &next, spec.width, spec.threshold, t));
        prev = next;
    }
    let groundtruth = timestamps
        .iter()
        .map(|&t| {
            let (x, y) = square_at(spec, t as f64);
            BBox::from_corner(x, y, spec.square, spec.square)
        })
        .collect();
    Ok(Fixture {
        frames,
        timestamps,
        events: EventStream::new(spec.width as u32, spec.height as u32, events),
        groundtruth,
    })
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes the default fixture sequence and a weight bundle for `cfg` into
/// `out`.
pub fn gen_fixtures(seed: u64, out: &Path, cfg: &PipelineConfig) -> Result<Fixture> {
    let spec = FixtureSpec::default();
    let fx = synth_sequence(&spec, seed)?;
    let frames_dir = out.join(FRAMES_DIR);
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut index = String::from("frame,t_us,file\n");
    for (i, (f, t)) in fx.frames.iter().zip(&fx.timestamps).enumerate() {
        let name = format!("{FRAMES_DIR}/{i:06}.ppm");
        write_pnm(&out.join(&name), f)?;
        writeln!(index, "{i},{t},{name}").expect("writing to a String");
    }
    write(&out.join(FRAMES_CSV), index)?;
    write(&out.join(EVENTS_CSV), fx.events.to_csv())?;
    write(&out.join(GROUNDTRUTH_CSV), boxes_to_csv(&fx.groundtruth))?;
    init_weights(cfg, seed).save(&out.join(WEIGHTS_FILE))?;
    Ok(fx)
}
