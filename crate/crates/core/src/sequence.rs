//! On-disk sequence layout.
//!
//! ```text
//! frames.csv        frame,t_us,file
//! frames/NNNNNN.ppm
//! events.csv        t_us,x,y,p
//! groundtruth.csv   frame,x,y,w,h   (top-left corner form, pixels)
//! weights.apmt      optional
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::events::{parse_events, EventFormat, EventStream};
use crate::pnm::read_pnm;
use crate::tensor::RealTensor;

pub const FRAMES_CSV: &str = "frames.csv";
pub const FRAMES_DIR: &str = "frames";
pub const EVENTS_CSV: &str = "events.csv";
pub const GROUNDTRUTH_CSV: &str = "groundtruth.csv";
pub const WEIGHTS_FILE: &str = "weights.apmt";
pub const BOXES_HEADER: &str = "frame,x,y,w,h";

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    /// `[H, W, 3]` in `[0, 1]`.
    pub frames: Vec<RealTensor>,
    pub timestamps: Vec<u64>,
    pub events: EventStream,
    pub init_bbox: BBox,
    pub groundtruth: Option<Vec<BBox>>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .filter(|(_, l)| !l.starts_with(|c: char| c.is_ascii_alphabetic()))
}

fn field<T: std::str::FromStr>(fields: &[&str], i: usize, line: usize) -> Result<T> {
    let raw = fields.get(i).ok_or_else(|| Error::Parse {
        location: format!("line {line}"),
        reason: format!("missing field {}", i + 1),
    })?;
    raw.trim().parse().map_err(|_| Error::Parse {
        location: format!("line {line}"),
        reason: format!("invalid field `{raw}`"),
    })
}

/// Parses `frame,x,y,w,h` rows into center-form boxes.
pub fn parse_boxes_csv(text: &str) -> Result<Vec<BBox>> {
    data_lines(text)
        .map(|(line, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse {
                    location: format!("line {line}"),
                    reason: format!("expected 5 fields `{BOXES_HEADER}`, got {}", f.len()),
                });
            }
            Ok(BBox::from_corner(
                field(&f, 1, line)?,
                field(&f, 2, line)?,
                field(&f, 3, line)?,
                field(&f, 4, line)?,
            ))
        })
        .collect()
}

/// Corner-form rows with six decimals.
pub fn boxes_to_csv(boxes: &[BBox]) -> String {
    let mut out = format!("{BOXES_HEADER}\n");
    for (i, b) in boxes.iter().enumerate() {
        let [x, y, w, h] = b.to_corner();
        writeln!(out, "{i},{x:.6},{y:.6},{w:.6},{h:.6}").expect("writing to a String");
    }
    out
}

pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let index = read_text(&dir.join(FRAMES_CSV))?;
    let mut frames = Vec::new();
    let mut timestamps = Vec::new();
    for (line, l) in data_lines(&index) {
        let f: Vec<&str> = l.split(',').collect();
        let t: u64 = field(&f, 1, line)?;
        let file: String = field(&f, 2, line)?;
        frames.push(read_pnm(&dir.join(file))?);
        timestamps.push(t);
    }
    let first = frames.first().ok_or_else(|| Error::InvalidInput(format!("{} lists no frames", FRAMES_CSV)))?;
    let (h, w) = (first.shape()[0] as u32, first.shape()[1] as u32);
    let bytes = std::fs::read(dir.join(EVENTS_CSV)).map_err(|e| Error::io(dir.join(EVENTS_CSV), e))?;
    let events = parse_events(&bytes, EventFormat::Csv { width: w, height: h })?;
    let gt = parse_boxes_csv(&read_text(&dir.join(GROUNDTRUTH_CSV))?)?;
    let init_bbox = *gt
        .first()
        .ok_or_else(|| Error::InvalidInput(format!("{GROUNDTRUTH_CSV} has no initial box")))?;
    let groundtruth = (gt.len() == frames.len()).then_some(gt);
    Ok(Sequence {
        frames,
        timestamps,
        events,
        init_bbox,
        groundtruth,
    })
}
