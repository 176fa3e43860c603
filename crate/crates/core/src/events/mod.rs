//! Event streams: parsing, serialization, windowing, voxelization and
//! region cropping.

mod crop;
mod voxel;

pub use crop::{crop_region, search_to_image, CropFill, RegionCrop};
pub use voxel::{voxelize, VoxelGrid};

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// One brightness-change event. `t` is in microseconds, `p` is -1 or +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t: u64,
    pub x: u16,
    pub y: u16,
    pub p: i8,
}

/// Time-ordered events from a `width x height` sensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    /// `t_us,x,y,p` lines. CSV carries no geometry, so it is given here.
    Csv { width: u32, height: u32 },
    /// `EVT0` container.
    Bin,
}

pub const BIN_MAGIC: &[u8; 4] = b"EVT0";
pub const BIN_HEADER_LEN: usize = 16;
pub const BIN_RECORD_LEN: usize = 13;

impl EventStream {
    pub fn new(width: u32, height: u32, mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| e.t);
        Self {
            width,
            height,
            events,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 16);
        for e in &self.events {
            writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.p).expect("writing to a String");
        }
        out
    }

    pub fn to_bin(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BIN_HEADER_LEN + BIN_RECORD_LEN * self.events.len());
        out.extend_from_slice(BIN_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for e in &self.events {
            out.extend_from_slice(&e.t.to_le_bytes());
            out.extend_from_slice(&e.x.to_le_bytes());
            out.extend_from_slice(&e.y.to_le_bytes());
            out.push(e.p as u8);
        }
        out
    }
}

fn check_event(e: &Event, width: u32, height: u32, location: impl Fn() -> String) -> Result<()> {
    if e.p != 1 && e.p != -1 {
        return Err(Error::Value {
            location: location(),
            reason: format!("polarity must be -1 or 1, got {}", e.p),
        });
    }
    if u32::from(e.x) >= width || u32::from(e.y) >= height {
        return Err(Error::Value {
            location: location(),
            reason: format!("({}, {}) outside the {width}x{height} sensor", e.x, e.y),
        });
    }
    Ok(())
}

fn parse_csv(text: &str, width: u32, height: u32) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let location = || format!("line {}", lineno + 1);
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                location: location(),
                reason: format!("expected 4 fields `t_us,x,y,p`, got {}", fields.len()),
            });
        }
        let bad = |what: &str, field: &str| Error::Parse {
            location: location(),
            reason: format!("invalid {what} `{field}`"),
        };
        let t = fields[0].parse::<u64>().map_err(|_| bad("timestamp", fields[0]))?;
        let x = fields[1].parse::<u16>().map_err(|_| bad("x", fields[1]))?;
        let y = fields[2].parse::<u16>().map_err(|_| bad("y", fields[2]))?;
        let p = fields[3].parse::<i8>().map_err(|_| bad("polarity", fields[3]))?;
        let e = Event { t, x, y, p };
        check_event(&e, width, height, location)?;
        events.push(e);
    }
    Ok(events)
}

fn parse_bin(bytes: &[u8]) -> Result<(u32, u32, Vec<Event>)> {
    if bytes.len() < BIN_HEADER_LEN {
        return Err(Error::Parse {
            location: "offset 0".into(),
            reason: format!("header needs {BIN_HEADER_LEN} bytes, got {}", bytes.len()),
        });
    }
    if &bytes[..4] != BIN_MAGIC {
        return Err(Error::Parse {
            location: "offset 0".into(),
            reason: "missing EVT0 magic".into(),
        });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let (width, height) = (u32_at(4), u32_at(8));
    let body = &bytes[BIN_HEADER_LEN..];
    if !body.len().is_multiple_of(BIN_RECORD_LEN) {
        let offset = BIN_HEADER_LEN + body.len() / BIN_RECORD_LEN * BIN_RECORD_LEN;
        return Err(Error::Parse {
            location: format!("offset {offset}"),
            reason: format!("truncated record ({} trailing bytes)", body.len() % BIN_RECORD_LEN),
        });
    }
    let mut events = Vec::with_capacity(body.len() / BIN_RECORD_LEN);
    for (i, rec) in body.chunks_exact(BIN_RECORD_LEN).enumerate() {
        let e = Event {
            t: u64::from_le_bytes(rec[0..8].try_into().expect("8 bytes")),
            x: u16::from_le_bytes([rec[8], rec[9]]),
            y: u16::from_le_bytes([rec[10], rec[11]]),
            p: rec[12] as i8,
        };
        check_event(&e, width, height, || format!("offset {}", BIN_HEADER_LEN + i * BIN_RECORD_LEN))?;
        events.push(e);
    }
    Ok((width, height, events))
}

/// Parses a CSV or `EVT0` event file. Out-of-order input is stable-sorted by
/// timestamp.
pub fn parse_events(bytes: &[u8], format: EventFormat) -> Result<EventStream> {
    match format {
        EventFormat::Csv { width, height } => {
            let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
                location: format!("byte {}", e.valid_up_to()),
                reason: "CSV input is not UTF-8".into(),
            })?;
            Ok(EventStream::new(width, height, parse_csv(text, width, height)?))
        }
        EventFormat::Bin => {
            let (width, height, events) = parse_bin(bytes)?;
            Ok(EventStream::new(width, height, events))
        }
    }
}

/// Events with `t0 <= t < t1`. The stream is already sorted, so this is two
/// binary searches.
pub fn slice_window(s: &EventStream, t0: u64, t1: u64) -> Result<EventStream> {
    if t0 > t1 {
        return Err(Error::param("window", format!("t0 {t0} is after t1 {t1}")));
    }
    let lo = s.events.partition_point(|e| e.t < t0);
    let hi = s.events.partition_point(|e| e.t < t1);
    Ok(EventStream {
        width: s.width,
        height: s.height,
        events: s.events[lo..hi].to_vec(),
    })
}
