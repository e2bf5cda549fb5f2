//! Event streams, their CSV/binary file formats, and the trilinear event volume.
//!
//! CSV: header `x,y,t_us,p,label`, one event per line. Fields may be
//! separated by commas or whitespace; the label column is optional.
//! Label codes: `1` ace, `0` non-ace, `-1` (or absent) unknown.
//!
//! Binary: the 16-byte magic `EVAC3D-EVT-v1\0\0\0`, then packed 14-byte
//! little-endian records `u16 x, u16 y, i64 t_us, i8 p, i8 label`.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Vec2};

pub const EVENT_MAGIC: &[u8; 16] = b"EVAC3D-EVT-v1\0\0\0";
const RECORD_BYTES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    #[default]
    Unknown,
    Ace,
    NonAce,
}

impl Label {
    pub fn code(self) -> i8 {
        match self {
            Label::Unknown => -1,
            Label::NonAce => 0,
            Label::Ace => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(Label::Unknown),
            0 => Some(Label::NonAce),
            1 => Some(Label::Ace),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Seconds.
    pub t: f64,
    /// +1 or -1.
    pub p: i8,
    pub label: Label,
}

impl Event {
    pub fn new(x: u16, y: u16, t: f64, p: i8) -> Self {
        Self {
            x,
            y,
            t,
            p,
            label: Label::Unknown,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }

    pub fn pixel(&self) -> Vec2 {
        Vec2::new(self.x as f64, self.y as f64)
    }

    /// Timestamp rounded to whole microseconds, as stored on disk.
    pub fn t_us(&self) -> i64 {
        (self.t * 1e6).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFormat {
    Csv,
    Binary,
}

impl EventFormat {
    /// `.csv`/`.txt` are text, anything else is the packed binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("txt") => EventFormat::Csv,
            _ => EventFormat::Binary,
        }
    }
}

/// Time-sorted events from one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    sensor: CameraIntrinsics,
}

impl EventStream {
    /// Validates pixel bounds, polarity and time ordering.
    pub fn new(events: Vec<Event>, sensor: CameraIntrinsics) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            validate_event(e, &sensor).map_err(|msg| Error::Validation(format!("event {i}: {msg}")))?;
        }
        if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
            return Err(Error::Validation(format!(
                "event timestamps decrease at index {}",
                i + 1
            )));
        }
        Ok(Self { events, sensor })
    }

    /// Sorts by timestamp (stable) before validating.
    pub fn from_unsorted(mut events: Vec<Event>, sensor: CameraIntrinsics) -> Result<Self> {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self::new(events, sensor)
    }

    pub fn empty(sensor: CameraIntrinsics) -> Self {
        Self {
            events: Vec::new(),
            sensor,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn sensor(&self) -> &CameraIntrinsics {
        &self.sensor
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Replaces labels in place; `labels` must match the stream length.
    pub fn with_labels(mut self, labels: &[Label]) -> Result<Self> {
        if labels.len() != self.events.len() {
            return Err(Error::Validation(format!(
                "{} labels for {} events",
                labels.len(),
                self.events.len()
            )));
        }
        for (e, l) in self.events.iter_mut().zip(labels) {
            e.label = *l;
        }
        Ok(self)
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.events.iter().filter(|e| e.label == label).count()
    }
}

fn validate_event(e: &Event, sensor: &CameraIntrinsics) -> std::result::Result<(), String> {
    if u32::from(e.x) >= sensor.width || u32::from(e.y) >= sensor.height {
        return Err(format!(
            "pixel ({}, {}) outside {}x{} sensor",
            e.x, e.y, sensor.width, sensor.height
        ));
    }
    if e.p != 1 && e.p != -1 {
        return Err(format!("polarity {} not in {{-1, +1}}", e.p));
    }
    if !e.t.is_finite() {
        return Err("non-finite timestamp".into());
    }
    Ok(())
}

pub fn read_events(
    path: impl AsRef<Path>,
    format: EventFormat,
    sensor: &CameraIntrinsics,
) -> Result<EventStream> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let events = match format {
        EventFormat::Csv => read_csv(path, BufReader::new(file), sensor)?,
        EventFormat::Binary => read_binary(path, BufReader::new(file), sensor)?,
    };
    if let Some(i) = events.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(Error::Validation(format!(
            "{}: event timestamps decrease at record {}",
            path.display(),
            i + 2
        )));
    }
    Ok(EventStream {
        events,
        sensor: *sensor,
    })
}

pub fn write_events(stream: &EventStream, path: impl AsRef<Path>, format: EventFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        EventFormat::Csv => {
            let mut out = String::from("x,y,t_us,p,label\n");
            for e in stream.events() {
                let _ = writeln!(out, "{},{},{},{},{}", e.x, e.y, e.t_us(), e.p, e.label.code());
            }
            out.into_bytes()
        }
        EventFormat::Binary => {
            let mut out = Vec::with_capacity(16 + RECORD_BYTES * stream.len());
            out.extend_from_slice(EVENT_MAGIC);
            for e in stream.events() {
                out.extend_from_slice(&e.x.to_le_bytes());
                out.extend_from_slice(&e.y.to_le_bytes());
                out.extend_from_slice(&e.t_us().to_le_bytes());
                out.extend_from_slice(&e.p.to_le_bytes());
                out.extend_from_slice(&e.label.code().to_le_bytes());
            }
            out
        }
    };
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn read_csv(path: &Path, reader: impl BufRead, sensor: &CameraIntrinsics) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 or 5 fields, found {}", fields.len()),
            ));
        }
        let int = |k: usize| -> Result<i64> {
            fields[k]
                .parse::<i64>()
                .map_err(|e| Error::parse(path, lineno, format!("field {}: {e}", k + 1)))
        };
        let (x, y, t_us, p) = (int(0)?, int(1)?, int(2)?, int(3)?);
        let label = if fields.len() == 5 {
            Label::from_code(int(4)?)
                .ok_or_else(|| Error::parse(path, lineno, format!("bad label {}", fields[4])))?
        } else {
            Label::Unknown
        };
        events.push(make_event(path, lineno, x, y, t_us, p, label, sensor)?);
    }
    Ok(events)
}

fn read_binary(path: &Path, mut reader: impl Read, sensor: &CameraIntrinsics) -> Result<Vec<Event>> {
    let mut buf = Vec::new();
    reader
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    if buf.len() < 16 || &buf[..16] != EVENT_MAGIC {
        return Err(Error::parse(path, 0, "missing EVAC3D-EVT-v1 magic"));
    }
    let body = &buf[16..];
    if body.len() % RECORD_BYTES != 0 {
        return Err(Error::parse(
            path,
            body.len() / RECORD_BYTES + 1,
            "truncated trailing record",
        ));
    }
    body.chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, r)| {
            let x = u16::from_le_bytes([r[0], r[1]]);
            let y = u16::from_le_bytes([r[2], r[3]]);
            let t_us = i64::from_le_bytes(r[4..12].try_into().unwrap());
            let p = r[12] as i8;
            let code = r[13] as i8;
            let label = Label::from_code(code.into())
                .ok_or_else(|| Error::parse(path, i + 1, format!("bad label {code}")))?;
            make_event(path, i + 1, x.into(), y.into(), t_us, p.into(), label, sensor)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn make_event(
    path: &Path,
    lineno: usize,
    x: i64,
    y: i64,
    t_us: i64,
    p: i64,
    label: Label,
    sensor: &CameraIntrinsics,
) -> Result<Event> {
    if x < 0 || y < 0 || x >= i64::from(sensor.width) || y >= i64::from(sensor.height) {
        return Err(Error::Validation(format!(
            "{}:{lineno}: pixel ({x}, {y}) outside {}x{} sensor",
            path.display(),
            sensor.width,
            sensor.height
        )));
    }
    if p != 1 && p != -1 {
        return Err(Error::parse(path, lineno, format!("polarity {p} not in {{-1, +1}}")));
    }
    Ok(Event {
        x: x as u16,
        y: y as u16,
        t: t_us as f64 / 1e6,
        p: p as i8,
        label,
    })
}

/// Dense `(B_t, H, W)` firing-rate histogram over a closed time window.
#[derive(Debug, Clone, PartialEq)]
pub struct EventVolume {
    bins: Vec<f64>,
    shape: (usize, usize, usize),
    pub t0: f64,
    pub t1: f64,
}

impl EventVolume {
    pub fn zeros(time_bins: usize, height: usize, width: usize, t0: f64, t1: f64) -> Self {
        Self {
            bins: vec![0.0; time_bins * height * width],
            shape: (time_bins, height, width),
            t0,
            t1,
        }
    }

    /// `(B_t, H, W)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn get(&self, b: usize, y: usize, x: usize) -> f64 {
        let (_, h, w) = self.shape;
        self.bins[(b * h + y) * w + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.bins
    }

    pub fn sum(&self) -> f64 {
        self.bins.iter().sum()
    }

    fn add(&mut self, b: usize, y: usize, x: usize, v: f64) {
        let (_, h, w) = self.shape;
        self.bins[(b * h + y) * w + x] += v;
    }
}

/// Triangular kernel `max(0, 1 - |a|)`.
pub fn triangle_kernel(a: f64) -> f64 {
    (1.0 - a.abs()).max(0.0)
}

/// Deposits each event's polarity into the surrounding time bins.
///
/// Normalized time `t* = (B_t - 1)(t - t0)/(t1 - t0)`; pixels are integers so
/// the spatial part of the trilinear kernel is a unit deposit. Events outside
/// `[t0, t1]` are ignored.
pub fn build_event_volume(stream: &EventStream, window: (f64, f64), time_bins: usize) -> Result<EventVolume> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::Domain(format!("event window [{t0}, {t1}] is empty")));
    }
    if time_bins == 0 {
        return Err(Error::Domain("event volume needs at least one time bin".into()));
    }
    let sensor = stream.sensor();
    let mut vol = EventVolume::zeros(
        time_bins,
        sensor.height as usize,
        sensor.width as usize,
        t0,
        t1,
    );
    let scale = (time_bins - 1) as f64 / (t1 - t0);
    let last = time_bins - 1;
    for e in stream.events().iter().filter(|e| e.t >= t0 && e.t <= t1) {
        let ts = (e.t - t0) * scale;
        let lo = (ts.floor() as usize).min(last);
        let p = f64::from(e.p);
        for b in [lo, lo + 1] {
            if b <= last {
                let w = triangle_kernel(ts - b as f64);
                if w > 0.0 {
                    vol.add(b, e.y as usize, e.x as usize, p * w);
                }
            }
        }
    }
    Ok(vol)
}
