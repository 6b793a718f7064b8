//! Device-independent frame sources.
//!
//! `SYNTHETIC` sources play a scripted scene plan: a list of segments, each a
//! number of frames with either a constant fill value or a linear temporal
//! gradient between two fill values. `RAWDIR` sources read a directory in file
//! name order: `*.svb`/`*.svb1` files are decoded as SVB1 mini-batches, any other
//! file is one raw frame of the declared `width`×`height`×`format`.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AcquisitionError;
use crate::framewire::{decode_minibatch, Frame, PixelFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SourceKind {
    #[serde(alias = "synthetic")]
    Synthetic,
    #[serde(alias = "rawdir")]
    Rawdir,
}

impl std::str::FromStr for SourceKind {
    type Err = AcquisitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SYNTHETIC" => Ok(SourceKind::Synthetic),
            "RAWDIR" => Ok(SourceKind::Rawdir),
            _ => Err(AcquisitionError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub source_id: String,
    pub kind: SourceKind,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
}

impl SourceSpec {
    pub fn synthetic(source_id: impl Into<String>, params: Value) -> Self {
        Self {
            source_id: source_id.into(),
            kind: SourceKind::Synthetic,
            params: object_params(params),
        }
    }

    pub fn rawdir(source_id: impl Into<String>, params: Value) -> Self {
        Self {
            source_id: source_id.into(),
            kind: SourceKind::Rawdir,
            params: object_params(params),
        }
    }

    /// Parses a JSON spec, reporting an unrecognised `kind` as `UnknownKind`.
    pub fn from_json(v: &Value) -> Result<Self, AcquisitionError> {
        let obj = v
            .as_object()
            .ok_or_else(|| AcquisitionError::BadParams("source spec must be an object".into()))?;
        if let Some(k) = obj.get("kind") {
            let k = k
                .as_str()
                .ok_or_else(|| AcquisitionError::BadParams("kind must be a string".into()))?;
            k.parse::<SourceKind>()?;
        }
        serde_json::from_value(v.clone()).map_err(|e| AcquisitionError::BadParams(e.to_string()))
    }

    /// Checks the parameters without touching the filesystem.
    pub fn validate(&self) -> Result<(), AcquisitionError> {
        match self.kind {
            SourceKind::Synthetic => SyntheticParams::parse(&self.params).map(|_| ()),
            SourceKind::Rawdir => RawDirParams::parse(&self.params).map(|_| ()),
        }
    }
}

fn object_params(v: Value) -> BTreeMap<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Fill { frames: u64, value: u8 },
    Gradient { frames: u64, from: u8, to: u8 },
}

impl Segment {
    fn frames(&self) -> u64 {
        match self {
            Segment::Fill { frames, .. } | Segment::Gradient { frames, .. } => *frames,
        }
    }

    fn value_at(&self, i: u64) -> u8 {
        match *self {
            Segment::Fill { value, .. } => value,
            Segment::Gradient { frames, from, to } => {
                if frames <= 1 {
                    from
                } else {
                    let t = i as f64 / (frames - 1) as f64;
                    crate::util::round_half_up(from as f64 + (to as f64 - from as f64) * t) as u8
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SyntheticParams {
    width: u16,
    height: u16,
    format: PixelFormat,
    fps: f64,
    start_ts_micros: u64,
    plan: Vec<Segment>,
}

fn get_u64(params: &BTreeMap<String, Value>, key: &str) -> Result<Option<u64>, AcquisitionError> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| AcquisitionError::BadParams(format!("'{key}' must be a non-negative integer"))),
    }
}

fn get_dim(params: &BTreeMap<String, Value>, key: &str) -> Result<Option<u16>, AcquisitionError> {
    match get_u64(params, key)? {
        None => Ok(None),
        Some(v) if (1..=u16::MAX as u64).contains(&v) => Ok(Some(v as u16)),
        Some(v) => Err(AcquisitionError::BadParams(format!("'{key}' = {v} out of range 1..=65535"))),
    }
}

fn get_format(params: &BTreeMap<String, Value>) -> Result<PixelFormat, AcquisitionError> {
    match params.get("format") {
        None | Some(Value::Null) => Ok(PixelFormat::Gray8),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|_| AcquisitionError::BadParams(format!("unknown pixel format {v}"))),
    }
}

fn get_fps(params: &BTreeMap<String, Value>) -> Result<f64, AcquisitionError> {
    match params.get("fps") {
        None | Some(Value::Null) => Ok(25.0),
        Some(v) => match v.as_f64() {
            Some(f) if f.is_finite() && f > 0.0 => Ok(f),
            _ => Err(AcquisitionError::BadParams("'fps' must be a positive number".into())),
        },
    }
}

fn fill_value(v: &Value) -> Result<u8, AcquisitionError> {
    v.as_u64()
        .filter(|&x| x <= 255)
        .map(|x| x as u8)
        .ok_or_else(|| AcquisitionError::BadParams(format!("fill value {v} not in 0..=255")))
}

impl SyntheticParams {
    fn parse(params: &BTreeMap<String, Value>) -> Result<Self, AcquisitionError> {
        let width = get_dim(params, "width")?
            .ok_or_else(|| AcquisitionError::BadParams("missing 'width'".into()))?;
        let height = get_dim(params, "height")?
            .ok_or_else(|| AcquisitionError::BadParams("missing 'height'".into()))?;
        let plan_v = params
            .get("scene_plan")
            .and_then(Value::as_array)
            .ok_or_else(|| AcquisitionError::BadParams("missing 'scene_plan' list".into()))?;
        if plan_v.is_empty() {
            return Err(AcquisitionError::BadParams("scene_plan is empty".into()));
        }
        let mut plan = Vec::with_capacity(plan_v.len());
        for seg in plan_v {
            plan.push(parse_segment(seg)?);
        }
        Ok(Self {
            width,
            height,
            format: get_format(params)?,
            fps: get_fps(params)?,
            start_ts_micros: get_u64(params, "start_ts_micros")?.unwrap_or(0),
            plan,
        })
    }
}

/// Accepts `{"frames": n, "fill": v}`, `{"frames": n, "gradient": [a, b]}` or
/// the pair form `[n, v]`.
fn parse_segment(seg: &Value) -> Result<Segment, AcquisitionError> {
    if let Some(pair) = seg.as_array() {
        if pair.len() == 2 {
            let frames = pair[0]
                .as_u64()
                .ok_or_else(|| AcquisitionError::BadParams(format!("bad segment {seg}")))?;
            return Ok(Segment::Fill {
                frames,
                value: fill_value(&pair[1])?,
            });
        }
        return Err(AcquisitionError::BadParams(format!("bad segment {seg}")));
    }
    let obj = seg
        .as_object()
        .ok_or_else(|| AcquisitionError::BadParams(format!("bad segment {seg}")))?;
    let frames = obj
        .get("frames")
        .and_then(Value::as_u64)
        .ok_or_else(|| AcquisitionError::BadParams(format!("segment {seg} lacks 'frames'")))?;
    match (obj.get("fill"), obj.get("gradient")) {
        (Some(v), None) => Ok(Segment::Fill {
            frames,
            value: fill_value(v)?,
        }),
        (None, Some(Value::Array(ab))) if ab.len() == 2 => Ok(Segment::Gradient {
            frames,
            from: fill_value(&ab[0])?,
            to: fill_value(&ab[1])?,
        }),
        _ => Err(AcquisitionError::BadParams(format!(
            "segment {seg} needs exactly one of 'fill' or 'gradient' [from, to]"
        ))),
    }
}

#[derive(Debug, Clone)]
struct RawDirParams {
    path: PathBuf,
    width: Option<u16>,
    height: Option<u16>,
    format: PixelFormat,
    fps: f64,
    start_ts_micros: u64,
}

impl RawDirParams {
    fn parse(params: &BTreeMap<String, Value>) -> Result<Self, AcquisitionError> {
        let path = params
            .get("path")
            .and_then(Value::as_str)
            .filter(|p| !p.is_empty())
            .ok_or(AcquisitionError::MissingPath)?;
        Ok(Self {
            path: PathBuf::from(path),
            width: get_dim(params, "width")?,
            height: get_dim(params, "height")?,
            format: get_format(params)?,
            fps: get_fps(params)?,
            start_ts_micros: get_u64(params, "start_ts_micros")?.unwrap_or(0),
        })
    }
}

#[derive(Debug)]
enum Inner {
    Synthetic {
        params: SyntheticParams,
        segment: usize,
        within: u64,
    },
    RawDir {
        params: RawDirParams,
        files: VecDeque<PathBuf>,
        pending: VecDeque<Frame>,
    },
}

/// An open source positioned at its next frame. Not shared between threads.
#[derive(Debug)]
pub struct SourceHandle {
    source_id: String,
    inner: Inner,
    remaining: Option<u64>,
    produced: u64,
}

pub fn open_source(spec: &SourceSpec) -> Result<SourceHandle, AcquisitionError> {
    let inner = match spec.kind {
        SourceKind::Synthetic => Inner::Synthetic {
            params: SyntheticParams::parse(&spec.params)?,
            segment: 0,
            within: 0,
        },
        SourceKind::Rawdir => {
            let params = RawDirParams::parse(&spec.params)?;
            let files = list_files(&params.path)?;
            Inner::RawDir {
                params,
                files,
                pending: VecDeque::new(),
            }
        }
    };
    Ok(SourceHandle {
        source_id: spec.source_id.clone(),
        inner,
        remaining: None,
        produced: 0,
    })
}

fn list_files(dir: &Path) -> Result<VecDeque<PathBuf>, AcquisitionError> {
    if !dir.is_dir() {
        return Err(AcquisitionError::MissingPath);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| AcquisitionError::Source(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter(|p| {
            !p.file_name()
                .map(|n| n.to_string_lossy().starts_with('.'))
                .unwrap_or(true)
        })
        .collect();
    files.sort();
    Ok(files.into())
}

impl SourceHandle {
    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    /// Stops the handle after at most `n` further frames.
    pub fn limit(mut self, n: u64) -> Self {
        self.remaining = Some(n);
        self
    }

    pub fn frames_produced(&self) -> u64 {
        self.produced
    }

    pub fn frame_interval_micros(&self) -> u32 {
        let fps = match &self.inner {
            Inner::Synthetic { params, .. } => params.fps,
            Inner::RawDir { params, .. } => params.fps,
        };
        (1_000_000.0 / fps).round().clamp(0.0, u32::MAX as f64) as u32
    }

    pub fn start_ts_micros(&self) -> u64 {
        match &self.inner {
            Inner::Synthetic { params, .. } => params.start_ts_micros,
            Inner::RawDir { params, .. } => params.start_ts_micros,
        }
    }

    pub fn next_frame(&mut self) -> Result<Option<Frame>, AcquisitionError> {
        if self.remaining == Some(0) {
            return Ok(None);
        }
        let frame = match &mut self.inner {
            Inner::Synthetic {
                params,
                segment,
                within,
            } => loop {
                let Some(seg) = params.plan.get(*segment) else {
                    break None;
                };
                if *within >= seg.frames() {
                    *segment += 1;
                    *within = 0;
                    continue;
                }
                let v = seg.value_at(*within);
                *within += 1;
                break Some(Frame::filled(params.width, params.height, params.format, v));
            },
            Inner::RawDir {
                params,
                files,
                pending,
            } => loop {
                if let Some(f) = pending.pop_front() {
                    break Some(f);
                }
                let Some(path) = files.pop_front() else {
                    break None;
                };
                read_file_frames(params, &path, pending)?;
            },
        };
        if frame.is_some() {
            self.produced += 1;
            if let Some(r) = self.remaining.as_mut() {
                *r -= 1;
            }
        }
        Ok(frame)
    }
}

impl Iterator for SourceHandle {
    type Item = Result<Frame, AcquisitionError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

fn read_file_frames(params: &RawDirParams, path: &Path, out: &mut VecDeque<Frame>) -> Result<(), AcquisitionError> {
    let bytes = fs::read(path).map_err(|e| AcquisitionError::Source(format!("{}: {e}", path.display())))?;
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    if ext == "svb" || ext == "svb1" {
        let batch = decode_minibatch(&bytes)
            .map_err(|e| AcquisitionError::Source(format!("{}: {e}", path.display())))?;
        out.extend(batch.frames);
        return Ok(());
    }
    let (Some(w), Some(h)) = (params.width, params.height) else {
        return Err(AcquisitionError::BadParams(format!(
            "raw frame file {} requires 'width' and 'height'",
            path.display()
        )));
    };
    let frame = Frame::new(w, h, params.format, bytes)
        .map_err(|e| AcquisitionError::Source(format!("{}: {e}", path.display())))?;
    out.push_back(frame);
    Ok(())
}
