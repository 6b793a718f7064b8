//! Frames, mini-batches and the SVB1 wire format.
//!
//! Layout (all integers big-endian):
//!
//! ```text
//! magic "SVB1" | version u8 = 1 | pixel_format u8 | compression u8 | reserved u8 = 0
//! source_id_len u16 | source_id bytes | batch_seq u64 | start_ts_micros u64
//! frame_interval_micros u32 | frame_count u16 | width u16 | height u16
//! payload_len u32 | payload | crc32 u32 (IEEE, over every preceding byte)
//! ```
//!
//! The payload is the concatenation of all frame buffers, optionally
//! DEFLATE-compressed (RFC 1951, raw stream) as a whole.

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"SVB1";
pub const VERSION: u8 = 1;
/// Bytes of fixed-width header fields, excluding the source id and the CRC.
pub const FIXED_HEADER_LEN: usize = 40;
pub const CRC_LEN: usize = 4;
pub const MAX_FRAMES: usize = u16::MAX as usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("mini-batch holds {0} frames, the limit is 65535")]
    TooManyFrames(usize),
    #[error("frame {index} is {got}, expected {expected}")]
    MixedFrameShapes {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("frame buffer holds {got} bytes, {width}x{height} {format:?} needs {expected}")]
    BadFrameLength {
        width: u16,
        height: u16,
        format: PixelFormat,
        expected: usize,
        got: usize,
    },
    #[error("source id is {0} bytes, the limit is 65535")]
    SourceIdTooLong(usize),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("invalid header field {field}: {value}")]
    BadField { field: &'static str, value: u32 },
    #[error("source id is not valid UTF-8")]
    BadSourceId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PixelFormat {
    Gray8,
    Rgb24,
}

impl PixelFormat {
    pub fn bytes_per_pixel(self) -> usize {
        match self {
            PixelFormat::Gray8 => 1,
            PixelFormat::Rgb24 => 3,
        }
    }

    fn code(self) -> u8 {
        match self {
            PixelFormat::Gray8 => 0,
            PixelFormat::Rgb24 => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(PixelFormat::Gray8),
            1 => Some(PixelFormat::Rgb24),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Compression {
    #[default]
    None,
    Deflate,
}

impl Compression {
    fn code(self) -> u8 {
        match self {
            Compression::None => 0,
            Compression::Deflate => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Compression::None),
            1 => Some(Compression::Deflate),
            _ => None,
        }
    }
}

/// A raw frame. GRAY8 holds one byte per pixel; RGB24 holds interleaved R,G,B,
/// row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    width: u16,
    height: u16,
    format: PixelFormat,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: u16, height: u16, format: PixelFormat, pixels: Vec<u8>) -> Result<Self, WireError> {
        let expected = width as usize * height as usize * format.bytes_per_pixel();
        if pixels.len() != expected {
            return Err(WireError::BadFrameLength {
                width,
                height,
                format,
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            format,
            pixels,
        })
    }

    /// A frame with every byte set to `value`.
    pub fn filled(width: u16, height: u16, format: PixelFormat, value: u8) -> Self {
        let len = width as usize * height as usize * format.bytes_per_pixel();
        Self {
            width,
            height,
            format,
            pixels: vec![value; len],
        }
    }

    pub fn gray(width: u16, height: u16, pixels: Vec<u8>) -> Result<Self, WireError> {
        Self::new(width, height, PixelFormat::Gray8, pixels)
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn format(&self) -> PixelFormat {
        self.format
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.format == other.format
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{} {:?}", self.width, self.height, self.format)
    }
}

/// A timestamped group of frames from one source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    pub source_id: String,
    pub batch_seq: u64,
    pub start_ts_micros: u64,
    pub frame_interval_micros: u32,
    pub frames: Vec<Frame>,
    pub compression: Compression,
}

impl MiniBatch {
    /// Nominal timestamp of frame `i`: start + i × interval.
    pub fn frame_ts_micros(&self, i: usize) -> u64 {
        self.start_ts_micros + i as u64 * self.frame_interval_micros as u64
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if self.frames.len() > MAX_FRAMES {
            return Err(WireError::TooManyFrames(self.frames.len()));
        }
        if self.source_id.len() > u16::MAX as usize {
            return Err(WireError::SourceIdTooLong(self.source_id.len()));
        }
        if let Some(first) = self.frames.first() {
            if let Some((i, f)) = self
                .frames
                .iter()
                .enumerate()
                .find(|(_, f)| !f.same_shape(first))
            {
                return Err(WireError::MixedFrameShapes {
                    index: i,
                    expected: first.shape_string(),
                    got: f.shape_string(),
                });
            }
        }
        Ok(())
    }
}

pub fn encode_minibatch(b: &MiniBatch) -> Result<Vec<u8>, WireError> {
    b.validate()?;
    let (width, height, format) = b
        .frames
        .first()
        .map(|f| (f.width, f.height, f.format))
        .unwrap_or((0, 0, PixelFormat::Gray8));

    let raw_len: usize = b.frames.iter().map(|f| f.pixels.len()).sum();
    let mut raw = Vec::with_capacity(raw_len);
    for f in &b.frames {
        raw.extend_from_slice(&f.pixels);
    }
    let payload = match b.compression {
        Compression::None => raw,
        Compression::Deflate => {
            let mut enc = DeflateEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(&raw).expect("in-memory deflate");
            enc.finish().expect("in-memory deflate")
        }
    };
    let payload_len = u32::try_from(payload.len())
        .map_err(|_| WireError::SizeMismatch(format!("payload of {} bytes exceeds u32", payload.len())))?;

    let mut out = Vec::with_capacity(FIXED_HEADER_LEN + b.source_id.len() + payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(format.code());
    out.push(b.compression.code());
    out.push(0);
    out.extend_from_slice(&(b.source_id.len() as u16).to_be_bytes());
    out.extend_from_slice(b.source_id.as_bytes());
    out.extend_from_slice(&b.batch_seq.to_be_bytes());
    out.extend_from_slice(&b.start_ts_micros.to_be_bytes());
    out.extend_from_slice(&b.frame_interval_micros.to_be_bytes());
    out.extend_from_slice(&(b.frames.len() as u16).to_be_bytes());
    out.extend_from_slice(&width.to_be_bytes());
    out.extend_from_slice(&height.to_be_bytes());
    out.extend_from_slice(&payload_len.to_be_bytes());
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(
            WireError::Truncated {
                needed: self.pos.saturating_add(n) + CRC_LEN,
                have: self.buf.len() + CRC_LEN,
            },
        )?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes one SVB1 buffer. The magic is checked first, then the CRC over the
/// whole body, then the header fields and payload size.
pub fn decode_minibatch(bytes: &[u8]) -> Result<MiniBatch, WireError> {
    let min = FIXED_HEADER_LEN + CRC_LEN;
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    if bytes.len() < min {
        return Err(WireError::Truncated {
            needed: min,
            have: bytes.len(),
        });
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - CRC_LEN);
    let stored = u32::from_be_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WireError::CrcMismatch { stored, computed });
    }

    let mut c = Cursor { buf: body, pos: 4 };
    let version = c.u8()?;
    if version != VERSION {
        return Err(WireError::UnsupportedVersion(version));
    }
    let pf = c.u8()?;
    let format = PixelFormat::from_code(pf).ok_or(WireError::BadField {
        field: "pixel_format",
        value: pf as u32,
    })?;
    let cm = c.u8()?;
    let compression = Compression::from_code(cm).ok_or(WireError::BadField {
        field: "compression",
        value: cm as u32,
    })?;
    let reserved = c.u8()?;
    if reserved != 0 {
        return Err(WireError::BadField {
            field: "reserved",
            value: reserved as u32,
        });
    }
    let sid_len = c.u16()? as usize;
    let source_id = std::str::from_utf8(c.take(sid_len)?)
        .map_err(|_| WireError::BadSourceId)?
        .to_string();
    let batch_seq = c.u64()?;
    let start_ts_micros = c.u64()?;
    let frame_interval_micros = c.u32()?;
    let frame_count = c.u16()? as usize;
    let width = c.u16()?;
    let height = c.u16()?;
    let payload_len = c.u32()? as usize;
    let payload = c.take(payload_len)?;
    if c.pos != body.len() {
        return Err(WireError::SizeMismatch(format!(
            "{} trailing bytes after payload",
            body.len() - c.pos
        )));
    }

    let frame_len = width as usize * height as usize * format.bytes_per_pixel();
    let expected = frame_len * frame_count;
    let raw = match compression {
        Compression::None => payload.to_vec(),
        Compression::Deflate => {
            let mut out = Vec::with_capacity(expected);
            DeflateDecoder::new(payload)
                .take(expected as u64 + 1)
                .read_to_end(&mut out)
                .map_err(|e| WireError::SizeMismatch(format!("deflate stream: {e}")))?;
            out
        }
    };
    if raw.len() != expected {
        return Err(WireError::SizeMismatch(format!(
            "payload decodes to {} bytes, header implies {expected}",
            raw.len()
        )));
    }

    let frames = if frame_len == 0 {
        (0..frame_count)
            .map(|_| Frame::filled(width, height, format, 0))
            .collect()
    } else {
        raw.chunks_exact(frame_len)
            .map(|px| Frame {
                width,
                height,
                format,
                pixels: px.to_vec(),
            })
            .collect()
    };

    Ok(MiniBatch {
        source_id,
        batch_seq,
        start_ts_micros,
        frame_interval_micros,
        frames,
        compression,
    })
}
