use serde::{Deserialize, Serialize};

use super::{ProcessingError, Result};
use crate::framewire::{Frame, PixelFormat};
use crate::util::{clamp_u8, round_half_up};

/// BT.601 luma with round-half-up. GRAY8 frames pass through unchanged.
pub fn to_grayscale(f: &Frame) -> Frame {
    match f.format() {
        PixelFormat::Gray8 => f.clone(),
        PixelFormat::Rgb24 => {
            let px = f
                .pixels()
                .chunks_exact(3)
                .map(|p| luma(p[0], p[1], p[2]))
                .collect();
            Frame::new(f.width(), f.height(), PixelFormat::Gray8, px).expect("same pixel count")
        }
    }
}

fn luma(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    clamp_u8(round_half_up(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ResizeMethod {
    Nearest,
    Bilinear,
}

pub fn resize(f: &Frame, w: u16, h: u16, method: ResizeMethod) -> Result<Frame> {
    if w == 0 || h == 0 {
        return Err(ProcessingError::BadSize(w as u32, h as u32));
    }
    if (w, h) == (f.width(), f.height()) {
        return Ok(f.clone());
    }
    let (sw, sh) = (f.width() as usize, f.height() as usize);
    let (dw, dh) = (w as usize, h as usize);
    let ch = f.format().bytes_per_pixel();
    let src = f.pixels();
    let mut out = vec![0u8; dw * dh * ch];
    if sw == 0 || sh == 0 {
        return Ok(Frame::new(w, h, f.format(), out).expect("sized"));
    }

    match method {
        ResizeMethod::Nearest => {
            let xs: Vec<usize> = (0..dw).map(|x| nearest_index(x, sw, dw)).collect();
            let ys: Vec<usize> = (0..dh).map(|y| nearest_index(y, sh, dh)).collect();
            for (y, &sy) in ys.iter().enumerate() {
                for (x, &sx) in xs.iter().enumerate() {
                    let s = (sy * sw + sx) * ch;
                    let d = (y * dw + x) * ch;
                    out[d..d + ch].copy_from_slice(&src[s..s + ch]);
                }
            }
        }
        ResizeMethod::Bilinear => {
            let xs: Vec<(usize, usize, f64)> = (0..dw).map(|x| bilinear_coord(x, sw, dw)).collect();
            let ys: Vec<(usize, usize, f64)> = (0..dh).map(|y| bilinear_coord(y, sh, dh)).collect();
            for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                    for c in 0..ch {
                        let p = |yy: usize, xx: usize| src[(yy * sw + xx) * ch + c] as f64;
                        let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                        let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                        let v = top * (1.0 - fy) + bottom * fy;
                        out[(y * dw + x) * ch + c] = clamp_u8(round_half_up(v));
                    }
                }
            }
        }
    }
    Ok(Frame::new(w, h, f.format(), out).expect("sized"))
}

/// floor((i + 0.5) · src / dst), clamped to the last source index.
fn nearest_index(i: usize, src: usize, dst: usize) -> usize {
    (((2 * i + 1) * src) / (2 * dst)).min(src - 1)
}

/// Pixel-centre aligned source coordinate with edge clamping.
fn bilinear_coord(i: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let x = ((i as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let x0 = x.floor() as usize;
    let x1 = (x0 + 1).min(src - 1);
    (x0, x1, x - x0 as f64)
}

/// Brightness/contrast: p' = clamp(round(alpha·p + beta), 0, 255), applied to
/// every byte.
pub fn adjust(f: &Frame, alpha: f64, beta: f64) -> Frame {
    let px = f
        .pixels()
        .iter()
        .map(|&p| clamp_u8(round_half_up(alpha * p as f64 + beta)))
        .collect();
    Frame::new(f.width(), f.height(), f.format(), px).expect("same length")
}

/// Histogram equalization by CDF remapping. Requires GRAY8; constant and
/// empty frames are returned unchanged.
pub fn equalize(f: &Frame) -> Result<Frame> {
    if f.format() != PixelFormat::Gray8 {
        return Err(ProcessingError::NotGray("equalize"));
    }
    let n = f.pixel_count();
    let mut hist = [0usize; 256];
    for &p in f.pixels() {
        hist[p as usize] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (i, &h) in hist.iter().enumerate() {
        acc += h;
        cdf[i] = acc;
    }
    let cdf_min = hist
        .iter()
        .zip(cdf.iter())
        .find(|(&h, _)| h > 0)
        .map(|(_, &c)| c)
        .unwrap_or(0);
    if n == 0 || n == cdf_min {
        return Ok(f.clone());
    }
    let denom = (n - cdf_min) as f64;
    let lut: Vec<u8> = cdf
        .iter()
        .map(|&c| clamp_u8(round_half_up((c.saturating_sub(cdf_min)) as f64 / denom * 255.0)))
        .collect();
    let px = f.pixels().iter().map(|&p| lut[p as usize]).collect();
    Ok(Frame::new(f.width(), f.height(), f.format(), px).expect("same length"))
}

/// Copies the `w`×`h` rectangle whose top-left corner is (`x`, `y`).
pub fn crop(f: &Frame, x: u16, y: u16, w: u16, h: u16) -> Result<Frame> {
    let fits = x as u32 + w as u32 <= f.width() as u32 && y as u32 + h as u32 <= f.height() as u32;
    if !fits || w == 0 || h == 0 {
        return Err(ProcessingError::BadCrop {
            x,
            y,
            w,
            h,
            frame_w: f.width(),
            frame_h: f.height(),
        });
    }
    let ch = f.format().bytes_per_pixel();
    let stride = f.width() as usize * ch;
    let mut out = Vec::with_capacity(w as usize * h as usize * ch);
    for row in y as usize..(y + h) as usize {
        let start = row * stride + x as usize * ch;
        out.extend_from_slice(&f.pixels()[start..start + w as usize * ch]);
    }
    Ok(Frame::new(w, h, f.format(), out).expect("sized"))
}
