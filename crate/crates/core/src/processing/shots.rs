use serde::{Deserialize, Serialize};

use super::image::to_grayscale;
use super::{check_uniform, ProcessingError, Result};
use crate::framewire::{Frame, MiniBatch, PixelFormat};

/// Mean absolute per-byte difference between two same-shaped frames.
/// Empty frames differ by 0.
pub fn mean_abs_diff(a: &Frame, b: &Frame) -> f64 {
    let n = a.pixels().len();
    if n == 0 {
        return 0.0;
    }
    let sum: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| x.abs_diff(y) as u64)
        .sum();
    sum as f64 / n as f64
}

fn require_gray(frames: &[&Frame], op: &'static str) -> Result<()> {
    if frames.iter().any(|f| f.format() != PixelFormat::Gray8) {
        return Err(ProcessingError::NotGray(op));
    }
    Ok(())
}

/// Indices t ≥ 1 whose mean absolute difference to frame t−1 exceeds `tau`.
pub fn detect_shot_boundaries(frames: &[Frame], tau: f64) -> Result<Vec<usize>> {
    if !(tau >= 0.0) {
        return Err(ProcessingError::BadThreshold(tau));
    }
    let refs: Vec<&Frame> = frames.iter().collect();
    check_uniform(&refs)?;
    require_gray(&refs, "detect_shot_boundaries")?;
    Ok(frames
        .windows(2)
        .enumerate()
        .filter(|(_, w)| mean_abs_diff(&w[0], &w[1]) > tau)
        .map(|(i, _)| i + 1)
        .collect())
}

/// Entry t−1 is the mean absolute difference between frames t−1 and t.
pub fn motion_energy(frames: &[Frame]) -> Result<Vec<f64>> {
    if frames.len() < 2 {
        return Err(ProcessingError::TooFewFrames(frames.len()));
    }
    let refs: Vec<&Frame> = frames.iter().collect();
    check_uniform(&refs)?;
    require_gray(&refs, "motion_energy")?;
    Ok(frames.windows(2).map(|w| mean_abs_diff(&w[0], &w[1])).collect())
}

/// Candidate-frame selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "UPPERCASE")]
pub enum FramePolicy {
    All,
    Step { k: usize },
    /// Frame 0 plus the first frame of every shot detected at threshold `tau`.
    Key { tau: f64 },
}

pub fn extract_frames(batch: &MiniBatch, policy: FramePolicy) -> Result<Vec<(usize, Frame)>> {
    let frames = &batch.frames;
    match policy {
        FramePolicy::All => Ok(frames.iter().cloned().enumerate().collect()),
        FramePolicy::Step { k } => {
            if k == 0 {
                return Err(ProcessingError::BadPolicy("STEP k must be >= 1".into()));
            }
            Ok(frames.iter().cloned().enumerate().step_by(k).collect())
        }
        FramePolicy::Key { tau } => {
            if !(tau >= 0.0) {
                return Err(ProcessingError::BadPolicy(format!("KEY tau must be >= 0, got {tau}")));
            }
            if frames.is_empty() {
                return Ok(Vec::new());
            }
            let gray: Vec<Frame> = frames.iter().map(to_grayscale).collect();
            let mut idx = vec![0];
            idx.extend(detect_shot_boundaries(&gray, tau)?);
            Ok(idx.into_iter().map(|i| (i, frames[i].clone())).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framewire::Compression;

    fn fills(values: &[u8]) -> Vec<Frame> {
        values.iter().map(|&v| Frame::filled(4, 4, PixelFormat::Gray8, v)).collect()
    }

    fn batch(frames: Vec<Frame>) -> MiniBatch {
        MiniBatch {
            source_id: "s".into(),
            batch_seq: 0,
            start_ts_micros: 0,
            frame_interval_micros: 1,
            frames,
            compression: Compression::None,
        }
    }

    fn step_change() -> Vec<Frame> {
        let mut v = vec![0u8; 5];
        v.extend([255u8; 5]);
        fills(&v)
    }

    #[test]
    fn boundaries() {
        assert!(detect_shot_boundaries(&fills(&[9; 6]), 0.0).unwrap().is_empty());
        assert_eq!(detect_shot_boundaries(&step_change(), 50.0).unwrap(), vec![5]);
        assert!(detect_shot_boundaries(&step_change(), 300.0).unwrap().is_empty());
        assert!(detect_shot_boundaries(&[], 1.0).unwrap().is_empty());
    }

    #[test]
    fn boundaries_reject_mixed_shapes() {
        let mut f = fills(&[0, 0]);
        f.push(Frame::filled(2, 2, PixelFormat::Gray8, 0));
        assert!(matches!(
            detect_shot_boundaries(&f, 1.0),
            Err(ProcessingError::MixedFrameShapes { index: 2, .. })
        ));
    }

    #[test]
    fn motion() {
        assert_eq!(motion_energy(&fills(&[3, 3, 3])).unwrap(), vec![0.0, 0.0]);
        assert_eq!(motion_energy(&fills(&[0, 255, 0, 255])).unwrap(), vec![255.0; 3]);
        assert_eq!(motion_energy(&fills(&[1])), Err(ProcessingError::TooFewFrames(1)));
    }

    #[test]
    fn partial_difference() {
        let a = Frame::gray(2, 1, vec![0, 0]).unwrap();
        let b = Frame::gray(2, 1, vec![0, 100]).unwrap();
        assert_eq!(mean_abs_diff(&a, &b), 50.0);
    }

    #[test]
    fn policies() {
        let b = batch(fills(&[0; 10]));
        let idx = |p| -> Vec<usize> { extract_frames(&b, p).unwrap().into_iter().map(|(i, _)| i).collect() };
        assert_eq!(idx(FramePolicy::Step { k: 2 }), vec![0, 2, 4, 6, 8]);
        assert_eq!(idx(FramePolicy::All).len(), 10);
        assert!(extract_frames(&batch(vec![]), FramePolicy::All).unwrap().is_empty());
        assert!(extract_frames(&b, FramePolicy::Step { k: 0 }).is_err());
        assert!(extract_frames(&b, FramePolicy::Key { tau: -1.0 }).is_err());

        let kb = batch(step_change());
        let keys: Vec<usize> = extract_frames(&kb, FramePolicy::Key { tau: 50.0 })
            .unwrap()
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        assert_eq!(keys, vec![0, 5]);
    }
}
