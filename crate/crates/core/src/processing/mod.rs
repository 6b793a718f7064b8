//! Frame pre-processing, feature extraction and dimensionality reduction.
//!
//! Every function here is pure: equal inputs give bit-equal outputs.

mod features;
mod image;
mod pca;
mod shots;

use thiserror::Error;

pub use features::{histogram_feature, variance_select};
pub use image::{adjust, crop, equalize, resize, to_grayscale, ResizeMethod};
pub use pca::{pca_fit, pca_fit_with, pca_transform, PcaModel};
pub use shots::{detect_shot_boundaries, extract_frames, mean_abs_diff, motion_energy, FramePolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessingError {
    #[error("bad frame policy: {0}")]
    BadPolicy(String),
    #[error("frames have mixed shapes: frame {index} is {got}, expected {expected}")]
    MixedFrameShapes {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("histogram bins must be >= 1 and divide 256, got {0}")]
    BadBins(usize),
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("{0} requires GRAY8 frames")]
    NotGray(&'static str),
    #[error("invalid k = {k} for {d} columns")]
    BadK { k: usize, d: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("power iteration did not converge for component {component}")]
    DidNotConverge { component: usize },
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid size {0}x{1}")]
    BadSize(u32, u32),
    #[error("crop rectangle {x},{y} {w}x{h} exceeds {frame_w}x{frame_h}")]
    BadCrop {
        x: u16,
        y: u16,
        w: u16,
        h: u16,
        frame_w: u16,
        frame_h: u16,
    },
    #[error("invalid threshold {0}")]
    BadThreshold(f64),
}

pub type Result<T, E = ProcessingError> = std::result::Result<T, E>;

pub(crate) fn check_uniform(frames: &[&crate::framewire::Frame]) -> Result<()> {
    if let Some(first) = frames.first() {
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(ProcessingError::MixedFrameShapes {
                index: i,
                expected: first.shape_string(),
                got: f.shape_string(),
            });
        }
    }
    Ok(())
}
