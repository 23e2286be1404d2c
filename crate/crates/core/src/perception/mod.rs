//! Visual interpretation: promptable segmentation behind a backend trait,
//! mask depth averaging, back-projection into the camera frame, the
//! eye-in-hand transform into the arm base, and the object tracker.

mod external;
mod localize;
mod mask;
mod segment;
mod tracker;

use std::sync::Arc;

use thiserror::Error;

use crate::spatial::{CameraIntrinsics, SpatialError};

pub use external::{ExternalSegmenter, SegmentRequest, SegmentResponse};
pub use localize::{avg_depth, compute_cam_coords, transform_coords};
pub use mask::{MaskRle, SegmentMask};
pub use segment::{segment, MockSegmenter, Prompt, SegmenterBackend};
pub use tracker::{track_and_pos, TrackerState, DEFAULT_MAX_LOST};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("no object under the prompt")]
    NoObjectAtPrompt,
    #[error("segmentation backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("every masked pixel has invalid depth")]
    AllInvalidDepth,
    #[error("mask is empty")]
    EmptyMask,
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("mask is {mask_w}×{mask_h} but frame is {frame_w}×{frame_h}")]
    DimensionMismatch { mask_w: u32, mask_h: u32, frame_w: u32, frame_h: u32 },
    #[error("malformed mask: {0}")]
    MalformedMask(String),
    #[error("target lost after {0} consecutive frames")]
    TargetLost(u32),
    #[error(transparent)]
    Frame(#[from] SpatialError),
}

/// Per-pixel ground-truth object ids from the simulator; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelImage {
    pub width: u32,
    pub height: u32,
    pub ids: Vec<u32>,
}

impl LabelImage {
    pub fn get(&self, u: u32, v: u32) -> u32 {
        self.ids[(v * self.width + u) as usize]
    }
}

/// One capture of the eye-in-hand camera.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub frame_id: u64,
    /// Seconds on the simulation clock.
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
    /// Optical-axis depth in meters, row-major; 0 means no return.
    pub depth: Vec<f32>,
    pub color: Vec<[u8; 3]>,
    /// Present on simulated frames; the mock segmenter reads it.
    pub ground_truth: Option<Arc<LabelImage>>,
}

impl DepthFrame {
    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn depth_at(&self, u: u32, v: u32) -> f32 {
        self.depth[(v * self.width() + u) as usize]
    }

    /// Frame of constant depth and color, without labels.
    pub fn uniform(intrinsics: CameraIntrinsics, depth: f32) -> Self {
        let n = intrinsics.pixel_count();
        Self {
            frame_id: 0,
            timestamp: 0.0,
            intrinsics,
            depth: vec![depth; n],
            color: vec![[0, 0, 0]; n],
            ground_truth: None,
        }
    }

    pub(crate) fn check_mask(&self, mask: &SegmentMask) -> Result<(), PerceptionError> {
        if mask.width != self.width() || mask.height != self.height() || mask.bits.len() != self.depth.len() {
            return Err(PerceptionError::DimensionMismatch {
                mask_w: mask.width,
                mask_h: mask.height,
                frame_w: self.width(),
                frame_h: self.height(),
            });
        }
        Ok(())
    }
}
