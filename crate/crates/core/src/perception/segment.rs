use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DepthFrame, PerceptionError, SegmentMask, TrackerState};

/// Operator cue selecting the object to segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prompt {
    /// A click at pixel `(u, v)`.
    Point { u: u32, v: u32 },
    /// A dragged rectangle; corners in any order, bounds inclusive.
    Box { u0: u32, v0: u32, u1: u32, v1: u32 },
    /// A typed object name.
    Text { text: String },
}

impl Prompt {
    pub fn validate(&self, width: u32, height: u32) -> Result<(), PerceptionError> {
        let inside = |u: u32, v: u32| u < width && v < height;
        match self {
            Prompt::Point { u, v } if !inside(*u, *v) => {
                Err(PerceptionError::InvalidPrompt(format!("point ({u}, {v}) outside {width}×{height}")))
            }
            Prompt::Box { u0, v0, u1, v1 } if !inside(*u0, *v0) || !inside(*u1, *v1) => {
                Err(PerceptionError::InvalidPrompt(format!("box outside {width}×{height}")))
            }
            Prompt::Text { text } if text.trim().is_empty() => Err(PerceptionError::InvalidPrompt("empty text".into())),
            _ => Ok(()),
        }
    }
}

/// A promptable segmentation model.
pub trait SegmenterBackend: Send + Sync {
    fn segment(&self, frame: &DepthFrame, prompt: &Prompt) -> Result<SegmentMask, PerceptionError>;

    /// Finds the tracked object again in a new frame. The default re-prompts
    /// with the previous centroid as a click.
    fn reassociate(&self, frame: &DepthFrame, previous: &TrackerState) -> Result<SegmentMask, PerceptionError> {
        let (u, v) = previous.last_centroid_px;
        let u = (u.round().max(0.0) as u32).min(frame.width().saturating_sub(1));
        let v = (v.round().max(0.0) as u32).min(frame.height().saturating_sub(1));
        self.segment(frame, &Prompt::Point { u, v })
    }
}

/// Validates the prompt against the frame, then runs the backend.
pub fn segment(backend: &dyn SegmenterBackend, frame: &DepthFrame, prompt: &Prompt) -> Result<SegmentMask, PerceptionError> {
    prompt.validate(frame.width(), frame.height())?;
    let mask = backend.segment(frame, prompt)?;
    frame.check_mask(&mask)?;
    if mask.is_empty() {
        return Err(PerceptionError::NoObjectAtPrompt);
    }
    Ok(mask)
}

/// Ground-truth-aware stand-in for a segmentation model: it reads the
/// simulator's label image attached to each frame.
#[derive(Debug, Clone, Default)]
pub struct MockSegmenter {
    /// Object name → label, for text prompts (exact match).
    names: BTreeMap<String, u32>,
    /// Std-dev of a whole-pixel jitter applied to returned masks.
    pub centroid_noise_px: f64,
    pub seed: u64,
}

impl MockSegmenter {
    pub fn new<'a>(catalog: impl IntoIterator<Item = (u32, &'a str)>) -> Self {
        Self { names: catalog.into_iter().map(|(id, n)| (n.to_owned(), id)).collect(), centroid_noise_px: 0.0, seed: 0 }
    }

    pub fn with_noise(mut self, centroid_noise_px: f64, seed: u64) -> Self {
        self.centroid_noise_px = centroid_noise_px;
        self.seed = seed;
        self
    }

    fn mask_for(&self, frame: &DepthFrame, label: u32) -> Result<SegmentMask, PerceptionError> {
        let labels = ground_truth(frame)?;
        let mut mask = SegmentMask::from_predicate(frame.width(), frame.height(), label, |u, v| labels.get(u, v) == label);
        if mask.is_empty() {
            return Err(PerceptionError::NoObjectAtPrompt);
        }
        if self.centroid_noise_px > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ frame.frame_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n = Normal::new(0.0, self.centroid_noise_px).expect("finite sigma");
            let (du, dv) = (n.sample(&mut rng).round() as i64, n.sample(&mut rng).round() as i64);
            mask = mask.shifted(du, dv);
        }
        Ok(mask)
    }
}

fn ground_truth(frame: &DepthFrame) -> Result<&super::LabelImage, PerceptionError> {
    frame
        .ground_truth
        .as_deref()
        .ok_or_else(|| PerceptionError::BackendUnavailable("frame carries no ground-truth labels".into()))
}

impl SegmenterBackend for MockSegmenter {
    fn segment(&self, frame: &DepthFrame, prompt: &Prompt) -> Result<SegmentMask, PerceptionError> {
        let labels = ground_truth(frame)?;
        let label = match prompt {
            Prompt::Point { u, v } => labels.get(*u, *v),
            Prompt::Box { u0, v0, u1, v1 } => {
                let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
                for v in *v0.min(v1)..=*v0.max(v1) {
                    for u in *u0.min(u1)..=*u0.max(u1) {
                        let id = labels.get(u, v);
                        if id != 0 {
                            *counts.entry(id).or_default() += 1;
                        }
                    }
                }
                // BTreeMap iterates ascending, so the first maximum wins ties.
                counts.iter().fold((0, 0), |best, (&id, &n)| if n > best.1 { (id, n) } else { best }).0
            }
            Prompt::Text { text } => self.names.get(text.as_str()).copied().unwrap_or(0),
        };
        if label == 0 {
            return Err(PerceptionError::NoObjectAtPrompt);
        }
        self.mask_for(frame, label)
    }

    fn reassociate(&self, frame: &DepthFrame, previous: &TrackerState) -> Result<SegmentMask, PerceptionError> {
        self.mask_for(frame, previous.object_label)
    }
}
