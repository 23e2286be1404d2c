use serde::Serialize;

use crate::kinematics::Pose;
use crate::spatial::{Point3, RigidTransform};

use super::{compute_cam_coords, transform_coords, DepthFrame, PerceptionError, SegmentMask, SegmenterBackend};

/// Consecutive failed associations tolerated before the target counts as lost.
pub const DEFAULT_MAX_LOST: u32 = 5;

/// Single-object tracker state, owned by one control loop at a time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackerState {
    pub object_label: u32,
    #[serde(skip)]
    pub last_mask: SegmentMask,
    pub last_centroid_px: (f64, f64),
    /// Latest target estimate in the arm-base frame.
    pub last_p_arm: Point3,
    pub lost_count: u32,
    pub max_lost: u32,
    /// The last mask touched the frame edge; `last_p_arm` was not updated.
    pub clipped: bool,
}

impl TrackerState {
    /// Starts tracking from a confirmed segmentation.
    pub fn initialize(
        mask: SegmentMask,
        frame: &DepthFrame,
        hand_eye: &RigidTransform,
        arm_fk: &Pose,
    ) -> Result<Self, PerceptionError> {
        let p_cam = compute_cam_coords(&mask, frame)?;
        let p_arm = transform_coords(&p_cam, hand_eye, arm_fk)?;
        let centroid = mask.centroid().ok_or(PerceptionError::EmptyMask)?;
        Ok(Self {
            object_label: mask.object_label,
            last_mask: mask,
            last_centroid_px: centroid,
            last_p_arm: p_arm,
            lost_count: 0,
            max_lost: DEFAULT_MAX_LOST,
            clipped: false,
        })
    }

    /// True when the last update produced a fresh estimate.
    pub fn is_fresh(&self) -> bool {
        self.lost_count == 0 && !self.clipped
    }
}

/// Re-finds the object in `frame` and recomputes its arm-base position.
///
/// A failed association keeps the previous estimate and bumps `lost_count`;
/// reaching `max_lost` consecutive failures yields `TargetLost`. A mask cut
/// by the frame edge keeps the association but not its biased estimate.
pub fn track_and_pos(
    state: &TrackerState,
    backend: &dyn SegmenterBackend,
    frame: &DepthFrame,
    hand_eye: &RigidTransform,
    arm_fk: &Pose,
) -> Result<(TrackerState, Point3), PerceptionError> {
    let located = backend.reassociate(frame, state).and_then(|mask| {
        frame.check_mask(&mask)?;
        let p_cam = compute_cam_coords(&mask, frame)?;
        let p_arm = transform_coords(&p_cam, hand_eye, arm_fk)?;
        let centroid = mask.centroid().ok_or(PerceptionError::EmptyMask)?;
        Ok((mask, centroid, p_arm))
    });
    match located {
        Ok((mask, centroid, p_arm)) => {
            let clipped = mask.touches_border();
            let p_arm = if clipped { state.last_p_arm } else { p_arm };
            let next = TrackerState {
                object_label: state.object_label,
                last_mask: mask,
                last_centroid_px: centroid,
                last_p_arm: p_arm,
                lost_count: 0,
                max_lost: state.max_lost,
                clipped,
            };
            Ok((next, p_arm))
        }
        Err(PerceptionError::Frame(e)) => Err(PerceptionError::Frame(e)),
        Err(_) => {
            let lost = state.lost_count + 1;
            if lost >= state.max_lost {
                return Err(PerceptionError::TargetLost(lost));
            }
            let next = TrackerState { lost_count: lost, ..state.clone() };
            let p = next.last_p_arm;
            Ok((next, p))
        }
    }
}
