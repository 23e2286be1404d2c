use crate::kinematics::Pose;
use crate::spatial::{Frame, Point3, RigidTransform};

use super::{DepthFrame, PerceptionError, SegmentMask};

/// Mean depth over masked pixels with a return.
///
/// Invalid (zero) pixels are skipped. Pixels farther than 3σ from the masked
/// median are trimmed first so background bleeding at the mask rim does not
/// drag the mean.
pub fn avg_depth(mask: &SegmentMask, frame: &DepthFrame) -> Result<f64, PerceptionError> {
    frame.check_mask(mask)?;
    if mask.is_empty() {
        return Err(PerceptionError::EmptyMask);
    }
    let mut valid: Vec<f64> = mask
        .bits
        .iter()
        .zip(&frame.depth)
        .filter(|(m, d)| **m && **d > 0.0)
        .map(|(_, d)| *d as f64)
        .collect();
    if valid.is_empty() {
        return Err(PerceptionError::AllInvalidDepth);
    }
    valid.sort_by(f64::total_cmp);
    let n = valid.len();
    let median = if n % 2 == 1 { valid[n / 2] } else { 0.5 * (valid[n / 2 - 1] + valid[n / 2]) };
    let mean = valid.iter().sum::<f64>() / n as f64;
    let sigma = (valid.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let (sum, count) = valid
        .iter()
        .filter(|d| (*d - median).abs() <= 3.0 * sigma)
        .fold((0.0, 0usize), |(s, c), d| (s + d, c + 1));
    Ok(sum / count as f64)
}

/// Back-projects the mask's pixel centroid at the mask's mean depth.
pub fn compute_cam_coords(mask: &SegmentMask, frame: &DepthFrame) -> Result<Point3, PerceptionError> {
    let depth = avg_depth(mask, frame)?;
    let (u, v) = mask.centroid().ok_or(PerceptionError::EmptyMask)?;
    Ok(frame.intrinsics.back_project(u, v, depth))
}

/// Camera point into the arm base: `T_base←tool(θ) ∘ T_tool←camera`.
pub fn transform_coords(p_cam: &Point3, hand_eye: &RigidTransform, arm_fk: &Pose) -> Result<Point3, PerceptionError> {
    if p_cam.frame != Frame::CAMERA {
        return Err(crate::spatial::SpatialError::FrameMismatch { expected: Frame::CAMERA, found: p_cam.frame }.into());
    }
    let chain = arm_fk.to_transform().compose(hand_eye)?;
    Ok(chain.apply(p_cam)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::CameraIntrinsics;
    use nalgebra::{Matrix3, Vector3};

    fn small() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 50.0, 8.0, 6.0, 16, 12).unwrap()
    }

    fn full_mask(k: &CameraIntrinsics) -> SegmentMask {
        SegmentMask::from_predicate(k.width, k.height, 1, |_, _| true)
    }

    #[test]
    fn constant_depth() {
        let k = small();
        let f = DepthFrame::uniform(k, 2.0);
        assert_eq!(avg_depth(&full_mask(&k), &f).unwrap(), 2.0);
    }

    #[test]
    fn two_level_mean() {
        let k = small();
        let mut f = DepthFrame::uniform(k, 1.0);
        for (i, d) in f.depth.iter_mut().enumerate() {
            if i % 2 == 1 {
                *d = 3.0;
            }
        }
        assert_eq!(avg_depth(&full_mask(&k), &f).unwrap(), 2.0);
    }

    #[test]
    fn invalid_pixels_are_excluded() {
        let k = small();
        let mut f = DepthFrame::uniform(k, 2.0);
        let n = f.depth.len();
        for d in f.depth.iter_mut().take(n / 10) {
            *d = 0.0;
        }
        assert_eq!(avg_depth(&full_mask(&k), &f).unwrap(), 2.0);
        let f = DepthFrame::uniform(k, 0.0);
        assert_eq!(avg_depth(&full_mask(&k), &f), Err(PerceptionError::AllInvalidDepth));
    }

    #[test]
    fn rim_outliers_are_trimmed() {
        let k = small();
        let mut f = DepthFrame::uniform(k, 1.0);
        f.depth[0] = 9.0;
        assert_eq!(avg_depth(&full_mask(&k), &f).unwrap(), 1.0);
    }

    #[test]
    fn mask_dimension_mismatch() {
        let k = small();
        let f = DepthFrame::uniform(k, 1.0);
        let m = SegmentMask::from_predicate(4, 4, 1, |_, _| true);
        assert!(matches!(avg_depth(&m, &f), Err(PerceptionError::DimensionMismatch { .. })));
    }

    #[test]
    fn cam_coords_principal_and_tangent() {
        let k = CameraIntrinsics::new(4.0, 4.0, 5.0, 3.0, 11, 7).unwrap();
        let f = DepthFrame::uniform(k, 1.5);
        let at_center = SegmentMask::from_predicate(11, 7, 1, |u, v| u == 5 && v == 3);
        let p = compute_cam_coords(&at_center, &f).unwrap();
        assert_eq!(p.coords(), Vector3::new(0.0, 0.0, 1.5));
        let f = DepthFrame::uniform(k, 1.0);
        let right = SegmentMask::from_predicate(11, 7, 1, |u, v| u == 9 && v == 3);
        let p = compute_cam_coords(&right, &f).unwrap();
        assert_eq!(p.coords(), Vector3::new(1.0, 0.0, 1.0));
    }

    fn identity_pose() -> Pose {
        Pose::new(Point3::new(Frame::ARM_BASE, 0.0, 0.0, 0.0), Matrix3::identity())
    }

    #[test]
    fn transform_identity_and_offset() {
        let p = Point3::new(Frame::CAMERA, 0.1, -0.2, 0.7);
        let he = RigidTransform::identity(Frame::CAMERA).relabeled(Frame::CAMERA, Frame::TOOL);
        let q = transform_coords(&p, &he, &identity_pose()).unwrap();
        assert_eq!(q.coords(), p.coords());
        assert_eq!(q.frame, Frame::ARM_BASE);

        let he = RigidTransform::from_translation(Frame::CAMERA, Frame::TOOL, Vector3::new(0.0, 0.0, 0.05));
        let q = transform_coords(&p, &he, &identity_pose()).unwrap();
        assert!((q.coords() - (p.coords() + Vector3::new(0.0, 0.0, 0.05))).norm() < 1e-15);
    }

    #[test]
    fn transform_rejects_wrong_frames() {
        let he = RigidTransform::identity(Frame::CAMERA).relabeled(Frame::CAMERA, Frame::TOOL);
        let p = Point3::new(Frame::WORLD, 0.0, 0.0, 1.0);
        assert!(transform_coords(&p, &he, &identity_pose()).is_err());
        let wrong_he = RigidTransform::identity(Frame::CAMERA);
        let p = Point3::new(Frame::CAMERA, 0.0, 0.0, 1.0);
        assert!(transform_coords(&p, &wrong_he, &identity_pose()).is_err());
    }
}
