//! Closed-loop execution: the tracking approach with replanning, and
//! PID-regulated gripping.

mod approach;
mod grip;
pub mod gripper;
pub mod pid;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{IkError, IkMode, IkOptions, JointVector};
use crate::motion::{motion_plan, MotionError, PlanContext, Trajectory};
use crate::perception::PerceptionError;
use crate::simworld::SimError;
use crate::spatial::Point3;

pub use approach::{execute_closed_loop, execute_open_loop, pregrasp_pose, ApproachLoop, ApproachStatus, TargetPredictor, MIN_VELOCITY_SAMPLES};
pub use grip::{contact_width, execute_grip, in_grasp_cylinder, GripResult, GripSim, GripStatus};
pub use gripper::{GripperPlant, GripperState};
pub use pid::{pid_step, PidController, PidGains};

/// Session phase; also tags timeline and telemetry records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingPrompt,
    SegmentedAwaitingConfirm,
    Relocating,
    Approaching,
    Grasping,
    Done,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::AwaitingPrompt => "awaiting_prompt",
            Phase::SegmentedAwaitingConfirm => "segmented_awaiting_confirm",
            Phase::Relocating => "relocating",
            Phase::Approaching => "approaching",
            Phase::Grasping => "grasping",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Success,
    TargetLost,
    IkFailure,
    CollisionAbort,
    GripFailure,
    AbortedByUser,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ControlError {
    pub fn status(&self) -> OutcomeStatus {
        match self {
            ControlError::Perception(_) => OutcomeStatus::TargetLost,
            ControlError::Motion(MotionError::CollisionUnavoidable(_)) => OutcomeStatus::CollisionAbort,
            ControlError::Ik(_) | ControlError::Motion(_) | ControlError::Sim(_) => OutcomeStatus::IkFailure,
        }
    }
}

/// Loop, planning and gripping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlParams {
    pub rate_hz: f64,
    /// Frames reach the tracker this many ticks after capture.
    pub latency_ticks: usize,
    /// Predicted target motion beyond this triggers a replan, meters.
    pub replan_threshold: f64,
    /// Pre-grasp distance short of the target along the approach axis.
    pub standoff: f64,
    /// Per-joint speed limits, rad/s.
    pub v_max: Vec<f64>,
    pub link_radius: f64,
    pub via_lift: f64,
    /// Tracker estimates used for the target velocity fit.
    pub velocity_window: usize,
    /// Fitted speeds below this are treated as a stationary target, m/s.
    pub velocity_deadband: f64,
    /// Safety bound on one approach, seconds.
    pub max_approach_time: f64,
    /// Downward tilt of the approach axis, radians.
    pub approach_tilt: f64,
    pub pid: PidGains,
    pub target_force: f64,
    /// Open-loop jaw speed before contact, m/s.
    pub closing_speed: f64,
    pub grasp_radius: f64,
    pub grasp_half_height: f64,
    /// Force must stay within this fraction of the target for `hold_time`.
    pub force_band: f64,
    pub hold_time: f64,
    pub grip_timeout: f64,
    pub gripper: GripperPlant,
    pub ik_position_tolerance: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            rate_hz: 50.0,
            latency_ticks: 1,
            replan_threshold: 0.005,
            standoff: 0.05,
            v_max: vec![0.8; 6],
            link_radius: 0.03,
            via_lift: 0.15,
            velocity_window: 50,
            velocity_deadband: 0.002,
            max_approach_time: 20.0,
            approach_tilt: 0.0,
            pid: PidGains::default(),
            target_force: 5.0,
            closing_speed: 0.05,
            grasp_radius: 0.02,
            grasp_half_height: 0.03,
            force_band: 0.2,
            hold_time: 0.5,
            grip_timeout: 5.0,
            gripper: GripperPlant::default(),
            ik_position_tolerance: 1e-4,
        }
    }
}

impl ControlParams {
    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn ik_options(&self, seed: u64) -> IkOptions {
        IkOptions { mode: IkMode::Approach, pos_tol: self.ik_position_tolerance, seed, ..IkOptions::default() }
    }

    pub fn validate(&self, dof: usize) -> Result<(), String> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err("rate_hz must be positive".into());
        }
        if self.v_max.len() != dof || self.v_max.iter().any(|v| !(*v > 0.0)) {
            return Err(format!("v_max needs {dof} positive entries"));
        }
        let positive = [
            ("replan_threshold", self.replan_threshold),
            ("link_radius", self.link_radius),
            ("target_force", self.target_force),
            ("closing_speed", self.closing_speed),
            ("grasp_radius", self.grasp_radius),
            ("grasp_half_height", self.grasp_half_height),
            ("hold_time", self.hold_time),
            ("grip_timeout", self.grip_timeout),
            ("max_approach_time", self.max_approach_time),
            ("ik_position_tolerance", self.ik_position_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.standoff >= 0.0) || !(self.velocity_deadband >= 0.0) || self.velocity_window < 2 {
            return Err("standoff and velocity_deadband must be ≥ 0, velocity_window ≥ 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineEntry {
    pub t: f64,
    pub phase: Phase,
    pub theta: JointVector,
    /// Latest target estimate, arm-base frame.
    pub p: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraspOutcome {
    pub status: OutcomeStatus,
    /// Tool distance from the ground-truth goal when the loop stopped, meters.
    pub final_error: Option<f64>,
    pub replans: u32,
    pub timeline: Vec<TimelineEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperTelemetry {
    pub opening: f64,
    pub force: f64,
}

/// One control-tick record for the session log and the UI stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub t: f64,
    pub phase: Phase,
    pub theta: JointVector,
    pub p_arm_est: Option<[f64; 3]>,
    pub p_arm_gt: Option<[f64; 3]>,
    pub gripper: GripperTelemetry,
    pub replans: u32,
}

/// Replans from the arm's instantaneous configuration; the caller drops the
/// superseded trajectory.
pub fn adjust_arm_motion(
    current: &JointVector,
    theta_new: &JointVector,
    v_max: &[f64],
    ctx: &PlanContext,
) -> Result<Trajectory, MotionError> {
    motion_plan(current, theta_new, v_max, ctx)
}

/// Horizontal unit vector from the arm base toward `p_arm`, tilted down by
/// `tilt` radians.
pub fn approach_axis_toward(p_arm: &Point3, tilt: f64) -> Vector3<f64> {
    let h = Vector3::new(p_arm.x, p_arm.y, 0.0);
    let h = h.try_normalize(1e-9).unwrap_or_else(Vector3::x);
    (h * tilt.cos() - Vector3::z() * tilt.sin()).normalize()
}
