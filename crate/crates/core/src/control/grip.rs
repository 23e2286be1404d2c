use nalgebra::Vector3;
use serde::Serialize;

use crate::simworld::{Scene, SimError};
use crate::spatial::RigidTransform;

use super::gripper::GripperState;
use super::pid::{pid_step, PidController};
use super::ControlParams;

/// True when `point` (world) lies in the cylinder of radius `radius` and
/// half-height `half_height` centered on the tool point along tool z.
pub fn in_grasp_cylinder(tool_to_world: &RigidTransform, point: &Vector3<f64>, radius: f64, half_height: f64) -> bool {
    let local = tool_to_world.rotation.transpose() * (point - tool_to_world.translation);
    local.z.abs() <= half_height && local.xy().norm() <= radius
}

/// Width between the jaws if `object_id` sits in the grasp cylinder. The
/// jaws close along tool x.
pub fn contact_width(scene: &Scene, object_id: u32, params: &ControlParams) -> Result<Option<f64>, SimError> {
    let Ok(obj) = scene.object(object_id) else {
        return Ok(None);
    };
    let tool = scene.tool_to_world()?;
    if !in_grasp_cylinder(&tool, &obj.pose.translation, params.grasp_radius, params.grasp_half_height) {
        return Ok(None);
    }
    Ok(Some(obj.width_along(&tool.rotation.column(0).into_owned())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum GripStatus {
    Closing,
    Regulating,
    Settled,
    Failed { reason: String },
}

/// Tick-driven gripper: closes at constant speed until contact, then
/// regulates force with the PID.
#[derive(Debug, Clone, PartialEq)]
pub struct GripSim {
    pub state: GripperState,
    pub pid: PidController,
    pub engaged: bool,
    pub elapsed: f64,
    in_band_since: Option<f64>,
}

impl GripSim {
    pub fn new(params: &ControlParams) -> Self {
        Self {
            state: GripperState::open(&params.gripper),
            pid: PidController::new(params.pid),
            engaged: false,
            elapsed: 0.0,
            in_band_since: None,
        }
    }

    pub fn step(&mut self, contact_width: Option<f64>, params: &ControlParams) -> GripStatus {
        let dt = params.dt();
        let plant = &params.gripper;
        let target = params.target_force;
        if self.engaged {
            let (pid, u) = pid_step(&self.pid, target, self.state.force_reading, dt);
            self.pid = pid;
            self.state = plant.step(&self.state, u, contact_width, dt);
        } else {
            self.state = plant.step(&self.state, plant.command_for_speed(params.closing_speed), contact_width, dt);
            if self.state.force_reading > 0.0 {
                self.engaged = true;
                self.pid = self.pid.primed(target - self.state.force_reading);
            }
        }
        self.elapsed += dt;
        if self.state.opening <= 0.0 {
            return GripStatus::Failed { reason: "jaws closed without contact".into() };
        }
        if self.engaged {
            if (self.state.force_reading - target).abs() <= params.force_band * target {
                let since = *self.in_band_since.get_or_insert(self.elapsed);
                if self.elapsed - since >= params.hold_time - 1e-9 {
                    return GripStatus::Settled;
                }
            } else {
                self.in_band_since = None;
            }
        }
        if self.elapsed >= params.grip_timeout {
            return GripStatus::Failed { reason: "force did not settle".into() };
        }
        if self.engaged {
            GripStatus::Regulating
        } else {
            GripStatus::Closing
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GripResult {
    pub success: bool,
    pub status: GripStatus,
    pub settled_force: f64,
    pub duration: f64,
    pub force_trace: Vec<f64>,
}

/// Closes the gripper on a static scene with the tool at the grasp pose.
pub fn execute_grip(
    gripper: GripperState,
    pid: PidController,
    target_force: f64,
    scene: &Scene,
    object_id: u32,
    params: &ControlParams,
) -> Result<GripResult, SimError> {
    let params = ControlParams { target_force, ..params.clone() };
    let width = contact_width(scene, object_id, &params)?;
    let mut sim = GripSim { state: gripper, pid, engaged: false, elapsed: 0.0, in_band_since: None };
    let mut trace = Vec::new();
    loop {
        let status = sim.step(width, &params);
        trace.push(sim.state.force_reading);
        match status {
            GripStatus::Closing | GripStatus::Regulating => continue,
            GripStatus::Settled => {
                let hold = ((params.hold_time / params.dt()).round() as usize).max(1).min(trace.len());
                let settled_force = trace[trace.len() - hold..].iter().sum::<f64>() / hold as f64;
                return Ok(GripResult { success: true, status, settled_force, duration: sim.elapsed, force_trace: trace });
            }
            GripStatus::Failed { .. } => {
                return Ok(GripResult { success: false, status, settled_force: sim.state.force_reading, duration: sim.elapsed, force_trace: trace });
            }
        }
    }
}
