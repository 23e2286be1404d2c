//! Parallel-jaw gripper and the contact plant it closes against.
//!
//! The command is a closing speed in units of `speed_per_unit` m/s (1 cm/s
//! by default). Jaw speed follows the command through a first-order lag
//! `tau`; once the jaws touch an object of width `w`, the force reading is
//! `max(0, k·(w − opening) + b·v)`.

use serde::{Deserialize, Serialize};

use super::pid::{pid_step, PidController};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperPlant {
    /// Contact stiffness, N/m.
    pub stiffness: f64,
    /// Viscous contact term, N·s/m.
    pub damping: f64,
    /// Actuator time constant, s.
    pub tau: f64,
    /// Jaw closing speed per command unit, m/s.
    pub speed_per_unit: f64,
    pub max_opening: f64,
}

impl Default for GripperPlant {
    fn default() -> Self {
        Self { stiffness: 500.0, damping: 0.5, tau: 0.02, speed_per_unit: 0.01, max_opening: 0.08 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GripperState {
    pub opening: f64,
    /// Newtons; zero without contact.
    pub force_reading: f64,
    /// Jaw closing speed, m/s (negative while opening).
    pub closing_speed: f64,
}

impl GripperState {
    pub fn open(plant: &GripperPlant) -> Self {
        Self { opening: plant.max_opening, force_reading: 0.0, closing_speed: 0.0 }
    }
}

impl GripperPlant {
    /// Advances the jaws by `dt` under `command`; `contact_width` is the
    /// width of whatever sits between the jaws.
    pub fn step(&self, s: &GripperState, command: f64, contact_width: Option<f64>, dt: f64) -> GripperState {
        let alpha = 1.0 - (-dt / self.tau).exp();
        let v = s.closing_speed + (self.speed_per_unit * command - s.closing_speed) * alpha;
        let opening = (s.opening - v * dt).clamp(0.0, self.max_opening);
        let force = match contact_width {
            Some(w) if opening < w => (self.stiffness * (w - opening) + self.damping * v).max(0.0),
            _ => 0.0,
        };
        GripperState { opening, force_reading: force, closing_speed: v }
    }

    /// Command that holds a steady closing speed of `speed` m/s.
    pub fn command_for_speed(&self, speed: f64) -> f64 {
        speed / self.speed_per_unit
    }
}

/// Step response of the plant under PID force control, starting at rest
/// with the jaws just touching an object of width `width`.
pub fn simulate_force_step(
    plant: &GripperPlant,
    pid: PidController,
    setpoint: f64,
    width: f64,
    dt: f64,
    duration: f64,
) -> Vec<f64> {
    let mut s = GripperState { opening: width, force_reading: 0.0, closing_speed: 0.0 };
    let mut c = pid.primed(setpoint);
    let steps = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, u) = pid_step(&c, setpoint, s.force_reading, dt);
        c = next;
        s = plant.step(&s, u, Some(width), dt);
        out.push(s.force_reading);
    }
    out
}

/// First sample index after which every sample stays within `band·setpoint`.
pub fn settling_index(series: &[f64], setpoint: f64, band: f64) -> Option<usize> {
    let tol = band * setpoint;
    let last_out = series.iter().rposition(|f| (f - setpoint).abs() > tol);
    match last_out {
        None => Some(0),
        Some(i) if i + 1 < series.len() => Some(i + 1),
        Some(_) => None,
    }
}
