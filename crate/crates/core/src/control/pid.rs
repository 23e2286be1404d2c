use serde::{Deserialize, Serialize};

/// PID gains and limits; `command = kp·e + ki·∫e + kd·de/dt`, clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub output_min: f64,
    pub output_max: f64,
    /// Bound on |∫e dt|, N·s.
    pub integral_cap: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self { kp: 2.0, ki: 4.0, kd: 0.05, output_min: -20.0, output_max: 20.0, integral_cap: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PidController {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral: f64,
    pub prev_error: f64,
    pub output_min: f64,
    pub output_max: f64,
    pub integral_cap: f64,
}

impl PidController {
    pub fn new(g: PidGains) -> Self {
        Self {
            kp: g.kp,
            ki: g.ki,
            kd: g.kd,
            integral: 0.0,
            prev_error: 0.0,
            output_min: g.output_min,
            output_max: g.output_max,
            integral_cap: g.integral_cap.abs(),
        }
    }

    /// Clears the integral and seeds the derivative with `error`, so the
    /// first step after engaging has no derivative kick.
    pub fn primed(self, error: f64) -> Self {
        Self { integral: 0.0, prev_error: error, ..self }
    }
}

/// One controller update; returns the new controller and the clamped command.
pub fn pid_step(c: &PidController, setpoint: f64, measurement: f64, dt: f64) -> (PidController, f64) {
    assert!(dt > 0.0, "pid_step needs dt > 0");
    let e = setpoint - measurement;
    let integral = (c.integral + e * dt).clamp(-c.integral_cap, c.integral_cap);
    let derivative = (e - c.prev_error) / dt;
    let raw = c.kp * e + c.ki * integral + c.kd * derivative;
    let command = if raw.is_nan() { 0.0 } else { raw.clamp(c.output_min, c.output_max) };
    (PidController { integral, prev_error: e, ..*c }, command)
}
