//! PID force regulation on the gripper plant.

use mograsp::control::{pid_step, ControlParams, GripperPlant, PidController, PidGains};
use mograsp::control::gripper::{settling_index, simulate_force_step};

fn main() {
    let params = ControlParams::default();
    let plant = GripperPlant::default();
    let dt = params.dt();
    let trace = simulate_force_step(&plant, PidController::new(params.pid), 5.0, 0.04, dt, 3.0);
    let peak = trace.iter().cloned().fold(f64::MIN, f64::max);
    let settle = settling_index(&trace, 5.0, 0.01).map(|i| i as f64 * dt);
    println!("5 N step: peak {peak:.3} N, overshoot {:.1}%, settled within 1% after {settle:?} s", (peak / 5.0 - 1.0).max(0.0) * 100.0);

    let mut c = PidController::new(PidGains::default());
    for _ in 0..500 {
        c = pid_step(&c, 100.0, 0.0, dt).0;
    }
    println!("after 10 s of saturation the integral is capped at {:.2} N·s", c.integral);
}
