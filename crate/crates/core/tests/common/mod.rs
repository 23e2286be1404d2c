#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use mograsp::control::{approach_axis_toward, execute_closed_loop, execute_open_loop, ApproachLoop, ControlParams, Phase};
use mograsp::kinematics::{JointVector, KinematicChain};
use mograsp::orchestrator::{ErrorCode, GraspSession, ServerMessage};
use mograsp::perception::{segment, MockSegmenter, Prompt, SegmenterBackend, TrackerState};
use mograsp::simworld::{default_hand_eye, ready_configuration, render_depth, NoiseModel, Scene, Shape, SimObject};
use mograsp::spatial::CameraIntrinsics;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M4 = [[f64; 4]; 4];

pub fn e2e_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/e2e")
}

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn mat_mul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn mat_inv(m: &M4) -> M4 {
    let mut a = *m;
    let mut inv = [[0.0; 4]; 4];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..4 {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..4 {
            if r != col {
                let f = a[r][col];
                for j in 0..4 {
                    a[r][j] -= f * a[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Textbook distal D-H matrix: Rz(θ)·Tz(d)·Tx(a)·Rx(α).
pub fn dh_matrix(theta: f64, d: f64, a: f64, alpha: f64) -> M4 {
    let rz = [[theta.cos(), -theta.sin(), 0.0, 0.0], [theta.sin(), theta.cos(), 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let tz = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, d], [0.0, 0.0, 0.0, 1.0]];
    let tx = [[1.0, 0.0, 0.0, a], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let rx = [[1.0, 0.0, 0.0, 0.0], [0.0, alpha.cos(), -alpha.sin(), 0.0], [0.0, alpha.sin(), alpha.cos(), 0.0], [0.0, 0.0, 0.0, 1.0]];
    mat_mul(&mat_mul(&mat_mul(&rz, &tz), &tx), &rx)
}

pub fn to_m4(rot: &Matrix3<f64>, t: &Vector3<f64>) -> M4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = rot[(i, j)];
        }
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

/// Base-to-tool transform from link parameters alone.
pub fn fk_oracle(chain: &KinematicChain, theta: &JointVector) -> M4 {
    let mut t = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    for (link, q) in chain.links.iter().zip(theta.iter()) {
        t = mat_mul(&t, &dh_matrix(q + link.theta_offset, link.d, link.a, link.alpha));
    }
    mat_mul(&t, &to_m4(&chain.tool.rotation, &chain.tool.translation))
}

pub fn max_abs_diff(a: &M4, b: &M4) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

/// Outcome of one drifting-target comparison.
#[derive(Debug, Clone)]
pub struct DriftTrial {
    pub seed: u64,
    pub closed: Option<f64>,
    pub open: Option<f64>,
    pub replans: u32,
    pub closed_ok: bool,
    /// Object displacement over the open-loop approach, meters.
    pub open_drift: f64,
}

/// A thin plate facing the arm, drifting at `speed` in a random horizontal
/// direction, with σ = 2 mm depth noise and 5% dropout.
pub fn drift_scene(seed: u64, speed: f64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain = KinematicChain::default_arm();
    let mut scene = Scene::new(chain.clone(), default_hand_eye(), CameraIntrinsics::default(), seed);
    scene.mount_height = 0.5;
    scene.arm_theta = ready_configuration(&chain).unwrap();
    scene.noise = NoiseModel { depth_sigma: 0.002, dropout_prob: 0.05, servo_sigma: 0.0, depth_quantum: 0.001 };
    let r = rng.gen_range(0.5..0.62);
    let az: f64 = rng.gen_range(-0.3..0.3);
    let z = rng.gen_range(-0.03..0.06);
    let dir = Vector3::new(az.cos(), az.sin(), 0.0);
    let rot = Matrix3::from_columns(&[dir, Vector3::z().cross(&dir), Vector3::z()]);
    let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let plate = SimObject::new(1, "plate", Shape::Box { size: [0.002, 0.04, 0.05] }, Vector3::new(r * az.cos(), r * az.sin(), 0.5 + z))
        .with_rotation(rot)
        .unwrap()
        .with_drift(Vector3::new(heading.cos(), heading.sin(), 0.0) * speed);
    scene.add_object(plate).unwrap();
    scene
}

pub fn drift_trial(seed: u64, speed: f64) -> DriftTrial {
    let params = ControlParams::default();
    let scene = drift_scene(seed, speed);
    let backend = MockSegmenter::new([(1, "plate")]);
    let (frame, _) = render_depth(&scene).unwrap();
    let mask = segment(&backend, &frame, &Prompt::Text { text: "plate".into() }).unwrap();
    let tracker = TrackerState::initialize(mask, &frame, &scene.hand_eye, &scene.tool_pose().unwrap()).unwrap();
    let target = tracker.last_p_arm;
    let approach = approach_axis_toward(&target, params.approach_tilt);
    let plan = ApproachLoop::new(&scene, &target, approach, Some(tracker.clone()), &params, seed).unwrap().trajectory;
    let (_, closed) = execute_closed_loop(scene.clone(), plan, tracker, &target, approach, &backend, &params, seed);
    let (open_scene, open) = execute_open_loop(scene.clone(), &target, approach, 1, &params, seed);
    let open_drift = (open_scene.clock - scene.clock) * speed;
    DriftTrial {
        seed,
        closed: closed.final_error,
        open: open.final_error,
        replans: closed.replans,
        closed_ok: closed.status == mograsp::control::OutcomeStatus::Success,
        open_drift,
    }
}

/// One symbol of the protocol alphabet.
#[derive(Debug, Clone)]
pub enum Symbol {
    Line(&'static str),
    Tick,
    /// Ticks until the phase changes, at most `SETTLE_TICKS` times.
    Settle,
}

pub const SETTLE_TICKS: usize = 600;

pub const MALFORMED: [&str; 5] = [
    "not json",
    r#"{"type":"confirm","extra":1}"#,
    r#"{"type":"prompt","kind":"point","u":10}"#,
    r#"{"type":"warp"}"#,
    r#"{"type":"set_speed","scale":"fast"}"#,
];

pub fn alphabet(object_px: (u32, u32)) -> Vec<Symbol> {
    let point: &'static str = Box::leak(format!(r#"{{"type":"prompt","kind":"point","u":{},"v":{}}}"#, object_px.0, object_px.1).into_boxed_str());
    let mut symbols = vec![
        Symbol::Line(r#"{"type":"prompt","kind":"text","text":"plate"}"#),
        Symbol::Line(point),
        Symbol::Line(r#"{"type":"prompt","kind":"point","u":2,"v":2}"#),
        Symbol::Line(r#"{"type":"confirm"}"#),
        Symbol::Line(r#"{"type":"reject"}"#),
        Symbol::Line(r#"{"type":"abort"}"#),
        Symbol::Line(r#"{"type":"set_speed","scale":0.5}"#),
        Symbol::Line(r#"{"type":"set_speed","scale":3.0}"#),
        Symbol::Tick,
        Symbol::Settle,
    ];
    symbols.extend(MALFORMED.iter().map(|m| Symbol::Line(m)));
    symbols
}

#[derive(Debug, Default)]
pub struct ModelReport {
    pub states: usize,
    pub transitions: usize,
    /// Message sequences represented, counting every symbol at every level.
    pub sequences: u128,
    pub phases: BTreeSet<&'static str>,
    pub violations: Vec<String>,
}

fn motion_phase(p: Phase) -> bool {
    matches!(p, Phase::Relocating | Phase::Approaching | Phase::Grasping)
}

/// Depth-bounded exhaustive exploration of the session state machine.
///
/// Checked on every transition: a motion phase is entered only by an
/// accepted `confirm` from `segmented_awaiting_confirm`, grasping is never
/// reached on a path without one, and any message answered with an error
/// leaves the session exactly as it was.
pub fn explore(root: &GraspSession, backend: &dyn SegmenterBackend, symbols: &[Symbol], depth: usize) -> ModelReport {
    let mut report = ModelReport { sequences: (symbols.len() as u128).pow(depth as u32), ..ModelReport::default() };
    report.phases.insert(root.phase.name());
    let mut seen: HashMap<(u64, u64, String), Vec<(GraspSession, bool, usize)>> = HashMap::new();
    let mut stack = vec![(root.clone(), false, 0usize, Vec::<String>::new())];
    while let Some((s, confirmed, d, path)) = stack.pop() {
        report.states += 1;
        if d == depth || s.is_done() {
            continue;
        }
        for sym in symbols {
            report.transitions += 1;
            let (next, out, label) = match sym {
                Symbol::Line(l) => {
                    let (n, o) = s.handle_line(l, backend);
                    (n, o, (*l).to_owned())
                }
                Symbol::Tick => {
                    let (n, o) = s.tick(backend);
                    (n, o, "tick".to_owned())
                }
                Symbol::Settle => {
                    let mut n = s.clone();
                    let mut o = Vec::new();
                    for _ in 0..SETTLE_TICKS {
                        let (m, out) = n.tick(backend);
                        n = m;
                        o.extend(out);
                        if n.phase != s.phase {
                            break;
                        }
                    }
                    (n, o, "settle".to_owned())
                }
            };
            report.phases.insert(next.phase.name());
            let mut trail = path.clone();
            trail.push(label.clone());
            let errored = out.iter().any(|m| matches!(m, ServerMessage::Error { .. }));
            if let Symbol::Line(l) = sym {
                if MALFORMED.contains(l) && !out.iter().any(|m| matches!(m, ServerMessage::Error { code: ErrorCode::Malformed, .. })) {
                    report.violations.push(format!("malformed input not rejected: {trail:?}"));
                }
                if errored && next != s {
                    report.violations.push(format!("rejected message mutated state: {trail:?}"));
                }
            }
            let confirms = matches!(sym, Symbol::Line(l) if l.contains(r#""type":"confirm""#) && !l.contains("extra"))
                && s.phase == Phase::SegmentedAwaitingConfirm
                && !errored;
            if motion_phase(next.phase) && !motion_phase(s.phase) && !confirms {
                report.violations.push(format!("entered {} without confirm: {trail:?}", next.phase.name()));
            }
            let next_confirmed = confirmed || confirms;
            if next.phase == Phase::Grasping && !next_confirmed {
                report.violations.push(format!("grasping without confirm: {trail:?}"));
            }
            let key = (next.scene.tick, next.speed_scale.to_bits(), format!("{:?}{:?}", next.phase, next.target));
            let bucket = seen.entry(key).or_default();
            let remaining = depth - d - 1;
            if let Some(entry) = bucket.iter_mut().find(|(q, c, _)| *q == next && *c == next_confirmed) {
                if entry.2 >= remaining {
                    continue;
                }
                entry.2 = remaining;
            } else {
                bucket.push((next.clone(), next_confirmed, remaining));
            }
            stack.push((next, next_confirmed, d + 1, trail));
        }
    }
    report
}
