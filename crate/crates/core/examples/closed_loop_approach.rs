//! Visual servoing toward a drifting target, compared with a single
//! open-loop plan from the first estimate.

use mograsp::control::{approach_axis_toward, execute_closed_loop, execute_open_loop, ApproachLoop, ControlParams};
use mograsp::orchestrator::parse_scenario;
use mograsp::perception::{segment, MockSegmenter, Prompt, TrackerState};
use mograsp::simworld::render_depth;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ControlParams::default();
    for (i, drift) in [[0.01, 0.0, 0.0], [0.0, 0.01, 0.0], [-0.007, -0.007, 0.0]].iter().enumerate() {
        let text = format!(
            r#"{{"seed": {i}, "noise": {{"depth_sigma": 0.002, "dropout_prob": 0.05}},
                "objects": [{{"id": 1, "name": "plate", "shape": {{"type": "box", "size": [0.002, 0.04, 0.05]}},
                              "position": [0.55, 0.02, 0.52], "drift_velocity": {drift:?}}}]}}"#
        );
        let config = parse_scenario(&text)?;
        let scene = config.build_scene()?;
        let backend = MockSegmenter::new([(1, "plate")]);
        let (frame, _) = render_depth(&scene)?;
        let mask = segment(&backend, &frame, &Prompt::Text { text: "plate".into() })?;
        let tracker = TrackerState::initialize(mask, &frame, &scene.hand_eye, &scene.tool_pose()?)?;
        let target = tracker.last_p_arm;
        let approach = approach_axis_toward(&target, params.approach_tilt);
        let plan = ApproachLoop::new(&scene, &target, approach, Some(tracker.clone()), &params, i as u64)?.trajectory;

        let (_, closed) = execute_closed_loop(scene.clone(), plan, tracker, &target, approach, &backend, &params, i as u64);
        let (_, open) = execute_open_loop(scene, &target, approach, 1, &params, i as u64);
        let mm = |e: Option<f64>| e.map_or("n/a".to_owned(), |e| format!("{:.1} mm", e * 1e3));
        println!(
            "drift {drift:?} m/s: closed loop {} after {} replans ({:?}), open loop {}",
            mm(closed.final_error),
            closed.replans,
            closed.status,
            mm(open.final_error)
        );
    }
    Ok(())
}
