//! Render the eye-in-hand camera, segment from point, box and text prompts,
//! and turn the mask into a 3D target estimate.

use mograsp::codec::encode_png;
use mograsp::orchestrator::parse_scenario;
use mograsp::perception::{compute_cam_coords, segment, transform_coords, MockSegmenter, Prompt};
use mograsp::simworld::{ground_truth_centroid, render_depth};

const SCENE: &str = r#"{
    "seed": 4,
    "objects": [
        {"id": 1, "name": "cube", "shape": {"type": "box", "size": [0.04, 0.04, 0.04]}, "position": [0.55, 0.05, 0.52]},
        {"id": 2, "name": "can", "shape": {"type": "cylinder", "radius": 0.02, "height": 0.08}, "position": [0.6, -0.12, 0.5]}
    ],
    "noise": {"depth_sigma": 0.002, "dropout_prob": 0.05}
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = parse_scenario(SCENE)?;
    let scene = config.build_scene()?;
    let (frame, _) = render_depth(&scene)?;
    let backend = MockSegmenter::new(config.objects.iter().map(|o| (o.id, o.name.as_str())));
    let fk = scene.tool_pose()?;

    let prompts = [
        Prompt::Text { text: "cube".into() },
        Prompt::Point { u: 118, v: 154 },
        Prompt::Box { u0: 190, v0: 120, u1: 240, v1: 170 },
        Prompt::Text { text: "mug".into() },
    ];
    for prompt in &prompts {
        match segment(&backend, &frame, prompt) {
            Ok(mask) => {
                let p_arm = transform_coords(&compute_cam_coords(&mask, &frame)?, &scene.hand_eye, &fk)?;
                let truth = scene.world_to_arm(&ground_truth_centroid(&scene, mask.object_label)?)?;
                println!(
                    "{prompt:?}: object {} with {} px, estimate off by {:.1} mm",
                    mask.object_label,
                    mask.count(),
                    p_arm.distance(&truth)? * 1e3
                );
            }
            Err(e) => println!("{prompt:?}: {e}"),
        }
    }

    let path = std::env::temp_dir().join("mograsp_frame.png");
    std::fs::write(&path, encode_png(frame.width(), frame.height(), &frame.color)?)?;
    println!("color frame written to {}", path.display());
    Ok(())
}
