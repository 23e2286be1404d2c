//! Pinhole projection and the camera → tool → arm → world frame chain.

use mograsp::orchestrator::parse_scenario;
use mograsp::spatial::{CameraIntrinsics, Frame, Point3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k = CameraIntrinsics::default();
    let p = k.back_project(200.0, 90.0, 0.75);
    let (u, v) = k.project(&p)?.expect("point is in front of the camera");
    println!("pixel (200, 90) at 0.75 m -> camera ({:.4}, {:.4}, {:.4}) -> pixel ({u:.6}, {v:.6})", p.x, p.y, p.z);

    let scene = parse_scenario(r#"{"seed": 1}"#)?.build_scene()?;
    let cam_to_world = scene.camera_to_world()?;
    let world = cam_to_world.apply(&p)?;
    let arm = scene.world_to_arm(&world)?;
    println!("same point in world ({:.4}, {:.4}, {:.4}), arm base ({:.4}, {:.4}, {:.4})", world.x, world.y, world.z, arm.x, arm.y, arm.z);

    let wrong = Point3::new(Frame::WORLD, 0.0, 0.0, 1.0);
    if let Err(e) = k.project(&wrong) {
        println!("projecting a world point directly: {e}");
    }
    Ok(())
}
