//! Moving the mobile base when a target lies beyond the arm's reach.

use mograsp::kinematics::{IkMode, IkOptions, KinematicChain};
use mograsp::motion::{is_reachable, plan_platform_move, PlatformPose, RelocationParams};
use mograsp::simworld::ready_configuration;
use mograsp::spatial::{Frame, Point3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = KinematicChain::default_arm();
    let theta = ready_configuration(&chain)?;
    let opts = IkOptions { mode: IkMode::Position, ..IkOptions::default() };
    let params = RelocationParams { standoff_ratio: 0.6, mount_height: 0.5 };
    let mut platform = PlatformPose::new(0.0, 0.0, 0.0);
    let target = Point3::new(Frame::WORLD, 1.3, 0.4, 0.52);

    let in_arm = |platform: &PlatformPose| platform.base_transform(params.mount_height).invert().apply(&target);
    println!("reachable from the start: {}", is_reachable(&chain, &in_arm(&platform)?, &theta, &opts));

    let goal = plan_platform_move(&platform, &target, &chain, &params)?;
    println!("drive to ({:.3}, {:.3}) heading {:.3} rad", goal.x, goal.y, goal.heading);
    let mut t = 0.0;
    while platform.planar_distance(&goal) > 1e-4 || (platform.heading - goal.heading).abs() > 1e-4 {
        platform = platform.advance_toward(&goal, 0.3, 0.02);
        t += 0.02;
    }
    println!("arrived after {t:.2} s; reachable now: {}", is_reachable(&chain, &in_arm(&platform)?, &theta, &opts));
    Ok(())
}
