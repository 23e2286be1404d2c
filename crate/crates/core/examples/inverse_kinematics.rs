//! Solving for joint angles that put the tool at a grasp pose.

use mograsp::kinematics::{compute_ik, orientation_from_approach, IkMode, IkOptions, KinematicChain, Pose};
use mograsp::spatial::{Frame, Point3};
use mograsp::simworld::ready_configuration;
use nalgebra::Vector3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = KinematicChain::default_arm();
    let seed = ready_configuration(&chain)?;
    let target = Pose::new(Point3::new(Frame::ARM_BASE, 0.45, 0.1, 0.05), orientation_from_approach(&Vector3::new(1.0, 0.2, 0.0).normalize()));

    for mode in [IkMode::Full, IkMode::Approach, IkMode::Position] {
        let opts = IkOptions { mode, ..IkOptions::default() };
        let sol = compute_ik(&chain, &target, &seed, &opts)?;
        let reached = chain.forward_kinematics(&sol.theta)?;
        let err = reached.position.distance(&target.position)?;
        println!("{mode:?}: {} iterations, {} restarts, position error {:.2e} m", sol.iterations, sol.restarts_used, err);
    }

    let far = Pose::new(Point3::new(Frame::ARM_BASE, 2.0, 0.0, 0.0), target.orientation);
    match compute_ik(&chain, &far, &seed, &IkOptions::default()) {
        Ok(_) => println!("unexpectedly reached 2 m"),
        Err(e) => println!("2 m away: {e}"),
    }
    Ok(())
}
