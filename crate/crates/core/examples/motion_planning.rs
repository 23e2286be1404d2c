//! Joint-space planning with a collision-repairing via-point.

use mograsp::kinematics::{compute_ik, orientation_from_approach, IkOptions, KinematicChain, Pose};
use mograsp::motion::{check_collision, motion_plan, Obstacle, PlanContext, Trajectory};
use mograsp::simworld::ready_configuration;
use mograsp::spatial::{Frame, Point3};
use nalgebra::Vector3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = KinematicChain::default_arm();
    let start = ready_configuration(&chain)?;
    let goal_pose = Pose::new(Point3::new(Frame::ARM_BASE, 0.2, 0.4, 0.05), orientation_from_approach(&Vector3::new(0.4, 1.0, 0.0).normalize()));
    let goal = compute_ik(&chain, &goal_pose, &start, &IkOptions::default())?.theta;
    let v_max = [0.8; 6];

    let peak = |plan: &Trajectory| {
        plan.waypoints.iter().map(|w| chain.forward_kinematics(&w.theta).map_or(f64::NAN, |p| p.position.z)).fold(f64::MIN, f64::max)
    };

    let free = PlanContext::new(chain.clone());
    let direct = motion_plan(&start, &goal, &v_max, &free)?;
    println!("free space: {} waypoints over {:.2} s, tool peaks at z = {:.3} m", direct.waypoints.len(), direct.total_duration, peak(&direct));

    // Drop a ball where the tool passes halfway along the direct plan.
    let midway = chain.forward_kinematics(&direct.sample(direct.total_duration / 2.0))?.position;
    let mut blocked = PlanContext::new(chain.clone());
    blocked.obstacles.push(Obstacle::new(midway, 0.04)?);
    println!("obstacle at ({:.3}, {:.3}, {:.3})", midway.x, midway.y, midway.z);
    match motion_plan(&start, &goal, &v_max, &blocked) {
        Ok(plan) => {
            let clear = plan.waypoints.iter().all(|w| !check_collision(&chain, &w.theta, &blocked.obstacles, blocked.link_radius).unwrap_or(true));
            println!(
                "with obstacle: {} waypoints over {:.2} s, tool peaks at z = {:.3} m, collision free: {clear}",
                plan.waypoints.len(),
                plan.total_duration,
                peak(&plan)
            );
        }
        Err(e) => println!("with obstacle: {e}"),
    }
    Ok(())
}
