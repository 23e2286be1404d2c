//! Forward kinematics and the geometric Jacobian of the default arm.

use mograsp::kinematics::{JointVector, KinematicChain};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chain = KinematicChain::default_arm();
    println!("{} joints, reach {:.3} m", chain.dof(), chain.max_reach());

    for theta in [chain.mid_configuration(), JointVector(vec![0.3, 1.0, -2.0, 0.4, -0.2, 0.5])] {
        let pose = chain.forward_kinematics(&theta)?;
        let p = &pose.position;
        let a = pose.approach_axis();
        println!("theta {:?}", theta.0);
        println!("  tool at ({:.4}, {:.4}, {:.4}) approach ({:.3}, {:.3}, {:.3})", p.x, p.y, p.z, a.x, a.y, a.z);
        let j = chain.jacobian(&theta)?;
        println!("  jacobian {}x{}, smallest singular value {:.4}", j.nrows(), j.ncols(), j.clone().svd(false, false).singular_values.min());
    }
    Ok(())
}
