//! Planning: reachability, platform relocation and collision-checked
//! joint-space trajectories.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{compute_ik, ChainError, IkError, IkMode, IkOptions, JointVector, KinematicChain, Pose};
use crate::spatial::{rot_z, Frame, Point3, RigidTransform, SpatialError};

/// Control period and waypoint spacing, seconds.
pub const DEFAULT_DT: f64 = 0.02;
/// Ratio between the planned duration and the minimum-time bound.
pub const DURATION_SCALE: f64 = 1.5;
/// Base travel speed, m/s.
pub const PLATFORM_SPEED: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MotionError {
    #[error("target lies on the base's vertical axis; no heading faces it")]
    DegenerateGeometry,
    #[error("target height {dz:.3} m relative to the arm base cannot be reached from any standoff")]
    VerticalOutOfReach { dz: f64 },
    #[error("no collision-free plan (via-point repair failed: {0})")]
    CollisionUnavoidable(String),
    #[error("configuration outside joint limits")]
    OutOfLimits,
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Frame(#[from] SpatialError),
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Mobile base pose on the floor plane (world frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Default for PlatformPose {
    fn default() -> Self {
        Self { x: 0.0, y: 0.0, heading: 0.0 }
    }
}

impl PlatformPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }

    /// Arm-base → world transform for an arm mounted `mount_height` above the floor.
    pub fn base_transform(&self, mount_height: f64) -> RigidTransform {
        RigidTransform::new(Frame::ARM_BASE, Frame::WORLD, rot_z(self.heading), Vector3::new(self.x, self.y, mount_height))
            .expect("planar rotation is orthonormal")
    }

    pub fn planar_distance(&self, other: &PlatformPose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Moves toward `goal` by at most `speed·dt` along the straight line; the
    /// heading turns proportionally so both arrive together.
    pub fn advance_toward(&self, goal: &PlatformPose, speed: f64, dt: f64) -> PlatformPose {
        let step = speed * dt;
        let dist = self.planar_distance(goal);
        let dh = normalize_angle(goal.heading - self.heading);
        if dist <= step {
            // Final stretch; a pure rotation uses 1 rad/s.
            if dist == 0.0 && dh.abs() > dt {
                return PlatformPose::new(self.x, self.y, self.heading + dh.signum() * dt);
            }
            return *goal;
        }
        let f = step / dist;
        PlatformPose::new(self.x + (goal.x - self.x) * f, self.y + (goal.y - self.y) * f, self.heading + dh * f)
    }
}

/// Spherical obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Obstacle {
    pub center: Point3,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: Point3, radius: f64) -> Result<Self, MotionError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(MotionError::InvalidObstacle(format!("radius {radius} must be positive")));
        }
        if !center.is_finite() {
            return Err(MotionError::InvalidObstacle("center must be finite".into()));
        }
        Ok(Self { center, radius })
    }

    /// The same obstacle expressed through `t` (frame-checked).
    pub fn transformed(&self, t: &RigidTransform) -> Result<Obstacle, SpatialError> {
        Ok(Obstacle { center: t.apply(&self.center)?, radius: self.radius })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waypoint {
    pub t: f64,
    pub theta: JointVector,
}

/// Time-parameterized joint-space plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    pub total_duration: f64,
}

impl Trajectory {
    pub fn stationary(theta: JointVector) -> Self {
        Self { waypoints: vec![Waypoint { t: 0.0, theta }], total_duration: 0.0 }
    }

    pub fn start(&self) -> &JointVector {
        &self.waypoints[0].theta
    }

    pub fn goal(&self) -> &JointVector {
        &self.waypoints[self.waypoints.len() - 1].theta
    }

    /// Joint values at time `t`, linear between waypoints and held past the ends.
    pub fn sample(&self, t: f64) -> JointVector {
        let w = &self.waypoints;
        if t <= w[0].t {
            return w[0].theta.clone();
        }
        let i = w.partition_point(|p| p.t <= t);
        if i >= w.len() {
            return self.goal().clone();
        }
        let (a, b) = (&w[i - 1], &w[i]);
        let s = (t - a.t) / (b.t - a.t);
        JointVector(a.theta.iter().zip(b.theta.iter()).map(|(x, y)| x + (y - x) * s).collect())
    }

    /// Checks monotone time from 0, the per-step velocity bound and joint limits.
    pub fn validate(&self, chain: &KinematicChain, v_max: &[f64]) -> Result<(), MotionError> {
        let bad = |m: String| Err(MotionError::InvalidTrajectory(m));
        let Some(first) = self.waypoints.first() else {
            return bad("no waypoints".into());
        };
        if first.t != 0.0 {
            return bad(format!("first waypoint at t={}", first.t));
        }
        if v_max.len() != chain.dof() {
            return Err(MotionError::DimensionMismatch { expected: chain.dof(), got: v_max.len() });
        }
        for (k, wp) in self.waypoints.iter().enumerate() {
            if wp.theta.len() != chain.dof() {
                return Err(MotionError::DimensionMismatch { expected: chain.dof(), got: wp.theta.len() });
            }
            if !chain.within_limits(&wp.theta) {
                return bad(format!("waypoint {k} outside joint limits"));
            }
            if k == 0 {
                continue;
            }
            let prev = &self.waypoints[k - 1];
            let dt = wp.t - prev.t;
            if dt <= 0.0 {
                return bad(format!("time not increasing at waypoint {k}"));
            }
            for (j, (a, b)) in prev.theta.iter().zip(wp.theta.iter()).enumerate() {
                if (b - a).abs() > v_max[j] * dt + 1e-9 {
                    return bad(format!("joint {j} exceeds its velocity bound between waypoints {} and {k}", k - 1));
                }
            }
        }
        if (self.waypoints[self.waypoints.len() - 1].t - self.total_duration).abs() > 1e-12 {
            return bad("total_duration disagrees with the last waypoint".into());
        }
        Ok(())
    }
}

/// Everything a plan needs beyond its endpoints. Obstacles are held in the
/// arm-base frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanContext {
    pub chain: KinematicChain,
    pub obstacles: Vec<Obstacle>,
    pub link_radius: f64,
    /// Clearance of the via-point above the highest colliding obstacle.
    pub via_lift: f64,
    pub dt: f64,
}

impl PlanContext {
    pub fn new(chain: KinematicChain) -> Self {
        Self { chain, obstacles: Vec::new(), link_radius: 0.03, via_lift: 0.15, dt: DEFAULT_DT }
    }

    /// Adds world-frame obstacles given the arm-base → world transform.
    pub fn with_world_obstacles(mut self, obstacles: &[Obstacle], base: &RigidTransform) -> Result<Self, MotionError> {
        let to_base = base.invert();
        for o in obstacles {
            self.obstacles.push(o.transformed(&to_base)?);
        }
        Ok(self)
    }
}

/// Sphere-band test plus a position-only IK solve from `current`.
pub fn is_reachable(chain: &KinematicChain, p_arm: &Point3, current: &JointVector, opts: &IkOptions) -> bool {
    if p_arm.frame != Frame::ARM_BASE || !p_arm.is_finite() {
        return false;
    }
    let r = p_arm.norm();
    let reach = chain.max_reach();
    if r < 0.1 * reach || r > 0.95 * reach {
        return false;
    }
    let opts = IkOptions { mode: IkMode::Position, ..*opts };
    let pose = Pose::new(*p_arm, nalgebra::Matrix3::identity());
    compute_ik(chain, &pose, current, &opts).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelocationParams {
    /// Horizontal goal distance from the target, as a fraction of max reach.
    pub standoff_ratio: f64,
    /// Arm-base height above the floor.
    pub mount_height: f64,
}

impl Default for RelocationParams {
    fn default() -> Self {
        Self { standoff_ratio: 0.6, mount_height: 0.0 }
    }
}

/// Goal pose on the horizontal ray from the target through the current
/// base, `standoff_ratio·max_reach` from the target, facing it.
pub fn plan_platform_move(
    current: &PlatformPose,
    target_world: &Point3,
    chain: &KinematicChain,
    params: &RelocationParams,
) -> Result<PlatformPose, MotionError> {
    if target_world.frame != Frame::WORLD {
        return Err(SpatialError::FrameMismatch { expected: Frame::WORLD, found: target_world.frame }.into());
    }
    let (dx, dy) = (current.x - target_world.x, current.y - target_world.y);
    let horizontal = dx.hypot(dy);
    if horizontal < 1e-6 {
        return Err(MotionError::DegenerateGeometry);
    }
    let reach = chain.max_reach();
    let standoff = params.standoff_ratio * reach;
    let dz = target_world.z - params.mount_height;
    if standoff.hypot(dz) > 0.95 * reach {
        return Err(MotionError::VerticalOutOfReach { dz });
    }
    let (ux, uy) = (dx / horizontal, dy / horizontal);
    Ok(PlatformPose::new(target_world.x + ux * standoff, target_world.y + uy * standoff, (-uy).atan2(-ux)))
}

/// Fallback for `DegenerateGeometry`: back straight up along the heading.
pub fn retreat_along_heading(current: &PlatformPose, distance: f64) -> PlatformPose {
    PlatformPose::new(
        current.x - distance * current.heading.cos(),
        current.y - distance * current.heading.sin(),
        current.heading,
    )
}

/// Shortest distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (a + ab * s - p).norm()
}

/// True when any link capsule touches any obstacle. Obstacles must be in the
/// arm-base frame.
pub fn check_collision(
    chain: &KinematicChain,
    theta: &JointVector,
    obstacles: &[Obstacle],
    link_radius: f64,
) -> Result<bool, MotionError> {
    if obstacles.is_empty() {
        return Ok(false);
    }
    let pts = chain.link_points(theta)?;
    for o in obstacles {
        if o.center.frame != Frame::ARM_BASE {
            return Err(SpatialError::FrameMismatch { expected: Frame::ARM_BASE, found: o.center.frame }.into());
        }
        let c = o.center.coords();
        if pts.windows(2).any(|s| point_segment_distance(&c, &s[0], &s[1]) < link_radius + o.radius) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn cubic_segment(from: &JointVector, to: &JointVector, v_max: &[f64], t0: f64, dt: f64) -> Vec<Waypoint> {
    let duration = from
        .iter()
        .zip(to.iter())
        .zip(v_max)
        .map(|((a, b), v)| (b - a).abs() / v)
        .fold(0.0, f64::max)
        * DURATION_SCALE;
    if duration == 0.0 {
        return vec![Waypoint { t: t0, theta: from.clone() }];
    }
    let at = |s: f64| {
        let h = s * s * (3.0 - 2.0 * s);
        JointVector(from.iter().zip(to.iter()).map(|(a, b)| a + (b - a) * h).collect())
    };
    let steps = (duration / dt).floor() as usize;
    let mut out: Vec<Waypoint> = (0..=steps).map(|k| Waypoint { t: t0 + k as f64 * dt, theta: at(k as f64 * dt / duration) }).collect();
    if duration - steps as f64 * dt > 1e-9 {
        out.push(Waypoint { t: t0 + duration, theta: to.clone() });
    } else {
        out.last_mut().expect("non-empty").theta = to.clone();
    }
    out
}

fn collides_anywhere(ctx: &PlanContext, wps: &[Waypoint]) -> Result<bool, MotionError> {
    for w in wps {
        if check_collision(&ctx.chain, &w.theta, &ctx.obstacles, ctx.link_radius)? {
            return Ok(true);
        }
    }
    Ok(false)
}

fn finish(waypoints: Vec<Waypoint>) -> Trajectory {
    let total_duration = waypoints.last().map_or(0.0, |w| w.t);
    Trajectory { waypoints, total_duration }
}

/// Cubic joint-space plan with zero endpoint velocities, repaired with one
/// lifted via-point when the direct plan collides.
pub fn motion_plan(
    theta_now: &JointVector,
    theta_goal: &JointVector,
    v_max: &[f64],
    ctx: &PlanContext,
) -> Result<Trajectory, MotionError> {
    let n = ctx.chain.dof();
    for v in [theta_now, theta_goal] {
        if v.len() != n {
            return Err(MotionError::DimensionMismatch { expected: n, got: v.len() });
        }
        if !ctx.chain.within_limits(v) {
            return Err(MotionError::OutOfLimits);
        }
    }
    if v_max.len() != n || v_max.iter().any(|v| !(*v > 0.0)) {
        return Err(MotionError::InvalidTrajectory("v_max must hold one positive value per joint".into()));
    }
    if check_collision(&ctx.chain, theta_goal, &ctx.obstacles, ctx.link_radius)? {
        return Err(MotionError::CollisionUnavoidable("goal configuration collides".into()));
    }
    let direct = cubic_segment(theta_now, theta_goal, v_max, 0.0, ctx.dt);
    if !collides_anywhere(ctx, &direct)? {
        return Ok(finish(direct));
    }

    let mid = JointVector(theta_now.iter().zip(theta_goal.iter()).map(|(a, b)| 0.5 * (a + b)).collect());
    let mid_tool = ctx.chain.forward_kinematics(&mid)?.position;
    let top = ctx.obstacles.iter().map(|o| o.center.z + o.radius).fold(f64::NEG_INFINITY, f64::max);
    let via_target = Point3::new(Frame::ARM_BASE, mid_tool.x, mid_tool.y, top + ctx.via_lift);
    let opts = IkOptions { mode: IkMode::Position, ..IkOptions::default() };
    let via = compute_ik(&ctx.chain, &Pose::new(via_target, nalgebra::Matrix3::identity()), &mid, &opts)
        .map_err(|e| MotionError::CollisionUnavoidable(format!("via-point unreachable: {e}")))?
        .theta;
    let mut waypoints = cubic_segment(theta_now, &via, v_max, 0.0, ctx.dt);
    let t_via = waypoints.last().expect("non-empty").t;
    waypoints.extend(cubic_segment(&via, theta_goal, v_max, t_via, ctx.dt).into_iter().skip(1));
    if collides_anywhere(ctx, &waypoints)? {
        return Err(MotionError::CollisionUnavoidable("via-point plan still collides".into()));
    }
    Ok(finish(waypoints))
}
