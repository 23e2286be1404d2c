use std::collections::VecDeque;

use nalgebra::Vector3;

use crate::kinematics::{compute_ik, orientation_from_approach, JointVector, Pose};
use crate::motion::{motion_plan, PlanContext, Trajectory};
use crate::perception::{track_and_pos, DepthFrame, SegmenterBackend, TrackerState};
use crate::simworld::{ground_truth_centroid, render_depth, step_world, Scene};
use crate::spatial::{Frame, Point3};

use super::{adjust_arm_motion, ControlError, ControlParams, GraspOutcome, OutcomeStatus, Phase, TimelineEntry};

/// Tool pose `standoff` short of `target` along `approach`, tool z on the axis.
pub fn pregrasp_pose(target: &Vector3<f64>, approach: &Vector3<f64>, standoff: f64) -> Pose {
    Pose::new(Point3::from_vector(Frame::ARM_BASE, target - approach * standoff), orientation_from_approach(approach))
}

/// Estimates needed before a fitted velocity is trusted, capped by the window.
pub const MIN_VELOCITY_SAMPLES: usize = 25;

/// Constant-velocity fit over the most recent target estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPredictor {
    samples: VecDeque<(f64, Vector3<f64>)>,
    window: usize,
    deadband: f64,
}

impl TargetPredictor {
    pub fn new(window: usize, deadband: f64) -> Self {
        Self { samples: VecDeque::with_capacity(window + 1), window: window.max(2), deadband }
    }

    pub fn push(&mut self, t: f64, p: Vector3<f64>) {
        self.samples.push_back((t, p));
        while self.samples.len() > self.window {
            self.samples.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn latest(&self) -> Option<Vector3<f64>> {
        self.samples.back().map(|s| s.1)
    }

    /// Least-squares `(mean time, mean position, velocity)`.
    fn fit(&self) -> Option<(f64, Vector3<f64>, Vector3<f64>)> {
        let n = self.samples.len();
        if n == 0 {
            return None;
        }
        let tm = self.samples.iter().map(|s| s.0).sum::<f64>() / n as f64;
        let pm = self.samples.iter().map(|s| s.1).sum::<Vector3<f64>>() / n as f64;
        let stt: f64 = self.samples.iter().map(|s| (s.0 - tm).powi(2)).sum();
        let v = if n >= MIN_VELOCITY_SAMPLES.min(self.window) && stt > 1e-12 {
            self.samples.iter().map(|s| (s.1 - pm) * (s.0 - tm)).sum::<Vector3<f64>>() / stt
        } else {
            Vector3::zeros()
        };
        Some((tm, pm, v))
    }

    /// Fitted velocity; zero inside the deadband.
    pub fn velocity(&self) -> Vector3<f64> {
        match self.fit() {
            Some((_, _, v)) if v.norm() >= self.deadband => v,
            _ => Vector3::zeros(),
        }
    }

    /// Expected target position at time `t`.
    pub fn predict(&self, t: f64) -> Option<Vector3<f64>> {
        let (tm, pm, v) = self.fit()?;
        if v.norm() < self.deadband {
            return Some(pm);
        }
        Some(pm + v * (t - tm))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproachStatus {
    Running,
    AtPregrasp,
}

/// Tick-driven approach toward the pre-grasp pose. With a tracker, every
/// tick re-localizes the target and replans when the predicted target at
/// trajectory end strays past the replan threshold; without one, the first
/// plan is executed blind.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproachLoop {
    pub ctx: PlanContext,
    pub params: ControlParams,
    /// Fixed for the whole approach, arm-base frame.
    pub approach: Vector3<f64>,
    pub trajectory: Trajectory,
    /// Simulation time at which `trajectory` started.
    pub traj_start: f64,
    pub goal_theta: JointVector,
    /// Target position the current trajectory was planned for.
    pub planned_target: Vector3<f64>,
    pub tracker: Option<TrackerState>,
    pub predictor: TargetPredictor,
    pending: VecDeque<(DepthFrame, Pose)>,
    pub replans: u32,
    pub started: f64,
    ik_seed: u64,
}

impl ApproachLoop {
    /// Plans the first trajectory toward the pre-grasp pose for `target`.
    pub fn new(
        scene: &Scene,
        target: &Point3,
        approach: Vector3<f64>,
        tracker: Option<TrackerState>,
        params: &ControlParams,
        ik_seed: u64,
    ) -> Result<Self, ControlError> {
        let ctx = plan_context(scene, params)?;
        let pose = pregrasp_pose(&target.coords(), &approach, params.standoff);
        let goal = compute_ik(&scene.chain, &pose, &scene.arm_theta, &params.ik_options(ik_seed))?.theta;
        let trajectory = motion_plan(&scene.arm_theta, &goal, &params.v_max, &ctx)?;
        Ok(Self::with_trajectory(scene, trajectory, target, approach, tracker, params, ik_seed, ctx))
    }

    #[allow(clippy::too_many_arguments)]
    fn with_trajectory(
        scene: &Scene,
        trajectory: Trajectory,
        target: &Point3,
        approach: Vector3<f64>,
        tracker: Option<TrackerState>,
        params: &ControlParams,
        ik_seed: u64,
        ctx: PlanContext,
    ) -> Self {
        let mut predictor = TargetPredictor::new(params.velocity_window, params.velocity_deadband);
        predictor.push(scene.clock, target.coords());
        Self {
            ctx,
            params: params.clone(),
            approach,
            goal_theta: trajectory.goal().clone(),
            trajectory,
            traj_start: scene.clock,
            planned_target: target.coords(),
            tracker,
            predictor,
            pending: VecDeque::new(),
            replans: 0,
            started: scene.clock,
            ik_seed,
        }
    }

    pub fn estimate(&self) -> Point3 {
        Point3::from_vector(Frame::ARM_BASE, self.predictor.latest().unwrap_or(self.planned_target))
    }

    pub fn trajectory_end(&self) -> f64 {
        self.traj_start + self.trajectory.total_duration
    }

    pub fn finished(&self, scene: &Scene) -> bool {
        scene.clock >= self.trajectory_end() - 1e-9 || scene.clock - self.started >= self.params.max_approach_time
    }

    fn replan(&mut self, scene: &Scene) -> Result<(), ControlError> {
        let now = scene.clock;
        let mut horizon = (self.trajectory_end() - now).max(0.0);
        let mut best = None;
        for _ in 0..2 {
            let target = self.predictor.predict(now + horizon).unwrap_or(self.planned_target);
            let pose = pregrasp_pose(&target, &self.approach, self.params.standoff);
            let goal = compute_ik(&self.ctx.chain, &pose, &self.goal_theta, &self.params.ik_options(self.ik_seed))?.theta;
            let traj = adjust_arm_motion(&scene.arm_theta, &goal, &self.params.v_max, &self.ctx)?;
            horizon = traj.total_duration;
            best = Some((target, goal, traj));
        }
        let (target, goal, traj) = best.expect("two iterations ran");
        traj.validate(&self.ctx.chain, &self.params.v_max)?;
        self.planned_target = target;
        self.goal_theta = goal;
        self.trajectory = traj;
        self.traj_start = now;
        self.replans += 1;
        Ok(())
    }

    /// One control tick: perceive (closed loop only), maybe replan, then
    /// command the next setpoint and step the world.
    pub fn tick(&mut self, scene: &Scene, backend: &dyn SegmenterBackend) -> Result<(Scene, ApproachStatus), ControlError> {
        if let Some(tracker) = &self.tracker {
            let (frame, _) = render_depth(scene)?;
            self.pending.push_back((frame, scene.tool_pose()?));
            if self.pending.len() > self.params.latency_ticks {
                let (frame, fk) = self.pending.pop_front().expect("non-empty");
                let (next, p) = track_and_pos(tracker, backend, &frame, &scene.hand_eye, &fk)?;
                let fresh = next.is_fresh();
                self.tracker = Some(next);
                if fresh {
                    self.predictor.push(frame.timestamp, p.coords());
                    let predicted = self.predictor.predict(self.trajectory_end()).unwrap_or(self.planned_target);
                    if (predicted - self.planned_target).norm() > self.params.replan_threshold {
                        self.replan(scene)?;
                    }
                }
            }
        }
        let dt = self.params.dt();
        let cmd = self.trajectory.sample(scene.clock + dt - self.traj_start);
        let next = step_world(scene, dt, &cmd, None)?;
        let status = if self.finished(&next) { ApproachStatus::AtPregrasp } else { ApproachStatus::Running };
        Ok((next, status))
    }

    /// Tool distance from the pre-grasp point of the object's true centroid.
    pub fn final_error(&self, scene: &Scene, object_id: u32) -> Option<f64> {
        let gt = scene.world_to_arm(&ground_truth_centroid(scene, object_id).ok()?).ok()?;
        let goal = gt.coords() - self.approach * self.params.standoff;
        Some((scene.tool_pose().ok()?.position.coords() - goal).norm())
    }
}

pub(crate) fn plan_context(scene: &Scene, params: &ControlParams) -> Result<PlanContext, ControlError> {
    let mut ctx = PlanContext::new(scene.chain.clone()).with_world_obstacles(&scene.obstacles, &scene.base_transform())?;
    ctx.link_radius = params.link_radius;
    ctx.via_lift = params.via_lift;
    ctx.dt = params.dt();
    Ok(ctx)
}

fn run_loop(
    mut scene: Scene,
    mut lp: ApproachLoop,
    backend: &dyn SegmenterBackend,
    object_id: u32,
) -> (Scene, GraspOutcome) {
    let mut timeline = vec![TimelineEntry { t: scene.clock, phase: Phase::Approaching, theta: scene.arm_theta.clone(), p: lp.estimate() }];
    loop {
        match lp.tick(&scene, backend) {
            Ok((next, status)) => {
                scene = next;
                timeline.push(TimelineEntry { t: scene.clock, phase: Phase::Approaching, theta: scene.arm_theta.clone(), p: lp.estimate() });
                if status == ApproachStatus::AtPregrasp {
                    let outcome = GraspOutcome { status: OutcomeStatus::Success, final_error: lp.final_error(&scene, object_id), replans: lp.replans, timeline };
                    return (scene, outcome);
                }
            }
            Err(e) => {
                let outcome = GraspOutcome { status: e.status(), final_error: lp.final_error(&scene, object_id), replans: lp.replans, timeline };
                return (scene, outcome);
            }
        }
    }
}

/// Runs `trajectory` under visual feedback until the arm rests at the
/// pre-grasp pose. Failures come back as outcome statuses.
#[allow(clippy::too_many_arguments)]
pub fn execute_closed_loop(
    scene: Scene,
    trajectory: Trajectory,
    tracker: TrackerState,
    target: &Point3,
    approach: Vector3<f64>,
    backend: &dyn SegmenterBackend,
    params: &ControlParams,
    ik_seed: u64,
) -> (Scene, GraspOutcome) {
    let object_id = tracker.object_label;
    let ctx = match plan_context(&scene, params) {
        Ok(c) => c,
        Err(e) => return (scene, GraspOutcome { status: e.status(), final_error: None, replans: 0, timeline: Vec::new() }),
    };
    let lp = ApproachLoop::with_trajectory(&scene, trajectory, target, approach, Some(tracker), params, ik_seed, ctx);
    run_loop(scene, lp, backend, object_id)
}

/// The same approach without tracking: one plan from the first estimate.
pub fn execute_open_loop(
    scene: Scene,
    target: &Point3,
    approach: Vector3<f64>,
    object_id: u32,
    params: &ControlParams,
    ik_seed: u64,
) -> (Scene, GraspOutcome) {
    match ApproachLoop::new(&scene, target, approach, None, params, ik_seed) {
        Ok(lp) => run_loop(scene, lp, &NoBackend, object_id),
        Err(e) => (scene, GraspOutcome { status: e.status(), final_error: None, replans: 0, timeline: Vec::new() }),
    }
}

struct NoBackend;

impl SegmenterBackend for NoBackend {
    fn segment(&self, _: &DepthFrame, _: &crate::perception::Prompt) -> Result<crate::perception::SegmentMask, crate::perception::PerceptionError> {
        Err(crate::perception::PerceptionError::BackendUnavailable("open loop".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictor_recovers_constant_velocity() {
        let mut p = TargetPredictor::new(20, 0.0);
        for k in 0..30 {
            let t = k as f64 * 0.02;
            p.push(t, Vector3::new(0.5 + 0.01 * t, 0.1, 0.0));
        }
        assert!((p.velocity() - Vector3::new(0.01, 0.0, 0.0)).norm() < 1e-12);
        let at = p.predict(2.0).unwrap();
        assert!((at - Vector3::new(0.52, 0.1, 0.0)).norm() < 1e-12);
        assert_eq!(p.len(), 20);
    }

    #[test]
    fn predictor_deadband_holds_still() {
        let mut p = TargetPredictor::new(10, 0.002);
        for k in 0..10 {
            p.push(k as f64 * 0.02, Vector3::new(0.5 + 1e-5 * k as f64, 0.0, 0.0));
        }
        assert_eq!(p.velocity(), Vector3::zeros());
    }

    #[test]
    fn pregrasp_backs_off_along_axis() {
        let pose = pregrasp_pose(&Vector3::new(0.5, 0.0, 0.0), &Vector3::x(), 0.05);
        assert!((pose.position.x - 0.45).abs() < 1e-15);
        assert!((pose.approach_axis() - Vector3::x()).norm() < 1e-15);
    }
}
