use nalgebra::Vector3;

use crate::control::{
    approach_axis_toward, contact_width, pregrasp_pose, ApproachLoop, ApproachStatus, ControlError, ControlParams,
    GripSim, GripStatus, GripperState, GripperTelemetry, OutcomeStatus, Phase, Telemetry,
};
use crate::kinematics::{compute_ik, IkMode, JointVector, Pose};
use crate::motion::{
    is_reachable, motion_plan, plan_platform_move, retreat_along_heading, MotionError, PlatformPose, RelocationParams, Trajectory,
};
use crate::perception::{segment, track_and_pos, DepthFrame, PerceptionError, Prompt, SegmentMask, SegmenterBackend, TrackerState};
use crate::simworld::{ground_truth_centroid, render_depth, step_world, Scene, SimError};
use crate::spatial::{Frame, Point3};

use super::config::ScenarioConfig;
use super::protocol::{ClientMessage, ErrorCode, OutcomeRecord, ServerMessage};
use super::ConfigError;

/// A segmentation waiting for the operator's verdict.
#[derive(Debug, Clone, PartialEq)]
struct Proposal {
    mask: SegmentMask,
    frame: DepthFrame,
    fk: Pose,
}

#[derive(Debug, Clone, PartialEq)]
struct GraspStage {
    object_id: u32,
    advance: Trajectory,
    advance_start: f64,
    grip: GripSim,
    approach_error: Option<f64>,
    estimate: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Stage {
    Idle,
    Proposed(Box<Proposal>),
    Relocating { goal: PlatformPose, tracker: TrackerState, target_world: Point3 },
    Approaching(Box<ApproachLoop>),
    Grasping(Box<GraspStage>),
    Finished,
}

/// One grasp attempt driven by operator messages and control ticks.
///
/// Both entry points are value-style: they return the successor session and
/// the messages to send, leaving `self` untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspSession {
    pub phase: Phase,
    pub scene: Scene,
    /// Parameters before speed scaling.
    pub params: ControlParams,
    pub speed_scale: f64,
    /// Label of the confirmed object.
    pub target: Option<u32>,
    pub relocated: bool,
    pub outcome: Option<OutcomeRecord>,
    stage: Stage,
    /// Joint command held while the arm is not following a trajectory.
    hold: JointVector,
    relocation_standoff: f64,
    ik_seed: u64,
    replans: u32,
}

impl GraspSession {
    pub fn new(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        let scene = config.build_scene()?;
        Ok(Self::from_scene(scene, config.control.clone(), config.relocation_standoff, config.seed))
    }

    pub fn from_scene(scene: Scene, params: ControlParams, relocation_standoff: f64, ik_seed: u64) -> Self {
        let hold = scene.arm_theta.clone();
        Self {
            phase: Phase::AwaitingPrompt,
            scene,
            params,
            speed_scale: 1.0,
            target: None,
            relocated: false,
            outcome: None,
            stage: Stage::Idle,
            hold,
            relocation_standoff,
            ik_seed,
            replans: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Phases that only an operator message can leave.
    pub fn is_waiting(&self) -> bool {
        matches!(self.phase, Phase::AwaitingPrompt | Phase::SegmentedAwaitingConfirm)
    }

    pub fn replans(&self) -> u32 {
        match &self.stage {
            Stage::Approaching(lp) => lp.replans,
            _ => self.replans,
        }
    }

    /// Parameters with the operator's speed scale applied.
    pub fn effective_params(&self) -> ControlParams {
        let mut p = self.params.clone();
        p.v_max.iter_mut().for_each(|v| *v *= self.speed_scale);
        p
    }

    /// Parses and handles one wire line. A malformed line leaves the session
    /// unchanged and yields a single error reply.
    pub fn handle_line(&self, line: &str, backend: &dyn SegmenterBackend) -> (GraspSession, Vec<ServerMessage>) {
        match super::protocol::parse_client_line(line) {
            Ok(msg) => self.handle_message(&msg, backend),
            Err(reply) => (self.clone(), vec![reply]),
        }
    }

    pub fn handle_message(&self, msg: &ClientMessage, backend: &dyn SegmenterBackend) -> (GraspSession, Vec<ServerMessage>) {
        let mut next = self.clone();
        let out = match next.apply(msg, backend) {
            Ok(out) => out,
            // Rejections never leak partial updates.
            Err(reply) => return (self.clone(), vec![reply]),
        };
        (next, out)
    }

    fn apply(&mut self, msg: &ClientMessage, backend: &dyn SegmenterBackend) -> Result<Vec<ServerMessage>, ServerMessage> {
        let out_of_phase = |what: &str, phase: Phase| ServerMessage::error(ErrorCode::OutOfPhase, format!("{what} not accepted in {}", phase.name()));
        match msg {
            ClientMessage::Abort {} => {
                if self.is_done() {
                    return Err(out_of_phase("abort", self.phase));
                }
                Ok(self.finish(OutcomeStatus::AbortedByUser, None))
            }
            ClientMessage::SetSpeed { scale } => {
                if self.is_done() {
                    return Err(out_of_phase("set_speed", self.phase));
                }
                if !(scale.is_finite() && *scale > 0.0 && *scale <= 1.0) {
                    return Err(ServerMessage::error(ErrorCode::InvalidArgument, format!("scale {scale} outside (0, 1]")));
                }
                self.speed_scale = *scale;
                let v_max = self.effective_params().v_max;
                if let Stage::Approaching(lp) = &mut self.stage {
                    lp.params.v_max = v_max;
                }
                Ok(Vec::new())
            }
            ClientMessage::Prompt(prompt) => {
                if self.phase != Phase::AwaitingPrompt {
                    return Err(out_of_phase("prompt", self.phase));
                }
                self.propose(prompt, backend)
            }
            ClientMessage::Reject {} => {
                if self.phase != Phase::SegmentedAwaitingConfirm {
                    return Err(out_of_phase("reject", self.phase));
                }
                self.stage = Stage::Idle;
                Ok(vec![self.set_phase(Phase::AwaitingPrompt)])
            }
            ClientMessage::Confirm {} => {
                if self.phase != Phase::SegmentedAwaitingConfirm {
                    return Err(out_of_phase("confirm", self.phase));
                }
                Ok(self.confirm(backend))
            }
        }
    }

    fn propose(&mut self, prompt: &Prompt, backend: &dyn SegmenterBackend) -> Result<Vec<ServerMessage>, ServerMessage> {
        let internal = |e: SimError| ServerMessage::error(ErrorCode::Internal, e.to_string());
        let (frame, _) = render_depth(&self.scene).map_err(internal)?;
        let fk = self.scene.tool_pose().map_err(internal)?;
        let mask = segment(backend, &frame, prompt).map_err(|e| match e {
            PerceptionError::InvalidPrompt(m) => ServerMessage::error(ErrorCode::InvalidArgument, m),
            other => ServerMessage::error(ErrorCode::SegmentationFailed, other.to_string()),
        })?;
        let label = self.scene.object(mask.object_label).ok().map(|o| o.name.clone());
        let reply = ServerMessage::Segmentation { mask_rle: mask.to_rle(), score: mask.score, label };
        self.stage = Stage::Proposed(Box::new(Proposal { mask, frame, fk }));
        Ok(vec![reply, self.set_phase(Phase::SegmentedAwaitingConfirm)])
    }

    fn confirm(&mut self, backend: &dyn SegmenterBackend) -> Vec<ServerMessage> {
        let Stage::Proposed(p) = std::mem::replace(&mut self.stage, Stage::Idle) else {
            unreachable!("confirm is only accepted with a proposal");
        };
        let tracker = match TrackerState::initialize(p.mask, &p.frame, &self.scene.hand_eye, &p.fk) {
            Ok(t) => t,
            Err(e) => {
                return vec![
                    ServerMessage::error(ErrorCode::SegmentationFailed, format!("cannot localize the selection: {e}")),
                    self.set_phase(Phase::AwaitingPrompt),
                ];
            }
        };
        self.target = Some(tracker.object_label);
        // Refresh against the current frame in case the world moved since
        // the proposal.
        let tracker = match self.refresh(&tracker, backend) {
            Ok(t) => t,
            Err(e) => return self.finish(e.status(), Some(e.to_string())),
        };
        let params = self.effective_params();
        let mut opts = params.ik_options(self.ik_seed);
        opts.mode = IkMode::Position;
        if is_reachable(&self.scene.chain, &tracker.last_p_arm, &self.scene.arm_theta, &opts) {
            return self.start_approach(tracker);
        }
        let target_world = match self.scene.arm_to_world(&tracker.last_p_arm) {
            Ok(p) => p,
            Err(e) => return self.finish(OutcomeStatus::IkFailure, Some(e.to_string())),
        };
        let reloc = RelocationParams { standoff_ratio: self.relocation_standoff, mount_height: self.scene.mount_height };
        let goal = match plan_platform_move(&self.scene.platform, &target_world, &self.scene.chain, &reloc) {
            Ok(g) => g,
            Err(MotionError::DegenerateGeometry) => {
                retreat_along_heading(&self.scene.platform, self.relocation_standoff * self.scene.chain.max_reach())
            }
            Err(e) => return self.finish(OutcomeStatus::IkFailure, Some(e.to_string())),
        };
        self.relocated = true;
        self.stage = Stage::Relocating { goal, tracker, target_world };
        vec![self.set_phase(Phase::Relocating)]
    }

    fn refresh(&self, tracker: &TrackerState, backend: &dyn SegmenterBackend) -> Result<TrackerState, ControlError> {
        let (frame, _) = render_depth(&self.scene)?;
        let fk = self.scene.tool_pose()?;
        Ok(track_and_pos(tracker, backend, &frame, &self.scene.hand_eye, &fk)?.0)
    }

    fn start_approach(&mut self, tracker: TrackerState) -> Vec<ServerMessage> {
        let params = self.effective_params();
        let target = tracker.last_p_arm;
        let axis = approach_axis_toward(&target, params.approach_tilt);
        match ApproachLoop::new(&self.scene, &target, axis, Some(tracker), &params, self.ik_seed) {
            Ok(lp) => {
                self.stage = Stage::Approaching(Box::new(lp));
                vec![self.set_phase(Phase::Approaching)]
            }
            Err(e) => self.finish(e.status(), Some(e.to_string())),
        }
    }

    fn set_phase(&mut self, phase: Phase) -> ServerMessage {
        self.phase = phase;
        ServerMessage::Phase { name: phase }
    }

    fn finish(&mut self, status: OutcomeStatus, detail: Option<String>) -> Vec<ServerMessage> {
        let final_error = match &self.stage {
            Stage::Approaching(lp) => self.target.and_then(|id| lp.final_error(&self.scene, id)),
            Stage::Grasping(g) => g.approach_error,
            _ => None,
        };
        self.replans = self.replans();
        let record = OutcomeRecord {
            status,
            final_error,
            replans: self.replans,
            relocated: self.relocated,
            ticks: self.scene.tick,
            t: self.scene.clock,
            detail,
        };
        self.outcome = Some(record.clone());
        self.stage = Stage::Finished;
        vec![ServerMessage::Outcome(record), self.set_phase(Phase::Done)]
    }

    /// Ends a session that can make no further progress, e.g. a headless
    /// script that ran out of messages.
    pub fn terminate(&self, status: OutcomeStatus, detail: impl Into<String>) -> (GraspSession, Vec<ServerMessage>) {
        let mut next = self.clone();
        if next.is_done() {
            return (next, Vec::new());
        }
        let out = next.finish(status, Some(detail.into()));
        (next, out)
    }

    /// Advances the simulation by one control period.
    pub fn tick(&self, backend: &dyn SegmenterBackend) -> (GraspSession, Vec<ServerMessage>) {
        let mut next = self.clone();
        if next.is_done() {
            return (next, Vec::new());
        }
        let mut out = match next.advance(backend) {
            Ok(out) => out,
            Err(e) => next.finish(e.status(), Some(e.to_string())),
        };
        if !next.is_done() {
            out.insert(0, ServerMessage::Telemetry(next.telemetry()));
        }
        (next, out)
    }

    fn advance(&mut self, backend: &dyn SegmenterBackend) -> Result<Vec<ServerMessage>, ControlError> {
        let dt = self.params.dt();
        match std::mem::replace(&mut self.stage, Stage::Finished) {
            stage @ (Stage::Idle | Stage::Proposed(_)) => {
                self.stage = stage;
                self.scene = step_world(&self.scene, dt, &self.hold, None)?;
                Ok(Vec::new())
            }
            Stage::Relocating { goal, tracker, target_world } => {
                if self.scene.platform != goal {
                    self.scene = step_world(&self.scene, dt, &self.hold, Some(&goal))?;
                    self.stage = Stage::Relocating { goal, tracker, target_world };
                    return Ok(Vec::new());
                }
                self.reacquire(goal, tracker, target_world, backend)
            }
            Stage::Approaching(mut lp) => {
                let (scene, status) = match lp.tick(&self.scene, backend) {
                    Ok(r) => r,
                    Err(e) => {
                        self.stage = Stage::Approaching(lp);
                        return Err(e);
                    }
                };
                self.scene = scene;
                if status == ApproachStatus::Running {
                    self.stage = Stage::Approaching(lp);
                    return Ok(Vec::new());
                }
                self.hold = self.scene.arm_theta.clone();
                self.replans = lp.replans;
                let approach_error = self.target.and_then(|id| lp.final_error(&self.scene, id));
                if self.target.is_some_and(|id| self.scene.object(id).is_ok_and(|o| !o.graspable)) {
                    self.stage = Stage::Approaching(lp);
                    return Ok(self.finish(OutcomeStatus::GripFailure, Some("target is not graspable".into())));
                }
                match self.begin_grasp(&lp, approach_error) {
                    Ok(stage) => {
                        self.stage = Stage::Grasping(Box::new(stage));
                        Ok(vec![self.set_phase(Phase::Grasping)])
                    }
                    Err(e) => {
                        self.stage = Stage::Grasping(Box::new(GraspStage {
                            object_id: self.target.unwrap_or(0),
                            advance: Trajectory::stationary(self.hold.clone()),
                            advance_start: self.scene.clock,
                            grip: GripSim::new(&self.params),
                            approach_error,
                            estimate: lp.estimate().coords(),
                        }));
                        Err(e)
                    }
                }
            }
            Stage::Grasping(mut g) => {
                let params = self.effective_params();
                let elapsed = self.scene.clock - g.advance_start;
                if elapsed < g.advance.total_duration - 1e-9 {
                    let cmd = g.advance.sample(elapsed + dt);
                    self.scene = step_world(&self.scene, dt, &cmd, None)?;
                    self.hold = g.advance.goal().clone();
                    self.stage = Stage::Grasping(g);
                    return Ok(Vec::new());
                }
                let width = contact_width(&self.scene, g.object_id, &params)?;
                let status = g.grip.step(width, &params);
                if g.grip.engaged {
                    self.scene.held = Some(g.object_id);
                }
                self.scene = step_world(&self.scene, dt, &self.hold, None)?;
                let in_cylinder = contact_width(&self.scene, g.object_id, &params)?.is_some();
                self.stage = Stage::Grasping(g);
                Ok(match status {
                    GripStatus::Settled if in_cylinder => self.finish(OutcomeStatus::Success, None),
                    GripStatus::Settled => self.finish(OutcomeStatus::GripFailure, Some("object left the grasp cylinder".into())),
                    GripStatus::Failed { reason } => self.finish(OutcomeStatus::GripFailure, Some(reason)),
                    GripStatus::Closing | GripStatus::Regulating => Vec::new(),
                })
            }
            Stage::Finished => Ok(Vec::new()),
        }
    }

    /// After the platform stops: find the target again from the new
    /// vantage, then approach it or give up.
    fn reacquire(
        &mut self,
        goal: PlatformPose,
        mut tracker: TrackerState,
        target_world: Point3,
        backend: &dyn SegmenterBackend,
    ) -> Result<Vec<ServerMessage>, ControlError> {
        // Point the association at where the old estimate now projects.
        let cam = self.scene.camera_to_world()?.invert();
        let p_cam = cam.apply(&target_world).map_err(PerceptionError::from)?;
        if let Some((u, v)) = self.scene.intrinsics.project(&p_cam).map_err(PerceptionError::from)? {
            tracker.last_centroid_px = (u, v);
        }
        tracker.last_p_arm = self.scene.world_to_arm(&target_world)?;
        let refreshed = self.refresh(&tracker, backend)?;
        self.scene = step_world(&self.scene, self.params.dt(), &self.hold, None)?;
        if !refreshed.is_fresh() {
            self.stage = Stage::Relocating { goal, tracker: refreshed, target_world };
            return Ok(Vec::new());
        }
        let params = self.effective_params();
        let mut opts = params.ik_options(self.ik_seed);
        opts.mode = IkMode::Position;
        if !is_reachable(&self.scene.chain, &refreshed.last_p_arm, &self.scene.arm_theta, &opts) {
            return Ok(self.finish(OutcomeStatus::IkFailure, Some("target out of reach after relocation".into())));
        }
        Ok(self.start_approach(refreshed))
    }

    /// Plans the straight-in advance from the pre-grasp pose, aimed where
    /// the target is predicted to be when the advance ends.
    fn begin_grasp(&self, lp: &ApproachLoop, approach_error: Option<f64>) -> Result<GraspStage, ControlError> {
        let object_id = self.target.unwrap_or(0);
        let params = self.effective_params();
        let now = self.scene.clock;
        let mut horizon = 0.0;
        let mut plan = None;
        for _ in 0..2 {
            let target = lp.predictor.predict(now + horizon).unwrap_or(lp.planned_target);
            let pose = pregrasp_pose(&target, &lp.approach, 0.0);
            let goal = compute_ik(&self.scene.chain, &pose, &self.scene.arm_theta, &params.ik_options(self.ik_seed))?.theta;
            let traj = motion_plan(&self.scene.arm_theta, &goal, &params.v_max, &lp.ctx)?;
            horizon = traj.total_duration;
            plan = Some((traj, target));
        }
        let (advance, estimate) = plan.expect("two iterations ran");
        Ok(GraspStage { object_id, advance, advance_start: now, grip: GripSim::new(&params), approach_error, estimate })
    }

    /// Telemetry record for the current state.
    pub fn telemetry(&self) -> Telemetry {
        let estimate = match &self.stage {
            Stage::Approaching(lp) => Some(lp.estimate().coords()),
            Stage::Relocating { target_world, .. } => self.scene.world_to_arm(target_world).ok().map(|p| p.coords()),
            Stage::Grasping(g) => Some(g.estimate),
            _ => None,
        };
        let truth = self
            .target
            .and_then(|id| ground_truth_centroid(&self.scene, id).ok())
            .and_then(|p| self.scene.world_to_arm(&p).ok())
            .map(|p| [p.x, p.y, p.z]);
        let gripper = match &self.stage {
            Stage::Grasping(g) => g.grip.state,
            _ => GripperState::open(&self.params.gripper),
        };
        Telemetry {
            t: self.scene.clock,
            phase: self.phase,
            theta: self.scene.arm_theta.clone(),
            p_arm_est: estimate.map(|v| [v.x, v.y, v.z]),
            p_arm_gt: truth,
            gripper: GripperTelemetry { opening: gripper.opening, force: gripper.force_reading },
            replans: self.replans(),
        }
    }

    /// Color image of the current camera view, for streaming.
    pub fn frame(&self) -> Result<DepthFrame, SimError> {
        Ok(render_depth(&self.scene)?.0)
    }

    /// Latest target estimate in the arm-base frame, if any.
    pub fn estimate(&self) -> Option<Point3> {
        self.telemetry().p_arm_est.map(|p| Point3::new(Frame::ARM_BASE, p[0], p[1], p[2]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::config::parse_scenario;
    use crate::perception::MockSegmenter;

    fn session() -> (GraspSession, MockSegmenter) {
        let c = parse_scenario(
            r#"{"seed": 5, "objects": [{"id": 1, "name": "plate", "shape": {"type": "box", "size": [0.002, 0.04, 0.05]}, "position": [0.5, 0.0, 0.52]}]}"#,
        )
        .unwrap();
        (GraspSession::new(&c).unwrap(), MockSegmenter::new([(1, "plate")]))
    }

    #[test]
    fn confirm_before_segmentation_is_out_of_phase() {
        let (s, seg) = session();
        let (next, out) = s.handle_message(&ClientMessage::confirm(), &seg);
        assert_eq!(next, s);
        assert!(matches!(out.as_slice(), [ServerMessage::Error { code: ErrorCode::OutOfPhase, .. }]));
    }

    #[test]
    fn prompt_yields_overlay_then_confirm_starts_approach() {
        let (s, seg) = session();
        let (s, out) = s.handle_message(&ClientMessage::Prompt(Prompt::Text { text: "plate".into() }), &seg);
        assert!(matches!(&out[0], ServerMessage::Segmentation { label: Some(l), .. } if l == "plate"));
        assert_eq!(s.phase, Phase::SegmentedAwaitingConfirm);
        let (s, out) = s.handle_message(&ClientMessage::confirm(), &seg);
        assert_eq!(out, vec![ServerMessage::Phase { name: Phase::Approaching }]);
        assert!(!s.relocated);
    }

    #[test]
    fn reject_returns_to_prompt() {
        let (s, seg) = session();
        let (s, _) = s.handle_message(&ClientMessage::Prompt(Prompt::Text { text: "plate".into() }), &seg);
        let (s, out) = s.handle_message(&ClientMessage::reject(), &seg);
        assert_eq!(s.phase, Phase::AwaitingPrompt);
        assert_eq!(out, vec![ServerMessage::Phase { name: Phase::AwaitingPrompt }]);
    }

    #[test]
    fn failed_segmentation_leaves_session_unchanged() {
        let (s, seg) = session();
        let (next, out) = s.handle_message(&ClientMessage::Prompt(Prompt::Text { text: "mug".into() }), &seg);
        assert_eq!(next, s);
        assert!(matches!(out.as_slice(), [ServerMessage::Error { code: ErrorCode::SegmentationFailed, .. }]));
    }

    #[test]
    fn abort_during_approach_ends_within_one_tick() {
        let (s, seg) = session();
        let (s, _) = s.handle_message(&ClientMessage::Prompt(Prompt::Text { text: "plate".into() }), &seg);
        let (mut s, _) = s.handle_message(&ClientMessage::confirm(), &seg);
        for _ in 0..5 {
            s = s.tick(&seg).0;
        }
        let tick = s.scene.tick;
        let (s, out) = s.handle_message(&ClientMessage::abort(), &seg);
        assert!(s.is_done());
        let o = s.outcome.as_ref().unwrap();
        assert_eq!(o.status, OutcomeStatus::AbortedByUser);
        assert_eq!(o.ticks, tick);
        assert!(matches!(&out[0], ServerMessage::Outcome(_)));
    }

    #[test]
    fn invalid_speed_is_rejected() {
        let (s, seg) = session();
        let (next, out) = s.handle_message(&ClientMessage::SetSpeed { scale: 0.0 }, &seg);
        assert_eq!(next, s);
        assert!(matches!(out.as_slice(), [ServerMessage::Error { code: ErrorCode::InvalidArgument, .. }]));
        let (next, _) = s.handle_message(&ClientMessage::SetSpeed { scale: 0.5 }, &seg);
        assert_eq!(next.effective_params().v_max[0], 0.4);
    }

    #[test]
    fn static_target_is_grasped() {
        let (s, seg) = session();
        let (s, _) = s.handle_message(&ClientMessage::Prompt(Prompt::Text { text: "plate".into() }), &seg);
        let (mut s, _) = s.handle_message(&ClientMessage::confirm(), &seg);
        let mut phases = vec![s.phase];
        while !s.is_done() && s.scene.clock < 20.0 {
            s = s.tick(&seg).0;
            if phases.last() != Some(&s.phase) {
                phases.push(s.phase);
            }
        }
        let o = s.outcome.clone().unwrap();
        assert_eq!(o.status, OutcomeStatus::Success, "{o:?}");
        assert_eq!(phases, vec![Phase::Approaching, Phase::Grasping, Phase::Done]);
        assert_eq!(o.replans, 0);
        assert!(o.final_error.unwrap() < 0.005);
        assert_eq!(s.scene.held, Some(1));
    }
}
