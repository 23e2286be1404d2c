use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::control::ControlParams;
use crate::kinematics::{DhLink, JointVector, KinematicChain};
use crate::motion::{Obstacle, PlatformPose};
use crate::perception::{ExternalSegmenter, MockSegmenter, SegmenterBackend};
use crate::simworld::{ready_configuration, NoiseModel, Scene, Shape, SimObject};
use crate::spatial::{CameraIntrinsics, Frame, Point3, RigidTransform};

use super::protocol::ClientMessage;
use super::ConfigError;

/// JSON Schema for scenario files, shipped with the crate.
pub const SCENARIO_SCHEMA: &str = include_str!("../../schema/scenario.schema.json");

/// One scenario file: world, arm, camera, control parameters and an
/// optional prompt script for headless runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Drives every random stream: noise, IK restarts, mock jitter.
    pub seed: u64,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub chain: ChainSpec,
    #[serde(default)]
    pub hand_eye: HandEyeSpec,
    #[serde(default)]
    pub intrinsics: CameraIntrinsics,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub platform: PlatformPose,
    #[serde(default = "default_mount_height")]
    pub mount_height: f64,
    /// Initial joint angles; the ready pose when absent.
    #[serde(default)]
    pub arm_start: Option<JointVector>,
    #[serde(default)]
    pub script: Option<PromptScript>,
    #[serde(default)]
    pub control: ControlParams,
    /// Relocation goal distance from the target as a fraction of max reach.
    #[serde(default = "default_standoff_ratio")]
    pub relocation_standoff: f64,
    #[serde(default)]
    pub segmenter: SegmenterSpec,
    /// Simulated-time budget for one session, seconds.
    #[serde(default = "default_max_time")]
    pub max_time: f64,
}

fn default_mount_height() -> f64 {
    0.5
}

fn default_standoff_ratio() -> f64 {
    0.6
}

fn default_max_time() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub links: Vec<DhLink>,
    /// Tool point distance along the last link's x axis.
    pub tool_length: f64,
}

impl Default for ChainSpec {
    fn default() -> Self {
        let arm = KinematicChain::default_arm();
        Self { links: arm.links, tool_length: arm.tool.translation.x }
    }
}

impl ChainSpec {
    pub fn build(&self) -> Result<KinematicChain, ConfigError> {
        if !(self.tool_length.is_finite() && self.tool_length >= 0.0) {
            return Err(ConfigError::schema("chain.tool_length", "must be finite and ≥ 0"));
        }
        KinematicChain::new(self.links.clone(), KinematicChain::tool_along_x(self.tool_length))
            .map_err(|e| ConfigError::schema("chain.links", e.to_string()))
    }
}

/// Camera → tool mount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandEyeSpec {
    pub translation: [f64; 3],
    /// Roll, pitch, yaw in radians.
    #[serde(default)]
    pub rpy: [f64; 3],
}

impl Default for HandEyeSpec {
    fn default() -> Self {
        Self { translation: [0.0, -0.03, -0.08], rpy: [0.0; 3] }
    }
}

impl HandEyeSpec {
    pub fn build(&self) -> Result<RigidTransform, ConfigError> {
        RigidTransform::from_rpy(Frame::CAMERA, Frame::TOOL, self.rpy, Vector3::from(self.translation))
            .map_err(|e| ConfigError::schema("hand_eye", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: u32,
    pub name: String,
    pub shape: Shape,
    /// World frame, meters.
    pub position: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
    /// m/s, world frame.
    #[serde(default)]
    pub drift_velocity: [f64; 3],
    #[serde(default = "yes")]
    pub graspable: bool,
    #[serde(default)]
    pub color: Option<[u8; 3]>,
}

fn yes() -> bool {
    true
}

impl ObjectSpec {
    pub fn build(&self) -> Result<SimObject, crate::simworld::SimError> {
        let rot = nalgebra::Rotation3::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]).into_inner();
        let mut obj = SimObject::new(self.id, self.name.clone(), self.shape, Vector3::from(self.position))
            .with_rotation(rot)?
            .with_drift(Vector3::from(self.drift_velocity));
        obj.graspable = self.graspable;
        if let Some(c) = self.color {
            obj.color = c;
        }
        Ok(obj)
    }
}

/// Spherical obstacle in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptScript {
    /// Confirm every successful segmentation without waiting for a message.
    #[serde(default)]
    pub auto_confirm: bool,
    pub steps: Vec<ScriptStep>,
}

/// A client message delivered before the given control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    #[serde(default)]
    pub tick: u64,
    pub message: ClientMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmenterSpec {
    /// Reads the simulator's label image.
    Mock {
        #[serde(default)]
        centroid_noise_px: f64,
    },
    /// Newline-delimited JSON over TCP.
    External {
        addr: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    500
}

impl Default for SegmenterSpec {
    fn default() -> Self {
        SegmenterSpec::Mock { centroid_noise_px: 0.0 }
    }
}

impl ScenarioConfig {
    /// Checks everything serde cannot: ranges, uniqueness, chain sanity.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let chain = self.chain.build()?;
        self.hand_eye.build()?;
        self.intrinsics.validate().map_err(|e| ConfigError::schema("intrinsics", e.to_string()))?;
        self.noise.validate().map_err(|e| ConfigError::schema("noise", e.to_string()))?;
        self.control.validate(chain.dof()).map_err(|e| ConfigError::schema("control", e))?;
        let mut seen = std::collections::BTreeSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.id == 0 {
                return Err(ConfigError::schema(format!("objects[{i}].id"), "0 is reserved for background"));
            }
            if !seen.insert(o.id) {
                return Err(ConfigError::schema(format!("objects[{i}].id"), format!("duplicate id {}", o.id)));
            }
            o.shape.validate().map_err(|e| ConfigError::schema(format!("objects[{i}].shape"), e.to_string()))?;
            let finite = o.position.iter().chain(&o.rpy).chain(&o.drift_velocity).all(|v| v.is_finite());
            if !finite {
                return Err(ConfigError::schema(format!("objects[{i}]"), "non-finite pose or drift"));
            }
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0 && o.radius.is_finite()) || o.center.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::schema(format!("obstacles[{i}]"), "radius must be positive, center finite"));
            }
        }
        if let Some(theta) = &self.arm_start {
            if theta.len() != chain.dof() {
                return Err(ConfigError::schema("arm_start", format!("needs {} joint angles", chain.dof())));
            }
            if let Some(j) = chain.links.iter().zip(theta.iter()).position(|(l, q)| !(l.joint_min..=l.joint_max).contains(q)) {
                return Err(ConfigError::schema(format!("arm_start[{j}]"), "outside joint limits"));
            }
        }
        let p = &self.platform;
        if !(p.x.is_finite() && p.y.is_finite() && p.heading.is_finite()) || !self.mount_height.is_finite() {
            return Err(ConfigError::schema("platform", "non-finite pose"));
        }
        if !(self.relocation_standoff > 0.0 && self.relocation_standoff < 0.95) {
            return Err(ConfigError::schema("relocation_standoff", "must lie in (0, 0.95)"));
        }
        if !(self.max_time > 0.0 && self.max_time.is_finite()) {
            return Err(ConfigError::schema("max_time", "must be positive"));
        }
        match &self.segmenter {
            SegmenterSpec::Mock { centroid_noise_px } if !(*centroid_noise_px >= 0.0 && centroid_noise_px.is_finite()) => {
                return Err(ConfigError::schema("segmenter.centroid_noise_px", "must be ≥ 0"));
            }
            SegmenterSpec::External { addr, .. } if addr.parse::<SocketAddr>().is_err() => {
                return Err(ConfigError::schema("segmenter.addr", format!("`{addr}` is not a socket address")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Fills every optional field with the value a run will use, so the
    /// session log records the complete effective configuration.
    pub fn resolved(mut self) -> Result<Self, ConfigError> {
        self.validate()?;
        if self.arm_start.is_none() {
            let chain = self.chain.build()?;
            let ready = ready_configuration(&chain).map_err(|e| ConfigError::schema("arm_start", format!("no ready pose: {e}")))?;
            self.arm_start = Some(ready);
        }
        Ok(self)
    }

    /// Initial simulator state.
    pub fn build_scene(&self) -> Result<Scene, ConfigError> {
        let chain = self.chain.build()?;
        let mut scene = Scene::new(chain.clone(), self.hand_eye.build()?, self.intrinsics, self.seed);
        scene.noise = self.noise;
        scene.platform = PlatformPose::new(self.platform.x, self.platform.y, self.platform.heading);
        scene.mount_height = self.mount_height;
        scene.arm_theta = match &self.arm_start {
            Some(t) => t.clone(),
            None => ready_configuration(&chain).map_err(|e| ConfigError::schema("arm_start", format!("no ready pose: {e}")))?,
        };
        for (i, o) in self.objects.iter().enumerate() {
            let obj = o.build().map_err(|e| ConfigError::schema(format!("objects[{i}]"), e.to_string()))?;
            scene.add_object(obj).map_err(|e| ConfigError::schema(format!("objects[{i}]"), e.to_string()))?;
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            let ob = Obstacle::new(Point3::new(Frame::WORLD, o.center[0], o.center[1], o.center[2]), o.radius)
                .map_err(|e| ConfigError::schema(format!("obstacles[{i}]"), e.to_string()))?;
            scene.obstacles.push(ob);
        }
        Ok(scene)
    }

    pub fn build_segmenter(&self) -> Result<Box<dyn SegmenterBackend>, ConfigError> {
        Ok(match &self.segmenter {
            SegmenterSpec::Mock { centroid_noise_px } => {
                let mock = MockSegmenter::new(self.objects.iter().map(|o| (o.id, o.name.as_str())));
                Box::new(mock.with_noise(*centroid_noise_px, self.seed))
            }
            SegmenterSpec::External { addr, timeout_ms } => {
                let addr = addr.parse().map_err(|_| ConfigError::schema("segmenter.addr", format!("`{addr}` is not a socket address")))?;
                Box::new(ExternalSegmenter::new(addr).with_timeout(Duration::from_millis(*timeout_ms)))
            }
        })
    }
}

/// Strict parse of a scenario document. Syntax errors carry line and
/// column; schema errors carry the JSON path of the offending field.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => ConfigError::Schema { path, message: inner.to_string() },
            _ => ConfigError::Parse { line: inner.line(), column: inner.column(), message: inner.to_string() },
        }
    })?;
    de.end().map_err(|e| ConfigError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    config.resolved()
}

/// Reads and parses a scenario file. An empty `name` becomes the file stem.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let mut config = parse_scenario(&text)?;
    if config.name.is_empty() {
        config.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(config)
}
