//! Deterministic synthetic world: analytic primitives, a mobile base carrying
//! the arm, and a ray-casting depth/label renderer for the wrist camera.

use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{ChainError, JointVector, KinematicChain, Pose};
use crate::motion::{Obstacle, PlatformPose, PLATFORM_SPEED};
use crate::perception::{DepthFrame, LabelImage};
use crate::spatial::{CameraIntrinsics, Frame, Point3, RigidTransform, SpatialError};

/// Local frame of a simulated object.
pub const OBJECT: Frame = Frame::new("object");

const NEAR: f64 = 1e-3;
const BACKGROUND_RGB: [u8; 3] = [40, 44, 52];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown object id {0}")]
    UnknownObject(u32),
    #[error("duplicate object id {0}")]
    DuplicateObject(u32),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("non-positive time step {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Frame(#[from] SpatialError),
}

/// Primitive geometry, centered on the object origin. Cylinders run along
/// their local z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Full edge lengths along local x, y, z.
    Box { size: [f64; 3] },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        let fine = match self {
            Shape::Box { size } => size.iter().all(|v| ok(*v)),
            Shape::Sphere { radius } => ok(*radius),
            Shape::Cylinder { radius, height } => ok(*radius) && ok(*height),
        };
        if fine {
            Ok(())
        } else {
            Err(SimError::InvalidShape(format!("{self:?}: dimensions must be positive")))
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Box { size } => 0.5 * Vector3::from(size).norm(),
            Shape::Sphere { radius } => radius,
            Shape::Cylinder { radius, height } => radius.hypot(0.5 * height),
        }
    }

    /// Width of the shape's projection onto the local unit direction `axis`.
    pub fn width_along(&self, axis: &Vector3<f64>) -> f64 {
        match *self {
            Shape::Box { size } => size[0] * axis.x.abs() + size[1] * axis.y.abs() + size[2] * axis.z.abs(),
            Shape::Sphere { radius } => 2.0 * radius,
            Shape::Cylinder { radius, height } => 2.0 * radius * axis.xy().norm() + height * axis.z.abs(),
        }
    }

    /// Nearest ray parameter `t > NEAR` where `origin + t·dir` meets the surface.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        match *self {
            Shape::Box { size } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for i in 0..3 {
                    let h = 0.5 * size[i];
                    if d[i].abs() < 1e-15 {
                        if o[i].abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((-h - o[i]) / d[i], (h - o[i]) / d[i]);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                first_positive(t0, t1)
            }
            Shape::Sphere { radius } => {
                let a = d.norm_squared();
                let b = o.dot(d);
                let c = o.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                first_positive((-b - s) / a, (-b + s) / a)
            }
            Shape::Cylinder { radius, height } => {
                let h = 0.5 * height;
                let mut best: Option<f64> = None;
                let mut keep = |t: f64| {
                    if t > NEAR && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                if a > 1e-15 {
                    let b = o.x * d.x + o.y * d.y;
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / a, (-b + s) / a] {
                            if (o.z + t * d.z).abs() <= h {
                                keep(t);
                            }
                        }
                    }
                }
                if d.z.abs() > 1e-15 {
                    for zc in [-h, h] {
                        let t = (zc - o.z) / d.z;
                        let (x, y) = (o.x + t * d.x, o.y + t * d.y);
                        if x * x + y * y <= radius * radius {
                            keep(t);
                        }
                    }
                }
                best
            }
        }
    }
}

fn first_positive(t0: f64, t1: f64) -> Option<f64> {
    if t0 > t1 {
        None
    } else if t0 > NEAR {
        Some(t0)
    } else if t1 > NEAR {
        Some(t1)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimObject {
    pub id: u32,
    pub name: String,
    pub shape: Shape,
    /// Object → world.
    pub pose: RigidTransform,
    pub drift_velocity: Vector3<f64>,
    pub graspable: bool,
    pub color: [u8; 3],
}

impl SimObject {
    pub fn new(id: u32, name: impl Into<String>, shape: Shape, position: Vector3<f64>) -> Self {
        Self {
            id,
            name: name.into(),
            shape,
            pose: RigidTransform::from_translation(OBJECT, Frame::WORLD, position),
            drift_velocity: Vector3::zeros(),
            graspable: true,
            color: palette(id),
        }
    }

    pub fn with_rotation(mut self, rotation: Matrix3<f64>) -> Result<Self, SimError> {
        self.pose = RigidTransform::new(OBJECT, Frame::WORLD, rotation, self.pose.translation)?;
        Ok(self)
    }

    pub fn with_drift(mut self, v: Vector3<f64>) -> Self {
        self.drift_velocity = v;
        self
    }

    pub fn position(&self) -> Point3 {
        Point3::from_vector(Frame::WORLD, self.pose.translation)
    }

    /// Width across the world-frame unit direction `axis`.
    pub fn width_along(&self, axis: &Vector3<f64>) -> f64 {
        self.shape.width_along(&(self.pose.rotation.transpose() * axis))
    }
}

fn palette(id: u32) -> [u8; 3] {
    const COLORS: [[u8; 3]; 6] = [[220, 60, 50], [60, 170, 80], [60, 110, 220], [230, 190, 50], [170, 80, 200], [60, 190, 200]];
    COLORS[id as usize % COLORS.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Per-pixel Gaussian depth noise, meters.
    pub depth_sigma: f64,
    /// Probability that a pixel returns no depth.
    pub dropout_prob: f64,
    /// Per-joint actuation noise, radians.
    pub servo_sigma: f64,
    /// Depth quantization step, meters; 0 disables.
    pub depth_quantum: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { depth_sigma: 0.0, dropout_prob: 0.0, servo_sigma: 0.0, depth_quantum: 0.001 }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self { depth_quantum: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.depth_sigma) || !nonneg(self.servo_sigma) || !nonneg(self.depth_quantum) {
            return Err(SimError::InvalidNoise("sigmas and quantum must be finite and ≥ 0".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(SimError::InvalidNoise(format!("dropout_prob {} outside [0, 1]", self.dropout_prob)));
        }
        Ok(())
    }
}

/// Complete simulator state. `step_world` returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<SimObject>,
    /// World frame.
    pub obstacles: Vec<Obstacle>,
    pub platform: PlatformPose,
    /// Arm-base height above the floor.
    pub mount_height: f64,
    pub chain: KinematicChain,
    pub arm_theta: JointVector,
    /// Camera → tool.
    pub hand_eye: RigidTransform,
    pub intrinsics: CameraIntrinsics,
    pub noise: NoiseModel,
    pub clock: f64,
    pub tick: u64,
    pub rng_seed: u64,
    /// Servo-noise stream; depth noise is keyed to `(rng_seed, tick)`.
    pub rng: ChaCha8Rng,
    /// Object clamped in the gripper; it no longer drifts.
    pub held: Option<u32>,
}

impl Scene {
    pub fn new(chain: KinematicChain, hand_eye: RigidTransform, intrinsics: CameraIntrinsics, seed: u64) -> Self {
        let arm_theta = JointVector::zeros(chain.dof());
        Self {
            objects: Vec::new(),
            obstacles: Vec::new(),
            platform: PlatformPose::default(),
            mount_height: 0.0,
            chain,
            arm_theta,
            hand_eye,
            intrinsics,
            noise: NoiseModel::default(),
            clock: 0.0,
            tick: 0,
            rng_seed: seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            held: None,
        }
    }

    pub fn add_object(&mut self, obj: SimObject) -> Result<(), SimError> {
        obj.shape.validate()?;
        if self.objects.iter().any(|o| o.id == obj.id) {
            return Err(SimError::DuplicateObject(obj.id));
        }
        self.objects.push(obj);
        Ok(())
    }

    pub fn remove_object(&mut self, id: u32) -> Result<SimObject, SimError> {
        let i = self.objects.iter().position(|o| o.id == id).ok_or(SimError::UnknownObject(id))?;
        Ok(self.objects.remove(i))
    }

    pub fn object(&self, id: u32) -> Result<&SimObject, SimError> {
        self.objects.iter().find(|o| o.id == id).ok_or(SimError::UnknownObject(id))
    }

    /// Arm-base → world.
    pub fn base_transform(&self) -> RigidTransform {
        self.platform.base_transform(self.mount_height)
    }

    /// Tool pose in the arm-base frame.
    pub fn tool_pose(&self) -> Result<Pose, SimError> {
        Ok(self.chain.forward_kinematics(&self.arm_theta)?)
    }

    /// Tool → world.
    pub fn tool_to_world(&self) -> Result<RigidTransform, SimError> {
        Ok(self.base_transform().compose(&self.tool_pose()?.to_transform())?)
    }

    /// Camera → world.
    pub fn camera_to_world(&self) -> Result<RigidTransform, SimError> {
        Ok(self.tool_to_world()?.compose(&self.hand_eye)?)
    }

    /// World point expressed in the arm-base frame.
    pub fn world_to_arm(&self, p: &Point3) -> Result<Point3, SimError> {
        Ok(self.base_transform().invert().apply(p)?)
    }

    pub fn arm_to_world(&self, p: &Point3) -> Result<Point3, SimError> {
        Ok(self.base_transform().apply(p)?)
    }
}

/// Camera → tool mount: 8 cm behind the tool point and 3 cm above it
/// (tool y points down), looking along the approach axis.
pub fn default_hand_eye() -> RigidTransform {
    RigidTransform::from_translation(Frame::CAMERA, Frame::TOOL, Vector3::new(0.0, -0.03, -0.08))
}

/// Configuration holding the tool `reach` ahead of the arm base at height
/// `height`, looking forward and tilted down by `tilt` radians, with the
/// camera upright.
pub fn looking_configuration(chain: &KinematicChain, reach: f64, height: f64, tilt: f64) -> Result<JointVector, crate::kinematics::IkError> {
    let axis = Vector3::new(tilt.cos(), 0.0, -tilt.sin());
    let pose = Pose::new(Point3::new(Frame::ARM_BASE, reach, 0.0, height), crate::kinematics::orientation_from_approach(&axis));
    let opts = crate::kinematics::IkOptions { pos_tol: 1e-6, rot_tol: 1e-6, ..crate::kinematics::IkOptions::default() };
    Ok(crate::kinematics::compute_ik(chain, &pose, &chain.mid_configuration(), &opts)?.theta)
}

/// Default start pose for the arm: tool 0.30 m ahead at 3 cm height, camera
/// level and upright.
pub fn ready_configuration(chain: &KinematicChain) -> Result<JointVector, crate::kinematics::IkError> {
    looking_configuration(chain, 0.30, 0.03, 0.0)
}

/// Analytic centroid of an object at its current pose, world frame.
pub fn ground_truth_centroid(scene: &Scene, object_id: u32) -> Result<Point3, SimError> {
    Ok(scene.object(object_id)?.position())
}

/// Pixel rectangle `(u0, v0, u1, v1)` (inclusive) that contains the object's
/// image, or the whole frame when the bound is not usable.
fn screen_bounds(k: &CameraIntrinsics, center_cam: &Vector3<f64>, radius: f64) -> Option<(u32, u32, u32, u32)> {
    let full = Some((0, 0, k.width - 1, k.height - 1));
    if center_cam.z + radius <= NEAR {
        return None;
    }
    if center_cam.z - radius <= NEAR {
        return full;
    }
    let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let p = center_cam + Vector3::new(sx, sy, sz) * radius;
                let (u, v) = (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    let (w, h) = (k.width as f64, k.height as f64);
    if umax < -1.0 || vmax < -1.0 || umin > w || vmin > h {
        return None;
    }
    let clamp = |x: f64, hi: f64| x.clamp(0.0, hi) as u32;
    Some((clamp(umin.floor() - 1.0, w - 1.0), clamp(vmin.floor() - 1.0, h - 1.0), clamp(umax.ceil() + 1.0, w - 1.0), clamp(vmax.ceil() + 1.0, h - 1.0)))
}

fn noise_rng(scene: &Scene) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
    rng.set_stream(scene.tick.wrapping_add(1));
    rng
}

/// Renders the wrist camera: per-pixel optical-axis depth of the nearest
/// surface plus object labels, then applies the depth noise model.
pub fn render_depth(scene: &Scene) -> Result<(DepthFrame, Arc<LabelImage>), SimError> {
    let k = scene.intrinsics;
    let (w, h) = (k.width, k.height);
    let n = k.pixel_count();
    let mut depth = vec![0.0f64; n];
    let mut ids = vec![0u32; n];
    let cam = scene.camera_to_world()?;
    let world_to_cam = cam.invert();

    for obj in &scene.objects {
        let center_cam = world_to_cam.rotation * obj.pose.translation + world_to_cam.translation;
        let Some((u0, v0, u1, v1)) = screen_bounds(&k, &center_cam, obj.shape.bounding_radius()) else {
            continue;
        };
        // Ray origin and per-pixel direction in object coordinates.
        let r_obj = obj.pose.rotation.transpose();
        let origin = r_obj * (cam.translation - obj.pose.translation);
        let cam_to_obj = r_obj * cam.rotation;
        for v in v0..=v1 {
            for u in u0..=u1 {
                let dir = cam_to_obj * k.ray(u as f64, v as f64);
                if let Some(t) = obj.shape.intersect(&origin, &dir) {
                    let i = (v * w + u) as usize;
                    if ids[i] == 0 || t < depth[i] {
                        depth[i] = t;
                        ids[i] = obj.id;
                    }
                }
            }
        }
    }

    let noise = scene.noise;
    let mut rng = noise_rng(scene);
    let gauss = Normal::new(0.0, noise.depth_sigma).map_err(|e| SimError::InvalidNoise(e.to_string()))?;
    let mut out = vec![0.0f32; n];
    let mut color = vec![BACKGROUND_RGB; n];
    for i in 0..n {
        if ids[i] == 0 {
            continue;
        }
        let mut d = depth[i];
        if noise.depth_sigma > 0.0 {
            d += gauss.sample(&mut rng);
        }
        if noise.depth_quantum > 0.0 {
            d = (d / noise.depth_quantum).round() * noise.depth_quantum;
        }
        if noise.dropout_prob > 0.0 && rng.gen::<f64>() < noise.dropout_prob {
            d = 0.0;
        }
        out[i] = d.clamp(0.0, 99.0) as f32;
        let base = scene.objects.iter().find(|o| o.id == ids[i]).map_or(BACKGROUND_RGB, |o| o.color);
        let shade = (1.2 - 0.4 * depth[i]).clamp(0.5, 1.0);
        color[i] = base.map(|c| (c as f64 * shade) as u8);
    }

    let labels = Arc::new(LabelImage { width: w, height: h, ids });
    let frame = DepthFrame {
        frame_id: scene.tick,
        timestamp: scene.clock,
        intrinsics: k,
        depth: out,
        color,
        ground_truth: Some(labels.clone()),
    };
    Ok((frame, labels))
}

/// Advances the world by `dt`: objects drift, the arm lands on the command
/// plus servo noise, the base moves toward `platform_goal` at 0.3 m/s.
pub fn step_world(
    scene: &Scene,
    dt: f64,
    commanded_theta: &JointVector,
    platform_goal: Option<&PlatformPose>,
) -> Result<Scene, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidStep(dt));
    }
    if commanded_theta.len() != scene.chain.dof() {
        return Err(ChainError::DimensionMismatch { expected: scene.chain.dof(), got: commanded_theta.len() }.into());
    }
    let mut next = scene.clone();
    for obj in &mut next.objects {
        if next.held != Some(obj.id) {
            obj.pose.translation += obj.drift_velocity * dt;
        }
    }
    let servo = Normal::new(0.0, scene.noise.servo_sigma).map_err(|e| SimError::InvalidNoise(e.to_string()))?;
    let mut theta = commanded_theta.clone();
    for q in theta.iter_mut() {
        *q += servo.sample(&mut next.rng);
    }
    next.chain.clamp(&mut theta);
    next.arm_theta = theta;
    if let Some(goal) = platform_goal {
        next.platform = next.platform.advance_toward(goal, PLATFORM_SPEED, dt);
    }
    next.clock += dt;
    next.tick += 1;
    Ok(next)
}
