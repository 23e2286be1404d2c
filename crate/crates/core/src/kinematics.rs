//! Denavit-Hartenberg arm model: forward kinematics, geometric Jacobian and
//! a damped-least-squares inverse kinematics solver.
//!
//! Link transforms use the standard convention
//! `T_i = Rz(θ_i + offset_i) · Tz(d_i) · Tx(a_i) · Rx(α_i)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spatial::{rotation_angle_between, rotation_log, Frame, Point3, RigidTransform};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("joint vector has {got} entries, chain has {expected} links")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid chain: {0}")]
    InvalidChain(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IkError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("target at {distance:.3} m is beyond 0.99 × max reach ({max_reach:.3} m)")]
    Unreachable { distance: f64, max_reach: f64 },
    #[error("no convergence after {iterations} iterations and {restarts} restarts (pos err {position_error:.2e} m)")]
    NoConvergence { iterations: usize, restarts: usize, position_error: f64 },
    #[error("non-finite target")]
    NonFiniteTarget,
}

/// One row of the D-H table. Angles in radians, lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhLink {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
    #[serde(rename = "min")]
    pub joint_min: f64,
    #[serde(rename = "max")]
    pub joint_max: f64,
}

impl DhLink {
    pub fn new(a: f64, alpha: f64, d: f64, theta_offset: f64, joint_min: f64, joint_max: f64) -> Self {
        Self { a, alpha, d, theta_offset, joint_min, joint_max }
    }

    /// Homogeneous link transform split into rotation and translation.
    pub fn transform(&self, theta: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let (st, ct) = (theta + self.theta_offset).sin_cos();
        let (sa, ca) = self.alpha.sin_cos();
        let rot = Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca);
        (rot, Vector3::new(self.a * ct, self.a * st, self.d))
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.joint_min + self.joint_max)
    }

    pub fn clamp(&self, theta: f64) -> f64 {
        theta.clamp(self.joint_min, self.joint_max)
    }
}

/// Joint angles in radians, one per chain link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn distance(&self, other: &JointVector) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn max_abs_delta(&self, other: &JointVector) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl Deref for JointVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for JointVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Tool-center-point pose in the arm-base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pose {
    pub position: Point3,
    pub orientation: Matrix3<f64>,
}

impl Pose {
    pub fn new(position: Point3, orientation: Matrix3<f64>) -> Self {
        Self { position, orientation }
    }

    /// Transform from the tool frame into the arm-base frame.
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::from_parts(Frame::TOOL, self.position.frame, self.orientation, self.position.coords())
    }

    /// Tool z axis expressed in the base frame.
    pub fn approach_axis(&self) -> Vector3<f64> {
        self.orientation.column(2).into_owned()
    }
}

/// Serial chain of revolute D-H links plus a fixed tool transform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KinematicChain {
    pub links: Vec<DhLink>,
    /// Maps the tool frame into the last link frame.
    pub tool: RigidTransform,
}

impl KinematicChain {
    pub fn new(links: Vec<DhLink>, tool: RigidTransform) -> Result<Self, ChainError> {
        let chain = Self { links, tool };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.links.is_empty() {
            return Err(ChainError::InvalidChain("chain needs at least one link".into()));
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.a.is_finite() && l.d.is_finite() && l.alpha.is_finite() && l.theta_offset.is_finite()) {
                return Err(ChainError::InvalidChain(format!("link {i} has non-finite parameters")));
            }
            if !(l.joint_min < l.joint_max) {
                return Err(ChainError::InvalidChain(format!("link {i}: joint_min must be below joint_max")));
            }
        }
        let reach = self.max_reach();
        if !(reach.is_finite() && reach > 0.0) {
            return Err(ChainError::InvalidChain("max reach must be positive".into()));
        }
        Ok(())
    }

    /// The six-joint arm used by default. Link lengths are stand-ins:
    /// base 0.10, upper arm 0.30, forearm 0.25, wrist 0.08, hand 0.06, tool 0.10.
    ///
    /// Joints: base yaw, shoulder pitch, elbow pitch, wrist pitch, wrist
    /// roll, tool pitch. At θ = 0 the arm is stretched horizontally along +x.
    pub fn default_arm() -> Self {
        Self::with_dimensions([0.10, 0.30, 0.25, 0.08, 0.06], 0.10)
    }

    pub fn with_dimensions(lengths: [f64; 5], tool_length: f64) -> Self {
        let [base, upper, fore, wrist, hand] = lengths;
        let links = vec![
            DhLink::new(0.0, FRAC_PI_2, base, 0.0, -PI, PI),
            DhLink::new(upper, 0.0, 0.0, 0.0, -0.6, 2.4),
            DhLink::new(fore, 0.0, 0.0, 0.0, -2.7, 0.5),
            DhLink::new(0.0, FRAC_PI_2, 0.0, FRAC_PI_2, -2.0, 2.0),
            DhLink::new(0.0, -FRAC_PI_2, wrist, 0.0, -PI, PI),
            DhLink::new(hand, 0.0, 0.0, -FRAC_PI_2, -2.0, 2.0),
        ];
        Self { links, tool: Self::tool_along_x(tool_length) }
    }

    /// Tool frame `tool_length` along the last link's x axis, with tool z
    /// pointing along that axis.
    pub fn tool_along_x(tool_length: f64) -> RigidTransform {
        // Columns are the tool axes in the last link frame: x → z, y → -y, z → x.
        let rot = Matrix3::new(0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 0.0);
        RigidTransform::from_parts(Frame::TOOL, Frame::new("flange"), rot, Vector3::new(tool_length, 0.0, 0.0))
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    /// Σ(|aᵢ| + |dᵢ|) + |tool offset|.
    pub fn max_reach(&self) -> f64 {
        self.links.iter().map(|l| l.a.abs() + l.d.abs()).sum::<f64>() + self.tool.translation.norm()
    }

    pub fn mid_configuration(&self) -> JointVector {
        JointVector(self.links.iter().map(DhLink::mid).collect())
    }

    pub fn within_limits(&self, theta: &JointVector) -> bool {
        theta.len() == self.dof()
            && self.links.iter().zip(theta.iter()).all(|(l, t)| *t >= l.joint_min && *t <= l.joint_max)
    }

    pub fn clamp(&self, theta: &mut JointVector) {
        for (l, t) in self.links.iter().zip(theta.iter_mut()) {
            *t = l.clamp(*t);
        }
    }

    pub fn random_configuration(&self, rng: &mut impl Rng) -> JointVector {
        JointVector(self.links.iter().map(|l| rng.gen_range(l.joint_min..=l.joint_max)).collect())
    }

    fn check_dim(&self, theta: &JointVector) -> Result<(), ChainError> {
        if theta.len() != self.dof() {
            return Err(ChainError::DimensionMismatch { expected: self.dof(), got: theta.len() });
        }
        Ok(())
    }

    /// Joint frames `0..=n` (base, after each link) followed by the tool frame,
    /// each as (rotation, origin) in the base frame.
    pub fn frames(&self, theta: &JointVector) -> Result<Vec<(Matrix3<f64>, Vector3<f64>)>, ChainError> {
        self.check_dim(theta)?;
        let mut out = Vec::with_capacity(self.dof() + 2);
        let mut rot = Matrix3::identity();
        let mut pos = Vector3::zeros();
        out.push((rot, pos));
        for (link, &q) in self.links.iter().zip(theta.iter()) {
            let (r, t) = link.transform(q);
            pos += rot * t;
            rot *= r;
            out.push((rot, pos));
        }
        pos += rot * self.tool.translation;
        rot *= self.tool.rotation;
        out.push((rot, pos));
        Ok(out)
    }

    pub fn forward_kinematics(&self, theta: &JointVector) -> Result<Pose, ChainError> {
        let frames = self.frames(theta)?;
        let (rot, pos) = frames[frames.len() - 1];
        Ok(Pose::new(Point3::from_vector(Frame::ARM_BASE, pos), rot))
    }

    /// Geometric Jacobian, 6 × n: rows 0..3 linear velocity, rows 3..6 angular.
    pub fn jacobian(&self, theta: &JointVector) -> Result<DMatrix<f64>, ChainError> {
        let frames = self.frames(theta)?;
        Ok(jacobian_from_frames(&frames))
    }

    /// Capsule centerline: base origin, every joint origin, then the tool point.
    pub fn link_points(&self, theta: &JointVector) -> Result<Vec<Vector3<f64>>, ChainError> {
        Ok(self.frames(theta)?.into_iter().map(|(_, p)| p).collect())
    }
}

fn jacobian_from_frames(frames: &[(Matrix3<f64>, Vector3<f64>)]) -> DMatrix<f64> {
    let n = frames.len() - 2;
    let tip = frames[frames.len() - 1].1;
    let mut j = DMatrix::zeros(6, n);
    for i in 0..n {
        let (rot, origin) = frames[i];
        let z = rot.column(2).into_owned();
        let lin = z.cross(&(tip - origin));
        for r in 0..3 {
            j[(r, i)] = lin[r];
            j[(r + 3, i)] = z[r];
        }
    }
    j
}

/// Which parts of the target pose the solver must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IkMode {
    /// Position and full orientation.
    Full,
    /// Position, plus the tool z axis aligned with the target's z column;
    /// rotation about that axis is free.
    Approach,
    /// Position only.
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IkOptions {
    pub mode: IkMode,
    pub pos_tol: f64,
    pub rot_tol: f64,
    pub damping: f64,
    /// Per-iteration cap on any single joint step, radians.
    pub max_step: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    /// Weight of the orientation rows in `Approach` mode.
    pub approach_weight: f64,
    pub seed: u64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            mode: IkMode::Full,
            pos_tol: 1e-3,
            rot_tol: 1e-2,
            damping: 0.05,
            max_step: 0.2,
            max_iterations: 200,
            restarts: 24,
            approach_weight: 0.3,
            seed: 0,
        }
    }
}

impl IkOptions {
    pub fn approach() -> Self {
        Self { mode: IkMode::Approach, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub theta: JointVector,
    pub iterations: usize,
    pub restarts_used: usize,
    pub position_error: f64,
    pub rotation_error: f64,
}

struct Attempt {
    theta: JointVector,
    iterations: usize,
    converged: bool,
    pos_err: f64,
    rot_err: f64,
}

/// Task-space error `[Δp; Δω]` and the convergence measures for `mode`.
fn pose_error(pose_rot: &Matrix3<f64>, pose_pos: &Vector3<f64>, target: &Pose, mode: IkMode) -> (Vector6<f64>, f64, f64) {
    let dp = target.position.coords() - pose_pos;
    let (dw, rot_err) = match mode {
        IkMode::Full => {
            let rel = target.orientation * pose_rot.transpose();
            (rotation_log(&rel), rotation_angle_between(pose_rot, &target.orientation))
        }
        IkMode::Approach => {
            let have = pose_rot.column(2).into_owned();
            let want = target.orientation.column(2).into_owned();
            let axis = have.cross(&want);
            let s = axis.norm();
            let angle = s.atan2(have.dot(&want));
            let w = if s > 1e-12 {
                axis * (angle / s)
            } else if angle > 1.0 {
                // Antiparallel: rotate about any perpendicular.
                let perp = if have.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                have.cross(&perp).normalize() * angle
            } else {
                Vector3::zeros()
            };
            (w, angle)
        }
        IkMode::Position => (Vector3::zeros(), 0.0),
    };
    let mut e = Vector6::zeros();
    e.fixed_rows_mut::<3>(0).copy_from(&dp);
    e.fixed_rows_mut::<3>(3).copy_from(&dw);
    (e, dp.norm(), rot_err)
}

/// Δθ = Jᵀ (J Jᵀ + λ² I)⁻¹ e
fn dls_step(j: &DMatrix<f64>, e: &Vector6<f64>, lambda: f64) -> Option<DVector<f64>> {
    let jjt_dyn = j * j.transpose();
    let mut jjt: Matrix6<f64> = Matrix6::zeros();
    jjt.copy_from(&jjt_dyn);
    for d in 0..6 {
        jjt[(d, d)] += lambda * lambda;
    }
    let y = jjt.cholesky()?.solve(e);
    Some(j.transpose() * DVector::from_column_slice(y.as_slice()))
}

fn weighted_cost(err: &Vector6<f64>, rot_weight: f64) -> f64 {
    err.fixed_rows::<3>(0).norm_squared() + rot_weight * rot_weight * err.fixed_rows::<3>(3).norm_squared()
}

/// Levenberg–Marquardt on the weighted pose-error twist. Damping starts at
/// `opts.damping`, shrinks after an accepted step and grows after a rejected
/// one. Joint limits are enforced on every candidate.
fn solve_from(chain: &KinematicChain, target: &Pose, start: &JointVector, opts: &IkOptions) -> Attempt {
    let rot_weight = match opts.mode {
        IkMode::Full => 1.0,
        IkMode::Approach => opts.approach_weight,
        IkMode::Position => 0.0,
    };
    if opts.mode == IkMode::Position {
        return lm_solve(chain, target, start, opts, rot_weight, opts.max_iterations, false);
    }
    // Position-only warm start, then the weighted pose error.
    let pre = lm_solve(chain, target, start, opts, 0.0, opts.max_iterations / 2, true);
    let mut rest = lm_solve(chain, target, &pre.theta, opts, rot_weight, opts.max_iterations - pre.iterations, false);
    rest.iterations += pre.iterations;
    rest
}

#[allow(clippy::too_many_arguments)]
fn lm_solve(
    chain: &KinematicChain,
    target: &Pose,
    start: &JointVector,
    opts: &IkOptions,
    rot_weight: f64,
    max_iterations: usize,
    position_phase: bool,
) -> Attempt {
    const DAMPING_MIN: f64 = 1e-4;
    const WARM_START_TOL: f64 = 0.01;
    const DAMPING_MAX: f64 = 10.0;
    let n = chain.dof();
    let evaluate = |theta: &JointVector| {
        let frames = chain.frames(theta).expect("dimension checked by caller");
        let (rot, pos) = frames[frames.len() - 1];
        let (err, pos_err, rot_err) = pose_error(&rot, &pos, target, opts.mode);
        (frames, err, pos_err, rot_err)
    };

    let mut theta = start.clone();
    chain.clamp(&mut theta);
    let (mut frames, mut err, mut pos_err, mut rot_err) = evaluate(&theta);
    let mut cost = weighted_cost(&err, rot_weight);
    let mut lambda = opts.damping;
    let mut iterations = 0;
    loop {
        let rot_ok = opts.mode == IkMode::Position || rot_err <= opts.rot_tol;
        if position_phase && pos_err <= WARM_START_TOL {
            return Attempt { theta, iterations, converged: false, pos_err, rot_err };
        }
        if pos_err <= opts.pos_tol && rot_ok {
            return Attempt { theta, iterations, converged: true, pos_err, rot_err };
        }
        if iterations >= max_iterations {
            return Attempt { theta, iterations, converged: false, pos_err, rot_err };
        }
        iterations += 1;

        let mut j = jacobian_from_frames(&frames);
        let mut e = err;
        for r in 3..6 {
            j.row_mut(r).scale_mut(rot_weight);
            e[r] *= rot_weight;
        }
        // Active set: joints pinned at a limit and pushed outward drop out of
        // the Jacobian so the remaining joints absorb the motion.
        let mut step = DVector::zeros(n);
        let mut solved = false;
        for _ in 0..=n {
            let Some(s) = dls_step(&j, &e, lambda) else { break };
            let mut pinned = false;
            for i in 0..n {
                let l = &chain.links[i];
                let outward = (theta[i] <= l.joint_min && s[i] < 0.0) || (theta[i] >= l.joint_max && s[i] > 0.0);
                if outward && j.column(i).iter().any(|v| *v != 0.0) {
                    j.column_mut(i).fill(0.0);
                    pinned = true;
                }
            }
            step = s;
            solved = true;
            if !pinned {
                break;
            }
        }
        if !solved {
            lambda = (lambda * 4.0).min(DAMPING_MAX);
            continue;
        }
        let biggest = step.amax();
        let scale = if biggest > opts.max_step { opts.max_step / biggest } else { 1.0 };
        let mut candidate = theta.clone();
        for i in 0..n {
            candidate[i] = chain.links[i].clamp(theta[i] + step[i] * scale);
        }
        let (c_frames, c_err, c_pos, c_rot) = evaluate(&candidate);
        let c_cost = weighted_cost(&c_err, rot_weight);
        if c_cost < cost {
            theta = candidate;
            frames = c_frames;
            err = c_err;
            pos_err = c_pos;
            rot_err = c_rot;
            cost = c_cost;
            lambda = (lambda * 0.5).max(DAMPING_MIN);
        } else {
            lambda = (lambda * 4.0).min(DAMPING_MAX);
            if lambda >= DAMPING_MAX {
                // Stuck against limits or in a local minimum.
                return Attempt { theta, iterations, converged: false, pos_err, rot_err };
            }
        }
    }
}

/// Damped-least-squares IK with seeded random restarts.
///
/// The first attempt starts from `seed`. If it fails, up to `opts.restarts`
/// random configurations are tried and the converged solution closest to
/// `seed` in joint space wins.
pub fn compute_ik(
    chain: &KinematicChain,
    target: &Pose,
    seed: &JointVector,
    opts: &IkOptions,
) -> Result<IkSolution, IkError> {
    chain.check_dim(seed)?;
    if !target.position.is_finite() || target.orientation.iter().any(|v| !v.is_finite()) {
        return Err(IkError::NonFiniteTarget);
    }
    let distance = target.position.norm();
    let max_reach = chain.max_reach();
    if distance > 0.99 * max_reach {
        return Err(IkError::Unreachable { distance, max_reach });
    }

    let first = solve_from(chain, target, seed, opts);
    if first.converged {
        return Ok(IkSolution {
            theta: first.theta,
            iterations: first.iterations,
            restarts_used: 0,
            position_error: first.pos_err,
            rotation_error: first.rot_err,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut total_iterations = first.iterations;
    let mut best_err = first.pos_err;
    let mut best: Option<(f64, Attempt, usize)> = None;
    for r in 1..=opts.restarts {
        let start = chain.random_configuration(&mut rng);
        let attempt = solve_from(chain, target, &start, opts);
        total_iterations += attempt.iterations;
        best_err = best_err.min(attempt.pos_err);
        if attempt.converged {
            let dist = attempt.theta.distance(seed);
            if best.as_ref().is_none_or(|(d, _, _)| dist < *d) {
                best = Some((dist, attempt, r));
            }
        }
    }
    match best {
        Some((_, a, r)) => Ok(IkSolution {
            theta: a.theta,
            iterations: total_iterations,
            restarts_used: r,
            position_error: a.pos_err,
            rotation_error: a.rot_err,
        }),
        None => Err(IkError::NoConvergence {
            iterations: total_iterations,
            restarts: opts.restarts,
            position_error: best_err,
        }),
    }
}

/// Orientation whose z column is `axis`. For non-vertical axes, x is
/// horizontal and y points downward, matching image axes of a camera
/// looking along `axis`.
pub fn orientation_from_approach(axis: &Vector3<f64>) -> Matrix3<f64> {
    let z = axis.normalize();
    let helper = if z.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let x = z.cross(&helper).normalize();
    let y = z.cross(&x);
    Matrix3::from_columns(&[x, y, z])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar2() -> KinematicChain {
        KinematicChain::new(
            vec![DhLink::new(1.0, 0.0, 0.0, 0.0, -PI, PI), DhLink::new(1.0, 0.0, 0.0, 0.0, -PI, PI)],
            RigidTransform::identity(Frame::TOOL),
        )
        .unwrap()
    }

    #[test]
    fn planar_collinear_and_quarter_turn() {
        let c = planar2();
        let p = c.forward_kinematics(&JointVector(vec![0.0, 0.0])).unwrap();
        assert_eq!(p.position.coords(), Vector3::new(2.0, 0.0, 0.0));
        let p = c.forward_kinematics(&JointVector(vec![FRAC_PI_2, 0.0])).unwrap();
        assert!((p.position.coords() - Vector3::new(0.0, 2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn dimension_mismatch() {
        let c = planar2();
        assert!(matches!(
            c.forward_kinematics(&JointVector(vec![0.0])),
            Err(ChainError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(c.jacobian(&JointVector::zeros(3)).is_err());
    }

    #[test]
    fn single_joint_lever_arm() {
        let c = KinematicChain::new(
            vec![DhLink::new(1.0, 0.0, 0.0, 0.0, -PI, PI)],
            RigidTransform::identity(Frame::TOOL),
        )
        .unwrap();
        let j = c.jacobian(&JointVector(vec![0.0])).unwrap();
        let col: Vec<f64> = j.column(0).iter().copied().collect();
        assert_eq!(col, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn default_arm_is_stretched_at_zero() {
        let c = KinematicChain::default_arm();
        assert!((c.max_reach() - 0.89).abs() < 1e-12);
        let p = c.forward_kinematics(&JointVector::zeros(6)).unwrap();
        assert!((p.position.coords() - Vector3::new(0.79, 0.0, 0.10)).norm() < 1e-12);
        assert!((p.approach_axis() - Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn stretched_pose_is_singular() {
        let c = KinematicChain::default_arm();
        let j = c.jacobian(&JointVector::zeros(6)).unwrap();
        let sv = j.singular_values();
        assert!(sv.min() < 1e-8, "smallest singular value {}", sv.min());
    }

    #[test]
    fn ik_fixed_point_takes_zero_iterations() {
        let c = KinematicChain::default_arm();
        let theta = JointVector(vec![0.3, 0.5, -0.9, 0.4, 0.2, -0.3]);
        let target = c.forward_kinematics(&theta).unwrap();
        let sol = compute_ik(&c, &target, &theta, &IkOptions::default()).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.theta, theta);
    }

    #[test]
    fn ik_rejects_far_targets_before_iterating() {
        let c = KinematicChain::default_arm();
        let target = Pose::new(
            Point3::new(Frame::ARM_BASE, 1.5 * c.max_reach(), 0.0, 0.0),
            Matrix3::identity(),
        );
        let err = compute_ik(&c, &target, &c.mid_configuration(), &IkOptions::default()).unwrap_err();
        assert!(matches!(err, IkError::Unreachable { .. }));
    }

    #[test]
    fn approach_mode_aligns_tool_axis() {
        let c = KinematicChain::default_arm();
        let axis = Vector3::new(1.0, 0.2, -0.6).normalize();
        let target = Pose::new(Point3::new(Frame::ARM_BASE, 0.45, 0.1, 0.05), orientation_from_approach(&axis));
        let sol = compute_ik(&c, &target, &c.mid_configuration(), &IkOptions::approach()).unwrap();
        let pose = c.forward_kinematics(&sol.theta).unwrap();
        assert!(pose.position.distance(&target.position).unwrap() <= 1e-3);
        assert!(pose.approach_axis().angle(&axis) <= 1e-2);
        assert!(c.within_limits(&sol.theta));
    }

    #[test]
    fn orientation_from_approach_is_rotation() {
        for axis in [Vector3::z(), -Vector3::z(), Vector3::new(0.3, -0.4, 0.2)] {
            let r = orientation_from_approach(&axis);
            let (dev, det) = crate::spatial::orthonormality(&r);
            assert!(dev < 1e-12 && (det - 1.0).abs() < 1e-12);
            assert!((r.column(2) - axis.normalize()).norm() < 1e-12);
        }
        let r = orientation_from_approach(&Vector3::x());
        assert!((r.column(1) + Vector3::z()).norm() < 1e-12);
    }
}
