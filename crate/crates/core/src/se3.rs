//! Rigid-body poses and the four end-effector action parameterizations.
//!
//! Rotations are carried internally as 3×3 matrices. Axis-angle vectors
//! ([`RotVec`]) only appear at API boundaries and are always canonical:
//! their norm lies in `[0, π]`.
//!
//! An action chunk is a [`PoseChunk`] holding the chunk-start pose followed
//! by `H` target poses. [`encode_chunk`] maps it to `H` [`EefAction`]s under
//! a [`CoordinateMode`]; [`decode_chunk`] is its exact left inverse.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this angle (radians) the exponential and logarithm maps switch to
/// second-order Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-7;

/// Maximum allowed `‖RᵀR − I‖_F` (and `|det R − 1|`) accepted by [`matrix_to_rotvec`].
pub const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Se3Error {
    #[error("matrix is not a rotation (orthonormality deviation {deviation:.3e})")]
    NonOrthonormalMatrix { deviation: f64 },
    #[error("pose chunk needs at least 2 poses, got {len}")]
    ChunkTooShort { len: usize },
    #[error("action sequence is empty")]
    EmptyActionSequence,
    #[error("unknown coordinate mode `{0}`")]
    UnknownMode(String),
}

/// Axis-angle rotation: direction is the axis, norm is the angle in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotVec(Vector3<f64>);

impl RotVec {
    pub fn zero() -> Self {
        RotVec(Vector3::zeros())
    }

    /// Builds a canonical rotation vector, re-wrapping angles above π.
    pub fn new(v: Vector3<f64>) -> Self {
        RotVec(canonicalize(v))
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        rotvec_to_matrix(self)
    }
}

fn first_nonzero_positive(v: Vector3<f64>) -> Vector3<f64> {
    for i in 0..3 {
        if v[i] != 0.0 {
            return if v[i] < 0.0 { -v } else { v };
        }
    }
    v
}

fn canonicalize(v: Vector3<f64>) -> Vector3<f64> {
    let angle = v.norm();
    if angle < PI {
        return v;
    }
    if angle == PI {
        return first_nonzero_positive(v);
    }
    let axis = v / angle;
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped <= PI {
        let out = axis * wrapped;
        if wrapped == PI {
            first_nonzero_positive(out)
        } else {
            out
        }
    } else {
        -axis * (2.0 * PI - wrapped)
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula: `exp([r]×)`.
pub fn rotvec_to_matrix(r: &RotVec) -> Matrix3<f64> {
    let k = skew(&r.0);
    let theta = r.0.norm();
    let k2 = k * k;
    if theta < SMALL_ANGLE {
        Matrix3::identity() + k + k2 * 0.5
    } else {
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        Matrix3::identity() + k * a + k2 * b
    }
}

/// Orthonormality deviation `max(‖RᵀR − I‖_F, |det R − 1|)`.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    let gram = (m.transpose() * m - Matrix3::identity()).norm();
    gram.max((m.determinant() - 1.0).abs())
}

/// Logarithm map onto a canonical rotation vector.
pub fn matrix_to_rotvec(m: &Matrix3<f64>) -> Result<RotVec, Se3Error> {
    let deviation = orthonormality_error(m);
    if deviation.is_nan() || deviation > ORTHONORMAL_TOL {
        return Err(Se3Error::NonOrthonormalMatrix { deviation });
    }
    // w = sin(θ)·n
    let w = vee(&(m - m.transpose())) * 0.5;
    let sin_theta = w.norm();
    let cos_theta = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        // θ/sinθ ≈ 1 + θ²/6
        return Ok(RotVec(w * (1.0 + theta * theta / 6.0)));
    }
    if theta < 3.0 {
        return Ok(RotVec(w * (theta / sin_theta)));
    }

    // Near π, sinθ carries little precision. Recover n from the symmetric part:
    // (R + Rᵀ)/2 = cosθ·I + (1 − cosθ)·nnᵀ, which at θ = π reduces to (R + I)/2 = nnᵀ.
    let sym = (m + m.transpose()) * 0.5;
    let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let k = (0..3)
        .max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)]))
        .unwrap_or(0);
    let nk = outer[(k, k)].max(0.0).sqrt();
    let mut axis = Vector3::zeros();
    for j in 0..3 {
        axis[j] = if j == k { nk } else { outer[(j, k)] / nk };
    }
    axis /= axis.norm();
    let alignment = axis.dot(&w);
    if alignment.abs() > 1e-12 {
        if alignment < 0.0 {
            axis = -axis;
        }
    } else {
        axis = first_nonzero_positive(axis);
    }
    Ok(RotVec(axis * theta))
}

/// Rigid transform: `x ↦ R·x + t`. Translation in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    rotation: Matrix3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            translation: Vector3::zeros(),
            rotation: Matrix3::identity(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: RotVec) -> Self {
        Pose {
            translation,
            rotation: rotation.to_matrix(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose {
            translation: Vector3::new(x, y, z),
            rotation: Matrix3::identity(),
        }
    }

    pub fn from_matrix(
        translation: Vector3<f64>,
        rotation: Matrix3<f64>,
    ) -> Result<Self, Se3Error> {
        let deviation = orthonormality_error(&rotation);
        if deviation.is_nan() || deviation > ORTHONORMAL_TOL {
            return Err(Se3Error::NonOrthonormalMatrix { deviation });
        }
        Ok(Pose {
            translation,
            rotation,
        })
    }

    /// `(tx, ty, tz, rx, ry, rz)`.
    pub fn from_array6(v: [f64; 6]) -> Self {
        Pose::new(
            Vector3::new(v[0], v[1], v[2]),
            RotVec::from_array([v[3], v[4], v[5]]),
        )
    }

    pub fn to_array6(&self) -> [f64; 6] {
        let r = self.rotvec();
        let t = self.translation;
        [t.x, t.y, t.z, r.0.x, r.0.y, r.0.z]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn rotvec(&self) -> RotVec {
        // Poses only ever hold products of rotation matrices, so the log map
        // precondition holds up to accumulated roundoff.
        matrix_to_rotvec(&self.rotation).expect("pose rotation drifted from SO(3)")
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            translation: self.rotation * other.translation + self.translation,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            translation: -(rt * self.translation),
            rotation: rt,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Translation distance and rotation Frobenius distance to `other`.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        (
            (self.translation - other.translation).norm(),
            (self.rotation - other.rotation).norm(),
        )
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(p: &Pose) -> Pose {
    p.inverse()
}

/// One end-effector action: a translation part and a canonical rotation part.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EefAction {
    pub translation: Vector3<f64>,
    pub rotation: RotVec,
}

impl EefAction {
    pub fn zero() -> Self {
        EefAction {
            translation: Vector3::zeros(),
            rotation: RotVec::zero(),
        }
    }

    pub fn from_array6(v: [f64; 6]) -> Self {
        EefAction {
            translation: Vector3::new(v[0], v[1], v[2]),
            rotation: RotVec::from_array([v[3], v[4], v[5]]),
        }
    }

    pub fn to_array6(&self) -> [f64; 6] {
        let r = self.rotation.to_array();
        [
            self.translation.x,
            self.translation.y,
            self.translation.z,
            r[0],
            r[1],
            r[2],
        ]
    }

    fn from_pose(p: &Pose) -> Self {
        EefAction {
            translation: p.translation,
            rotation: p.rotvec(),
        }
    }

    fn to_pose(self) -> Pose {
        Pose::new(self.translation, self.rotation)
    }
}

/// World-frame difference `a ⊖ b`: translation `t_a − t_b` and rotational
/// displacement `R_a·R_bᵀ` (the left rotation carrying b's orientation onto a's).
pub fn world_diff(a: &Pose, b: &Pose) -> EefAction {
    let disp = a.rotation * b.rotation.transpose();
    EefAction {
        translation: a.translation - b.translation,
        rotation: matrix_to_rotvec(&disp).expect("product of rotations is a rotation"),
    }
}

/// Inverse of [`world_diff`]: applies `d` to `b` in the world frame.
pub fn world_apply(d: &EefAction, b: &Pose) -> Pose {
    Pose {
        translation: b.translation + d.translation,
        rotation: d.rotation.to_matrix() * b.rotation,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateMode {
    /// Each target minus the chunk start, world frame.
    WorldRel,
    /// Each target minus the previous pose, world frame.
    WorldDelta,
    /// Each target expressed in the chunk start's frame.
    EefRel,
    /// Each target expressed in the previous pose's frame.
    EefDelta,
}

impl CoordinateMode {
    pub const ALL: [CoordinateMode; 4] = [
        CoordinateMode::WorldRel,
        CoordinateMode::WorldDelta,
        CoordinateMode::EefRel,
        CoordinateMode::EefDelta,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CoordinateMode::WorldRel => "world_rel",
            CoordinateMode::WorldDelta => "world_delta",
            CoordinateMode::EefRel => "eef_rel",
            CoordinateMode::EefDelta => "eef_delta",
        }
    }

    pub fn is_delta(&self) -> bool {
        matches!(self, CoordinateMode::WorldDelta | CoordinateMode::EefDelta)
    }
}

impl fmt::Display for CoordinateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CoordinateMode {
    type Err = Se3Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "world_rel" => Ok(CoordinateMode::WorldRel),
            "world_delta" => Ok(CoordinateMode::WorldDelta),
            "eef_rel" => Ok(CoordinateMode::EefRel),
            "eef_delta" => Ok(CoordinateMode::EefDelta),
            _ => Err(Se3Error::UnknownMode(s.to_string())),
        }
    }
}

/// Chunk-start pose followed by `H ≥ 1` target poses.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseChunk {
    poses: Vec<Pose>,
}

impl PoseChunk {
    pub fn new(poses: Vec<Pose>) -> Result<Self, Se3Error> {
        if poses.len() < 2 {
            return Err(Se3Error::ChunkTooShort { len: poses.len() });
        }
        Ok(PoseChunk { poses })
    }

    pub fn start(&self) -> &Pose {
        &self.poses[0]
    }

    pub fn targets(&self) -> &[Pose] {
        &self.poses[1..]
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn horizon(&self) -> usize {
        self.poses.len() - 1
    }
}

/// Applies the coordinate mode to every target of the chunk.
pub fn encode_chunk(chunk: &PoseChunk, mode: CoordinateMode) -> Vec<EefAction> {
    let poses = &chunk.poses;
    let start = &poses[0];
    let start_inv = start.inverse();
    poses
        .windows(2)
        .map(|w| {
            let (prev, cur) = (&w[0], &w[1]);
            match mode {
                CoordinateMode::WorldRel => world_diff(cur, start),
                CoordinateMode::WorldDelta => world_diff(cur, prev),
                CoordinateMode::EefRel => EefAction::from_pose(&start_inv.compose(cur)),
                CoordinateMode::EefDelta => EefAction::from_pose(&prev.inverse().compose(cur)),
            }
        })
        .collect()
}

/// Reconstructs the pose chunk from encoded actions and the chunk-start pose.
pub fn decode_chunk(
    actions: &[EefAction],
    start: &Pose,
    mode: CoordinateMode,
) -> Result<PoseChunk, Se3Error> {
    if actions.is_empty() {
        return Err(Se3Error::EmptyActionSequence);
    }
    let mut poses = Vec::with_capacity(actions.len() + 1);
    poses.push(*start);
    for a in actions {
        let prev = poses[poses.len() - 1];
        let next = match mode {
            CoordinateMode::WorldRel => world_apply(a, start),
            CoordinateMode::WorldDelta => world_apply(a, &prev),
            CoordinateMode::EefRel => start.compose(&a.to_pose()),
            CoordinateMode::EefDelta => prev.compose(&a.to_pose()),
        };
        poses.push(next);
    }
    Ok(PoseChunk { poses })
}
