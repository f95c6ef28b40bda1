//! Coordinate conventions and core value types.
//!
//! Camera frames are `+x` right, `+y` down, `+z` forward. Rotations act on
//! column vectors by left multiplication. Euler angles compose as
//! `Rz(θz) · Ry(θy) · Rx(θx)`.
//!
//! Each cube face is a 90° pinhole camera of width `w` and focal length
//! `w / 2`. The face rotation maps a ray expressed in the face's own camera
//! frame into the cube (front) frame, so the ray grid of face `f` is
//! `face_rotation(f) · G` where `G` is the front grid.

use std::fmt;
use std::ops::Mul;
use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A cube face. The declaration order is the canonical order used for
/// serialization and for breaking ties on cube edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Face {
    Back,
    Down,
    Front,
    Left,
    Right,
    Up,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Back,
        Face::Down,
        Face::Front,
        Face::Left,
        Face::Right,
        Face::Up,
    ];

    /// Position in the canonical order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Face> {
        Face::ALL.get(i).copied()
    }

    /// Single-letter tag used in file suffixes (`_B`, `_D`, ...).
    pub fn letter(self) -> char {
        match self {
            Face::Back => 'B',
            Face::Down => 'D',
            Face::Front => 'F',
            Face::Left => 'L',
            Face::Right => 'R',
            Face::Up => 'U',
        }
    }

    /// Euler angles `(θx, θy, θz)` of the face relative to the front face.
    pub fn euler_angles(self) -> [f64; 3] {
        use std::f64::consts::PI;
        match self {
            Face::Back => [0.0, PI, 0.0],
            Face::Down => [-0.5 * PI, 0.0, 0.0],
            Face::Front => [0.0, 0.0, 0.0],
            Face::Left => [0.0, -0.5 * PI, 0.0],
            Face::Right => [0.0, 0.5 * PI, 0.0],
            Face::Up => [0.5 * PI, 0.0, 0.0],
        }
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(Matrix3::identity())
    }

    /// Wraps a matrix after checking orthonormality and `det = +1` to 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("rotation matrix has non-finite entries"));
        }
        let err = (m.transpose() * m - Matrix3::identity()).amax();
        if err > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("matrix is not a proper rotation"));
        }
        Ok(Rotation3(m))
    }

    /// Rotation by `|v|` radians about `v / |v|`.
    pub fn from_axis_angle(v: &Vector3<f64>) -> Self {
        Rotation3(*nalgebra::Rotation3::from_scaled_axis(*v).matrix())
    }

    /// Inverse of [`Rotation3::from_axis_angle`], angle in `[0, π]`.
    pub fn to_axis_angle(&self) -> Vector3<f64> {
        let m = &self.0;
        // atan2 of the skew and symmetric parts stays accurate at small
        // angles, where an acos of the trace loses half the digits.
        let s = 0.5
            * Vector3::new(
                m[(2, 1)] - m[(1, 2)],
                m[(0, 2)] - m[(2, 0)],
                m[(1, 0)] - m[(0, 1)],
            );
        let sn = s.norm();
        let angle = sn.atan2(0.5 * (m.trace() - 1.0));
        if angle < std::f64::consts::PI - 1e-4 {
            if sn == 0.0 {
                return Vector3::zeros();
            }
            return s * (angle / sn);
        }
        nalgebra::Rotation3::from_matrix_unchecked(self.0).scaled_axis()
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        self.to_axis_angle().norm()
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation3(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation3 {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// `E(θ) = Rz(θz) · Ry(θy) · Rx(θx)`.
pub fn euler_to_rotation(theta: [f64; 3]) -> Result<Rotation3> {
    if !theta.iter().all(|t| t.is_finite()) {
        return Err(Error::invalid("euler angles must be finite"));
    }
    let [tx, ty, tz] = theta;
    let (sx, cx) = tx.sin_cos();
    let (sy, cy) = ty.sin_cos();
    let (sz, cz) = tz.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    Ok(Rotation3(rz * ry * rx))
}

/// Rotation of `face` relative to the front face.
///
/// The result is `E(θ_face)` with entries within 1e-12 of an integer snapped
/// to it, which makes every face rotation an exact signed permutation.
pub fn face_rotation(face: Face) -> Rotation3 {
    static TABLE: OnceLock<[Rotation3; 6]> = OnceLock::new();
    TABLE.get_or_init(|| Face::ALL.map(snapped_face_rotation))[face.index()]
}

fn snapped_face_rotation(face: Face) -> Rotation3 {
    let r = euler_to_rotation(face.euler_angles()).expect("table angles are finite");
    Rotation3(r.0.map(|v| {
        let k = v.round();
        if (v - k).abs() < 1e-12 {
            k
        } else {
            v
        }
    }))
}

/// Rigid motion `x ↦ R·x + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

impl PoseSE3 {
    pub fn new(rotation: Rotation3, translation: Vector3<f64>) -> Self {
        PoseSE3 {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        PoseSE3::new(Rotation3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        PoseSE3::new(Rotation3::identity(), t)
    }

    pub fn from_rotation(r: Rotation3) -> Self {
        PoseSE3::new(r, Vector3::zeros())
    }

    /// Builds a pose from an axis-angle rotation vector and a translation.
    pub fn from_axis_angle_translation(axis_angle: Vector3<f64>, t: Vector3<f64>) -> Self {
        PoseSE3::new(Rotation3::from_axis_angle(&axis_angle), t)
    }

    /// `(axis-angle, translation)` packed as a 6-vector.
    pub fn to_vector6(&self) -> [f64; 6] {
        let w = self.rotation.to_axis_angle();
        let t = self.translation;
        [w.x, w.y, w.z, t.x, t.y, t.z]
    }

    pub fn from_vector6(v: &[f64; 6]) -> Self {
        PoseSE3::from_axis_angle_translation(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        PoseSE3::new(
            self.rotation * other.rotation,
            self.rotation.apply(&other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3::new(rt, -(rt.apply(&self.translation)))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.apply(p) + self.translation
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.0.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }
}

impl Default for PoseSE3 {
    fn default() -> Self {
        PoseSE3::identity()
    }
}

/// Serialized pose: axis-angle rotation in radians and translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation_axis_angle: [f64; 3],
    pub translation: [f64; 3],
}

impl From<&PoseSE3> for PoseRecord {
    fn from(p: &PoseSE3) -> Self {
        let v = p.to_vector6();
        PoseRecord {
            rotation_axis_angle: [v[0], v[1], v[2]],
            translation: [v[3], v[4], v[5]],
        }
    }
}

impl From<PoseRecord> for PoseSE3 {
    fn from(r: PoseRecord) -> Self {
        PoseSE3::from_axis_angle_translation(r.rotation_axis_angle.into(), r.translation.into())
    }
}

/// The ray grid of one cube face, rows of `width` rays stored top to bottom.
///
/// Rays are not normalized: a front-face ray has `z = width / 2`.
#[derive(Debug, Clone)]
pub struct FaceGrid {
    face: Face,
    width: usize,
    rays: Vec<Vector3<f64>>,
}

impl FaceGrid {
    pub fn face(&self) -> Face {
        self.face
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rays(&self) -> &[Vector3<f64>] {
        &self.rays
    }

    /// Ray through pixel column `u`, row `v`.
    pub fn ray(&self, u: usize, v: usize) -> Vector3<f64> {
        self.rays[v * self.width + u]
    }
}

/// Unrotated grid ray through the (possibly fractional or out-of-face) pixel
/// position `(u, v)`.
pub(crate) fn front_ray(u: f64, v: f64, width: usize) -> Vector3<f64> {
    let half = 0.5 * width as f64;
    Vector3::new(u + 0.5 - half, v + 0.5 - half, half)
}

pub fn make_face_grid(face: Face, width: usize) -> Result<FaceGrid> {
    if width < 2 {
        return Err(Error::invalid(format!("face width must be >= 2, got {width}")));
    }
    let r = face_rotation(face);
    let rays = (0..width * width)
        .map(|i| r.apply(&front_ray((i % width) as f64, (i / width) as f64, width)))
        .collect();
    Ok(FaceGrid { face, width, rays })
}

/// Whether direction `d` (cube frame) lies in the closed frustum of `face`.
pub fn face_contains(face: Face, d: &Vector3<f64>) -> bool {
    let local = face_rotation(face).transpose().apply(d);
    local.z > 0.0 && local.x.abs() <= local.z && local.y.abs() <= local.z
}

/// The face whose frustum contains `d`; ties on cube edges go to the face
/// earliest in canonical order.
///
/// Face rotations are exact signed permutations, so the frustum test reduces
/// to a dominant-axis comparison with no rounding.
pub fn select_face(d: &Vector3<f64>) -> Face {
    let (ax, ay, az) = (d.x.abs(), d.y.abs(), d.z.abs());
    // Candidates in canonical order: B(-z) D(+y) F(+z) L(-x) R(+x) U(-y).
    if d.z < 0.0 && ax <= az && ay <= az {
        Face::Back
    } else if d.y > 0.0 && ax <= ay && az <= ay {
        Face::Down
    } else if d.z > 0.0 && ax <= az && ay <= az {
        Face::Front
    } else if d.x < 0.0 && ay <= ax && az <= ax {
        Face::Left
    } else if d.x > 0.0 && ay <= ax && az <= ax {
        Face::Right
    } else {
        Face::Up
    }
}

/// Continuous pixel position `(u, v)` of direction `d` on `face`, where
/// integer positions are pixel centers. Directions inside the frustum land in
/// `[-0.5, width - 0.5]`.
pub fn face_pixel(face: Face, d: &Vector3<f64>, width: usize) -> (f64, f64) {
    let local = face_rotation(face).transpose().apply(d);
    let half = 0.5 * width as f64;
    (
        local.x / local.z * half + half - 0.5,
        local.y / local.z * half + half - 0.5,
    )
}
