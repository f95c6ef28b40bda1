//! Analytic ground truth: textured axis-aligned box rooms, ray cast into
//! equirectangular or cubemap frames with exact ray-length depth.
//!
//! The room is the box `[-h, h]` centered on the world origin. World axes
//! follow the camera convention (`+y` down), so the floor is the `y_pos`
//! wall. Poses are world-from-camera.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_face_grid, Face, PoseRecord, PoseSE3, Rotation3};
use crate::projection::{pixel_to_sphere, sphere_to_ray, CubeMask, Cubemap, EquirectImage};
use crate::raster::Raster;
use crate::warping::{depth_to_pointcloud, CubemapDepth};

/// Wall identifiers in wall-index order: `2 * axis + (positive side)`.
pub const WALL_IDS: [&str; 6] = ["x_neg", "x_pos", "y_neg", "y_pos", "z_neg", "z_pos"];

/// Distance by which a target-view surface must be nearer than the
/// reference point for the point to count as occluded.
pub const OCCLUSION_TOLERANCE: f64 = 1e-3;

const CHECKER_SHARPNESS: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureKind {
    Checker,
    Gradient,
}

/// Procedural surface texture parameterized by world coordinates on the
/// surface plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    #[serde(rename = "type")]
    pub kind: TextureKind,
    pub period_m: f64,
    pub color_a: [f64; 3],
    pub color_b: [f64; 3],
}

impl TextureSpec {
    fn validate(&self) -> Result<()> {
        if !(self.period_m.is_finite() && self.period_m > 0.0) {
            return Err(Error::invalid(format!("texture period must be > 0, got {}", self.period_m)));
        }
        if self
            .color_a
            .iter()
            .chain(&self.color_b)
            .any(|c| !c.is_finite())
        {
            return Err(Error::invalid("texture colors must be finite"));
        }
        Ok(())
    }

    /// Blend factor in `[0, 1]` at in-plane coordinates `(s, t)`.
    ///
    /// The checker is a smoothed product of sines, so it stays bandlimited
    /// enough for bilinear resampling.
    pub fn blend(&self, s: f64, t: f64) -> f64 {
        let k = 2.0 * std::f64::consts::PI / self.period_m;
        let (a, b) = ((k * s).sin(), (k * t).sin());
        match self.kind {
            TextureKind::Checker => {
                0.5 + 0.5 * (CHECKER_SHARPNESS * a * b).tanh() / CHECKER_SHARPNESS.tanh()
            }
            TextureKind::Gradient => 0.5 + 0.25 * (a + (k * t).cos()) * (1.0 - 0.5 * b * b),
        }
    }

    pub fn color(&self, s: f64, t: f64) -> [f64; 3] {
        let m = self.blend(s, t);
        std::array::from_fn(|k| self.color_a[k] + m * (self.color_b[k] - self.color_a[k]))
    }
}

fn default_wall_texture(wall: usize) -> TextureSpec {
    let tint = [
        [0.55, 0.35, 0.30],
        [0.30, 0.50, 0.35],
        [0.35, 0.35, 0.55],
        [0.50, 0.45, 0.30],
        [0.30, 0.45, 0.50],
        [0.50, 0.30, 0.50],
    ][wall];
    TextureSpec {
        kind: TextureKind::Checker,
        period_m: 0.6 + 0.1 * wall as f64,
        color_a: tint.map(|c| c - 0.25),
        color_b: tint.map(|c| c + 0.25),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub half_extents: [f64; 3],
}

/// Axis-aligned interior box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    pub texture: TextureSpec,
}

impl Obstacle {
    fn lo(&self, i: usize) -> f64 {
        self.center[i] - self.half_extents[i]
    }

    fn hi(&self, i: usize) -> f64 {
        self.center[i] + self.half_extents[i]
    }

    /// Closed-box containment.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.lo(i) && p[i] <= self.hi(i))
    }

    /// Entry distance and entry axis of a ray starting outside the box.
    fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, usize)> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        let mut axis = 0;
        for i in 0..3 {
            if d[i] == 0.0 {
                if o[i] < self.lo(i) || o[i] > self.hi(i) {
                    return None;
                }
                continue;
            }
            let a = (self.lo(i) - o[i]) / d[i];
            let b = (self.hi(i) - o[i]) / d[i];
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            if a > t_near {
                t_near = a;
                axis = i;
            }
            t_far = t_far.min(b);
        }
        (t_near > 0.0 && t_near <= t_far).then_some((t_near, axis))
    }
}

/// Scene file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub room: RoomSpec,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub textures: BTreeMap<String, TextureSpec>,
}

/// A validated box room.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    half: Vector3<f64>,
    walls: [TextureSpec; 6],
    obstacles: Vec<Obstacle>,
}

/// Nearest surface along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the unit ray.
    pub t: f64,
    pub color: [f64; 3],
}

fn plane_coords(p: &Vector3<f64>, axis: usize) -> (f64, f64) {
    match axis {
        0 => (p.y, p.z),
        1 => (p.x, p.z),
        _ => (p.x, p.y),
    }
}

impl SyntheticScene {
    pub fn from_spec(spec: &SceneSpec) -> Result<Self> {
        let h = spec.room.half_extents;
        if h.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("room half-extents must be positive"));
        }
        let mut walls: [TextureSpec; 6] = std::array::from_fn(default_wall_texture);
        for (id, tex) in &spec.textures {
            let i = WALL_IDS
                .iter()
                .position(|w| w == id)
                .ok_or_else(|| Error::invalid(format!("unknown wall id {id:?}")))?;
            tex.validate()?;
            walls[i] = *tex;
        }
        for (n, o) in spec.obstacles.iter().enumerate() {
            o.texture.validate()?;
            for i in 0..3 {
                let he = o.half_extents[i];
                if !(he.is_finite() && he > 0.0 && o.center[i].is_finite()) {
                    return Err(Error::invalid(format!("obstacle {n} has an invalid box")));
                }
                if o.lo(i) <= -h[i] || o.hi(i) >= h[i] {
                    return Err(Error::invalid(format!("obstacle {n} does not fit inside the room")));
                }
            }
        }
        Ok(SyntheticScene {
            half: h.into(),
            walls,
            obstacles: spec.obstacles.clone(),
        })
    }

    pub fn to_spec(&self) -> SceneSpec {
        SceneSpec {
            room: RoomSpec {
                half_extents: self.half.into(),
            },
            obstacles: self.obstacles.clone(),
            textures: WALL_IDS
                .iter()
                .zip(&self.walls)
                .map(|(id, t)| (id.to_string(), *t))
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        SyntheticScene::from_spec(&serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SyntheticScene::from_json(&std::fs::read_to_string(path)?)
    }

    /// An empty room with default wall textures.
    pub fn empty_room(half_extents: [f64; 3]) -> Result<Self> {
        SyntheticScene::from_spec(&SceneSpec {
            room: RoomSpec { half_extents },
            obstacles: Vec::new(),
            textures: BTreeMap::new(),
        })
    }

    pub fn half_extents(&self) -> Vector3<f64> {
        self.half
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn wall_texture(&self, wall: usize) -> &TextureSpec {
        &self.walls[wall]
    }

    /// Strictly inside the room and outside every obstacle.
    pub fn in_free_space(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i].abs() < self.half[i]) && !self.obstacles.iter().any(|o| o.contains(p))
    }

    fn check_pose(&self, pose: &PoseSE3) -> Result<()> {
        if !pose.is_finite() || !self.in_free_space(&pose.translation) {
            return Err(Error::invalid(format!(
                "camera position {:?} is not in free space",
                pose.translation.as_slice()
            )));
        }
        Ok(())
    }

    /// Nearest surface along the unit direction `d` from `o`, which must lie
    /// in free space.
    pub fn ray_cast(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Hit {
        let mut best_t = f64::INFINITY;
        let mut best_axis = 0;
        let mut best_tex = &self.walls[0];
        for i in 0..3 {
            if d[i] == 0.0 {
                continue;
            }
            let positive = d[i] > 0.0;
            let plane = if positive { self.half[i] } else { -self.half[i] };
            let t = (plane - o[i]) / d[i];
            if t < best_t {
                best_t = t;
                best_axis = i;
                best_tex = &self.walls[2 * i + positive as usize];
            }
        }
        for ob in &self.obstacles {
            if let Some((t, axis)) = ob.intersect(o, d) {
                if t < best_t {
                    best_t = t;
                    best_axis = axis;
                    best_tex = &ob.texture;
                }
            }
        }
        let p = o + d * best_t;
        let (s, t) = plane_coords(&p, best_axis);
        Hit {
            t: best_t,
            color: best_tex.color(s, t),
        }
    }

    /// Ray-cast color and depth for a camera-frame direction.
    fn shade(&self, pose: &PoseSE3, ray_cam: &Vector3<f64>) -> Hit {
        let d = pose.rotation.apply(&ray_cam.normalize());
        self.ray_cast(&pose.translation, &d)
    }

    /// Uniformly random pose with position in free space within `radius` of
    /// the room center (per axis) and arbitrary orientation.
    pub fn random_camera_pose(&self, rng: &mut impl Rng, radius: f64) -> PoseSE3 {
        loop {
            let t = Vector3::from_fn(|i, _| {
                let r = radius.min(0.9 * self.half[i]);
                rng.random_range(-r..=r)
            });
            if !self.in_free_space(&t) {
                continue;
            }
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            return PoseSE3::new(Rotation3::from_axis_angle(&(random_unit(rng) * angle)), t);
        }
    }
}

/// Renders an RGB panorama and its ray-length depth.
pub fn render_equirect(
    scene: &SyntheticScene,
    pose: &PoseSE3,
    height: usize,
) -> Result<(EquirectImage, EquirectImage)> {
    scene.check_pose(pose)?;
    if height < 2 {
        return Err(Error::invalid("panorama height must be >= 2"));
    }
    let width = 2 * height;
    let mut rgb = vec![0.0; width * height * 3];
    let mut depth = vec![0.0; width * height];
    rgb.par_chunks_mut(width * 3)
        .zip(depth.par_chunks_mut(width))
        .enumerate()
        .for_each(|(row, (rgb_row, depth_row))| {
            for col in 0..width {
                let ray = sphere_to_ray(pixel_to_sphere(row as f64, col as f64, height));
                let hit = scene.shade(pose, &ray);
                rgb_row[col * 3..col * 3 + 3].copy_from_slice(&hit.color);
                depth_row[col] = hit.t;
            }
        });
    Ok((
        EquirectImage::new(Raster::from_vec(width, height, 3, rgb)?)?,
        EquirectImage::new(Raster::from_vec(width, height, 1, depth)?)?,
    ))
}

/// Renders directly onto the cube face grids, with exact depth at every
/// texel center.
pub fn render_cubemap(
    scene: &SyntheticScene,
    pose: &PoseSE3,
    face_width: usize,
) -> Result<(Cubemap, CubemapDepth)> {
    scene.check_pose(pose)?;
    let faces: Vec<(Raster, Raster)> = Face::ALL
        .par_iter()
        .map(|&f| {
            let grid = make_face_grid(f, face_width)?;
            let mut rgb = Raster::new(face_width, face_width, 3);
            let mut depth = Raster::new(face_width, face_width, 1);
            for v in 0..face_width {
                for u in 0..face_width {
                    let hit = scene.shade(pose, &grid.ray(u, v));
                    rgb.pixel_mut(u, v).copy_from_slice(&hit.color);
                    depth.set(u, v, 0, hit.t);
                }
            }
            Ok((rgb, depth))
        })
        .collect::<Result<_>>()?;
    let (rgb, depth): (Vec<_>, Vec<_>) = faces.into_iter().unzip();
    Ok((Cubemap::new(rgb)?, CubemapDepth::new(Cubemap::new(depth)?)?))
}

/// `inverse(pose_ref) ∘ pose_tgt`: the target camera expressed in the
/// reference camera frame.
pub fn relative_pose(pose_ref: &PoseSE3, pose_tgt: &PoseSE3) -> PoseSE3 {
    pose_ref.inverse().compose(pose_tgt)
}

/// World-from-camera poses sampled at a fixed frame rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrajectoryFile", into = "TrajectoryFile")]
pub struct Trajectory {
    fps: f64,
    poses: Vec<PoseSE3>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    fps: f64,
    poses: Vec<PoseRecord>,
}

impl TryFrom<TrajectoryFile> for Trajectory {
    type Error = Error;

    fn try_from(f: TrajectoryFile) -> Result<Self> {
        Trajectory::new(f.fps, f.poses.into_iter().map(PoseSE3::from).collect())
    }
}

impl From<Trajectory> for TrajectoryFile {
    fn from(t: Trajectory) -> Self {
        TrajectoryFile {
            fps: t.fps,
            poses: t.poses.iter().map(PoseRecord::from).collect(),
        }
    }
}

impl Trajectory {
    pub fn new(fps: f64, poses: Vec<PoseSE3>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be > 0, got {fps}")));
        }
        if poses.is_empty() {
            return Err(Error::invalid("trajectory has no poses"));
        }
        if poses.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("trajectory contains a non-finite pose"));
        }
        Ok(Trajectory { fps, poses })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn poses(&self) -> &[PoseSE3] {
        &self.poses
    }

    pub fn timestamp(&self, i: usize) -> f64 {
        i as f64 / self.fps
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Trajectory::from_json(&std::fs::read_to_string(path)?)
    }

    /// Relative poses between consecutive frames.
    pub fn relative_poses(&self) -> Vec<PoseSE3> {
        self.poses
            .windows(2)
            .map(|w| relative_pose(&w[0], &w[1]))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub pose: PoseSE3,
    pub rgb: EquirectImage,
    pub depth: EquirectImage,
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    /// `relative[t] = inverse(pose_t) ∘ pose_{t+1}`.
    pub relative: Vec<PoseSE3>,
}

pub fn render_sequence(
    scene: &SyntheticScene,
    trajectory: &Trajectory,
    height: usize,
) -> Result<Sequence> {
    let frames = trajectory
        .poses()
        .par_iter()
        .map(|p| {
            let (rgb, depth) = render_equirect(scene, p, height)?;
            Ok(Frame {
                pose: *p,
                rgb,
                depth,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sequence {
        frames,
        relative: trajectory.relative_poses(),
    })
}

/// Marks reference texels whose 3D point is hidden from the target camera.
///
/// `false` where a surface seen from the target lies more than
/// [`OCCLUSION_TOLERANCE`] in front of the point; `true` otherwise,
/// including texels without valid depth.
pub fn occlusion_mask(
    scene: &SyntheticScene,
    pose_ref: &PoseSE3,
    pose_tgt: &PoseSE3,
    depth_ref: &CubemapDepth,
) -> CubeMask {
    let w = depth_ref.face_width();
    let cloud = depth_to_pointcloud(depth_ref);
    let faces: Vec<Vec<bool>> = Face::ALL
        .par_iter()
        .map(|&f| {
            let mut m = vec![true; w * w];
            for v in 0..w {
                for u in 0..w {
                    let Some(q) = cloud.point(f, u, v) else {
                        continue;
                    };
                    let x = pose_ref.transform_point(&q);
                    let to = x - pose_tgt.translation;
                    let dist = to.norm();
                    if dist == 0.0 {
                        continue;
                    }
                    let hit = scene.ray_cast(&pose_tgt.translation, &(to / dist));
                    m[v * w + u] = hit.t >= dist - OCCLUSION_TOLERANCE;
                }
            }
            m
        })
        .collect();
    CubeMask::from_faces(w, faces).expect("faces sized to the depth map")
}

/// Per-axis radius around the room center that generated scenes keep free
/// of obstacles.
pub const GENERATED_FREE_RADIUS: f64 = 0.4;

fn random_texture(rng: &mut ChaCha8Rng) -> TextureSpec {
    let kind = if rng.random_bool(0.7) {
        TextureKind::Checker
    } else {
        TextureKind::Gradient
    };
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.5));
    let contrast = rng.random_range(0.3..0.45);
    TextureSpec {
        kind,
        period_m: rng.random_range(0.5..1.2),
        color_a: base,
        color_b: base.map(|c| c + contrast),
    }
}

/// One random scene: room half-extents in `[1.6, 2.4]` m, up to two
/// obstacles kept clear of [`GENERATED_FREE_RADIUS`].
pub fn generate_scene(rng: &mut ChaCha8Rng) -> SyntheticScene {
    let half: [f64; 3] = std::array::from_fn(|_| rng.random_range(1.6..2.4));
    let textures = WALL_IDS
        .iter()
        .map(|id| (id.to_string(), random_texture(rng)))
        .collect();
    let n = rng.random_range(0..=2);
    let mut obstacles = Vec::with_capacity(n);
    for _ in 0..n {
        let he: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.15..0.35));
        // Push the box toward one of the four side walls.
        let axis = if rng.random_bool(0.5) { 0 } else { 2 };
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut center = [0.0; 3];
        for i in 0..3 {
            let span = half[i] - he[i] - 0.05;
            center[i] = if i == axis {
                sign * (half[i] - he[i] - rng.random_range(0.05..0.3))
            } else {
                rng.random_range(-span..span)
            };
        }
        obstacles.push(Obstacle {
            center,
            half_extents: he,
            texture: random_texture(rng),
        });
    }
    SyntheticScene::from_spec(&SceneSpec {
        room: RoomSpec { half_extents: half },
        obstacles,
        textures,
    })
    .expect("generated scenes are valid")
}

/// `n` scenes drawn from one seeded stream.
pub fn generate_scenes(seed: u64, n: usize) -> Vec<SyntheticScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| generate_scene(&mut rng)).collect()
}

/// A random smooth trajectory of `frames` poses starting near the center,
/// with per-step motion of at most `max_rot_rad` and `max_trans_m`.
pub fn generate_trajectory(
    scene: &SyntheticScene,
    rng: &mut ChaCha8Rng,
    frames: usize,
    max_rot_rad: f64,
    max_trans_m: f64,
) -> Result<Trajectory> {
    let mut poses = vec![scene.random_camera_pose(rng, 0.2)];
    while poses.len() < frames {
        let prev = *poses.last().unwrap();
        let step = random_motion(rng, max_rot_rad, max_trans_m);
        let next = prev.compose(&step);
        if scene.in_free_space(&next.translation) {
            poses.push(next);
        }
    }
    Trajectory::new(30.0, poses)
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random rigid motion with rotation angle `<= max_rot_rad` and
/// translation norm `<= max_trans_m`.
pub fn random_motion(rng: &mut impl Rng, max_rot_rad: f64, max_trans_m: f64) -> PoseSE3 {
    let w = random_unit(rng) * rng.random_range(0.0..=max_rot_rad);
    let t = random_unit(rng) * rng.random_range(0.0..=max_trans_m);
    PoseSE3::from_axis_angle_translation(w, t)
}
