//! Direct photometric pose estimation on cubemaps.
//!
//! Minimizes the Huber-robustified photometric error between the reference
//! frame and the target frame warped into it, over the camera motion, with
//! Levenberg-Marquardt on a coarse-to-fine pyramid. The motion is the target
//! camera pose in the reference frame, as produced by
//! [`crate::synthetic::relative_pose`]. Updates compose on the left:
//! `M ← Exp(δ) ∘ M`, where `Exp` maps `(axis-angle, translation)` to a pose.

use nalgebra::{Matrix6, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube_padding::cube_pad_rasters;
use crate::error::{Error, Result};
use crate::geometry::{Face, PoseRecord, PoseSE3};
use crate::projection::Cubemap;
use crate::raster::Raster;
use crate::warping::{depth_to_pointcloud, CubemapDepth, WarpSource};

/// Minimum fraction of reference texels with valid depth.
pub const MIN_VALID_DEPTH_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Iteration cap per pyramid level.
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Damping beyond which a level gives up without converging.
    pub max_damping: f64,
    /// Converged once a step's norm falls below this.
    pub step_tolerance: f64,
    pub huber_threshold: f64,
    pub pyramid_levels: usize,
    /// Central-difference step for the residual Jacobian.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.2,
            max_damping: 1e10,
            step_tolerance: 1e-7,
            huber_threshold: 0.1,
            pyramid_levels: 3,
            fd_step: 1e-5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_damping", self.initial_damping),
            ("damping_up", self.damping_up),
            ("damping_down", self.damping_down),
            ("max_damping", self.max_damping),
            ("step_tolerance", self.step_tolerance),
            ("huber_threshold", self.huber_threshold),
            ("fd_step", self.fd_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.damping_up <= 1.0 || self.damping_down >= 1.0 {
            return Err(Error::invalid("damping_up must exceed 1 and damping_down be below 1"));
        }
        if self.max_iterations == 0 || self.pyramid_levels == 0 {
            return Err(Error::invalid("max_iterations and pyramid_levels must be >= 1"));
        }
        Ok(())
    }
}

/// One LM trial step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Pyramid level, 0 being full resolution.
    pub level: usize,
    /// Loss after the step if accepted, otherwise the loss it failed to beat.
    pub loss: f64,
    pub damping: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    #[serde(with = "pose_as_record")]
    pub pose: PoseSE3,
    pub converged: bool,
    /// Number of trial steps over all levels.
    pub iterations: usize,
    pub final_loss: f64,
    pub history: Vec<IterationRecord>,
}

mod pose_as_record {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &PoseSE3, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRecord::from(p).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PoseSE3, D::Error> {
        PoseRecord::deserialize(d).map(PoseSE3::from)
    }
}

fn exp6(d: &Vector6<f64>) -> PoseSE3 {
    PoseSE3::from_axis_angle_translation(
        Vector3::new(d[0], d[1], d[2]),
        Vector3::new(d[3], d[4], d[5]),
    )
}

/// Left perturbation `Exp(δ) ∘ pose`.
pub fn perturb(pose: &PoseSE3, delta: &[f64; 6]) -> PoseSE3 {
    exp6(&Vector6::from_column_slice(delta)).compose(pose)
}

/// Central-difference gradient of `objective` with respect to the six left
/// perturbation parameters at `pose`.
pub fn pose_jacobian_fd(
    objective: impl Fn(&PoseSE3) -> f64,
    pose: &PoseSE3,
    step: f64,
) -> Result<[f64; 6]> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    Ok(std::array::from_fn(|k| {
        let mut d = [0.0; 6];
        d[k] = step;
        let plus = objective(&perturb(pose, &d));
        d[k] = -step;
        let minus = objective(&perturb(pose, &d));
        (plus - minus) / (2.0 * step)
    }))
}

fn huber(r: f64, k: f64) -> f64 {
    let a = r.abs();
    if a <= k {
        0.5 * r * r
    } else {
        k * (a - 0.5 * k)
    }
}

fn huber_weight(r: f64, k: f64) -> f64 {
    let a = r.abs();
    if a <= k {
        1.0
    } else {
        k / a
    }
}

/// Photometric residuals of one pyramid level: reference points with valid
/// depth, their colors, and the padded target.
pub struct PhotometricObjective {
    points: Vec<Vector3<f64>>,
    colors: Vec<f64>,
    source: WarpSource,
    channels: usize,
    huber: f64,
}

impl PhotometricObjective {
    pub fn new(
        reference: &Cubemap,
        target: &Cubemap,
        depth_ref: &CubemapDepth,
        huber_threshold: f64,
    ) -> Result<Self> {
        let w = reference.face_width();
        if !reference.same_shape(target) || depth_ref.face_width() != w {
            return Err(Error::invalid("reference, target and depth differ in shape"));
        }
        let c = reference.channels();
        let cloud = depth_to_pointcloud(depth_ref);
        let mut points = Vec::new();
        let mut colors = Vec::new();
        for (f, u, v, p) in cloud.iter_valid() {
            points.push(p);
            colors.extend_from_slice(reference.face(f).pixel(u, v));
        }
        Ok(PhotometricObjective {
            points,
            colors,
            source: WarpSource::new(target),
            channels: c,
            huber: huber_threshold,
        })
    }

    pub fn residual_count(&self) -> usize {
        self.colors.len()
    }

    /// `warped − reference` per valid texel and channel under `motion`.
    pub fn residuals(&self, motion: &PoseSE3) -> Vec<f64> {
        let inv = motion.inverse();
        let c = self.channels;
        let mut r = vec![0.0; self.colors.len()];
        const CHUNK: usize = 1024;
        r.par_chunks_mut(CHUNK * c)
            .enumerate()
            .for_each(|(ci, out)| {
                let start = ci * CHUNK;
                for (j, px) in out.chunks_mut(c).enumerate() {
                    let i = start + j;
                    let q = inv.transform_point(&self.points[i]);
                    if self.source.sample_point(&q, px) {
                        for k in 0..c {
                            px[k] -= self.colors[i * c + k];
                        }
                    } else {
                        px.fill(0.0);
                    }
                }
            });
        r
    }

    fn cost_of(&self, r: &[f64]) -> f64 {
        r.iter().map(|&x| huber(x, self.huber)).sum::<f64>() / r.len().max(1) as f64
    }

    /// Mean Huber loss under `motion`.
    pub fn cost(&self, motion: &PoseSE3) -> f64 {
        self.cost_of(&self.residuals(motion))
    }
}

/// Halves a cubemap: each output texel is a separable `[1, 3, 3, 1] / 8`
/// tent over the 4×4 input window, with windows at face borders reaching
/// into cube-padded neighbors.
pub fn downsample_cubemap(src: &Cubemap) -> Result<Cubemap> {
    let w = src.face_width();
    if w % 2 != 0 || w < 4 {
        return Err(Error::invalid(format!("cannot halve face width {w}")));
    }
    let h = w / 2;
    let c = src.channels();
    let padded = cube_pad_rasters(src, 1)?;
    const TAP: [f64; 4] = [0.125, 0.375, 0.375, 0.125];
    let faces = padded
        .par_iter()
        .map(|p| {
            Raster::from_fn(h, h, c, |u, v, k| {
                let mut s = 0.0;
                for (j, wy) in TAP.iter().enumerate() {
                    for (i, wx) in TAP.iter().enumerate() {
                        s += wy * wx * p.get(2 * u + i, 2 * v + j, k);
                    }
                }
                s
            })
        })
        .collect();
    Cubemap::new(faces)
}

/// Halves a depth cubemap by averaging the valid texels of each 2×2 block.
pub fn downsample_depth(src: &CubemapDepth) -> Result<CubemapDepth> {
    let w = src.face_width();
    if w % 2 != 0 || w < 4 {
        return Err(Error::invalid(format!("cannot halve face width {w}")));
    }
    let h = w / 2;
    let faces = Face::ALL
        .iter()
        .map(|&f| {
            Raster::from_fn(h, h, 1, |u, v, _| {
                let (mut s, mut n) = (0.0, 0);
                for dv in 0..2 {
                    for du in 0..2 {
                        let d = src.get(f, 2 * u + du, 2 * v + dv);
                        if d > 0.0 {
                            s += d;
                            n += 1;
                        }
                    }
                }
                if n == 0 {
                    0.0
                } else {
                    s / n as f64
                }
            })
        })
        .collect();
    CubemapDepth::new(Cubemap::new(faces)?)
}

struct Level {
    reference: Cubemap,
    target: Cubemap,
    depth: CubemapDepth,
}

fn build_pyramid(
    reference: &Cubemap,
    target: &Cubemap,
    depth: &CubemapDepth,
    levels: usize,
) -> Result<Vec<Level>> {
    let w = reference.face_width();
    let coarsest = w >> (levels - 1);
    if levels > 1 && (w % (1 << (levels - 1)) != 0 || coarsest < 4) {
        return Err(Error::invalid(format!(
            "face width {w} does not support {levels} pyramid levels"
        )));
    }
    let mut out = vec![Level {
        reference: reference.clone(),
        target: target.clone(),
        depth: depth.clone(),
    }];
    for _ in 1..levels {
        let prev = out.last().unwrap();
        let next = Level {
            reference: downsample_cubemap(&prev.reference)?,
            target: downsample_cubemap(&prev.target)?,
            depth: downsample_depth(&prev.depth)?,
        };
        out.push(next);
    }
    Ok(out)
}

struct LevelOutcome {
    pose: PoseSE3,
    loss: f64,
    converged: bool,
}

fn jacobian(obj: &PhotometricObjective, m: &PoseSE3, h: f64) -> Vec<Vec<f64>> {
    (0..6)
        .map(|k| {
            let mut d = [0.0; 6];
            d[k] = h;
            let plus = obj.residuals(&perturb(m, &d));
            d[k] = -h;
            let minus = obj.residuals(&perturb(m, &d));
            plus.iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect()
        })
        .collect()
}

fn normal_equations(j: &[Vec<f64>], r: &[f64], k: f64) -> (Matrix6<f64>, Vector6<f64>) {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for i in 0..r.len() {
        let w = huber_weight(r[i], k);
        let row = Vector6::from_fn(|a, _| j[a][i]);
        h += w * row * row.transpose();
        g += w * r[i] * row;
    }
    (h, g)
}

fn solve_level(
    obj: &PhotometricObjective,
    init: PoseSE3,
    cfg: &SolverConfig,
    level: usize,
    history: &mut Vec<IterationRecord>,
) -> LevelOutcome {
    let mut pose = init;
    let mut r = obj.residuals(&pose);
    let mut loss = obj.cost_of(&r);
    let mut damping = cfg.initial_damping;
    let n = r.len().max(1) as f64;
    let mut trials = 0;
    while trials < cfg.max_iterations {
        let j = jacobian(obj, &pose, cfg.fd_step);
        let (h, g) = normal_equations(&j, &r, obj.huber);
        if g.amax() / n < 1e-15 {
            return LevelOutcome {
                pose,
                loss,
                converged: true,
            };
        }
        loop {
            let mut a = h;
            for d in 0..6 {
                a[(d, d)] += damping * h[(d, d)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => Vector6::zeros(),
            };
            let step_norm = step.norm();
            let candidate = exp6(&step).compose(&pose);
            let r_new = obj.residuals(&candidate);
            let loss_new = obj.cost_of(&r_new);
            trials += 1;
            let accepted = loss_new < loss;
            history.push(IterationRecord {
                level,
                loss: if accepted { loss_new } else { loss },
                damping,
                step_norm,
                accepted,
            });
            if accepted {
                pose = candidate;
                r = r_new;
                loss = loss_new;
                damping = (damping * cfg.damping_down).max(1e-12);
                if step_norm < cfg.step_tolerance {
                    return LevelOutcome {
                        pose,
                        loss,
                        converged: true,
                    };
                }
                break;
            }
            if step_norm < cfg.step_tolerance {
                // No representable improvement left near this point.
                return LevelOutcome {
                    pose,
                    loss,
                    converged: true,
                };
            }
            damping *= cfg.damping_up;
            if damping > cfg.max_damping || trials >= cfg.max_iterations {
                return LevelOutcome {
                    pose,
                    loss,
                    converged: false,
                };
            }
        }
    }
    LevelOutcome {
        pose,
        loss,
        converged: false,
    }
}

/// Estimates the motion taking the reference camera to the target camera.
///
/// `depth_ref` must be valid on at least [`MIN_VALID_DEPTH_FRACTION`] of
/// the reference texels.
pub fn estimate_pose(
    reference: &Cubemap,
    target: &Cubemap,
    depth_ref: &CubemapDepth,
    init: &PoseSE3,
    cfg: &SolverConfig,
) -> Result<PoseEstimate> {
    cfg.validate()?;
    if !reference.same_shape(target) || depth_ref.face_width() != reference.face_width() {
        return Err(Error::invalid("reference, target and depth differ in shape"));
    }
    if !init.is_finite() {
        return Err(Error::invalid("initial pose is not finite"));
    }
    let frac = depth_ref.valid_fraction();
    if frac < MIN_VALID_DEPTH_FRACTION {
        return Err(Error::Precondition(format!(
            "only {:.1}% of reference depth is valid",
            100.0 * frac
        )));
    }
    let pyramid = build_pyramid(reference, target, depth_ref, cfg.pyramid_levels)?;
    let mut history = Vec::new();
    let mut pose = *init;
    let mut outcome = None;
    for (level, lv) in pyramid.iter().enumerate().rev() {
        let obj = PhotometricObjective::new(&lv.reference, &lv.target, &lv.depth, cfg.huber_threshold)?;
        let o = solve_level(&obj, pose, cfg, level, &mut history);
        pose = o.pose;
        outcome = Some(o);
    }
    let o = outcome.expect("at least one level");
    Ok(PoseEstimate {
        pose: o.pose,
        converged: o.converged,
        iterations: history.len(),
        final_loss: o.loss,
        history,
    })
}
