//! Self-supervision objectives: photometric consistency, pose consistency,
//! depth smoothness, explainability regularization, and their weighted sum.
//!
//! Reductions sum per face in parallel, then combine the six partial sums in
//! canonical face order, so results do not depend on thread count.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube_padding::cube_pad_rasters;
use crate::error::{Error, Result};
use crate::geometry::{face_rotation, Face, PoseSE3};
use crate::projection::{CubeMask, Cubemap};
use crate::warping::CubemapDepth;

/// Per-texel explainability weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskMap(Cubemap);

impl MaskMap {
    pub fn new(cube: Cubemap) -> Result<Self> {
        if cube.channels() != 1 {
            return Err(Error::invalid("mask must have one channel"));
        }
        if cube
            .faces()
            .iter()
            .flat_map(|f| f.data())
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid("mask values must lie in [0, 1]"));
        }
        Ok(MaskMap(cube))
    }

    pub fn ones(face_width: usize) -> Self {
        MaskMap(Cubemap::filled(face_width, 1, 1.0))
    }

    /// `1` where `mask` is set, `floor` elsewhere.
    pub fn from_mask(mask: &CubeMask, floor: f64) -> Result<Self> {
        let w = mask.face_width();
        MaskMap::new(Cubemap::from_fn(w, 1, |f, u, v, _| {
            if mask.get(f, u, v) {
                1.0
            } else {
                floor
            }
        }))
    }

    pub fn cubemap(&self) -> &Cubemap {
        &self.0
    }
}

/// Weights of the auxiliary terms in the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_pose: f64,
    pub lambda_sm: f64,
    pub lambda_exp: f64,
}

impl LossWeights {
    pub fn new(lambda_pose: f64, lambda_sm: f64, lambda_exp: f64) -> Result<Self> {
        let w = LossWeights {
            lambda_pose,
            lambda_sm,
            lambda_exp,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_pose", self.lambda_pose),
            ("lambda_sm", self.lambda_sm),
            ("lambda_exp", self.lambda_exp),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for LossWeights {
    /// `λ_pose = 0.1`, `λ_sm = 0.04`, `λ_exp = 0.3`.
    fn default() -> Self {
        LossWeights {
            lambda_pose: 0.1,
            lambda_sm: 0.04,
            lambda_exp: 0.3,
        }
    }
}

/// Mean over valid texels and channels of `x · |ref − warped|`.
///
/// The mean divides by the number of valid texels (times channels), not by
/// the full texel count.
pub fn photometric_loss(
    reference: &Cubemap,
    warped: &Cubemap,
    valid: &CubeMask,
    x: &MaskMap,
) -> Result<f64> {
    let w = reference.face_width();
    if !reference.same_shape(warped) || valid.face_width() != w || x.cubemap().face_width() != w {
        return Err(Error::invalid("photometric loss inputs differ in shape"));
    }
    let c = reference.channels();
    let partial: Vec<(f64, usize)> = Face::ALL
        .par_iter()
        .map(|&f| {
            let a = reference.face(f).data();
            let b = warped.face(f).data();
            let m = valid.face(f);
            let xs = x.cubemap().face(f).data();
            let mut sum = 0.0;
            let mut n = 0;
            for i in 0..w * w {
                if !m[i] {
                    continue;
                }
                n += 1;
                let mut s = 0.0;
                for k in 0..c {
                    s += (a[i * c + k] - b[i * c + k]).abs();
                }
                sum += xs[i] * s;
            }
            (sum, n)
        })
        .collect();
    let (sum, n) = partial
        .into_iter()
        .fold((0.0, 0), |(s, n), (a, b)| (s + a, n + b));
    if n == 0 {
        return Err(Error::invalid("photometric loss over an empty valid set"));
    }
    Ok(sum / (n * c) as f64)
}

/// Expresses a pose estimated in `face`'s camera frame in the front frame:
/// `(Rf · R · Rfᵀ, Rf · T)` with `Rf = face_rotation(face)`.
pub fn transform_pose_to_front(p_face: &PoseSE3, face: Face) -> PoseSE3 {
    let rf = face_rotation(face);
    PoseSE3::new(
        rf * p_face.rotation * rf.transpose(),
        rf.apply(&p_face.translation),
    )
}

/// Inverse of [`transform_pose_to_front`].
pub fn transform_pose_from_front(p_front: &PoseSE3, face: Face) -> PoseSE3 {
    let rf = face_rotation(face);
    PoseSE3::new(
        rf.transpose() * p_front.rotation * rf,
        rf.transpose().apply(&p_front.translation),
    )
}

/// Statistics of the six front-frame pose encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseConsistency {
    /// Root of the mean of the six per-component population variances.
    pub loss: f64,
    /// Componentwise mean `(axis-angle rad, translation m)`.
    pub mean: [f64; 6],
    /// Per-component population standard deviation.
    pub component_std: [f64; 6],
}

/// Pose consistency with per-component diagnostics. `poses` is indexed in
/// canonical face order.
pub fn pose_consistency(poses: &[PoseSE3; 6]) -> PoseConsistency {
    let enc: Vec<[f64; 6]> = Face::ALL
        .iter()
        .map(|&f| transform_pose_to_front(&poses[f.index()], f).to_vector6())
        .collect();
    let mut mean = [0.0; 6];
    for e in &enc {
        for k in 0..6 {
            mean[k] += e[k] / 6.0;
        }
    }
    let mut var = [0.0; 6];
    for e in &enc {
        for k in 0..6 {
            var[k] += (e[k] - mean[k]).powi(2) / 6.0;
        }
    }
    PoseConsistency {
        loss: (var.iter().sum::<f64>() / 6.0).sqrt(),
        mean,
        component_std: var.map(f64::sqrt),
    }
}

pub fn pose_consistency_loss(poses: &[PoseSE3; 6]) -> f64 {
    pose_consistency(poses).loss
}

/// Mean absolute 5-point Laplacian of depth over all texels, with neighbors
/// across cube edges supplied by cube padding.
pub fn smoothness_loss(d: &CubemapDepth) -> f64 {
    let w = d.face_width();
    let padded = cube_pad_rasters(d.cubemap(), 1).expect("face width >= 2 admits pad 1");
    let partial: Vec<f64> = padded
        .par_iter()
        .map(|p| {
            let mut s = 0.0;
            for v in 1..=w {
                for u in 1..=w {
                    let lap = p.get(u + 1, v, 0) + p.get(u - 1, v, 0) + p.get(u, v + 1, 0)
                        + p.get(u, v - 1, 0)
                        - 4.0 * p.get(u, v, 0);
                    s += lap.abs();
                }
            }
            s
        })
        .collect();
    partial.iter().sum::<f64>() / (6 * w * w) as f64
}

/// `−(1/N) Σ log x`.
pub fn explainability_loss(x: &MaskMap) -> Result<f64> {
    let c = x.cubemap();
    let mut sum = 0.0;
    for face in c.faces() {
        for &v in face.data() {
            if v <= 0.0 {
                return Err(Error::invalid("explainability mask must be strictly positive"));
            }
            sum += v.ln();
        }
    }
    Ok(0.0 - sum / c.pixel_count() as f64)
}

/// Unweighted loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub rec: f64,
    pub pose: f64,
    pub sm: f64,
    pub exp: f64,
}

pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    parts.rec + w.lambda_pose * parts.pose + w.lambda_sm * parts.sm + w.lambda_exp * parts.exp
}

/// Serialized loss record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub rec: f64,
    pub pose: f64,
    pub sm: f64,
    pub exp: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossReport {
    pub fn new(parts: LossParts, weights: LossWeights) -> Self {
        LossReport {
            rec: parts.rec,
            pose: parts.pose,
            sm: parts.sm,
            exp: parts.exp,
            total: total_loss(&parts, &weights),
            weights,
        }
    }
}

/// Replicates one front-frame pose into the six per-face frames.
pub fn replicate_front_pose(p_front: &PoseSE3) -> [PoseSE3; 6] {
    Face::ALL.map(|f| transform_pose_from_front(p_front, f))
}

/// Point `x_face` in `face`'s camera frame, expressed in the front frame.
pub fn face_point_to_front(face: Face, x_face: &Vector3<f64>) -> Vector3<f64> {
    face_rotation(face).apply(x_face)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube_padding::unfold_texel;
    use crate::geometry::{make_face_grid, Rotation3};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, scale: f64) -> PoseSE3 {
        let w = Vector3::from_fn(|_, _| rng.random_range(-scale..scale));
        let t = Vector3::from_fn(|_, _| rng.random_range(-scale..scale));
        PoseSE3::from_axis_angle_translation(w, t)
    }

    #[test]
    fn photometric_examples() {
        let a = Cubemap::filled(4, 3, 0.2);
        let b = Cubemap::filled(4, 3, 0.5);
        let all = CubeMask::filled(4, true);
        let ones = MaskMap::ones(4);
        assert_eq!(photometric_loss(&a, &a, &all, &ones).unwrap(), 0.0);
        let zeros = MaskMap::new(Cubemap::filled(4, 1, 0.0)).unwrap();
        assert_eq!(photometric_loss(&a, &b, &all, &zeros).unwrap(), 0.0);
        assert_abs_diff_eq!(photometric_loss(&a, &b, &all, &ones).unwrap(), 0.3, epsilon = 1e-15);
        assert!(photometric_loss(&a, &Cubemap::filled(4, 1, 0.0), &all, &ones).is_err());
        assert!(photometric_loss(&a, &b, &CubeMask::filled(4, false), &ones).is_err());
    }

    #[test]
    fn photometric_normalizes_by_valid_count() {
        let a = Cubemap::filled(4, 1, 0.0);
        let mut b = Cubemap::filled(4, 1, 1.0);
        b.face_mut(Face::Up).set(0, 0, 0, 0.5);
        let mut valid = CubeMask::filled(4, false);
        valid.set(Face::Up, 0, 0, true);
        valid.set(Face::Down, 1, 1, true);
        let l = photometric_loss(&a, &b, &valid, &MaskMap::ones(4)).unwrap();
        assert_abs_diff_eq!(l, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn photometric_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let w = 7;
        let a = Cubemap::from_fn(w, 2, |_, _, _, _| rng.random());
        let b = Cubemap::from_fn(w, 2, |_, _, _, _| rng.random());
        let x = MaskMap::new(Cubemap::from_fn(w, 1, |_, _, _, _| rng.random())).unwrap();
        let mut valid = CubeMask::filled(w, true);
        for f in Face::ALL {
            for v in 0..w {
                for u in 0..w {
                    valid.set(f, u, v, rng.random_bool(0.7));
                }
            }
        }
        let (mut sum, mut n) = (0.0, 0.0);
        for f in Face::ALL {
            for v in 0..w {
                for u in 0..w {
                    if valid.get(f, u, v) {
                        for k in 0..2 {
                            let d = a.face(f).get(u, v, k) - b.face(f).get(u, v, k);
                            sum += x.cubemap().face(f).get(u, v, 0) * d.abs();
                            n += 1.0;
                        }
                    }
                }
            }
        }
        let l = photometric_loss(&a, &b, &valid, &x).unwrap();
        assert!((l - sum / n).abs() < 1e-9);
    }

    #[test]
    fn pose_to_front_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = random_pose(&mut rng, 0.5);
        assert_eq!(transform_pose_to_front(&p, Face::Front), p);
        for f in Face::ALL {
            let id = transform_pose_to_front(&PoseSE3::identity(), f);
            assert!((id.rotation.matrix() - Rotation3::identity().matrix()).amax() < 1e-15);
            assert_eq!(id.translation, Vector3::zeros());
        }
        let pr = transform_pose_from_front(&p, Face::Right);
        let back = transform_pose_to_front(&pr, Face::Right);
        assert!((back.rotation.matrix() - p.rotation.matrix()).amax() < 1e-9);
        assert!((back.translation - p.translation).amax() < 1e-9);
    }

    #[test]
    fn face_frame_motion_maps_to_front_frame_motion() {
        // A rig motion observed in a face camera frame, moved to the front
        // frame, must act on front-frame points like the rig motion itself.
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p_front = random_pose(&mut rng, 0.4);
        for f in Face::ALL {
            let rf = face_rotation(f);
            // Face-frame motion derived from first principles: x_f ↦ Rfᵀ P (Rf x_f).
            let r_face = rf.transpose() * p_front.rotation * rf;
            let t_face = rf.transpose().apply(&p_front.translation);
            let p_face = PoseSE3::new(r_face, t_face);
            let x_f = Vector3::new(0.3, -0.2, 1.5);
            let moved_face = p_face.transform_point(&x_f);
            assert!(
                (face_point_to_front(f, &moved_face)
                    - p_front.transform_point(&face_point_to_front(f, &x_f)))
                .amax()
                    < 1e-12
            );
            let rec = transform_pose_to_front(&p_face, f);
            assert!((rec.rotation.matrix() - p_front.rotation.matrix()).amax() < 1e-12);
            assert!((rec.translation - p_front.translation).amax() < 1e-12);
        }
    }

    #[test]
    fn pose_consistency_null_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = random_pose(&mut rng, 0.3);
        assert!(pose_consistency_loss(&replicate_front_pose(&p)) <= 1e-9);
        assert_eq!(pose_consistency_loss(&[PoseSE3::identity(); 6]), 0.0);
    }

    #[test]
    fn pose_consistency_matches_std_oracle() {
        let eps = 0.06;
        let fronts: Vec<PoseSE3> = (0..6)
            .map(|i| {
                let s = if i % 2 == 0 { eps } else { -eps };
                PoseSE3::from_translation(Vector3::new(0.0, 0.0, s))
            })
            .collect();
        let poses: [PoseSE3; 6] =
            std::array::from_fn(|i| transform_pose_from_front(&fronts[i], Face::ALL[i]));
        // Hand-rolled statistics over the 6x6 matrix of encodings.
        let rows: Vec<[f64; 6]> = fronts.iter().map(|p| p.to_vector6()).collect();
        let mut total = 0.0;
        for k in 0..6 {
            let m: f64 = rows.iter().map(|r| r[k]).sum::<f64>() / 6.0;
            total += rows.iter().map(|r| (r[k] - m) * (r[k] - m)).sum::<f64>() / 6.0;
        }
        let oracle = (total / 6.0).sqrt();
        let got = pose_consistency(&poses);
        assert!((got.loss - oracle).abs() < 1e-9);
        assert_abs_diff_eq!(got.loss, eps / 6f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(got.component_std[5], eps, epsilon = 1e-12);
    }

    #[test]
    fn pose_consistency_detects_single_perturbation_and_ignores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let p = random_pose(&mut rng, 0.3);
        let mut poses = replicate_front_pose(&p);
        let kick = Rotation3::from_axis_angle(&Vector3::new(0.0, 2e-3, 0.0));
        poses[3].rotation = kick * poses[3].rotation;
        let base = pose_consistency_loss(&poses);
        assert!(base > 0.0);

        // Permuting which face holds which front-frame pose leaves it unchanged.
        let fronts: Vec<PoseSE3> = Face::ALL
            .iter()
            .map(|&f| transform_pose_to_front(&poses[f.index()], f))
            .collect();
        let perm = [4, 0, 5, 2, 1, 3];
        let shuffled: [PoseSE3; 6] =
            std::array::from_fn(|i| transform_pose_from_front(&fronts[perm[i]], Face::ALL[i]));
        assert!((pose_consistency_loss(&shuffled) - base).abs() < 1e-12);
    }

    fn random_depth(rng: &mut ChaCha8Rng, w: usize) -> CubemapDepth {
        CubemapDepth::new(Cubemap::from_fn(w, 1, |_, _, _, _| rng.random_range(0.5..4.0))).unwrap()
    }

    // Neighbor of texel (f,u,v) one step in (du,dv); off-face steps unfold
    // onto the adjacent face.
    fn neighbor(f: Face, u: i64, v: i64, w: usize) -> (Face, usize, usize) {
        let wi = w as i64;
        if (0..wi).contains(&u) && (0..wi).contains(&v) {
            (f, u as usize, v as usize)
        } else {
            unfold_texel(f, u, v, w)
        }
    }

    #[test]
    fn smoothness_examples() {
        let c = CubemapDepth::new(Cubemap::filled(8, 1, 3.0)).unwrap();
        assert_eq!(smoothness_loss(&c), 0.0);

        // An affine ramp along one face axis has zero interior Laplacian.
        let ramp = CubemapDepth::new(Cubemap::from_fn(8, 1, |_, u, v, _| 1.0 + 0.1 * u as f64 + 0.05 * v as f64)).unwrap();
        let p = cube_pad_rasters(ramp.cubemap(), 1).unwrap();
        for face in &p {
            for v in 2..8 {
                for u in 2..8 {
                    let lap = face.get(u + 1, v, 0) + face.get(u - 1, v, 0) + face.get(u, v + 1, 0)
                        + face.get(u, v - 1, 0)
                        - 4.0 * face.get(u, v, 0);
                    assert!(lap.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn smoothness_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for w in [2, 5, 8] {
            let d = random_depth(&mut rng, w);
            let mut sum = 0.0;
            for f in Face::ALL {
                for v in 0..w as i64 {
                    for u in 0..w as i64 {
                        let at = |(g, a, b): (Face, usize, usize)| d.get(g, a, b);
                        let lap = at(neighbor(f, u + 1, v, w))
                            + at(neighbor(f, u - 1, v, w))
                            + at(neighbor(f, u, v + 1, w))
                            + at(neighbor(f, u, v - 1, w))
                            - 4.0 * d.get(f, u as usize, v as usize);
                        sum += lap.abs();
                    }
                }
            }
            let oracle = sum / (6 * w * w) as f64;
            assert!((smoothness_loss(&d) - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn smoothness_shift_invariant_and_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let d = random_depth(&mut rng, 6);
        let s = smoothness_loss(&d);
        let shifted = CubemapDepth::new(d.cubemap().map(|x| x + 1.7)).unwrap();
        assert!((smoothness_loss(&shifted) - s).abs() < 1e-9);
        let doubled = CubemapDepth::new(d.cubemap().map(|x| 2.0 * x)).unwrap();
        assert!((smoothness_loss(&doubled) - 2.0 * s).abs() < 1e-9);
    }

    #[test]
    fn explainability_examples() {
        assert_eq!(explainability_loss(&MaskMap::ones(4)).unwrap(), 0.0);
        let e = MaskMap::new(Cubemap::filled(4, 1, (-1.0f64).exp())).unwrap();
        assert_abs_diff_eq!(explainability_loss(&e).unwrap(), 1.0, epsilon = 1e-15);
        let z = MaskMap::new(Cubemap::filled(4, 1, 0.0)).unwrap();
        assert!(explainability_loss(&z).is_err());
        assert!(MaskMap::new(Cubemap::filled(4, 1, 1.5)).is_err());
    }

    #[test]
    fn explainability_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let vals: Vec<f64> = (0..6 * 25).map(|_| rng.random_range(1e-3..=1.0)).collect();
        let mut it = vals.iter();
        let m = MaskMap::new(Cubemap::from_fn(5, 1, |_, _, _, _| *it.next().unwrap())).unwrap();
        let oracle = -vals.iter().map(|v| v.ln()).sum::<f64>() / vals.len() as f64;
        assert!((explainability_loss(&m).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&LossParts::default(), &w), 0.0);
        let ones = LossParts {
            rec: 1.0,
            pose: 1.0,
            sm: 1.0,
            exp: 1.0,
        };
        assert_abs_diff_eq!(total_loss(&ones, &w), 1.44, epsilon = 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        for _ in 0..100 {
            let p = LossParts {
                rec: rng.random(),
                pose: rng.random(),
                sm: rng.random(),
                exp: rng.random(),
            };
            let lw = LossWeights::new(rng.random(), rng.random(), rng.random()).unwrap();
            let oracle = p.rec + lw.lambda_pose * p.pose + lw.lambda_sm * p.sm + lw.lambda_exp * p.exp;
            assert!((total_loss(&p, &lw) - oracle).abs() < 1e-12);
        }
        assert!(LossWeights::new(-0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn grid_rays_are_consistent_with_face_point_to_front() {
        let g = make_face_grid(Face::Left, 4).unwrap();
        let local = crate::geometry::front_ray(1.0, 2.0, 4);
        assert_abs_diff_eq!(face_point_to_front(Face::Left, &local), g.ray(1, 2), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn photometric_is_nonnegative(seed: u64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Cubemap::from_fn(3, 1, |_, _, _, _| rng.random_range(-1.0..1.0));
            let b = Cubemap::from_fn(3, 1, |_, _, _, _| rng.random_range(-1.0..1.0));
            let x = MaskMap::new(Cubemap::from_fn(3, 1, |_, _, _, _| rng.random())).unwrap();
            prop_assert!(photometric_loss(&a, &b, &CubeMask::filled(3, true), &x).unwrap() >= 0.0);
        }

        #[test]
        fn explainability_is_nonincreasing_per_entry(seed: u64, bump in 0.0f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = Cubemap::from_fn(3, 1, |_, _, _, _| rng.random_range(0.1..0.5));
            let mut raised = base.clone();
            let v = raised.face(Face::Left).get(1, 1, 0);
            raised.face_mut(Face::Left).set(1, 1, 0, v + bump);
            let a = explainability_loss(&MaskMap::new(base).unwrap()).unwrap();
            let b = explainability_loss(&MaskMap::new(raised).unwrap()).unwrap();
            prop_assert!(b <= a + 1e-15);
        }
    }
}
