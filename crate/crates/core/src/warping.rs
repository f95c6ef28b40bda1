//! Lifting cubemap depth to a point cloud and inverse-warping a target
//! cubemap onto the reference view.
//!
//! Depth is ray length: the distance from the camera center to the surface
//! along the texel's grid ray, in meters. Zero marks an invalid texel.
//!
//! Relative poses handed to this module transform reference-camera points
//! into the target camera frame. Given a camera motion `M` (target camera
//! expressed in the reference frame, as produced by
//! [`crate::synthetic::render_sequence`]), that transform is `M⁻¹`; see
//! [`warp_with_motion`].

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::cube_padding::cube_pad_rasters;
use crate::error::{Error, Result};
use crate::geometry::{face_pixel, make_face_grid, select_face, Face, PoseSE3};
use crate::projection::{ray_to_sphere, sphere_to_ray, CubeMask, Cubemap};
use crate::raster::Raster;

/// Single-channel cubemap of ray lengths in meters; zero is invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct CubemapDepth(Cubemap);

impl CubemapDepth {
    pub fn new(cube: Cubemap) -> Result<Self> {
        if cube.channels() != 1 {
            return Err(Error::invalid("depth cubemap must have one channel"));
        }
        for face in cube.faces() {
            for &d in face.data() {
                if !d.is_finite() {
                    return Err(Error::invalid("depth contains non-finite samples"));
                }
                if d < 0.0 {
                    return Err(Error::invalid(format!("negative depth sample {d}")));
                }
            }
        }
        Ok(CubemapDepth(cube))
    }

    pub fn cubemap(&self) -> &Cubemap {
        &self.0
    }

    pub fn into_cubemap(self) -> Cubemap {
        self.0
    }

    pub fn face_width(&self) -> usize {
        self.0.face_width()
    }

    pub fn get(&self, face: Face, u: usize, v: usize) -> f64 {
        self.0.face(face).get(u, v, 0)
    }

    pub fn valid_mask(&self) -> CubeMask {
        let w = self.face_width();
        CubeMask::from_faces(
            w,
            self.0
                .faces()
                .iter()
                .map(|f| f.data().iter().map(|&d| d > 0.0).collect())
                .collect(),
        )
        .expect("shape matches")
    }

    /// Fraction of valid texels.
    pub fn valid_fraction(&self) -> f64 {
        self.valid_mask().count() as f64 / self.0.pixel_count() as f64
    }
}

/// Per-texel 3D points in the camera frame, with validity.
#[derive(Debug, Clone)]
pub struct PointCloud {
    face_width: usize,
    points: Vec<Vec<Vector3<f64>>>,
    valid: CubeMask,
}

impl PointCloud {
    pub fn face_width(&self) -> usize {
        self.face_width
    }

    pub fn point(&self, face: Face, u: usize, v: usize) -> Option<Vector3<f64>> {
        if self.valid.get(face, u, v) {
            Some(self.points[face.index()][v * self.face_width + u])
        } else {
            None
        }
    }

    pub fn face_points(&self, face: Face) -> &[Vector3<f64>] {
        &self.points[face.index()]
    }

    pub fn valid(&self) -> &CubeMask {
        &self.valid
    }

    /// Valid points in canonical face order, row-major within each face.
    pub fn iter_valid(&self) -> impl Iterator<Item = (Face, usize, usize, Vector3<f64>)> + '_ {
        let w = self.face_width;
        Face::ALL.into_iter().flat_map(move |f| {
            (0..w * w).filter_map(move |i| {
                let (u, v) = (i % w, i / w);
                self.point(f, u, v).map(|p| (f, u, v, p))
            })
        })
    }
}

/// Scales each normalized grid ray by its depth.
pub fn depth_to_pointcloud(d: &CubemapDepth) -> PointCloud {
    let w = d.face_width();
    let points = Face::ALL
        .par_iter()
        .map(|&f| {
            let grid = make_face_grid(f, w).expect("depth cubemaps have width >= 2");
            let depth = d.cubemap().face(f).data();
            grid.rays()
                .iter()
                .zip(depth)
                .map(|(r, &z)| if z > 0.0 { r.normalize() * z } else { Vector3::zeros() })
                .collect()
        })
        .collect();
    PointCloud {
        face_width: w,
        points,
        valid: d.valid_mask(),
    }
}

/// Applies `x ↦ R·x + T` to every point; validity is unchanged.
pub fn transform_pointcloud(q: &PointCloud, p: &PoseSE3) -> PointCloud {
    PointCloud {
        face_width: q.face_width,
        points: q
            .points
            .par_iter()
            .map(|face| face.iter().map(|x| p.transform_point(x)).collect())
            .collect(),
        valid: q.valid.clone(),
    }
}

/// Target cubemap prepared for repeated warping: each face is cube-padded by
/// one texel so bilinear taps near a face border blend with the adjacent
/// face instead of clamping.
#[derive(Debug, Clone)]
pub struct WarpSource {
    face_width: usize,
    channels: usize,
    padded: Vec<Raster>,
}

impl WarpSource {
    pub fn new(target: &Cubemap) -> Self {
        WarpSource {
            face_width: target.face_width(),
            channels: target.channels(),
            padded: cube_pad_rasters(target, 1).expect("face width >= 2 admits pad 1"),
        }
    }

    pub fn face_width(&self) -> usize {
        self.face_width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Samples the target at the sphere position of `p`; `false` if `p` has
    /// no direction.
    #[inline]
    pub fn sample_point(&self, p: &Vector3<f64>, out: &mut [f64]) -> bool {
        let Ok(s) = ray_to_sphere(p) else {
            return false;
        };
        let d = sphere_to_ray(s);
        let face = select_face(&d);
        let (u, v) = face_pixel(face, &d, self.face_width);
        self.padded[face.index()].sample(v + 1.0, u + 1.0, false, out);
        true
    }
}

/// Projects each reference point onto the target's viewing sphere and
/// samples the target there. Texels without a valid point are zero and
/// masked out.
pub fn warp_cubemap(q_ref: &PointCloud, target: &Cubemap) -> Result<(Cubemap, CubeMask)> {
    if q_ref.face_width() != target.face_width() {
        return Err(Error::invalid(format!(
            "point cloud face width {} does not match target {}",
            q_ref.face_width(),
            target.face_width()
        )));
    }
    Ok(warp_from_source(q_ref, &WarpSource::new(target)))
}

pub(crate) fn warp_from_source(q: &PointCloud, src: &WarpSource) -> (Cubemap, CubeMask) {
    let w = q.face_width;
    let c = src.channels;
    let results: Vec<(Raster, Vec<bool>)> = Face::ALL
        .par_iter()
        .map(|&f| {
            let mut out = Raster::new(w, w, c);
            let mut valid = vec![false; w * w];
            let pts = &q.points[f.index()];
            let vmask = q.valid.face(f);
            for (i, px) in out.data_mut().chunks_mut(c).enumerate() {
                if vmask[i] {
                    valid[i] = src.sample_point(&pts[i], px);
                }
            }
            (out, valid)
        })
        .collect();
    let (faces, masks): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    (
        Cubemap::new(faces).expect("shapes match"),
        CubeMask::from_faces(w, masks).expect("shapes match"),
    )
}

/// Warps `target` into the reference view given the reference depth and the
/// camera motion (target camera pose in the reference frame).
pub fn warp_with_motion(
    depth_ref: &CubemapDepth,
    target: &Cubemap,
    motion: &PoseSE3,
) -> Result<(Cubemap, CubeMask)> {
    let q = transform_pointcloud(&depth_to_pointcloud(depth_ref), &motion.inverse());
    warp_cubemap(&q, target)
}
