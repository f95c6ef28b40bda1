//! Pixel ↔ sphere mapping and the equirectangular ↔ cubemap converters.
//!
//! Normalized spherical coordinates follow
//!
//! ```text
//! X = atan2(x, z) / π          longitude, wraps modulo 2 into [-1, 1)
//! Y = asin(y / |p|) / (π / 2)  latitude, clamped to [-1, 1]
//! ```
//!
//! Longitude zero sits at the horizontal center of an equirectangular image;
//! `Y = -1` is the top row (up is `-y`).

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{face_pixel, make_face_grid, select_face, Face};
use crate::raster::Raster;

/// Normalized position on the equirectangular image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereCoord {
    x: f64,
    y: f64,
}

impl SphereCoord {
    /// Wraps `x` into `[-1, 1)` and clamps `y` into `[-1, 1]`.
    pub fn new(x: f64, y: f64) -> Self {
        let mut x = (x + 1.0).rem_euclid(2.0) - 1.0;
        if x >= 1.0 {
            x = -1.0;
        }
        SphereCoord {
            x,
            y: y.clamp(-1.0, 1.0),
        }
    }

    /// Normalized longitude in `[-1, 1)`.
    pub fn x(&self) -> f64 {
        self.x
    }

    /// Normalized latitude in `[-1, 1]`.
    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn longitude(&self) -> f64 {
        self.x * PI
    }

    pub fn latitude(&self) -> f64 {
        self.y * FRAC_PI_2
    }
}

pub fn ray_to_sphere(p: &Vector3<f64>) -> Result<SphereCoord> {
    let n = p.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::invalid("cannot project a zero or non-finite vector"));
    }
    Ok(SphereCoord::new(
        p.x.atan2(p.z) / PI,
        (p.y / n).clamp(-1.0, 1.0).asin() / FRAC_PI_2,
    ))
}

/// Unit ray for a spherical coordinate; inverse of [`ray_to_sphere`].
pub fn sphere_to_ray(s: SphereCoord) -> Vector3<f64> {
    let (slon, clon) = s.longitude().sin_cos();
    let (slat, clat) = s.latitude().sin_cos();
    Vector3::new(clat * slon, slat, clat * clon)
}

/// Continuous `(row, col)` on an equirectangular raster of the given height.
///
/// Integer coordinates are pixel centers. Columns lie in
/// `[-0.5, width - 0.5)` and are meant to be sampled with column wrap; rows
/// are clamped to `[0, height - 1]`.
pub fn sphere_to_pixel(s: SphereCoord, height: usize) -> (f64, f64) {
    let width = 2 * height;
    let col = (s.x + 1.0) * 0.5 * width as f64 - 0.5;
    let row = ((s.y + 1.0) * 0.5 * height as f64 - 0.5).clamp(0.0, (height - 1) as f64);
    (row, col)
}

/// Spherical coordinate of the (possibly fractional) pixel `(row, col)`.
pub fn pixel_to_sphere(row: f64, col: f64, height: usize) -> SphereCoord {
    let width = 2 * height;
    SphereCoord::new(
        (col + 0.5) / width as f64 * 2.0 - 1.0,
        (row + 0.5) / height as f64 * 2.0 - 1.0,
    )
}

/// A 2:1 equirectangular panorama (color or depth).
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectImage(Raster);

impl EquirectImage {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.height() == 0 || raster.width() != 2 * raster.height() {
            return Err(Error::invalid(format!(
                "equirectangular raster must be 2:1, got {}x{}",
                raster.width(),
                raster.height()
            )));
        }
        if raster.channels() == 0 {
            return Err(Error::invalid("raster has no channels"));
        }
        if !raster.data().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("raster contains non-finite samples"));
        }
        Ok(EquirectImage(raster))
    }

    /// Evaluates `f(sphere, channel)` at every pixel center.
    pub fn from_sphere_fn(
        height: usize,
        channels: usize,
        f: impl Fn(SphereCoord, usize) -> f64,
    ) -> Result<Self> {
        let r = Raster::from_fn(2 * height, height, channels, |c, r, k| {
            f(pixel_to_sphere(r as f64, c as f64, height), k)
        });
        EquirectImage::new(r)
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn channels(&self) -> usize {
        self.0.channels()
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    /// Bilinear sample along direction `d` with longitude wrap.
    pub fn sample_direction(&self, d: &Vector3<f64>, out: &mut [f64]) {
        match ray_to_sphere(d) {
            Ok(s) => {
                let (row, col) = sphere_to_pixel(s, self.height());
                self.0.sample(row, col, true, out);
            }
            Err(_) => out.fill(0.0),
        }
    }
}

/// Six square face rasters sharing size and channel count, stored in
/// canonical face order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cubemap {
    face_width: usize,
    channels: usize,
    faces: Vec<Raster>,
}

impl Cubemap {
    pub fn new(faces: Vec<Raster>) -> Result<Self> {
        if faces.len() != 6 {
            return Err(Error::invalid(format!("cubemap needs 6 faces, got {}", faces.len())));
        }
        let w = faces[0].width();
        let c = faces[0].channels();
        if w < 2 || c == 0 {
            return Err(Error::invalid("cubemap faces must be at least 2x2 with channels"));
        }
        if faces
            .iter()
            .any(|f| f.width() != w || f.height() != w || f.channels() != c)
        {
            return Err(Error::invalid("cubemap faces must share square size and channels"));
        }
        Ok(Cubemap {
            face_width: w,
            channels: c,
            faces,
        })
    }

    pub fn filled(face_width: usize, channels: usize, value: f64) -> Self {
        Cubemap {
            face_width,
            channels,
            faces: (0..6)
                .map(|_| Raster::filled(face_width, face_width, channels, value))
                .collect(),
        }
    }

    /// Evaluates `f(face, u, v, channel)` at every texel.
    pub fn from_fn(
        face_width: usize,
        channels: usize,
        mut f: impl FnMut(Face, usize, usize, usize) -> f64,
    ) -> Self {
        let mut faces = Vec::with_capacity(6);
        for face in Face::ALL {
            faces.push(Raster::from_fn(face_width, face_width, channels, |u, v, k| {
                f(face, u, v, k)
            }));
        }
        Cubemap {
            face_width,
            channels,
            faces,
        }
    }

    /// Evaluates `f(unit direction, channel)` along every texel's grid ray.
    pub fn from_direction_fn(
        face_width: usize,
        channels: usize,
        f: impl Fn(&Vector3<f64>, usize) -> f64 + Sync,
    ) -> Result<Self> {
        let faces = Face::ALL
            .par_iter()
            .map(|&face| {
                let grid = make_face_grid(face, face_width)?;
                Ok(Raster::from_fn(face_width, face_width, channels, |u, v, k| {
                    f(&grid.ray(u, v).normalize(), k)
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Cubemap::new(faces)
    }

    pub fn face_width(&self) -> usize {
        self.face_width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn face(&self, f: Face) -> &Raster {
        &self.faces[f.index()]
    }

    pub fn face_mut(&mut self, f: Face) -> &mut Raster {
        &mut self.faces[f.index()]
    }

    pub fn faces(&self) -> &[Raster] {
        &self.faces
    }

    pub fn into_faces(self) -> Vec<Raster> {
        self.faces
    }

    /// Number of texels over all six faces.
    pub fn pixel_count(&self) -> usize {
        6 * self.face_width * self.face_width
    }

    pub fn same_shape(&self, other: &Cubemap) -> bool {
        self.face_width == other.face_width && self.channels == other.channels
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.faces
            .iter()
            .map(Raster::min_max)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| {
                (a.min(c), b.max(d))
            })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Cubemap {
        let mut out = self.clone();
        for face in &mut out.faces {
            face.data_mut().iter_mut().for_each(|v| *v = f(*v));
        }
        out
    }

    /// Bilinear sample along direction `d`: the containing face is selected,
    /// and taps beyond its border clamp to the border.
    pub fn sample_direction(&self, d: &Vector3<f64>, out: &mut [f64]) {
        let face = select_face(d);
        let (u, v) = face_pixel(face, d, self.face_width);
        self.faces[face.index()].sample(v, u, false, out);
    }
}

/// Per-texel boolean mask over a cubemap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeMask {
    face_width: usize,
    faces: Vec<Vec<bool>>,
}

impl CubeMask {
    pub fn filled(face_width: usize, value: bool) -> Self {
        CubeMask {
            face_width,
            faces: vec![vec![value; face_width * face_width]; 6],
        }
    }

    pub fn from_faces(face_width: usize, faces: Vec<Vec<bool>>) -> Result<Self> {
        if faces.len() != 6 || faces.iter().any(|f| f.len() != face_width * face_width) {
            return Err(Error::invalid("mask shape does not match cubemap"));
        }
        Ok(CubeMask { face_width, faces })
    }

    pub fn face_width(&self) -> usize {
        self.face_width
    }

    pub fn get(&self, face: Face, u: usize, v: usize) -> bool {
        self.faces[face.index()][v * self.face_width + u]
    }

    pub fn set(&mut self, face: Face, u: usize, v: usize, value: bool) {
        let w = self.face_width;
        self.faces[face.index()][v * w + u] = value;
    }

    pub fn face(&self, face: Face) -> &[bool] {
        &self.faces[face.index()]
    }

    pub fn count(&self) -> usize {
        self.faces.iter().flatten().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &CubeMask) -> CubeMask {
        CubeMask {
            face_width: self.face_width,
            faces: self
                .faces
                .iter()
                .zip(&other.faces)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| *x && *y).collect())
                .collect(),
        }
    }
}

fn check_face_width(face_width: usize) -> Result<()> {
    if face_width < 2 {
        return Err(Error::invalid(format!("face width must be >= 2, got {face_width}")));
    }
    Ok(())
}

/// Resamples a panorama onto the six cube faces (inverse warping, bilinear
/// with longitude wrap).
pub fn equirect_to_cubemap(src: &EquirectImage, face_width: usize) -> Result<Cubemap> {
    check_face_width(face_width)?;
    let c = src.channels();
    let h = src.height();
    let faces = Face::ALL
        .par_iter()
        .map(|&face| {
            let grid = make_face_grid(face, face_width)?;
            let mut out = Raster::new(face_width, face_width, c);
            out.data_mut()
                .par_chunks_mut(face_width * c)
                .enumerate()
                .for_each(|(v, row)| {
                    for (u, px) in row.chunks_mut(c).enumerate() {
                        let s = ray_to_sphere(&grid.ray(u, v)).expect("grid rays are nonzero");
                        let (r, col) = sphere_to_pixel(s, h);
                        src.raster().sample(r, col, true, px);
                    }
                });
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Cubemap::new(faces)
}

/// Depth variant of [`equirect_to_cubemap`]: any lookup touching an invalid
/// (zero) texel yields an invalid texel.
pub fn equirect_depth_to_cubemap(src: &EquirectImage, face_width: usize) -> Result<Cubemap> {
    check_face_width(face_width)?;
    if src.channels() != 1 {
        return Err(Error::invalid("depth panorama must have one channel"));
    }
    let h = src.height();
    let faces = Face::ALL
        .par_iter()
        .map(|&face| {
            let grid = make_face_grid(face, face_width)?;
            let mut out = Raster::new(face_width, face_width, 1);
            out.data_mut()
                .par_chunks_mut(face_width)
                .enumerate()
                .for_each(|(v, row)| {
                    for (u, px) in row.iter_mut().enumerate() {
                        let s = ray_to_sphere(&grid.ray(u, v)).expect("grid rays are nonzero");
                        let (r, col) = sphere_to_pixel(s, h);
                        *px = src.raster().sample_depth(r, col, true).unwrap_or(0.0);
                    }
                });
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Cubemap::new(faces)
}

/// Resamples a cubemap back to a panorama of the given height. Each output
/// pixel samples only the face containing its ray, with edge clamp.
pub fn cubemap_to_equirect(src: &Cubemap, height: usize) -> Result<EquirectImage> {
    if height == 0 {
        return Err(Error::invalid("panorama height must be positive"));
    }
    let c = src.channels();
    let width = 2 * height;
    let mut out = Raster::new(width, height, c);
    out.data_mut()
        .par_chunks_mut(width * c)
        .enumerate()
        .for_each(|(row, line)| {
            for (col, px) in line.chunks_mut(c).enumerate() {
                let d = sphere_to_ray(pixel_to_sphere(row as f64, col as f64, height));
                src.sample_direction(&d, px);
            }
        });
    EquirectImage::new(out)
}

/// Depth variant of [`cubemap_to_equirect`] with invalid propagation.
pub fn cubemap_depth_to_equirect(src: &Cubemap, height: usize) -> Result<EquirectImage> {
    if height == 0 {
        return Err(Error::invalid("panorama height must be positive"));
    }
    if src.channels() != 1 {
        return Err(Error::invalid("depth cubemap must have one channel"));
    }
    let w = src.face_width();
    let width = 2 * height;
    let mut out = Raster::new(width, height, 1);
    out.data_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(row, line)| {
            for (col, px) in line.iter_mut().enumerate() {
                let d = sphere_to_ray(pixel_to_sphere(row as f64, col as f64, height));
                let face = select_face(&d);
                let (u, v) = face_pixel(face, &d, w);
                *px = src.face(face).sample_depth(v, u, false).unwrap_or(0.0);
            }
        });
    EquirectImage::new(out)
}
