//! Cube padding: border each face with texels copied from its four
//! edge-adjacent faces so windowed operations see a continuous signal across
//! cube edges.
//!
//! Adjacency and strip orientation are derived from the face rotation table
//! by unfolding the cube about each shared edge. The padded texel `k` texels
//! beyond an edge receives the neighbor texel `k - 1` texels inside that
//! edge, at the same position along it. All of this runs in exact integer
//! arithmetic (half-pixel units) because face rotations are signed
//! permutations.
//!
//! Corner texels, where two padded strips overlap, have no single geometric
//! source; they hold the mean of the nearest texel of each of the two strips.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{face_rotation, select_face, Face};
use crate::projection::Cubemap;
use crate::raster::Raster;

/// One side of a square face in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// `u < 0`
    Left,
    /// `u >= w`
    Right,
    /// `v < 0`
    Top,
    /// `v >= w`
    Bottom,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Top, Side::Bottom];

    fn index(self) -> usize {
        self as usize
    }
}

/// Where the strip beyond one side of a face comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeLink {
    pub neighbor: Face,
    /// Side of the neighbor that touches the shared cube edge.
    pub neighbor_side: Side,
    /// Whether the along-edge index runs in opposite directions on the two
    /// faces. Along-edge index is `v` for left/right sides and `u` for
    /// top/bottom sides.
    pub reversed: bool,
}

/// Source of one texel of a padded face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Interior,
    Edge(Face),
    Corner(Face, Face),
}

/// A face raster enlarged by `pad` texels on every side.
#[derive(Debug, Clone)]
pub struct PaddedFaceGrid {
    pub face: Face,
    pub pad: usize,
    pub raster: Raster,
    pub provenance: Vec<Provenance>,
}

impl PaddedFaceGrid {
    /// The unpadded `w × w` interior.
    pub fn crop(&self) -> Raster {
        let p = self.pad;
        let w = self.raster.width() - 2 * p;
        let c = self.raster.channels();
        Raster::from_fn(w, w, c, |u, v, k| self.raster.get(u + p, v + p, k))
    }

    pub fn provenance_at(&self, pu: usize, pv: usize) -> Provenance {
        self.provenance[pv * self.raster.width() + pu]
    }
}

fn int_rotation(face: Face) -> Matrix3<i64> {
    face_rotation(face).matrix().map(|v| v.round() as i64)
}

fn int_rotations() -> &'static [Matrix3<i64>; 6] {
    static ROT: OnceLock<[Matrix3<i64>; 6]> = OnceLock::new();
    ROT.get_or_init(|| Face::ALL.map(int_rotation))
}

/// Geometric source of the out-of-face texel `(u, v)` on `face`, where
/// exactly one of `u`, `v` lies outside `[0, w)` by at most `w`.
///
/// Returns the neighbor face and the integer texel obtained by unfolding the
/// cube about the shared edge.
pub fn unfold_texel(face: Face, u: i64, v: i64, w: usize) -> (Face, usize, usize) {
    let w = w as i64;
    let out_u = u < 0 || u >= w;
    let out_v = v < 0 || v >= w;
    assert!(out_u ^ out_v, "texel must lie beyond exactly one side");
    // Doubled local coordinates of the texel center on the extended plane.
    let mut p = Vector3::new(2 * u + 1 - w, 2 * v + 1 - w, w);
    let axis = if out_u { 0 } else { 1 };
    let excess = p[axis].abs() - w;
    p[axis] = p[axis].signum() * w;
    p.z = w - excess;
    let rot = int_rotations();
    let world = rot[face.index()] * p;
    let g = select_face(&world.map(|x| x as f64));
    let local = rot[g.index()].transpose() * world;
    debug_assert_eq!(local.z, w);
    (
        g,
        ((local.x + w - 1) / 2) as usize,
        ((local.y + w - 1) / 2) as usize,
    )
}

fn derive_link(face: Face, side: Side) -> EdgeLink {
    // Doubled units with face width 2, so the half-width is 1.
    let (edge_mid, along) = match side {
        Side::Left => (Vector3::new(-1, 0, 1), Vector3::new(0, 1, 0)),
        Side::Right => (Vector3::new(1, 0, 1), Vector3::new(0, 1, 0)),
        Side::Top => (Vector3::new(0, -1, 1), Vector3::new(1, 0, 0)),
        Side::Bottom => (Vector3::new(0, 1, 1), Vector3::new(1, 0, 0)),
    };
    let rot = int_rotations();
    let rf = rot[face.index()];
    let world_mid = rf * edge_mid;
    let world_along = rf * along;
    // The neighbor's optical axis is the face's outward tangent at this side.
    let outward = rf * (edge_mid - Vector3::new(0, 0, 1));
    let neighbor = Face::ALL
        .into_iter()
        .find(|&g| rot[g.index()] * Vector3::new(0, 0, 1) == outward)
        .expect("every side has a neighbor");
    let rg = rot[neighbor.index()];
    let local_mid = rg.transpose() * world_mid;
    let (neighbor_side, n_along) = match (local_mid.x, local_mid.y) {
        (-1, 0) => (Side::Left, Vector3::new(0, 1, 0)),
        (1, 0) => (Side::Right, Vector3::new(0, 1, 0)),
        (0, -1) => (Side::Top, Vector3::new(1, 0, 0)),
        (0, 1) => (Side::Bottom, Vector3::new(1, 0, 0)),
        other => unreachable!("edge midpoint off the neighbor border: {other:?}"),
    };
    let reversed = (rg * n_along).dot(&world_along) < 0;
    EdgeLink {
        neighbor,
        neighbor_side,
        reversed,
    }
}

/// Adjacency table indexed by `[face][side]`, derived once from face
/// geometry.
pub fn adjacency() -> &'static [[EdgeLink; 4]; 6] {
    static TABLE: OnceLock<[[EdgeLink; 4]; 6]> = OnceLock::new();
    TABLE.get_or_init(|| Face::ALL.map(|f| Side::ALL.map(|s| derive_link(f, s))))
}

pub fn link(face: Face, side: Side) -> EdgeLink {
    adjacency()[face.index()][side.index()]
}

/// Source texel for the strip texel at depth `k >= 1` beyond `side`, at
/// along-edge index `along`, using the adjacency table.
fn strip_source(face: Face, side: Side, k: usize, along: usize, w: usize) -> (Face, usize, usize) {
    let l = link(face, side);
    let j = k - 1;
    let a = if l.reversed { w - 1 - along } else { along };
    let (u, v) = match l.neighbor_side {
        Side::Left => (j, a),
        Side::Right => (w - 1 - j, a),
        Side::Top => (a, j),
        Side::Bottom => (a, w - 1 - j),
    };
    (l.neighbor, u, v)
}

/// Strip side and `(depth, along)` of an out-of-face texel in exactly one
/// strip.
fn classify(u: i64, v: i64, w: i64) -> Option<(Side, usize, usize)> {
    let in_u = (0..w).contains(&u);
    let in_v = (0..w).contains(&v);
    match (in_u, in_v) {
        (false, true) if u < 0 => Some((Side::Left, (-u) as usize, v as usize)),
        (false, true) => Some((Side::Right, (u - w + 1) as usize, v as usize)),
        (true, false) if v < 0 => Some((Side::Top, (-v) as usize, u as usize)),
        (true, false) => Some((Side::Bottom, (v - w + 1) as usize, u as usize)),
        _ => None,
    }
}

fn pad_face(src: &Cubemap, face: Face, pad: usize) -> PaddedFaceGrid {
    let w = src.face_width();
    let c = src.channels();
    let pw = w + 2 * pad;
    let mut raster = Raster::new(pw, pw, c);
    let mut provenance = vec![Provenance::Interior; pw * pw];
    let p = pad as i64;
    let wi = w as i64;

    // Interior and the four strips.
    for pv in 0..pw {
        for pu in 0..pw {
            let u = pu as i64 - p;
            let v = pv as i64 - p;
            let (sf, su, sv, prov) = if (0..wi).contains(&u) && (0..wi).contains(&v) {
                (face, u as usize, v as usize, Provenance::Interior)
            } else if let Some((side, k, along)) = classify(u, v, wi) {
                let (g, gu, gv) = strip_source(face, side, k, along, w);
                (g, gu, gv, Provenance::Edge(g))
            } else {
                continue;
            };
            raster
                .pixel_mut(pu, pv)
                .copy_from_slice(src.face(sf).pixel(su, sv));
            provenance[pv * pw + pu] = prov;
        }
    }

    // Corners: mean of the nearest texel in each overlapping strip.
    let mut tmp = vec![0.0; c];
    for pv in 0..pw {
        for pu in 0..pw {
            let u = pu as i64 - p;
            let v = pv as i64 - p;
            if (0..wi).contains(&u) || (0..wi).contains(&v) {
                continue;
            }
            let cu = u.clamp(0, wi - 1) + p;
            let cv = v.clamp(0, wi - 1) + p;
            // (pu, cv) lies in a left/right strip, (cu, pv) in a top/bottom strip.
            let a = raster.pixel(pu, cv as usize);
            let b = raster.pixel(cu as usize, pv);
            for k in 0..c {
                tmp[k] = 0.5 * (a[k] + b[k]);
            }
            let fa = match provenance[cv as usize * pw + pu] {
                Provenance::Edge(f) => f,
                _ => unreachable!(),
            };
            let fb = match provenance[pv * pw + cu as usize] {
                Provenance::Edge(f) => f,
                _ => unreachable!(),
            };
            raster.pixel_mut(pu, pv).copy_from_slice(&tmp);
            provenance[pv * pw + pu] = Provenance::Corner(fa, fb);
        }
    }

    PaddedFaceGrid {
        face,
        pad,
        raster,
        provenance,
    }
}

/// Pads all six faces of `src` by `pad` texels, in canonical face order.
pub fn cube_pad(src: &Cubemap, pad: usize) -> Result<Vec<PaddedFaceGrid>> {
    let w = src.face_width();
    if pad == 0 || pad > w / 2 {
        return Err(Error::invalid(format!(
            "pad must be in 1..={} for face width {w}, got {pad}",
            w / 2
        )));
    }
    Ok(Face::ALL
        .par_iter()
        .map(|&f| pad_face(src, f, pad))
        .collect())
}

/// Padded rasters only, in canonical face order.
pub fn cube_pad_rasters(src: &Cubemap, pad: usize) -> Result<Vec<Raster>> {
    Ok(cube_pad(src, pad)?.into_iter().map(|g| g.raster).collect())
}
