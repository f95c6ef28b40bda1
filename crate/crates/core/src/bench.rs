//! Throughput comparison of warping on the equirectangular sphere directly
//! versus the cubemap pipeline.
//!
//! Per height `h`, the equirectangular pass warps an `h × 2h` target into the
//! reference view and accumulates the photometric error. The cubemap pass
//! handles one incoming frame the way a streaming cubemap pipeline would:
//! it converts the new panorama to faces of width `h / 2`, warps and scores
//! it against the reference cubemap using cubemap depth, and converts that
//! depth back to an `h × 2h` panorama. The reference cubemap (converted when
//! it arrived as the previous frame) and the cubemap depth (the stand-in for
//! a depth prediction made on the cube) are prepared outside the timed
//! region. Both passes run on the calling thread pool.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PoseSE3;
use crate::losses::{photometric_loss, MaskMap};
use crate::projection::{
    cubemap_depth_to_equirect, equirect_depth_to_cubemap, equirect_to_cubemap, pixel_to_sphere,
    ray_to_sphere, sphere_to_pixel, sphere_to_ray, Cubemap, EquirectImage,
};
use crate::synthetic::{generate_scene, random_motion, relative_pose, render_equirect, GENERATED_FREE_RADIUS};
use crate::warping::{warp_with_motion, CubemapDepth};

/// Cubemap texels per panorama pixel at face width `h / 2`:
/// `6 (h/2)² / (2h²)`.
pub const PIXEL_RATIO: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub height: usize,
    pub equi_ms: f64,
    pub cube_ms: f64,
    pub fps_equi: f64,
    pub fps_cube: f64,
    /// `equi_ms / cube_ms`.
    pub speedup: f64,
    /// Photometric error from each pass, identical across runs.
    pub equi_loss: f64,
    pub cube_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub pixel_ratio: f64,
    pub iters: usize,
    pub rows: Vec<BenchRow>,
    pub speedup_nondecreasing: bool,
    pub top_speedup_exceeds_one: bool,
}

/// Mean absolute photometric error of `target` warped into the reference
/// panorama, computed on the sphere without any cube resampling.
pub fn equirect_warp_loss(
    reference: &EquirectImage,
    target: &EquirectImage,
    depth_ref: &EquirectImage,
    motion: &PoseSE3,
) -> Result<f64> {
    let (w, h, c) = (reference.width(), reference.height(), reference.channels());
    if !reference.raster().same_shape(target.raster())
        || depth_ref.width() != w
        || depth_ref.height() != h
        || depth_ref.channels() != 1
    {
        return Err(Error::invalid("panoramas differ in shape"));
    }
    let inv = motion.inverse();
    let mut px = vec![0.0; c];
    let (mut sum, mut n) = (0.0, 0usize);
    for row in 0..h {
        for col in 0..w {
            let d = depth_ref.raster().get(col, row, 0);
            if d <= 0.0 {
                continue;
            }
            let ray = sphere_to_ray(pixel_to_sphere(row as f64, col as f64, h));
            let q = inv.transform_point(&(ray * d));
            let Ok(s) = ray_to_sphere(&q) else {
                continue;
            };
            let (r, cc) = sphere_to_pixel(s, h);
            target.raster().sample(r, cc, true, &mut px);
            let refp = reference.raster().pixel(col, row);
            for k in 0..c {
                sum += (px[k] - refp[k]).abs();
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::invalid("no valid depth in reference panorama"));
    }
    Ok(sum / (n * c) as f64)
}

/// Inputs of the cubemap pass that exist before a new frame arrives.
pub struct CubePipelineState {
    pub reference: Cubemap,
    pub depth: CubemapDepth,
    pub height: usize,
}

impl CubePipelineState {
    pub fn new(reference: &EquirectImage, depth_ref: &EquirectImage) -> Result<Self> {
        let fw = reference.height() / 2;
        Ok(CubePipelineState {
            reference: equirect_to_cubemap(reference, fw)?,
            depth: CubemapDepth::new(equirect_depth_to_cubemap(depth_ref, fw)?)?,
            height: reference.height(),
        })
    }
}

/// Cubemap pass for one incoming frame: convert it, warp and score on the
/// cube, convert the depth back. Returns the photometric loss.
pub fn cubemap_pipeline_loss(
    state: &CubePipelineState,
    target: &EquirectImage,
    motion: &PoseSE3,
) -> Result<f64> {
    let fw = state.reference.face_width();
    let ctgt = equirect_to_cubemap(target, fw)?;
    let (warped, valid) = warp_with_motion(&state.depth, &ctgt, motion)?;
    let loss = photometric_loss(&state.reference, &warped, &valid, &MaskMap::ones(fw))?;
    let back = cubemap_depth_to_equirect(state.depth.cubemap(), state.height)?;
    std::hint::black_box(back);
    Ok(loss)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times both passes at each height, reporting medians over `iters` runs.
pub fn run_bench(heights: &[usize], iters: usize, seed: u64) -> Result<BenchReport> {
    if heights.is_empty() || iters == 0 {
        return Err(Error::invalid("need at least one height and one iteration"));
    }
    if let Some(h) = heights.iter().find(|&&h| h < 64 || h % 2 != 0) {
        return Err(Error::invalid(format!("heights must be even and >= 64, got {h}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = generate_scene(&mut rng);
    let pose_ref = scene.random_camera_pose(&mut rng, GENERATED_FREE_RADIUS);
    let pose_tgt = pose_ref.compose(&random_motion(&mut rng, 3f64.to_radians(), 0.05));
    let motion = relative_pose(&pose_ref, &pose_tgt);

    let mut rows = Vec::with_capacity(heights.len());
    for &h in heights {
        let (rgb_ref, depth_ref) = render_equirect(&scene, &pose_ref, h)?;
        let (rgb_tgt, _) = render_equirect(&scene, &pose_tgt, h)?;
        let state = CubePipelineState::new(&rgb_ref, &depth_ref)?;
        let (mut te, mut tc) = (Vec::with_capacity(iters), Vec::with_capacity(iters));
        let (mut le, mut lc) = (0.0, 0.0);
        for _ in 0..iters {
            let t = Instant::now();
            le = equirect_warp_loss(&rgb_ref, &rgb_tgt, &depth_ref, &motion)?;
            te.push(t.elapsed().as_secs_f64() * 1e3);
            let t = Instant::now();
            lc = cubemap_pipeline_loss(&state, &rgb_tgt, &motion)?;
            tc.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let (equi_ms, cube_ms) = (median(te), median(tc));
        rows.push(BenchRow {
            height: h,
            equi_ms,
            cube_ms,
            fps_equi: 1e3 / equi_ms,
            fps_cube: 1e3 / cube_ms,
            speedup: equi_ms / cube_ms,
            equi_loss: le,
            cube_loss: lc,
        });
    }
    let speedup_nondecreasing = rows.windows(2).all(|w| w[1].speedup >= w[0].speedup);
    let top_speedup_exceeds_one = rows.last().is_some_and(|r| r.speedup > 1.0);
    Ok(BenchReport {
        pixel_ratio: PIXEL_RATIO,
        iters,
        rows,
        speedup_nondecreasing,
        top_speedup_exceeds_one,
    })
}
