//! Depth error statistics, δ-threshold accuracies, and relative pose error.
//!
//! Depth metrics accept either cubemap or equirectangular depth, one kind
//! per call. Comparing across representations needs an explicit conversion
//! first because their texels cover different solid angles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PoseSE3;
use crate::projection::{CubeMask, EquirectImage};
use crate::warping::CubemapDepth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    #[serde(rename = "delta<1.25")]
    pub delta1: f64,
    #[serde(rename = "delta<1.25^2")]
    pub delta2: f64,
    #[serde(rename = "delta<1.25^3")]
    pub delta3: f64,
}

/// Metrics plus the evaluation settings that produced them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    #[serde(flatten)]
    pub metrics: DepthMetrics,
    pub median_scaling: bool,
    /// Factor applied to predictions; 1 without median scaling.
    pub scale: f64,
    pub valid_pixels: usize,
    pub representation: Representation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Cubemap,
    Equirect,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Metrics over paired samples; `pairs` yields `(pred, gt)` for valid
/// pixels only, in a fixed order.
fn depth_metrics_pairs(
    pairs: &[(f64, f64)],
    median_scaling: bool,
) -> Result<(DepthMetrics, f64)> {
    if pairs.is_empty() {
        return Err(Error::invalid("depth metrics over an empty valid set"));
    }
    for &(p, g) in pairs {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::invalid(format!("ground-truth depth {g} is not positive")));
        }
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::invalid(format!("predicted depth {p} is not positive")));
        }
    }
    let scale = if median_scaling {
        let mut g: Vec<f64> = pairs.iter().map(|x| x.1).collect();
        let mut p: Vec<f64> = pairs.iter().map(|x| x.0).collect();
        median(&mut g) / median(&mut p)
    } else {
        1.0
    };
    let n = pairs.len() as f64;
    let (mut abs_rel, mut sq_rel, mut sq, mut sq_log) = (0.0, 0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    for &(p, g) in pairs {
        let p = p * scale;
        let d = p - g;
        abs_rel += d.abs() / g;
        sq_rel += d * d / g;
        sq += d * d;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        for (k, h) in hits.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *h += 1;
            }
        }
    }
    Ok((
        DepthMetrics {
            abs_rel: abs_rel / n,
            sq_rel: sq_rel / n,
            rmse: (sq / n).sqrt(),
            rmse_log: (sq_log / n).sqrt(),
            delta1: hits[0] as f64 / n,
            delta2: hits[1] as f64 / n,
            delta3: hits[2] as f64 / n,
        },
        scale,
    ))
}

/// Depth metrics over the texels where `valid` is set.
pub fn depth_metrics_cubemap(
    pred: &CubemapDepth,
    gt: &CubemapDepth,
    valid: &CubeMask,
    median_scaling: bool,
) -> Result<DepthReport> {
    let w = gt.face_width();
    if pred.face_width() != w || valid.face_width() != w {
        return Err(Error::invalid("depth metric inputs differ in face width"));
    }
    let mut pairs = Vec::new();
    for (fi, (pf, gf)) in pred
        .cubemap()
        .faces()
        .iter()
        .zip(gt.cubemap().faces())
        .enumerate()
    {
        let m = valid.face(crate::geometry::Face::ALL[fi]);
        for i in 0..w * w {
            if m[i] {
                pairs.push((pf.data()[i], gf.data()[i]));
            }
        }
    }
    let (metrics, scale) = depth_metrics_pairs(&pairs, median_scaling)?;
    Ok(DepthReport {
        metrics,
        median_scaling,
        scale,
        valid_pixels: pairs.len(),
        representation: Representation::Cubemap,
    })
}

/// Depth metrics over equirectangular pixels where `valid` is set
/// (row-major, one flag per pixel).
pub fn depth_metrics_equirect(
    pred: &EquirectImage,
    gt: &EquirectImage,
    valid: &[bool],
    median_scaling: bool,
) -> Result<DepthReport> {
    if pred.channels() != 1 || gt.channels() != 1 {
        return Err(Error::invalid("depth panoramas must have one channel"));
    }
    if !pred.raster().same_shape(gt.raster()) || valid.len() != gt.width() * gt.height() {
        return Err(Error::invalid("depth metric inputs differ in shape"));
    }
    let pairs: Vec<(f64, f64)> = valid
        .iter()
        .zip(pred.raster().data().iter().zip(gt.raster().data()))
        .filter(|(m, _)| **m)
        .map(|(_, (p, g))| (*p, *g))
        .collect();
    let (metrics, scale) = depth_metrics_pairs(&pairs, median_scaling)?;
    Ok(DepthReport {
        metrics,
        median_scaling,
        scale,
        valid_pixels: pairs.len(),
        representation: Representation::Equirect,
    })
}

/// Relative pose error. Translation is in scene units (meters for the
/// synthetic scenes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpeMetrics {
    #[serde(rename = "RPE-R_deg")]
    pub rpe_r: f64,
    #[serde(rename = "RPE-T")]
    pub rpe_t: f64,
}

/// Serialized RPE with its unit label and pair count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpeReport {
    #[serde(flatten)]
    pub metrics: RpeMetrics,
    pub translation_units: String,
    pub pairs: usize,
}

impl RpeReport {
    pub fn new(metrics: RpeMetrics, pairs: usize) -> Self {
        RpeReport {
            metrics,
            translation_units: "scene units (m)".into(),
            pairs,
        }
    }
}

/// Mean rotation angle (degrees) and mean translation norm of the error
/// poses `inverse(gt[i]) ∘ pred[i]`.
pub fn rpe(pred: &[PoseSE3], gt: &[PoseSE3]) -> Result<RpeMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "{} predicted poses vs {} ground-truth poses",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("relative pose error needs at least one pair"));
    }
    let (mut r, mut t) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        let e = g.inverse().compose(p);
        r += e.rotation.angle().to_degrees();
        t += e.translation.norm();
    }
    let n = pred.len() as f64;
    Ok(RpeMetrics {
        rpe_r: r / n,
        rpe_t: t / n,
    })
}
