//! Spherical panoramas on cubemaps: projection between equirectangular
//! images and six-face cubemaps, cube padding, depth-based warping,
//! self-supervised loss terms, direct pose estimation and evaluation
//! metrics, plus a ray-cast synthetic room renderer for ground truth.
//!
//! ```
//! use cubesphere::geometry::PoseSE3;
//! use cubesphere::projection::equirect_to_cubemap;
//! use cubesphere::synthetic::{render_equirect, SyntheticScene};
//! use cubesphere::warping::{warp_with_motion, CubemapDepth};
//! use cubesphere::projection::equirect_depth_to_cubemap;
//!
//! let scene = SyntheticScene::empty_room([2.0, 1.5, 3.0])?;
//! let (rgb, depth) = render_equirect(&scene, &PoseSE3::identity(), 32)?;
//! let cube = equirect_to_cubemap(&rgb, 16)?;
//! let depth = CubemapDepth::new(equirect_depth_to_cubemap(&depth, 16)?)?;
//! let (_warped, valid) = warp_with_motion(&depth, &cube, &PoseSE3::identity())?;
//! assert!(valid.count() > 0);
//! # Ok::<(), cubesphere::error::Error>(())
//! ```
//!
//! The guide in `book/` walks through each module.

pub mod bench;
pub mod cube_padding;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pose_estimator;
pub mod projection;
pub mod raster;
pub mod synthetic;
pub mod warping;
