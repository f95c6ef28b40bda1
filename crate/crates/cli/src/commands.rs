use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use cubesphere::bench::run_bench;
use cubesphere::error::{Error, Result};
use cubesphere::geometry::{Face, PoseRecord, PoseSE3};
use cubesphere::io::{read_cubemap, read_raster, to_json_string, write_cubemap, write_json, write_ply, write_raster};
use cubesphere::losses::{
    explainability_loss, photometric_loss, pose_consistency_loss, replicate_front_pose,
    smoothness_loss, LossParts, LossReport, MaskMap,
};
use cubesphere::metrics::{depth_metrics_cubemap, depth_metrics_equirect, rpe, RpeReport};
use cubesphere::pose_estimator::estimate_pose;
use cubesphere::projection::{
    cubemap_depth_to_equirect, cubemap_to_equirect, equirect_depth_to_cubemap,
    equirect_to_cubemap, CubeMask, Cubemap, EquirectImage,
};
use cubesphere::raster::Raster;
use cubesphere::synthetic::{generate_scene, generate_trajectory, render_sequence, SyntheticScene, Trajectory};
use cubesphere::warping::{depth_to_pointcloud, warp_with_motion, CubemapDepth};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{set, Config};

fn read_equirect(path: &Path) -> Result<EquirectImage> {
    EquirectImage::new(read_raster(path)?)
}

fn read_depth(path: &Path) -> Result<EquirectImage> {
    let d = read_equirect(path)?;
    if d.channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "{} must be a single-channel depth panorama",
            path.display()
        )));
    }
    Ok(d)
}

/// Reads a pose record, or the `pair`-th relative pose of a `poses.json`
/// written by `render`. No file means identity.
fn load_motion(path: Option<&Path>, pair: usize) -> Result<PoseSE3> {
    let Some(path) = path else {
        return Ok(PoseSE3::identity());
    };
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let record = match value.get("relative") {
        Some(rel) => rel.get(pair).cloned().ok_or_else(|| {
            Error::InvalidArgument(format!("{} has no relative pose {pair}", path.display()))
        })?,
        None => value,
    };
    let record: PoseRecord = serde_json::from_value(record)?;
    let pose = PoseSE3::from(record);
    if !pose.is_finite() {
        return Err(Error::InvalidArgument(format!("{} holds a non-finite pose", path.display())));
    }
    Ok(pose)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", to_json_string(value)?);
    Ok(())
}

/// Reference, target and depth of one frame pair on the cube.
struct CubePair {
    reference: Cubemap,
    target: Cubemap,
    depth: CubemapDepth,
}

impl CubePair {
    fn load(reference: &Path, target: &Path, depth: &Path, face_width: Option<usize>) -> Result<Self> {
        let r = read_equirect(reference)?;
        let t = read_equirect(target)?;
        let d = read_depth(depth)?;
        if !r.raster().same_shape(t.raster()) || d.height() != r.height() {
            return Err(Error::InvalidArgument("frames and depth differ in size".into()));
        }
        let fw = face_width.unwrap_or(r.height() / 2);
        Ok(CubePair {
            reference: equirect_to_cubemap(&r, fw)?,
            target: equirect_to_cubemap(&t, fw)?,
            depth: CubemapDepth::new(equirect_depth_to_cubemap(&d, fw)?)?,
        })
    }
}

fn mask_cubemap(m: &CubeMask) -> Cubemap {
    Cubemap::from_fn(m.face_width(), 1, |f, u, v, _| if m.get(f, u, v) { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Direction {
    Equi2cube,
    Cube2equi,
}

#[derive(Args)]
pub struct ConvertArgs {
    /// Panorama file (equi2cube) or face-file stem (cube2equi)
    pub input: PathBuf,

    #[arg(long, value_enum)]
    pub direction: Direction,

    /// Face width for equi2cube, panorama height for cube2equi
    #[arg(long)]
    pub size: Option<usize>,

    /// Output panorama file (cube2equi) or face-file stem (equi2cube)
    #[arg(short, long)]
    pub output: PathBuf,

    /// Depth data: samples touching invalid (zero) depth become invalid
    #[arg(long)]
    pub depth: bool,

    /// Extension of the face files
    #[arg(long, default_value = "pfm")]
    pub face_ext: String,
}

impl ConvertArgs {
    pub fn run(&self) -> Result<()> {
        match self.direction {
            Direction::Equi2cube => {
                let src = read_equirect(&self.input)?;
                let fw = self.size.unwrap_or(src.height() / 2);
                let cube = if self.depth {
                    equirect_depth_to_cubemap(&src, fw)?
                } else {
                    equirect_to_cubemap(&src, fw)?
                };
                write_cubemap(&self.output, &self.face_ext, &cube)?;
            }
            Direction::Cube2equi => {
                let cube = read_cubemap(&self.input, &self.face_ext)?;
                let h = self.size.unwrap_or(2 * cube.face_width());
                let pano = if self.depth {
                    cubemap_depth_to_equirect(&cube, h)?
                } else {
                    cubemap_to_equirect(&cube, h)?
                };
                write_raster(&self.output, pano.raster())?;
            }
        }
        Ok(())
    }
}

#[derive(Args)]
pub struct RenderArgs {
    /// Scene JSON; generated from the seed when absent
    #[arg(long)]
    pub scene: Option<PathBuf>,

    /// Trajectory JSON; generated from the seed when absent
    #[arg(long)]
    pub trajectory: Option<PathBuf>,

    /// Seed for generated scenes and trajectories
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Panorama height in pixels
    #[arg(long)]
    pub height: Option<usize>,

    /// Frames in a generated trajectory
    #[arg(long)]
    pub frames: Option<usize>,

    #[arg(long)]
    pub outdir: PathBuf,

    /// Also write the scene description used
    #[arg(long)]
    pub save_scene: Option<PathBuf>,
}

#[derive(Serialize)]
struct PosesFile {
    fps: f64,
    poses: Vec<PoseRecord>,
    /// `relative[t]`: camera `t + 1` in the frame of camera `t`.
    relative: Vec<PoseRecord>,
}

impl RenderArgs {
    pub fn apply(&self, cfg: &mut Config) {
        set(&mut cfg.render.height, self.height);
        set(&mut cfg.render.frames, self.frames);
    }

    pub fn run(&self, cfg: &Config) -> Result<()> {
        let rc = &cfg.render;
        if rc.height < 2 {
            return Err(Error::InvalidArgument(format!("height must be >= 2, got {}", rc.height)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scene = match &self.scene {
            Some(p) => SyntheticScene::load(p)?,
            None => generate_scene(&mut rng),
        };
        let trajectory = match &self.trajectory {
            Some(p) => Trajectory::load(p)?,
            None => {
                if rc.frames == 0 {
                    return Err(Error::InvalidArgument("frames must be positive".into()));
                }
                generate_trajectory(
                    &scene,
                    &mut rng,
                    rc.frames,
                    rc.max_rotation_deg.to_radians(),
                    rc.max_translation_m,
                )?
            }
        };
        let seq = render_sequence(&scene, &trajectory, rc.height)?;
        std::fs::create_dir_all(&self.outdir)?;
        for (i, frame) in seq.frames.iter().enumerate() {
            write_raster(&self.outdir.join(format!("frame_{i:04}_rgb.png")), frame.rgb.raster())?;
            write_raster(&self.outdir.join(format!("frame_{i:04}_depth.pfm")), frame.depth.raster())?;
        }
        let poses = PosesFile {
            fps: trajectory.fps(),
            poses: trajectory.poses().iter().map(PoseRecord::from).collect(),
            relative: seq.relative.iter().map(PoseRecord::from).collect(),
        };
        write_json(&self.outdir.join("poses.json"), &poses)?;
        if let Some(p) = &self.save_scene {
            write_json(p, &scene.to_spec())?;
        }
        Ok(())
    }
}

#[derive(Args)]
pub struct WarpArgs {
    /// Reference depth panorama (ray length, zero = invalid)
    #[arg(long)]
    pub depth: PathBuf,

    /// Target panorama
    #[arg(long)]
    pub target: PathBuf,

    /// Camera motion: a pose JSON, or poses.json from `render`
    #[arg(long)]
    pub pose: Option<PathBuf>,

    /// Index into the relative poses of a poses.json
    #[arg(long, default_value_t = 0)]
    pub pair: usize,

    #[arg(long)]
    pub face_width: Option<usize>,

    /// Stem for the warped faces and the `{stem}_valid` mask faces
    #[arg(short, long)]
    pub output: PathBuf,

    #[arg(long, default_value = "png")]
    pub face_ext: String,

    /// Also write the warped image as a panorama
    #[arg(long)]
    pub equirect: Option<PathBuf>,

    /// Write the reference point cloud as PLY
    #[arg(long)]
    pub ply: Option<PathBuf>,
}

#[derive(Serialize)]
struct WarpSummary {
    face_width: usize,
    valid_texels: usize,
    total_texels: usize,
}

impl WarpArgs {
    pub fn run(&self) -> Result<()> {
        let t = read_equirect(&self.target)?;
        let d = read_depth(&self.depth)?;
        if d.height() != t.height() {
            return Err(Error::InvalidArgument("target and depth differ in size".into()));
        }
        let fw = self.face_width.unwrap_or(t.height() / 2);
        let target = equirect_to_cubemap(&t, fw)?;
        let depth = CubemapDepth::new(equirect_depth_to_cubemap(&d, fw)?)?;
        let motion = load_motion(self.pose.as_deref(), self.pair)?;
        let (warped, valid) = warp_with_motion(&depth, &target, &motion)?;
        write_cubemap(&self.output, &self.face_ext, &warped)?;
        let mut stem = self.output.clone().into_os_string();
        stem.push("_valid");
        write_cubemap(Path::new(&stem), &self.face_ext, &mask_cubemap(&valid))?;
        if let Some(p) = &self.equirect {
            write_raster(p, cubemap_to_equirect(&warped, t.height())?.raster())?;
        }
        if let Some(p) = &self.ply {
            let mut out = BufWriter::new(File::create(p)?);
            let colors = (target.channels() == 3).then_some(&target);
            write_ply(&mut out, &depth_to_pointcloud(&depth), colors)?;
        }
        print_json(&WarpSummary {
            face_width: fw,
            valid_texels: valid.count(),
            total_texels: 6 * fw * fw,
        })
    }
}

#[derive(Args)]
pub struct LossesArgs {
    /// Reference panorama
    #[arg(long = "ref")]
    pub reference: PathBuf,

    /// Target panorama
    #[arg(long)]
    pub target: PathBuf,

    /// Reference depth panorama
    #[arg(long)]
    pub depth: PathBuf,

    /// Camera motion: a pose JSON, or poses.json from `render`
    #[arg(long)]
    pub pose: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub pair: usize,

    /// Explainability mask panorama with values in (0, 1]
    #[arg(long)]
    pub mask: Option<PathBuf>,

    /// JSON array of six per-face poses (faces B, D, F, L, R, U, each in its
    /// own camera frame); the motion is replicated to all faces otherwise
    #[arg(long)]
    pub face_poses: Option<PathBuf>,

    #[arg(long)]
    pub face_width: Option<usize>,

    #[arg(long)]
    pub lambda_pose: Option<f64>,

    #[arg(long)]
    pub lambda_sm: Option<f64>,

    #[arg(long)]
    pub lambda_exp: Option<f64>,
}

impl LossesArgs {
    pub fn apply(&self, cfg: &mut Config) {
        set(&mut cfg.weights.lambda_pose, self.lambda_pose);
        set(&mut cfg.weights.lambda_sm, self.lambda_sm);
        set(&mut cfg.weights.lambda_exp, self.lambda_exp);
    }

    pub fn run(&self, cfg: &Config) -> Result<()> {
        cfg.weights.validate()?;
        let pair = CubePair::load(&self.reference, &self.target, &self.depth, self.face_width)?;
        let fw = pair.reference.face_width();
        let x = match &self.mask {
            Some(p) => MaskMap::new(equirect_to_cubemap(&read_equirect(p)?, fw)?)?,
            None => MaskMap::ones(fw),
        };
        let motion = load_motion(self.pose.as_deref(), self.pair)?;
        let face_poses = match &self.face_poses {
            Some(p) => {
                let records: Vec<PoseRecord> = serde_json::from_str(&std::fs::read_to_string(p)?)?;
                let poses: Vec<PoseSE3> = records.into_iter().map(PoseSE3::from).collect();
                <[PoseSE3; 6]>::try_from(poses).map_err(|v| {
                    Error::InvalidArgument(format!("expected {} face poses, got {}", Face::ALL.len(), v.len()))
                })?
            }
            None => replicate_front_pose(&motion),
        };
        let (warped, valid) = warp_with_motion(&pair.depth, &pair.target, &motion)?;
        let parts = LossParts {
            rec: photometric_loss(&pair.reference, &warped, &valid, &x)?,
            pose: pose_consistency_loss(&face_poses),
            sm: smoothness_loss(&pair.depth),
            exp: explainability_loss(&x)?,
        };
        print_json(&LossReport::new(parts, cfg.weights))
    }
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Reference panorama
    #[arg(long = "ref")]
    pub reference: PathBuf,

    /// Target panorama
    #[arg(long)]
    pub target: PathBuf,

    /// Reference depth panorama
    #[arg(long)]
    pub depth: PathBuf,

    /// Initial motion: a pose JSON, or poses.json from `render`; identity
    /// when absent
    #[arg(long)]
    pub init: Option<PathBuf>,

    #[arg(long, default_value_t = 0)]
    pub pair: usize,

    #[arg(long)]
    pub face_width: Option<usize>,

    #[arg(long)]
    pub max_iterations: Option<usize>,

    #[arg(long)]
    pub pyramid_levels: Option<usize>,

    #[arg(long)]
    pub huber_threshold: Option<f64>,

    /// Leave the per-iteration history out of the output
    #[arg(long)]
    pub no_history: bool,
}

impl EstimateArgs {
    pub fn apply(&self, cfg: &mut Config) {
        set(&mut cfg.solver.max_iterations, self.max_iterations);
        set(&mut cfg.solver.pyramid_levels, self.pyramid_levels);
        set(&mut cfg.solver.huber_threshold, self.huber_threshold);
    }

    pub fn run(&self, cfg: &Config) -> Result<()> {
        let pair = CubePair::load(&self.reference, &self.target, &self.depth, self.face_width)?;
        let init = load_motion(self.init.as_deref(), self.pair)?;
        let mut est = estimate_pose(&pair.reference, &pair.target, &pair.depth, &init, &cfg.solver)?;
        if self.no_history {
            est.history.clear();
        }
        print_json(&est)
    }
}

#[derive(Subcommand)]
pub enum MetricsCommand {
    /// Depth error against ground truth
    Depth(DepthArgs),
    /// Relative pose error between two trajectories
    Rpe(RpeArgs),
}

#[derive(Args)]
pub struct DepthArgs {
    /// Predicted depth panorama
    #[arg(long)]
    pub pred: PathBuf,

    /// Ground-truth depth panorama
    #[arg(long)]
    pub gt: PathBuf,

    /// Panorama whose nonzero pixels restrict the evaluation
    #[arg(long)]
    pub mask: Option<PathBuf>,

    /// Rescale predictions by median(gt) / median(pred)
    #[arg(long)]
    pub median_scaling: bool,

    /// Evaluate on the cubemap (face width h/2) instead of the panorama
    #[arg(long)]
    pub cube: bool,
}

#[derive(Args)]
pub struct RpeArgs {
    /// Predicted trajectory JSON (`fps`, `poses`)
    #[arg(long)]
    pub pred: PathBuf,

    /// Ground-truth trajectory JSON
    #[arg(long)]
    pub gt: PathBuf,
}

impl MetricsCommand {
    pub fn apply(&self, cfg: &mut Config) {
        if let MetricsCommand::Depth(a) = self {
            set(&mut cfg.metrics.median_scaling, a.median_scaling.then_some(true));
        }
    }

    pub fn run(&self, cfg: &Config) -> Result<()> {
        match self {
            MetricsCommand::Depth(a) => a.run(cfg.metrics.median_scaling),
            MetricsCommand::Rpe(a) => {
                let pred = Trajectory::load(&a.pred)?.relative_poses();
                let gt = Trajectory::load(&a.gt)?.relative_poses();
                print_json(&RpeReport::new(rpe(&pred, &gt)?, gt.len()))
            }
        }
    }
}

impl DepthArgs {
    fn run(&self, median_scaling: bool) -> Result<()> {
        let pred = read_depth(&self.pred)?;
        let gt = read_depth(&self.gt)?;
        if !pred.raster().same_shape(gt.raster()) {
            return Err(Error::InvalidArgument("predicted and ground-truth depth differ in size".into()));
        }
        let mask = match &self.mask {
            Some(p) => {
                let m = read_raster(p)?;
                if m.width() != gt.width() || m.height() != gt.height() {
                    return Err(Error::InvalidArgument("mask differs in size from the depth".into()));
                }
                Some(m)
            }
            None => None,
        };
        let report = if self.cube {
            let fw = gt.height() / 2;
            let p = CubemapDepth::new(equirect_depth_to_cubemap(&pred, fw)?)?;
            let g = CubemapDepth::new(equirect_depth_to_cubemap(&gt, fw)?)?;
            let m = match &mask {
                Some(m) => {
                    let e = EquirectImage::new(single_channel(m))?;
                    Some(equirect_to_cubemap(&e, fw)?)
                }
                None => None,
            };
            let valid = CubeMask::from_faces(
                fw,
                Face::ALL
                    .iter()
                    .map(|&f| {
                        (0..fw * fw)
                            .map(|i| {
                                let (u, v) = (i % fw, i / fw);
                                p.get(f, u, v) > 0.0
                                    && g.get(f, u, v) > 0.0
                                    && m.as_ref().is_none_or(|m| m.face(f).get(u, v, 0) > 0.5)
                            })
                            .collect()
                    })
                    .collect(),
            )?;
            depth_metrics_cubemap(&p, &g, &valid, median_scaling)?
        } else {
            let (pd, gd) = (pred.raster().data(), gt.raster().data());
            let c = mask.as_ref().map_or(1, Raster::channels);
            let valid: Vec<bool> = (0..gd.len())
                .map(|i| pd[i] > 0.0 && gd[i] > 0.0 && mask.as_ref().is_none_or(|m| m.data()[i * c] > 0.0))
                .collect();
            depth_metrics_equirect(&pred, &gt, &valid, median_scaling)?
        };
        print_json(&report)
    }
}

fn single_channel(r: &Raster) -> Raster {
    Raster::from_fn(r.width(), r.height(), 1, |col, row, _| r.get(col, row, 0))
}

#[derive(Args)]
pub struct BenchArgs {
    /// Comma-separated panorama heights
    #[arg(long, value_delimiter = ',')]
    pub heights: Option<Vec<usize>>,

    /// Timed repetitions per height (medians are reported)
    #[arg(long)]
    pub iters: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,
}

impl BenchArgs {
    pub fn apply(&self, cfg: &mut Config) {
        set(&mut cfg.bench.heights, self.heights.clone());
        set(&mut cfg.bench.iters, self.iters);
        set(&mut cfg.bench.seed, self.seed);
    }

    pub fn run(&self, cfg: &Config) -> Result<()> {
        let b = &cfg.bench;
        print_json(&run_bench(&b.heights, b.iters, b.seed)?)
    }
}
