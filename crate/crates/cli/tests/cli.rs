use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cubesphere::io::{read_pfm, read_raster, write_pfm};
use cubesphere::raster::Raster;
use serde_json::{json, Value};
use tempfile::TempDir;

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cubesphere"))
}

fn run(args: &[&str]) -> Output {
    cli().args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn render_pair(dir: &Path, seed: u64, height: usize) -> PathBuf {
    let out = dir.join(format!("seq{seed}"));
    let status = run(&[
        "render",
        "--seed",
        &seed.to_string(),
        "--frames",
        "2",
        "--height",
        &height.to_string(),
        "--outdir",
        p(&out),
    ])
    .status;
    assert!(status.success());
    out
}

#[test]
fn malformed_pfm_exits_with_parse_code() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.pfm");
    std::fs::write(&bad, b"PF\nnot a size\n-1.0\n").unwrap();
    let out = run(&["convert", p(&bad), "--direction", "equi2cube", "-o", p(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "convert",
        p(&dir.path().join("absent.pfm")),
        "--direction",
        "equi2cube",
        "-o",
        p(&dir.path().join("c")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_arguments_exit_with_code_one() {
    let dir = TempDir::new().unwrap();
    let pano = dir.path().join("p.pfm");
    write_pfm(&pano, &Raster::filled(16, 8, 1, 1.0)).unwrap();
    let out = run(&["convert", p(&pano), "--direction", "equi2cube", "--size", "1", "-o", p(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(&["render", "--height", "1", "--outdir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));

    let out = cli()
        .args(["bench", "--heights", "64", "--iters", "1"])
        .env("CUBESPHERE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn two_frame_render_writes_expected_files() {
    let dir = TempDir::new().unwrap();
    let out = render_pair(dir.path(), 5, 64);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "frame_0000_depth.pfm",
            "frame_0000_rgb.png",
            "frame_0001_depth.pfm",
            "frame_0001_rgb.png",
            "poses.json"
        ]
    );
    let poses: Value = serde_json::from_str(&std::fs::read_to_string(out.join("poses.json")).unwrap()).unwrap();
    assert_eq!(poses["poses"].as_array().unwrap().len(), 2);
    assert_eq!(poses["relative"].as_array().unwrap().len(), 1);
}

#[test]
fn seeded_render_is_bitwise_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let ra = render_pair(a.path(), 11, 64);
    let rb = render_pair(b.path(), 11, 64);
    for name in ["frame_0000_rgb.png", "frame_0001_depth.pfm", "poses.json"] {
        assert_eq!(
            std::fs::read(ra.join(name)).unwrap(),
            std::fs::read(rb.join(name)).unwrap(),
            "{name}"
        );
    }
    let rc = render_pair(a.path(), 12, 64);
    assert_ne!(
        std::fs::read(ra.join("poses.json")).unwrap(),
        std::fs::read(rc.join("poses.json")).unwrap()
    );
}

fn rodrigues(w: [f64; 3]) -> [[f64; 3]; 3] {
    let th = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    let k = [w[0] / th, w[1] / th, w[2] / th];
    let (s, c) = th.sin_cos();
    let mut r = [[0.0; 3]; 3];
    let kx = [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { 1.0 } else { 0.0 };
            r[i][j] = id * c + s * kx[i][j] + (1.0 - c) * k[i] * k[j];
        }
    }
    r
}

#[test]
fn rendered_depth_matches_plane_distances() {
    let dir = TempDir::new().unwrap();
    let half = [2.0, 1.5, 2.5];
    let texture = json!({"type": "checker", "period_m": 0.5, "color_a": [0.2, 0.2, 0.2], "color_b": [0.8, 0.8, 0.8]});
    let mut textures = serde_json::Map::new();
    for id in ["x_neg", "x_pos", "y_neg", "y_pos", "z_neg", "z_pos"] {
        textures.insert(id.into(), texture.clone());
    }
    let scene = json!({"room": {"half_extents": half}, "obstacles": [], "textures": textures});
    let w = [0.1, 0.2, -0.3];
    let t = [0.3, -0.2, 0.1];
    let traj = json!({"fps": 30.0, "poses": [{"rotation_axis_angle": w, "translation": t}]});
    let scene_path = dir.path().join("scene.json");
    let traj_path = dir.path().join("traj.json");
    std::fs::write(&scene_path, scene.to_string()).unwrap();
    std::fs::write(&traj_path, traj.to_string()).unwrap();
    let out = dir.path().join("r");
    let status = run(&[
        "render",
        "--scene",
        p(&scene_path),
        "--trajectory",
        p(&traj_path),
        "--height",
        "64",
        "--outdir",
        p(&out),
    ])
    .status;
    assert!(status.success());
    let depth = read_pfm(&out.join("frame_0000_depth.pfm")).unwrap();
    let (h, wd) = (64usize, 128usize);
    let r = rodrigues(w);
    let pi = std::f64::consts::PI;
    for k in 0..1000usize {
        let idx = (k * 7919) % (h * wd);
        let (row, col) = (idx / wd, idx % wd);
        let lon = ((col as f64 + 0.5) / wd as f64 * 2.0 - 1.0) * pi;
        let lat = ((row as f64 + 0.5) / h as f64 * 2.0 - 1.0) * pi / 2.0;
        let dc = [lat.cos() * lon.sin(), lat.sin(), lat.cos() * lon.cos()];
        let dw: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[i][j] * dc[j]).sum()).collect();
        let dist = (0..3)
            .filter(|&i| dw[i] != 0.0)
            .map(|i| {
                let plane = if dw[i] > 0.0 { half[i] } else { -half[i] };
                (plane - t[i]) / dw[i]
            })
            .fold(f64::INFINITY, f64::min);
        let got = depth.get(col, row, 0);
        assert!((got - dist).abs() <= 1e-5 * dist, "pixel ({row},{col}): {got} vs {dist}");
    }
}

#[test]
fn constant_panorama_round_trips_exactly() {
    let dir = TempDir::new().unwrap();
    let pano = dir.path().join("c.pfm");
    write_pfm(&pano, &Raster::filled(64, 32, 3, 0.625)).unwrap();
    let stem = dir.path().join("faces");
    let back = dir.path().join("back.pfm");
    assert!(run(&["convert", p(&pano), "--direction", "equi2cube", "-o", p(&stem)]).status.success());
    assert!(run(&["convert", p(&stem), "--direction", "cube2equi", "-o", p(&back)]).status.success());
    let r = read_pfm(&back).unwrap();
    assert_eq!((r.width(), r.height(), r.channels()), (64, 32, 3));
    assert!(r.data().iter().all(|&v| v == 0.625));
}

#[test]
fn rendered_panorama_round_trip_error_is_small() {
    let dir = TempDir::new().unwrap();
    let seq = render_pair(dir.path(), 2, 128);
    let src = seq.join("frame_0000_rgb.png");
    let stem = dir.path().join("faces");
    let back = dir.path().join("back.pfm");
    assert!(run(&["convert", p(&src), "--direction", "equi2cube", "--size", "64", "-o", p(&stem)]).status.success());
    assert!(run(&["convert", p(&stem), "--direction", "cube2equi", "--size", "128", "-o", p(&back)]).status.success());
    let a = read_raster(&src).unwrap();
    let b = read_pfm(&back).unwrap();
    let (mut sum, mut n) = (0.0, 0usize);
    for row in 0..128 {
        let lat = ((row as f64 + 0.5) / 128.0 * 2.0 - 1.0) * 90.0;
        if lat.abs() > 60.0 {
            continue;
        }
        for col in 0..256 {
            for k in 0..3 {
                sum += (a.get(col, row, k) - b.get(col, row, k)).abs();
                n += 1;
            }
        }
    }
    let mae = sum / n as f64;
    assert!(mae < 3e-2, "round-trip MAE {mae}");
}

#[test]
fn losses_behave_on_synthetic_pairs() {
    let dir = TempDir::new().unwrap();
    let seq = render_pair(dir.path(), 7, 128);
    let f0 = seq.join("frame_0000_rgb.png");
    let f1 = seq.join("frame_0001_rgb.png");
    let d0 = seq.join("frame_0000_depth.pfm");
    let poses = seq.join("poses.json");

    let same = ok_json(&["losses", "--ref", p(&f0), "--target", p(&f0), "--depth", p(&d0)]);
    assert!(same["rec"].as_f64().unwrap() < 1e-12);

    let gt = ok_json(&["losses", "--ref", p(&f0), "--target", p(&f1), "--depth", p(&d0), "--pose", p(&poses)]);
    let rec_gt = gt["rec"].as_f64().unwrap();
    assert!(gt["total"].as_f64().unwrap() < 0.03, "{gt}");
    assert_eq!(gt["weights"]["lambda_sm"].as_f64(), Some(0.04));

    let file: Value = serde_json::from_str(&std::fs::read_to_string(&poses).unwrap()).unwrap();
    let mut rel = file["relative"][0].clone();
    let y = rel["rotation_axis_angle"][1].as_f64().unwrap();
    rel["rotation_axis_angle"][1] = json!(y + 5f64.to_radians());
    let bad = dir.path().join("bad_pose.json");
    std::fs::write(&bad, rel.to_string()).unwrap();
    let off = ok_json(&["losses", "--ref", p(&f0), "--target", p(&f1), "--depth", p(&d0), "--pose", p(&bad)]);
    assert!(off["rec"].as_f64().unwrap() > rec_gt);

    let weighted = ok_json(&[
        "losses", "--ref", p(&f0), "--target", p(&f1), "--depth", p(&d0), "--pose", p(&poses), "--lambda-sm", "0",
    ]);
    let total = weighted["total"].as_f64().unwrap();
    let expect = weighted["rec"].as_f64().unwrap() + 0.1 * weighted["pose"].as_f64().unwrap();
    assert!((total - expect).abs() < 1e-8);
}

#[test]
fn estimate_pose_recovers_rendered_motion() {
    let dir = TempDir::new().unwrap();
    let seq = render_pair(dir.path(), 3, 128);
    let f0 = seq.join("frame_0000_rgb.png");
    let f1 = seq.join("frame_0001_rgb.png");
    let d0 = seq.join("frame_0000_depth.pfm");
    let est = ok_json(&["estimate-pose", "--ref", p(&f0), "--target", p(&f1), "--depth", p(&d0), "--no-history"]);
    assert_eq!(est["converged"], json!(true));
    assert!(est["history"].as_array().unwrap().is_empty());
    let file: Value = serde_json::from_str(&std::fs::read_to_string(seq.join("poses.json")).unwrap()).unwrap();
    let gt = &file["relative"][0];
    for key in ["rotation_axis_angle", "translation"] {
        for i in 0..3 {
            let a = est["pose"][key][i].as_f64().unwrap();
            let b = gt[key][i].as_f64().unwrap();
            assert!((a - b).abs() < 2e-3, "{key}[{i}]: {a} vs {b}");
        }
    }

    let same = ok_json(&["estimate-pose", "--ref", p(&f0), "--target", p(&f0), "--depth", p(&d0)]);
    for key in ["rotation_axis_angle", "translation"] {
        for i in 0..3 {
            assert!(same["pose"][key][i].as_f64().unwrap().abs() < 1e-6);
        }
    }
}

#[test]
fn metrics_on_identical_inputs_are_perfect() {
    let dir = TempDir::new().unwrap();
    let seq = render_pair(dir.path(), 4, 64);
    let d = seq.join("frame_0000_depth.pfm");
    let m = ok_json(&["metrics", "depth", "--pred", p(&d), "--gt", p(&d)]);
    assert_eq!(m["abs_rel"].as_f64(), Some(0.0));
    assert_eq!(m["delta<1.25"].as_f64(), Some(1.0));
    assert_eq!(m["valid_pixels"].as_u64(), Some(64 * 128));
    let c = ok_json(&["metrics", "depth", "--pred", p(&d), "--gt", p(&d), "--cube", "--median-scaling"]);
    assert_eq!(c["rmse"].as_f64(), Some(0.0));
    assert_eq!(c["median_scaling"], json!(true));

    let poses = seq.join("poses.json");
    let r = ok_json(&["metrics", "rpe", "--pred", p(&poses), "--gt", p(&poses)]);
    assert_eq!(r["RPE-R_deg"].as_f64(), Some(0.0));
    assert_eq!(r["RPE-T"].as_f64(), Some(0.0));
    assert_eq!(r["pairs"].as_u64(), Some(1));
}

#[test]
fn warp_writes_faces_and_point_cloud() {
    let dir = TempDir::new().unwrap();
    let seq = render_pair(dir.path(), 6, 64);
    let stem = dir.path().join("warped");
    let ply = dir.path().join("cloud.ply");
    let s = ok_json(&[
        "warp",
        "--depth",
        p(&seq.join("frame_0000_depth.pfm")),
        "--target",
        p(&seq.join("frame_0001_rgb.png")),
        "--pose",
        p(&seq.join("poses.json")),
        "-o",
        p(&stem),
        "--ply",
        p(&ply),
    ]);
    assert_eq!(s["face_width"].as_u64(), Some(32));
    assert_eq!(s["total_texels"].as_u64(), Some(6 * 32 * 32));
    for f in ["B", "D", "F", "L", "R", "U"] {
        assert!(dir.path().join(format!("warped_{f}.png")).exists());
        assert!(dir.path().join(format!("warped_valid_{f}.png")).exists());
    }
    let text = std::fs::read_to_string(&ply).unwrap();
    let header = format!("element vertex {}", s["valid_texels"]);
    assert!(text.contains(&header));
}

#[test]
fn bench_reports_ratio_and_consistent_speedup() {
    let r = ok_json(&["bench", "--heights", "64,128", "--iters", "1"]);
    assert_eq!(r["pixel_ratio"].as_f64(), Some(0.75));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let s = row["speedup"].as_f64().unwrap();
        let e = row["equi_ms"].as_f64().unwrap();
        let c = row["cube_ms"].as_f64().unwrap();
        assert!((s - e / c).abs() <= 1e-6 * s);
    }
}

#[test]
fn bench_medians_are_stable_across_iteration_counts() {
    let one = ok_json(&["bench", "--heights", "128", "--iters", "1"]);
    let nine = ok_json(&["bench", "--heights", "128", "--iters", "9"]);
    for key in ["equi_ms", "cube_ms"] {
        let a = one["rows"][0][key].as_f64().unwrap();
        let b = nine["rows"][0][key].as_f64().unwrap();
        assert!(a / b < 3.0 && b / a < 3.0, "{key}: {a} vs {b}");
    }
}

#[test]
fn config_precedence_is_flag_then_file_then_default() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"solver": {"max_iterations": 7}, "weights": {"lambda_sm": 0.5}}"#).unwrap();
    let base = ["estimate-pose", "--ref", "a.png", "--target", "b.png", "--depth", "d.pfm", "--dump-config"];

    let d = ok_json(&base);
    assert_eq!(d["solver"]["max_iterations"].as_u64(), Some(50));

    let mut with_file = base.to_vec();
    with_file.extend(["--config", p(&cfg)]);
    let f = ok_json(&with_file);
    assert_eq!(f["solver"]["max_iterations"].as_u64(), Some(7));
    assert_eq!(f["weights"]["lambda_sm"].as_f64(), Some(0.5));
    assert_eq!(f["weights"]["lambda_pose"].as_f64(), Some(0.1));

    let mut with_flag = with_file.clone();
    with_flag.extend(["--max-iterations", "9"]);
    let g = ok_json(&with_flag);
    assert_eq!(g["solver"]["max_iterations"].as_u64(), Some(9));

    std::fs::write(&cfg, r#"{"solver": {"max_iterations": "many"}}"#).unwrap();
    let out = run(&with_file);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_override_is_honored() {
    let out = cli()
        .args(["bench", "--heights", "64", "--iters", "1"])
        .env("CUBESPHERE_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
