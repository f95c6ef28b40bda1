//! File formats: PNG (8/16-bit) and PFM rasters, six-file cubemaps, ASCII
//! PLY point clouds, and JSON with 9 significant digits.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Face;
use crate::projection::Cubemap;
use crate::raster::Raster;
use crate::warping::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Writes a 1- or 3-channel raster as PNG, clamping samples to `[0, 1]`.
pub fn write_png(path: &Path, r: &Raster, depth: BitDepth) -> Result<()> {
    let (w, h) = (r.width() as u32, r.height() as u32);
    let scale = |v: f64, max: f64| (v.clamp(0.0, 1.0) * max).round();
    let img = match (r.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([scale(r.get(x as usize, y as usize, 0), 255.0) as u8])
        })),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([scale(r.get(x as usize, y as usize, 0), 65535.0) as u16])
        })),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            let p = r.pixel(x as usize, y as usize);
            Rgb([0, 1, 2].map(|k| scale(p[k], 255.0) as u8))
        })),
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(ImageBuffer::from_fn(w, h, |x, y| {
            let p = r.pixel(x as usize, y as usize);
            Rgb([0, 1, 2].map(|k| scale(p[k], 65535.0) as u16))
        })),
        (c, _) => return Err(Error::invalid(format!("PNG needs 1 or 3 channels, got {c}"))),
    };
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a PNG into `[0, 1]` samples: grayscale images give one channel,
/// everything else three (alpha dropped).
pub fn read_png(path: &Path) -> Result<Raster> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let buf = img.to_rgb32f();
        Raster::from_vec(w, h, 3, buf.into_raw().into_iter().map(f64::from).collect())
    } else {
        let buf = img.to_luma32f();
        Raster::from_vec(w, h, 1, buf.into_raw().into_iter().map(f64::from).collect())
    }
}

/// Writes a little-endian PFM (`Pf` for one channel, `PF` for three).
pub fn write_pfm(path: &Path, r: &Raster) -> Result<()> {
    let magic = match r.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::invalid(format!("PFM needs 1 or 3 channels, got {c}"))),
    };
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "{magic}\n{} {}\n-1.0\n", r.width(), r.height())?;
    let row_len = r.width() * r.channels();
    for row in r.data().chunks(row_len).rev() {
        for v in row {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parses PFM bytes of either endianness.
pub fn parse_pfm(bytes: &[u8]) -> Result<Raster> {
    // Header: magic, width, height, scale, each ended by whitespace; one
    // whitespace byte separates the scale from the pixel data.
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse("truncated PFM header"));
        }
        let t = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::parse("PFM header is not ASCII"))?
            .to_string();
        Ok(t)
    };
    let channels = match token()?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        m => return Err(Error::parse(format!("bad PFM magic {m:?}"))),
    };
    let num = |t: String, what: &str| -> Result<usize> {
        t.parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| Error::parse(format!("bad PFM {what} {t:?}")))
    };
    let w = num(token()?, "width")?;
    let h = num(token()?, "height")?;
    let scale_tok = token()?;
    let scale: f64 = scale_tok
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::parse(format!("bad PFM scale {scale_tok:?}")))?;
    drop(token);
    let data_start = pos + 1;
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::parse("PFM dimensions overflow"))?;
    if bytes.len() < data_start || bytes.len() - data_start != 4 * n {
        return Err(Error::parse(format!(
            "PFM payload has {} bytes, expected {}",
            bytes.len().saturating_sub(data_start),
            4 * n
        )));
    }
    let little = scale < 0.0;
    let row_len = w * channels;
    let mut data = vec![0.0; n];
    for (i, chunk) in bytes[data_start..].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        // File rows run bottom to top.
        let (file_row, off) = (i / row_len, i % row_len);
        data[(h - 1 - file_row) * row_len + off] = v as f64;
    }
    Raster::from_vec(w, h, channels, data)
}

pub fn read_pfm(path: &Path) -> Result<Raster> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    parse_pfm(&bytes)
}

/// Reads `.png` or `.pfm` by extension.
pub fn read_raster(path: &Path) -> Result<Raster> {
    match extension(path)?.as_str() {
        "png" => read_png(path),
        "pfm" => read_pfm(path),
        e => Err(Error::invalid(format!("unsupported image extension {e:?}"))),
    }
}

/// Writes `.png` (8-bit) or `.pfm` by extension.
pub fn write_raster(path: &Path, r: &Raster) -> Result<()> {
    match extension(path)?.as_str() {
        "png" => write_png(path, r, BitDepth::Eight),
        "pfm" => write_pfm(path, r),
        e => Err(Error::invalid(format!("unsupported image extension {e:?}"))),
    }
}

fn extension(path: &Path) -> Result<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .ok_or_else(|| Error::invalid(format!("{} has no file extension", path.display())))
}

/// The six face files of a cubemap: `{stem}_{B,D,F,L,R,U}.{ext}`.
pub fn cubemap_paths(stem: &Path, ext: &str) -> [PathBuf; 6] {
    Face::ALL.map(|f| {
        let mut name = stem.file_name().unwrap_or_default().to_os_string();
        name.push(format!("_{}.{ext}", f.letter()));
        stem.with_file_name(name)
    })
}

pub fn write_cubemap(stem: &Path, ext: &str, c: &Cubemap) -> Result<[PathBuf; 6]> {
    let paths = cubemap_paths(stem, ext);
    for (f, p) in Face::ALL.iter().zip(&paths) {
        write_raster(p, c.face(*f))?;
    }
    Ok(paths)
}

pub fn read_cubemap(stem: &Path, ext: &str) -> Result<Cubemap> {
    let faces = cubemap_paths(stem, ext)
        .iter()
        .map(|p| read_raster(p))
        .collect::<Result<Vec<_>>>()?;
    Cubemap::new(faces)
}

/// Writes valid points as ASCII PLY; `colors` (3 channels, `[0, 1]`)
/// supplies per-point RGB, gray otherwise.
pub fn write_ply(out: &mut impl Write, cloud: &PointCloud, colors: Option<&Cubemap>) -> Result<()> {
    if let Some(c) = colors {
        if c.face_width() != cloud.face_width() || c.channels() != 3 {
            return Err(Error::invalid("PLY colors must be a 3-channel cubemap matching the cloud"));
        }
    }
    let n = cloud.valid().count();
    write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {n}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    )?;
    for (f, u, v, p) in cloud.iter_valid() {
        let rgb = match colors {
            Some(c) => {
                let px = c.face(f).pixel(u, v);
                [0, 1, 2].map(|k| (px[k].clamp(0.0, 1.0) * 255.0).round() as u8)
            }
            None => [128; 3],
        };
        writeln!(out, "{} {} {} {} {} {}", p.x as f32, p.y as f32, p.z as f32, rgb[0], rgb[1], rgb[2])?;
    }
    Ok(())
}

/// Rounds `x` to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn round_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig9(x))) {
                *n = r;
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_value),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 9 significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json_string(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::warping::{depth_to_pointcloud, CubemapDepth};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pfm_round_trip_both_channel_counts() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for c in [1, 3] {
            let r = Raster::from_fn(5, 3, c, |_, _, _| rng.random_range(-10.0..10.0) as f32 as f64);
            let p = dir.path().join(format!("x{c}.pfm"));
            write_pfm(&p, &r).unwrap();
            assert_eq!(read_pfm(&p).unwrap(), r);
        }
    }

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let r = Raster::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pfm");
        write_pfm(&p, &r).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
        assert_eq!(first, 3.0);
    }

    #[test]
    fn big_endian_pfm_parses() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_be_bytes());
        bytes.extend_from_slice(&7.0f32.to_be_bytes());
        let r = parse_pfm(&bytes).unwrap();
        assert_eq!(r.data(), &[7.0, 2.5]);
    }

    #[test]
    fn malformed_pfm_is_a_parse_error() {
        for bad in [
            &b"P6\n1 1\n-1.0\n"[..],
            b"Pf\nx 1\n-1.0\n",
            b"Pf\n1 1\n0\n\0\0\0\0",
            b"Pf\n2 2\n-1.0\n\0\0\0\0",
            b"Pf\n1",
        ] {
            let e = parse_pfm(bad).unwrap_err();
            assert!(matches!(e, Error::Parse(_)), "{e}");
            assert!(e.is_io());
        }
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_fn(4, 3, 3, |c, row, k| (c + row * 4 + k) as f64 / 20.0);
        let p8 = dir.path().join("a.png");
        write_png(&p8, &r, BitDepth::Eight).unwrap();
        let back = read_png(&p8).unwrap();
        assert_eq!(back.channels(), 3);
        assert!(back.data().iter().zip(r.data()).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-6));
        let g = Raster::from_fn(4, 3, 1, |c, _, _| c as f64 / 3.0);
        let p16 = dir.path().join("g.png");
        write_png(&p16, &g, BitDepth::Sixteen).unwrap();
        let back = read_png(&p16).unwrap();
        assert_eq!(back.channels(), 1);
        assert!(back.data().iter().zip(g.data()).all(|(a, b)| (a - b).abs() <= 0.5 / 65535.0 + 1e-6));
    }

    #[test]
    fn missing_file_is_io_error() {
        let e = read_raster(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(e.is_io());
        let e = read_pfm(Path::new("/nonexistent/x.pfm")).unwrap_err();
        assert!(matches!(e, Error::Io(_)));
    }

    #[test]
    fn cubemap_files_use_face_letters() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("frame");
        let c = Cubemap::from_fn(4, 1, |f, u, v, _| (f.index() * 16 + v * 4 + u) as f64);
        let paths = write_cubemap(&stem, "pfm", &c).unwrap();
        let names: Vec<String> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["frame_B.pfm", "frame_D.pfm", "frame_F.pfm", "frame_L.pfm", "frame_R.pfm", "frame_U.pfm"]);
        assert_eq!(read_cubemap(&stem, "pfm").unwrap(), c);
    }

    #[test]
    fn ply_lists_valid_points() {
        let mut d = Cubemap::filled(2, 1, 2.0);
        d.face_mut(Face::Up).set(0, 0, 0, 0.0);
        let cloud = depth_to_pointcloud(&CubemapDepth::new(d).unwrap());
        let colors = Cubemap::filled(2, 3, 1.0);
        let mut buf = Vec::new();
        write_ply(&mut buf, &cloud, Some(&colors)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("element vertex 23\n"));
        let body: Vec<&str> = text.split("end_header\n").nth(1).unwrap().lines().collect();
        assert_eq!(body.len(), 23);
        assert!(body[0].ends_with("255 255 255"));
        let xyz: Vec<f64> = body[0].split(' ').take(3).map(|t| t.parse().unwrap()).collect();
        assert!(((xyz[0].powi(2) + xyz[1].powi(2) + xyz[2].powi(2)).sqrt() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn json_rounds_to_nine_digits() {
        assert_eq!(round_sig9(1.0 / 3.0), 0.333333333);
        assert_eq!(round_sig9(123456789.123), 123456789.0);
        assert_eq!(round_sig9(0.0), 0.0);
        let s = to_json_string(&serde_json::json!({"a": [2.0f64 / 3.0], "n": 3})).unwrap();
        assert!(s.contains("0.666666667"));
        assert!(s.contains("\"n\": 3"));
    }
}
