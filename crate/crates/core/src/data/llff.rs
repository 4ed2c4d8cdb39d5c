//! Import of LLFF-style `poses_bounds.npy` scenes into a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use super::image::Image;
use super::manifest::{Role, SceneManifest, ViewSpec, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::geometry::{add, cross, normalize, scale_f, sub, Intrinsics, Pose, Vec3};

/// A 2-D `f64` array read from a `.npy` file.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

fn header_value<'a>(header: &'a str, key: &str) -> Option<&'a str> {
    let i = header.find(&format!("'{key}'"))?;
    let rest = header[i + key.len() + 2..].trim_start().strip_prefix(':')?.trim_start();
    Some(rest)
}

/// Parse a little-endian, C-ordered 2-D `f4`/`f8` npy buffer.
pub fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    let bad = |m: &str| Error::Manifest(format!("npy: {m}"));
    if bytes.len() < 10 || &bytes[..6] != b"\x93NUMPY" {
        return Err(bad("missing magic"));
    }
    let (hlen, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize, 12),
        v => return Err(bad(&format!("unsupported version {v}"))),
    };
    let header = std::str::from_utf8(bytes.get(start..start + hlen).ok_or_else(|| bad("truncated header"))?)
        .map_err(|_| bad("header is not utf-8"))?;
    let descr = header_value(header, "descr").ok_or_else(|| bad("no descr"))?;
    let width = if descr.starts_with("'<f8'") {
        8
    } else if descr.starts_with("'<f4'") {
        4
    } else {
        return Err(bad(&format!("unsupported dtype {descr}")));
    };
    if header_value(header, "fortran_order").is_some_and(|v| v.starts_with("True")) {
        return Err(bad("fortran order is not supported"));
    }
    let shape = header_value(header, "shape").ok_or_else(|| bad("no shape"))?;
    let inner = shape
        .strip_prefix('(')
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| bad("malformed shape"))?;
    let dims: Vec<usize> = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad("malformed shape")))
        .collect::<Result<_>>()?;
    let (rows, cols) = match dims[..] {
        [r, c] => (r, c),
        _ => return Err(bad("expected a 2-D array")),
    };
    let body = &bytes[start + hlen..];
    if body.len() < rows * cols * width {
        return Err(bad("truncated data"));
    }
    let data = body[..rows * cols * width]
        .chunks_exact(width)
        .map(|b| {
            if width == 8 {
                f64::from_le_bytes(b.try_into().expect("8 bytes"))
            } else {
                f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64
            }
        })
        .collect();
    Ok(NpyArray { rows, cols, data })
}

/// Camera-to-world poses `(columns right, up, back | t)` after
/// converting from LLFF's `(down, right, back)` columns, scaling so the
/// closest bound sits at `1 / bd_factor` and recentering on the mean pose.
pub fn convert_poses(arr: &NpyArray, bd_factor: f64) -> Result<(Vec<Pose>, Vec<[f64; 2]>, [f64; 3])> {
    if arr.cols != 17 {
        return Err(Error::Manifest(format!("poses_bounds needs 17 columns, got {}", arr.cols)));
    }
    let mut cols: Vec<[Vec3<f64>; 4]> = Vec::with_capacity(arr.rows);
    let mut bounds = Vec::with_capacity(arr.rows);
    let mut hwf = [0.0; 3];
    for i in 0..arr.rows {
        let row = &arr.data[i * 17..(i + 1) * 17];
        let col = |c: usize| [row[c], row[5 + c], row[10 + c]];
        cols.push([col(1), col(0).map(|v| -v), col(2), col(3)]);
        bounds.push([row[15], row[16]]);
        hwf = col(4);
    }
    let min_near = bounds.iter().map(|b| b[0]).fold(f64::INFINITY, f64::min);
    if !(min_near > 0.0) {
        return Err(Error::Manifest("non-positive scene bounds".into()));
    }
    let sc = 1.0 / (min_near * bd_factor);
    for c in &mut cols {
        c[3] = scale_f(c[3], sc);
    }
    for b in &mut bounds {
        *b = b.map(|v| v * sc);
    }
    let n = cols.len() as f64;
    let center = scale_f(cols.iter().fold([0.0; 3], |a, c| add(a, c[3])), 1.0 / n);
    let z = normalize(cols.iter().fold([0.0; 3], |a, c| add(a, c[2])));
    let up = cols.iter().fold([0.0; 3], |a, c| add(a, c[1]));
    let x = normalize(cross(up, z));
    let y = normalize(cross(z, x));
    let to_avg = |v: Vec3<f64>| [crate::geometry::dot(x, v), crate::geometry::dot(y, v), crate::geometry::dot(z, v)];
    let poses = cols
        .iter()
        .map(|c| {
            let r = [to_avg(c[0]), to_avg(c[1]), to_avg(c[2])];
            let t = to_avg(sub(c[3], center));
            Pose {
                rotation: [[r[0][0], r[1][0], r[2][0]], [r[0][1], r[1][1], r[2][1]], [r[0][2], r[1][2], r[2][2]]],
                translation: t,
            }
            .orthonormalized()
        })
        .collect();
    Ok((poses, bounds, hwf))
}

/// Build a manifest for `dir/poses_bounds.npy` and the PNGs in
/// `dir/images`. Every `hold`-th view (starting at 0) becomes a test view.
pub fn import_llff(dir: &Path, hold: usize) -> Result<SceneManifest> {
    let npy = dir.join("poses_bounds.npy");
    let arr = parse_npy(&fs::read(&npy).map_err(|e| Error::io(&npy, e))?)?;
    let (poses, bounds, hwf) = convert_poses(&arr, 0.75)?;
    let img_dir = dir.join("images");
    let mut files: Vec<PathBuf> = fs::read_dir(&img_dir)
        .map_err(|e| Error::io(&img_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.len() != poses.len() {
        return Err(Error::Manifest(format!(
            "{} PNG images for {} poses in {}",
            files.len(),
            poses.len(),
            dir.display()
        )));
    }
    let first = Image::load_png(&files[0])?;
    let focal = hwf[2] * first.width as f64 / hwf[1];
    let far = bounds.iter().map(|b| b[1]).fold(0.0, f64::max);
    let views = poses
        .into_iter()
        .zip(files)
        .enumerate()
        .map(|(i, (pose, file))| {
            let rel = file.strip_prefix(dir).map(Path::to_path_buf).unwrap_or(file);
            ViewSpec {
                id: i,
                image: Some(rel),
                pose,
                intrinsics: Intrinsics {
                    focal,
                    width: first.width,
                    height: first.height,
                },
                near: 1.0,
                far: far.max(1.0 + 1e-6),
                role: if hold > 0 && i % hold == 0 { Role::Test } else { Role::Train },
                predeblurred: None,
                sharp: None,
                blurry: None,
            }
        })
        .collect();
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "llff".into());
    let m = SceneManifest {
        schema: SCHEMA_VERSION,
        name,
        ndc: true,
        mgs: None,
        views,
    };
    m.validate()?;
    Ok(m)
}

/// Serialize a 2-D `f64` array as npy (used for fixtures).
pub fn write_npy(arr: &NpyArray) -> Vec<u8> {
    let mut header = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}), }}",
        arr.rows, arr.cols
    );
    let total = 10 + header.len() + 1;
    header.push_str(&" ".repeat((64 - total % 64) % 64));
    header.push('\n');
    let mut out = b"\x93NUMPY\x01\x00".to_vec();
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in &arr.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn npy_round_trip() {
        let arr = NpyArray {
            rows: 2,
            cols: 3,
            data: vec![1.0, -2.5, 3.0, 0.0, 1e-9, 7.0],
        };
        let bytes = write_npy(&arr);
        assert_eq!(bytes.len() % 16, 0);
        assert_eq!(parse_npy(&bytes).unwrap(), arr);
        assert!(parse_npy(b"nope").is_err());
    }

    #[test]
    fn identity_llff_pose_becomes_forward_facing() {
        // LLFF columns (down, right, back): the standard camera looking down -z.
        let mut row = vec![0.0; 17];
        let m = [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for r in 0..3 {
            for c in 0..3 {
                row[r * 5 + c] = m[r][c];
            }
        }
        row[4] = 32.0;
        row[9] = 48.0;
        row[14] = 40.0;
        row[15] = 2.0;
        row[16] = 10.0;
        let mut data = row.clone();
        let mut shifted = row;
        shifted[3] = 1.0;
        data.extend(shifted);
        let (poses, bounds, hwf) = convert_poses(&NpyArray { rows: 2, cols: 17, data }, 0.75).unwrap();
        assert_eq!(hwf, [32.0, 48.0, 40.0]);
        assert!((bounds[0][0] - 1.0 / 0.75).abs() < 1e-12);
        for p in &poses {
            p.validate().unwrap();
            let f = p.forward();
            assert!((f[2] + 1.0).abs() < 1e-9, "{f:?}");
        }
    }
}
