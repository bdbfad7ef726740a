//! Camera text files.
//!
//! ```text
//! # comment
//! extrinsic
//! r11 r12 r13 t1
//! r21 r22 r23 t2
//! r31 r32 r33 t3
//! intrinsic
//! fx  0  cx
//! 0   fy cy
//! 0   0  1
//! size W H
//! ```
//!
//! The extrinsic maps world to camera (`X_c = R X_w + t`). Keywords are
//! optional, a homogeneous `0 0 0 1` fourth extrinsic row is accepted, and
//! `size` may be omitted when the image size is known from elsewhere.

use std::fs;
use std::path::Path;

use gcmvs_core::geometry::{CameraModel, Intrinsics};
use gcmvs_core::{Mat3, Vec3};

use crate::error::{Error, Result};

pub fn parse_camera(text: &str, size: Option<(usize, usize)>) -> std::result::Result<CameraModel, String> {
    let mut nums = Vec::new();
    let mut file_size = None;
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    while let Some(t) = tokens.next() {
        match t {
            "extrinsic" | "intrinsic" => {}
            "size" => {
                let mut dim = || -> std::result::Result<usize, String> {
                    tokens
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| "size needs two positive integers".to_string())
                };
                file_size = Some((dim()?, dim()?));
            }
            _ => nums.push(t.parse::<f64>().map_err(|_| format!("unexpected token '{t}'"))?),
        }
    }
    let (ext, k) = match nums.len() {
        21 => (&nums[..12], &nums[12..]),
        25 => {
            if nums[12..16] != [0.0, 0.0, 0.0, 1.0] {
                return Err("fourth extrinsic row must be 0 0 0 1".into());
            }
            (&nums[..12], &nums[16..])
        }
        n => return Err(format!("expected 21 or 25 numbers, found {n}")),
    };
    if k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0 {
        return Err("intrinsic matrix must be [fx 0 cx; 0 fy cy; 0 0 1]".into());
    }
    let (width, height) = file_size.or(size).ok_or("image size unknown: add a 'size W H' line")?;
    let row = |i: usize| Vec3::new(ext[4 * i], ext[4 * i + 1], ext[4 * i + 2]);
    let rotation = Mat3::from_rows(row(0), row(1), row(2));
    let translation = Vec3::new(ext[3], ext[7], ext[11]);
    let intrinsics = Intrinsics {
        fx: k[0],
        fy: k[4],
        cx: k[2],
        cy: k[5],
    };
    CameraModel::new(intrinsics, rotation, translation, width, height).map_err(|e| e.to_string())
}

/// Shortest round-trip formatting, so parsing recovers every value exactly.
pub fn format_camera(cam: &CameraModel) -> String {
    let r = &cam.rotation.0;
    let t = cam.translation;
    let k = &cam.intrinsics;
    let mut s = String::from("extrinsic\n");
    for (i, ti) in [t.x, t.y, t.z].into_iter().enumerate() {
        s.push_str(&format!("{} {} {} {}\n", r[i][0], r[i][1], r[i][2], ti));
    }
    s.push_str("intrinsic\n");
    s.push_str(&format!("{} 0 {}\n0 {} {}\n0 0 1\n", k.fx, k.cx, k.fy, k.cy));
    s.push_str(&format!("size {} {}\n", cam.width, cam.height));
    s
}

pub fn read_camera(path: impl AsRef<Path>, size: Option<(usize, usize)>) -> Result<CameraModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_camera(&text, size).map_err(|m| Error::format(path, m))
}

pub fn write_camera(path: impl AsRef<Path>, cam: &CameraModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_camera(cam)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MVS_STYLE: &str = "extrinsic\n1 0 0 0.5\n0 1 0 0\n0 0 1 -2\n0 0 0 1\n\nintrinsic\n100 0 31.5\n0 110 23.5\n0 0 1\n";

    #[test]
    fn homogeneous_row_and_external_size() {
        let c = parse_camera(MVS_STYLE, Some((64, 48))).unwrap();
        assert_eq!(c.translation, Vec3::new(0.5, 0.0, -2.0));
        assert_eq!(c.intrinsics.fy, 110.0);
        assert_eq!((c.width, c.height), (64, 48));
        assert!(parse_camera(MVS_STYLE, None).is_err());
    }

    #[test]
    fn size_line_wins_and_comments_are_ignored() {
        let text = format!("# view 0\n{MVS_STYLE}size 32 24 # small\n");
        let c = parse_camera(&text, Some((64, 48))).unwrap();
        assert_eq!((c.width, c.height), (32, 24));
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_camera("1 2 3", Some((4, 4))).is_err());
        let skew = MVS_STYLE.replace("100 0 31.5", "100 1 31.5");
        assert!(parse_camera(&skew, Some((64, 48))).is_err());
        let not_rot = MVS_STYLE.replace("1 0 0 0.5", "2 0 0 0.5");
        assert!(parse_camera(&not_rot, Some((64, 48))).is_err());
        assert!(parse_camera(&MVS_STYLE.replace("intrinsic", "intrinsics"), Some((64, 48))).is_err());
    }
}
