//! Binary little-endian PLY point clouds: `float x y z` per vertex, with
//! optional `uchar red green blue`.

use std::fs;
use std::path::Path;

use gcmvs_core::fusion::PointCloud;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlyCloud {
    pub points: Vec<[f32; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl From<&PointCloud> for PlyCloud {
    fn from(c: &PointCloud) -> Self {
        PlyCloud {
            points: c.points.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect(),
            colors: c.colors.clone(),
        }
    }
}

impl PlyCloud {
    pub fn encode(&self) -> Vec<u8> {
        let mut head = format!(
            "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
            self.points.len()
        );
        if self.colors.is_some() {
            head.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
        }
        head.push_str("end_header\n");
        let stride = if self.colors.is_some() { 15 } else { 12 };
        let mut out = head.into_bytes();
        out.reserve(self.points.len() * stride);
        for (i, p) in self.points.iter().enumerate() {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
            if let Some(c) = &self.colors {
                out.extend_from_slice(&c[i]);
            }
        }
        out
    }

    /// Reads files in the layout written by [`PlyCloud::encode`]; comments
    /// and `obj_info` lines are skipped.
    pub fn decode(bytes: &[u8]) -> std::result::Result<PlyCloud, String> {
        const END: &[u8] = b"end_header\n";
        let end = bytes
            .windows(END.len())
            .position(|w| w == END)
            .ok_or("missing end_header")?;
        let header = std::str::from_utf8(&bytes[..end]).map_err(|_| "header is not UTF-8")?;
        let mut lines = header
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with("comment") && !l.starts_with("obj_info"));
        if lines.next() != Some("ply") {
            return Err("missing ply magic".into());
        }
        if lines.next() != Some("format binary_little_endian 1.0") {
            return Err("only binary_little_endian 1.0 is supported".into());
        }
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("element vertex "))
            .and_then(|n| n.trim().parse().ok())
            .ok_or("expected 'element vertex N'")?;
        let props: Vec<&str> = lines.collect();
        let xyz = ["property float x", "property float y", "property float z"];
        let rgb = ["property uchar red", "property uchar green", "property uchar blue"];
        let has_color = if props == xyz {
            false
        } else if props.len() == 6 && props[..3] == xyz && props[3..] == rgb {
            true
        } else {
            return Err(format!("unsupported vertex properties: {props:?}"));
        };
        let body = &bytes[end + END.len()..];
        let stride = if has_color { 15 } else { 12 };
        if body.len() != count * stride {
            return Err(format!("expected {} body bytes, found {}", count * stride, body.len()));
        }
        let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        let mut points = Vec::with_capacity(count);
        let mut colors = Vec::with_capacity(if has_color { count } else { 0 });
        for v in body.chunks_exact(stride) {
            points.push([f(&v[0..4]), f(&v[4..8]), f(&v[8..12])]);
            if has_color {
                colors.push([v[12], v[13], v[14]]);
            }
        }
        Ok(PlyCloud {
            points,
            colors: has_color.then_some(colors),
        })
    }
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &PlyCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, cloud.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PlyCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    PlyCloud::decode(&bytes).map_err(|m| Error::format(path, m))
}
