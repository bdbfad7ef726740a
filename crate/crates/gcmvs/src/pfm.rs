//! Portable float maps.
//!
//! Header: `Pf` (one channel) or `PF` (three channels), width and height,
//! then a scale whose sign gives the byte order (negative is little-endian),
//! each separated by whitespace, with a single whitespace byte before the
//! raster. Depth maps use the conventional bottom-up row order and store
//! invalid pixels as 0. Normal maps are written top-down.

use std::fs;
use std::path::Path;

use gcmvs_core::depthmap::DepthMap;
use gcmvs_core::normals::{AxisFlip, NormalMap};
use gcmvs_core::Vec3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrder {
    BottomUp,
    TopDown,
}

/// Raster held top-down with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (*pos > start).then(|| &bytes[start..*pos])
}

fn parse<T: std::str::FromStr>(tok: Option<&[u8]>, what: &str) -> std::result::Result<T, String> {
    tok.and_then(|t| std::str::from_utf8(t).ok())
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| format!("malformed {what} in header"))
}

impl Pfm {
    pub fn decode(bytes: &[u8], order: RowOrder) -> std::result::Result<Pfm, String> {
        let mut pos = 0;
        let channels = match next_token(bytes, &mut pos) {
            Some(b"Pf") => 1,
            Some(b"PF") => 3,
            _ => return Err("not a PFM file (expected Pf or PF)".into()),
        };
        let width: usize = parse(next_token(bytes, &mut pos), "width")?;
        let height: usize = parse(next_token(bytes, &mut pos), "height")?;
        let scale: f64 = parse(next_token(bytes, &mut pos), "scale")?;
        if width == 0 || height == 0 {
            return Err("zero image dimension".into());
        }
        if scale == 0.0 || !scale.is_finite() {
            return Err("scale must be non-zero".into());
        }
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err("missing raster".into());
        }
        pos += 1;
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or("image dimensions overflow")?;
        let raster = &bytes[pos..];
        if raster.len() < n * 4 {
            return Err(format!("raster truncated: expected {} bytes, found {}", n * 4, raster.len()));
        }
        let little = scale < 0.0;
        let row = width * channels;
        let mut data = vec![0f32; n];
        for (i, chunk) in raster[..n * 4].chunks_exact(4).enumerate() {
            let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            let (r, c) = (i / row, i % row);
            let dst = match order {
                RowOrder::TopDown => r,
                RowOrder::BottomUp => height - 1 - r,
            };
            data[dst * row + c] = v;
        }
        Ok(Pfm {
            width,
            height,
            channels,
            data,
        })
    }

    /// Little-endian encoding.
    pub fn encode(&self, order: RowOrder) -> Vec<u8> {
        let magic = if self.channels == 3 { "PF" } else { "Pf" };
        let mut out = format!("{magic}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        out.reserve(self.data.len() * 4);
        let row = self.width * self.channels;
        for r in 0..self.height {
            let src = match order {
                RowOrder::TopDown => r,
                RowOrder::BottomUp => self.height - 1 - r,
            };
            for v in &self.data[src * row..(src + 1) * row] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

pub fn read_pfm(path: impl AsRef<Path>, order: RowOrder) -> Result<Pfm> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Pfm::decode(&bytes, order).map_err(|m| Error::format(path, m))
}

pub fn write_pfm(path: impl AsRef<Path>, pfm: &Pfm, order: RowOrder) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pfm.encode(order)).map_err(|e| Error::io(path, e))
}

pub fn depth_to_pfm(depth: &DepthMap) -> Pfm {
    let data = depth
        .values
        .iter()
        .zip(&depth.valid)
        .map(|(&d, &ok)| if ok { d as f32 } else { 0.0 })
        .collect();
    Pfm {
        width: depth.width,
        height: depth.height,
        channels: 1,
        data,
    }
}

/// Non-positive and non-finite samples become invalid pixels.
pub fn pfm_to_depth(pfm: &Pfm) -> std::result::Result<DepthMap, String> {
    if pfm.channels != 1 {
        return Err("depth maps must have one channel".into());
    }
    DepthMap::from_values(pfm.width, pfm.height, pfm.data.iter().map(|&v| v as f64).collect())
        .map_err(|e| e.to_string())
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    pfm_to_depth(&read_pfm(path, RowOrder::BottomUp)?).map_err(|m| Error::format(path, m))
}

pub fn write_depth(path: impl AsRef<Path>, depth: &DepthMap) -> Result<()> {
    write_pfm(path, &depth_to_pfm(depth), RowOrder::BottomUp)
}

/// One-channel float raster (confidence, weights) in the depth row order.
pub fn write_scalar(path: impl AsRef<Path>, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let pfm = Pfm {
        width,
        height,
        channels: 1,
        data: values.iter().map(|&v| v as f32).collect(),
    };
    write_pfm(path, &pfm, RowOrder::BottomUp)
}

pub fn normals_to_pfm(map: &NormalMap) -> Pfm {
    let mut data = Vec::with_capacity(map.width * map.height * 3);
    for y in 0..map.height {
        for x in 0..map.width {
            let n = map.get(x, y).unwrap_or(Vec3::ZERO);
            data.extend([n.x as f32, n.y as f32, n.z as f32]);
        }
    }
    Pfm {
        width: map.width,
        height: map.height,
        channels: 3,
        data,
    }
}

/// Zero vectors are invalid pixels. Also returns how many stored vectors
/// were noticeably off unit length before renormalisation.
pub fn pfm_to_normals(pfm: &Pfm, flip: AxisFlip) -> std::result::Result<(NormalMap, usize), String> {
    if pfm.channels != 3 {
        return Err("normal maps must have three channels".into());
    }
    let raw: Vec<Vec3> = pfm
        .data
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
        .collect();
    NormalMap::from_raw(pfm.width, pfm.height, &raw, flip).map_err(|e| e.to_string())
}

pub fn read_normals(path: impl AsRef<Path>, flip: AxisFlip) -> Result<(NormalMap, usize)> {
    let path = path.as_ref();
    pfm_to_normals(&read_pfm(path, RowOrder::TopDown)?, flip).map_err(|m| Error::format(path, m))
}

pub fn write_normals(path: impl AsRef<Path>, map: &NormalMap) -> Result<()> {
    write_pfm(path, &normals_to_pfm(map), RowOrder::TopDown)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let p = Pfm {
            width: 2,
            height: 1,
            channels: 1,
            data: vec![1.0, 2.0],
        };
        let bytes = p.encode(RowOrder::BottomUp);
        assert!(bytes.starts_with(b"Pf\n2 1\n-1.0\n"));
        assert_eq!(bytes.len(), 12 + 8);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
    }

    #[test]
    fn bottom_up_rows_are_reversed_on_disk() {
        let p = Pfm {
            width: 1,
            height: 2,
            channels: 1,
            data: vec![1.0, 2.0],
        };
        let bytes = p.encode(RowOrder::BottomUp);
        let raster = &bytes[bytes.len() - 8..];
        assert_eq!(&raster[..4], &2.0f32.to_le_bytes());
        let top = Pfm::decode(&bytes, RowOrder::TopDown).unwrap();
        assert_eq!(top.data, vec![2.0, 1.0]);
        assert_eq!(Pfm::decode(&bytes, RowOrder::BottomUp).unwrap(), p);
    }

    #[test]
    fn big_endian_input() {
        let mut bytes = b"Pf 2 1 1.0\n".to_vec();
        bytes.extend(3.5f32.to_be_bytes());
        bytes.extend((-1.25f32).to_be_bytes());
        let p = Pfm::decode(&bytes, RowOrder::TopDown).unwrap();
        assert_eq!(p.data, vec![3.5, -1.25]);
    }

    #[test]
    fn malformed_headers() {
        assert!(Pfm::decode(b"P6 1 1 -1\n", RowOrder::TopDown).is_err());
        assert!(Pfm::decode(b"Pf 1 x -1\n", RowOrder::TopDown).is_err());
        assert!(Pfm::decode(b"Pf 1 1 0\n\0\0\0\0", RowOrder::TopDown).is_err());
        assert!(Pfm::decode(b"Pf 2 2 -1\n\0\0\0\0", RowOrder::TopDown).is_err());
        assert!(Pfm::decode(b"Pf 1 1 -1", RowOrder::TopDown).is_err());
    }

    #[test]
    fn invalid_depth_is_stored_as_zero() {
        let mut d = DepthMap::new(2, 2);
        d.set(0, 0, 4.5);
        d.set(1, 1, 2.0);
        let p = depth_to_pfm(&d);
        assert_eq!(p.data, vec![4.5, 0.0, 0.0, 2.0]);
        assert_eq!(pfm_to_depth(&p).unwrap(), d);
        assert!(pfm_to_depth(&normals_to_pfm(&NormalMap::new(1, 1))).is_err());
    }

    #[test]
    fn normals_with_flip_and_off_unit_count() {
        let p = Pfm {
            width: 2,
            height: 1,
            channels: 3,
            data: vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0],
        };
        let (m, off) = pfm_to_normals(&p, AxisFlip { x: false, y: false, z: true }).unwrap();
        assert_eq!(off, 1);
        assert_eq!(m.get(0, 0), Some(Vec3::new(0.0, 0.0, -1.0)));
        assert_eq!(m.get(1, 0), None);
    }
}
