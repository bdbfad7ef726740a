//! Multi-view geometric consistency filtering and point-cloud fusion.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::depthmap::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{back_project, project_to_source, CameraModel, PixelCoord};
use crate::image::RgbImage;
use crate::linalg::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Maximum round-trip reprojection error in pixels.
    pub tau_pix: f64,
    /// Maximum relative depth discrepancy.
    pub tau_rel: f64,
    /// Number of agreeing source views required.
    pub min_views: usize,
    /// Pixels below this confidence are dropped.
    pub min_confidence: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            tau_pix: 1.0,
            tau_rel: 0.01,
            min_views: 2,
            min_confidence: 0.0,
        }
    }
}

/// Source depth at a sub-pixel position, interpolating inverse depth
/// bilinearly (exact on planes). All four corners must be valid.
pub fn sample_depth(depth: &DepthMap, p: PixelCoord) -> Option<f64> {
    let (w, h) = (depth.width, depth.height);
    if !(p.u >= 0.0 && p.v >= 0.0 && p.u <= (w - 1) as f64 && p.v <= (h - 1) as f64) {
        return None;
    }
    let x0 = (p.u.floor() as usize).min(w.saturating_sub(2));
    let y0 = (p.v.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (fx, fy) = (p.u - x0 as f64, p.v - y0 as f64);
    let inv = |x, y| depth.get(x, y).map(|d| 1.0 / d);
    let (a, b, c, d) = (inv(x0, y0)?, inv(x1, y0)?, inv(x0, y1)?, inv(x1, y1)?);
    let top = a + (b - a) * fx;
    let bot = c + (d - c) * fx;
    let v = top + (bot - top) * fy;
    (v > 0.0).then(|| 1.0 / v)
}

/// Checks one reference pixel against one source view.
fn agrees(p: PixelCoord, d: f64, reference: &CameraModel, source: &CameraModel, src_depth: &DepthMap, params: &FilterParams) -> bool {
    let Ok(proj) = project_to_source(p, d, reference, source) else { return false };
    if !proj.in_frustum {
        return false;
    }
    let Some(d_src) = sample_depth(src_depth, proj.pixel) else { return false };
    if !((proj.depth - d_src).abs() / d_src < params.tau_rel) {
        return false;
    }
    let Ok(back) = project_to_source(proj.pixel, d_src, source, reference) else { return false };
    back.depth > 0.0 && back.pixel.distance(p) < params.tau_pix
}

/// Per-view survival masks. A pixel survives when at least `min_views`
/// other views corroborate it and its confidence clears the floor.
pub fn consistency_filter(
    depths: &[DepthMap],
    confidences: Option<&[Vec<f64>]>,
    cams: &[CameraModel],
    params: &FilterParams,
) -> Result<Vec<Vec<bool>>> {
    if depths.len() < 2 {
        return Err(Error::Argument("consistency filtering needs at least two views"));
    }
    if cams.len() != depths.len() || confidences.is_some_and(|c| c.len() != depths.len()) {
        return Err(Error::Shape {
            what: "views",
            expected: depths.len(),
            found: cams.len(),
        });
    }
    for (d, c) in depths.iter().zip(cams) {
        if (d.width, d.height) != (c.width, c.height) {
            return Err(Error::Shape {
                what: "depth vs camera resolution",
                expected: c.width * c.height,
                found: d.width * d.height,
            });
        }
    }
    let mut masks = Vec::with_capacity(depths.len());
    for (r, depth) in depths.iter().enumerate() {
        let mut mask = alloc::vec![false; depth.width * depth.height];
        for y in 0..depth.height {
            for x in 0..depth.width {
                let i = depth.index(x, y);
                let Some(d) = depth.get(x, y) else { continue };
                if let Some(conf) = confidences {
                    if !(conf[r][i] >= params.min_confidence) {
                        continue;
                    }
                }
                let p = PixelCoord::new(x as f64, y as f64);
                let mut count = 0;
                for s in 0..depths.len() {
                    if s != r && agrees(p, d, &cams[r], &cams[s], &depths[s], params) {
                        count += 1;
                        if count >= params.min_views {
                            break;
                        }
                    }
                }
                mask[i] = count >= params.min_views;
            }
        }
        masks.push(mask);
    }
    Ok(masks)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub source_view: Vec<usize>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedCloud {
    pub cloud: PointCloud,
    /// Set when no pixel survived.
    pub empty: bool,
}

fn to_u8(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0 + 0.5) as u8
}

/// Back-projects surviving pixels to world space and keeps the most
/// confident point per voxel. A non-positive voxel size disables dedup.
/// Points keep the order in which their voxel was first seen.
pub fn fuse_point_cloud(
    depths: &[DepthMap],
    masks: &[Vec<bool>],
    cams: &[CameraModel],
    images: Option<&[RgbImage]>,
    confidences: Option<&[Vec<f64>]>,
    voxel: f64,
) -> Result<FusedCloud> {
    if masks.len() != depths.len() || cams.len() != depths.len() || images.is_some_and(|i| i.len() != depths.len()) {
        return Err(Error::Shape {
            what: "views",
            expected: depths.len(),
            found: masks.len(),
        });
    }
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut views = Vec::new();
    let mut best = Vec::new();
    let mut voxels: BTreeMap<(i64, i64, i64), usize> = BTreeMap::new();
    for (v, depth) in depths.iter().enumerate() {
        if masks[v].len() != depth.width * depth.height {
            return Err(Error::Shape {
                what: "mask",
                expected: depth.width * depth.height,
                found: masks[v].len(),
            });
        }
        for y in 0..depth.height {
            for x in 0..depth.width {
                let i = depth.index(x, y);
                if !masks[v][i] {
                    continue;
                }
                let Some(d) = depth.get(x, y) else { continue };
                let xc = back_project(PixelCoord::new(x as f64, y as f64), d, &cams[v])?;
                let xw = cams[v].camera_to_world(xc);
                if !xw.is_finite() {
                    continue;
                }
                let conf = confidences.map_or(1.0, |c| c[v][i]);
                let color = images.map(|im| im[v].get(x, y).map(to_u8)).unwrap_or([0; 3]);
                if voxel > 0.0 {
                    let key = (
                        (xw.x / voxel).floor() as i64,
                        (xw.y / voxel).floor() as i64,
                        (xw.z / voxel).floor() as i64,
                    );
                    if let Some(&slot) = voxels.get(&key) {
                        if conf > best[slot] {
                            points[slot] = xw;
                            colors[slot] = color;
                            views[slot] = v;
                            best[slot] = conf;
                        }
                        continue;
                    }
                    voxels.insert(key, points.len());
                }
                points.push(xw);
                colors.push(color);
                views.push(v);
                best.push(conf);
            }
        }
    }
    let empty = points.is_empty();
    Ok(FusedCloud {
        cloud: PointCloud {
            points,
            colors: images.map(|_| colors),
            source_view: views,
        },
        empty,
    })
}

/// RMS distance of points to the plane through `point` with unit `normal`.
pub fn point_to_plane_rms(points: &[Vec3], point: Vec3, normal: Vec3) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    let ss: f64 = points.iter().map(|p| (*p - point).dot(normal).powi(2)).sum();
    Some((ss / points.len() as f64).sqrt())
}
