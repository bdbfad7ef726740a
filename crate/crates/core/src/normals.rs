//! Surface normals: closed-form plane fits on depth maps and fusion of
//! overlapping externally predicted normal patches.
//!
//! Normals live in the reference camera frame and, by default, face the
//! camera (negative `z` for a surface seen head-on).

use alloc::vec::Vec;

use crate::depthmap::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PixelCoord};
use crate::linalg::{best_rotation, symmetric_eigen, Mat3, Vec3};

/// Condition number of `AᵀA` above which a plane fit is rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Window used for ground-truth normals.
pub const GT_NORMAL_WINDOW: usize = 5;
/// Raw normals whose length differs from one by more than this are reported.
pub const UNIT_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl NormalMap {
    /// All pixels invalid.
    pub fn new(width: usize, height: usize) -> Self {
        NormalMap {
            width,
            height,
            values: alloc::vec![Vec3::ZERO; width * height],
            valid: alloc::vec![false; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, n: Vec3) -> Self {
        let mut m = NormalMap::new(width, height);
        if let Some(u) = n.normalized() {
            m.values.iter_mut().for_each(|v| *v = u);
            m.valid.iter_mut().for_each(|v| *v = true);
        }
        m
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<Vec3> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    /// Stores the normalised `n`; a zero or non-finite vector invalidates.
    pub fn set(&mut self, x: usize, y: usize, n: Vec3) {
        let i = y * self.width + x;
        match n.normalized() {
            Some(u) => {
                self.values[i] = u;
                self.valid[i] = true;
            }
            None => {
                self.values[i] = Vec3::ZERO;
                self.valid[i] = false;
            }
        }
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.values[i] = Vec3::ZERO;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn flipped(&self, flip: AxisFlip) -> NormalMap {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v = flip.apply(*v);
        }
        out
    }

    /// Builds a map from raw vectors, renormalising each. Zero or non-finite
    /// vectors become invalid. Returns the number of vectors whose length was
    /// off by more than [`UNIT_TOLERANCE`].
    pub fn from_raw(width: usize, height: usize, raw: &[Vec3], flip: AxisFlip) -> Result<(NormalMap, usize)> {
        if raw.len() != width * height {
            return Err(Error::Shape {
                what: "normal map data",
                expected: width * height,
                found: raw.len(),
            });
        }
        let mut m = NormalMap::new(width, height);
        let mut off_unit = 0;
        for (i, &v) in raw.iter().enumerate() {
            let len = v.norm();
            if len == 0.0 || !len.is_finite() {
                continue;
            }
            if (len - 1.0).abs() > UNIT_TOLERANCE {
                off_unit += 1;
            }
            m.set(i % width, i / width, flip.apply(v));
        }
        Ok((m, off_unit))
    }
}

/// Per-component sign flips applied to ingested normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AxisFlip {
    pub x: bool,
    pub y: bool,
    pub z: bool,
}

impl AxisFlip {
    pub const NONE: AxisFlip = AxisFlip {
        x: false,
        y: false,
        z: false,
    };

    pub fn apply(self, v: Vec3) -> Vec3 {
        let s = |f: bool| if f { -1.0 } else { 1.0 };
        Vec3::new(v.x * s(self.x), v.y * s(self.y), v.z * s(self.z))
    }
}

/// Least-squares plane normal through the window around each pixel.
///
/// Solves `n = (AᵀA)⁻¹ Aᵀ 1` with the back-projected window points as rows of
/// `A`, then orients the unit normal toward the camera.
pub fn depth_to_normal(depth: &DepthMap, cam: &CameraModel, window: usize) -> Result<NormalMap> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Config("normal window must be odd and at least 3"));
    }
    if (cam.width, cam.height) != (depth.width, depth.height) {
        return Err(Error::Shape {
            what: "camera vs depth resolution",
            expected: depth.width * depth.height,
            found: cam.width * cam.height,
        });
    }
    let (w, h) = (depth.width, depth.height);
    let r = (window / 2) as isize;
    // Rays are reused by every window containing the pixel.
    let rays: Vec<Vec3> = (0..w * h)
        .map(|i| cam.ray(PixelCoord::new((i % w) as f64, (i / w) as f64)))
        .collect();
    let mut out = NormalMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if depth.get(x, y).is_none() {
                continue;
            }
            let mut ata = [[0.0; 3]; 3];
            let mut atb = Vec3::ZERO;
            let mut count = 0;
            for dy in -r..=r {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x as isize + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let (xx, yy) = (xx as usize, yy as usize);
                    let Some(d) = depth.get(xx, yy) else { continue };
                    let p = rays[yy * w + xx] * d;
                    let pa = p.to_array();
                    for (i, row) in ata.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v += pa[i] * pa[j];
                        }
                    }
                    atb += p;
                    count += 1;
                }
            }
            if count < 3 {
                continue;
            }
            let (eig, _) = symmetric_eigen(ata);
            if !(eig[2] > 0.0) || eig[0] / eig[2] > MAX_CONDITION {
                continue;
            }
            let Some(inv) = Mat3(ata).inverse() else { continue };
            let Some(mut n) = inv.mul_vec(atb).normalized() else { continue };
            if n.dot(rays[y * w + x]) > 0.0 {
                n = -n;
            }
            out.set(x, y, n);
        }
    }
    Ok(out)
}

pub fn gt_normal_from_gt_depth(depth: &DepthMap, cam: &CameraModel) -> Result<NormalMap> {
    depth_to_normal(depth, cam, GT_NORMAL_WINDOW)
}

/// Halves the resolution `level` times by averaging valid 2x2 blocks and
/// renormalising, matching the image pyramid used for cost volumes.
pub fn downsample_normals(map: &NormalMap, level: u32) -> NormalMap {
    let mut cur = map.clone();
    for _ in 0..level {
        let (w, h) = (cur.width / 2, cur.height / 2);
        let mut next = NormalMap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut acc = Vec3::ZERO;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    if let Some(n) = cur.get(2 * x + dx, 2 * y + dy) {
                        acc += n;
                    }
                }
                next.set(x, y, acc);
            }
        }
        cur = next;
    }
    cur
}

/// Angular error in radians at pixels valid in both maps.
pub fn angular_errors(a: &NormalMap, b: &NormalMap) -> Vec<f64> {
    a.values
        .iter()
        .zip(&b.values)
        .zip(a.valid.iter().zip(&b.valid))
        .filter(|(_, (&va, &vb))| va && vb)
        .map(|((na, nb), _)| na.angle_to(*nb))
        .collect()
}

/// A rectangular block of predicted normals placed at `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalPatch {
    pub row: usize,
    pub col: usize,
    pub width: usize,
    pub height: usize,
    /// Width of the linear feathering ramp at the patch border, in pixels.
    pub margin: usize,
    pub values: Vec<Vec3>,
}

impl NormalPatch {
    pub fn new(row: usize, col: usize, width: usize, height: usize, margin: usize, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape {
                what: "normal patch data",
                expected: width * height,
                found: values.len(),
            });
        }
        if width == 0 || height == 0 {
            return Err(Error::Empty("normal patch"));
        }
        if values.iter().any(|v| (v.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::NonUnitNormal(
                values.iter().map(|v| v.norm()).find(|l| (l - 1.0).abs() > 1e-6).unwrap_or(0.0),
            ));
        }
        Ok(NormalPatch {
            row,
            col,
            width,
            height,
            margin,
            values,
        })
    }

    /// Copies the block of `map` at the given placement. Invalid pixels of
    /// the source map are rejected.
    pub fn cut(map: &NormalMap, row: usize, col: usize, width: usize, height: usize, margin: usize) -> Result<Self> {
        if row + height > map.height || col + width > map.width {
            return Err(Error::Argument("patch exceeds the map"));
        }
        let mut values = Vec::with_capacity(width * height);
        for y in row..row + height {
            for x in col..col + width {
                values.push(map.get(x, y).ok_or(Error::Argument("patch covers an invalid normal"))?);
            }
        }
        NormalPatch::new(row, col, width, height, margin, values)
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> Vec3 {
        self.values[y * self.width + x]
    }

    /// Linear ramp rising from the border to 1 at `margin` pixels inside.
    fn feather(&self, x: usize, y: usize) -> f64 {
        if self.margin == 0 {
            return 1.0;
        }
        let edge = x.min(self.width - 1 - x).min(y).min(self.height - 1 - y);
        ((edge + 1) as f64 / (self.margin + 1) as f64).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FusionWarning {
    /// The patch overlapped nothing already fused; it was placed unrotated.
    NoOverlap { patch: usize },
    /// Overlap normals disagreed on average (mean dot below zero).
    AlignmentFailed { patch: usize, mean_dot: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedNormals {
    pub map: NormalMap,
    /// Rotation applied to each input patch, in input order.
    pub rotations: Vec<Mat3>,
    pub warnings: Vec<FusionWarning>,
}

/// Aligns patches to one another by rotation and blends them with feathered
/// weights. Patches are processed in row-major order of their placement; the
/// first is the anchor and is never rotated.
pub fn fuse_patch_normals(patches: &[NormalPatch], height: usize, width: usize) -> Result<FusedNormals> {
    if patches.is_empty() {
        return Err(Error::Empty("normal patches"));
    }
    for p in patches {
        if p.row + p.height > height || p.col + p.width > width {
            return Err(Error::Argument("patch lies outside the image"));
        }
    }
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by_key(|&i| (patches[i].row, patches[i].col));

    let mut sum = alloc::vec![Vec3::ZERO; width * height];
    let mut weight = alloc::vec![0.0f64; width * height];
    let mut rotations = alloc::vec![Mat3::IDENTITY; patches.len()];
    let mut warnings = Vec::new();

    for (rank, &pi) in order.iter().enumerate() {
        let patch = &patches[pi];
        let mut rot = Mat3::IDENTITY;
        if rank > 0 {
            let mut pairs = Vec::new();
            let mut dot_sum = 0.0;
            for y in 0..patch.height {
                for x in 0..patch.width {
                    let g = (patch.row + y) * width + patch.col + x;
                    if weight[g] <= 0.0 {
                        continue;
                    }
                    let Some(fused) = sum[g].normalized() else { continue };
                    let a = patch.at(x, y);
                    dot_sum += a.dot(fused);
                    pairs.push((a, fused, 1.0));
                }
            }
            if pairs.is_empty() {
                warnings.push(FusionWarning::NoOverlap { patch: pi });
            } else {
                let mean_dot = dot_sum / pairs.len() as f64;
                if mean_dot < 0.0 {
                    warnings.push(FusionWarning::AlignmentFailed { patch: pi, mean_dot });
                } else {
                    rot = best_rotation(pairs);
                }
            }
        }
        rotations[pi] = rot;
        for y in 0..patch.height {
            for x in 0..patch.width {
                let g = (patch.row + y) * width + patch.col + x;
                let wgt = patch.feather(x, y);
                sum[g] += rot.mul_vec(patch.at(x, y)) * wgt;
                weight[g] += wgt;
            }
        }
    }

    let mut map = NormalMap::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let g = y * width + x;
            if weight[g] <= 0.0 {
                return Err(Error::Coverage { row: y, col: x });
            }
            map.set(x, y, sum[g]);
        }
    }
    Ok(FusedNormals {
        map,
        rotations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{back_project, Intrinsics};
    use proptest::prelude::*;

    fn cam(w: usize, h: usize) -> CameraModel {
        CameraModel::new(
            Intrinsics {
                fx: 80.0,
                fy: 80.0,
                cx: (w as f64 - 1.0) / 2.0,
                cy: (h as f64 - 1.0) / 2.0,
            },
            Mat3::IDENTITY,
            Vec3::ZERO,
            w,
            h,
        )
        .unwrap()
    }

    /// Depth of the plane `n·X = c` along each pixel ray, by direct intersection.
    fn plane_depth(c: &CameraModel, n: Vec3, offset: f64) -> DepthMap {
        let mut d = DepthMap::new(c.width, c.height);
        for y in 0..c.height {
            for x in 0..c.width {
                let ray = c.ray(PixelCoord::new(x as f64, y as f64));
                d.set(x, y, offset / n.dot(ray));
            }
        }
        d
    }

    fn sphere_depth(c: &CameraModel, center: Vec3, radius: f64) -> DepthMap {
        let mut d = DepthMap::new(c.width, c.height);
        for y in 0..c.height {
            for x in 0..c.width {
                let ray = c.ray(PixelCoord::new(x as f64, y as f64));
                // |t ray - c|² = r², nearest root; depth equals t since ray.z = 1.
                let a = ray.dot(ray);
                let b = -2.0 * ray.dot(center);
                let cc = center.dot(center) - radius * radius;
                let disc = b * b - 4.0 * a * cc;
                if disc >= 0.0 {
                    d.set(x, y, (-b - disc.sqrt()) / (2.0 * a));
                }
            }
        }
        d
    }

    #[test]
    fn even_window_rejected() {
        let c = cam(5, 5);
        let d = plane_depth(&c, Vec3::new(0.0, 0.0, 1.0), 3.0);
        assert!(matches!(depth_to_normal(&d, &c, 4), Err(Error::Config(_))));
        assert!(matches!(depth_to_normal(&d, &c, 1), Err(Error::Config(_))));
    }

    #[test]
    fn constant_depth_gives_axis_normal() {
        let c = cam(9, 7);
        let mut d = DepthMap::new(9, 7);
        for y in 0..7 {
            for x in 0..9 {
                d.set(x, y, 4.0);
            }
        }
        let n = depth_to_normal(&d, &c, 3).unwrap();
        for y in 1..6 {
            for x in 1..8 {
                let v = n.get(x, y).unwrap();
                assert!(v.x.abs() < 1e-12 && v.y.abs() < 1e-12);
                assert!((v.z + 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn isolated_pixel_is_invalid() {
        let c = cam(5, 5);
        let mut d = DepthMap::new(5, 5);
        d.set(2, 2, 3.0);
        let n = depth_to_normal(&d, &c, 3).unwrap();
        assert_eq!(n.valid_count(), 0);
        // Two valid points are still too few; three collinear points are rank deficient.
        d.set(3, 2, 3.0);
        assert_eq!(depth_to_normal(&d, &c, 3).unwrap().valid_count(), 0);
        d.set(1, 2, 3.0);
        assert!(depth_to_normal(&d, &c, 3).unwrap().get(2, 2).is_none());
    }

    #[test]
    fn slanted_plane_recovered_exactly() {
        let c = cam(32, 24);
        let truth = Vec3::new(0.4, -0.3, -0.866).normalized().unwrap();
        let d = plane_depth(&c, truth, -5.0);
        for window in [3, 5, 7] {
            let n = depth_to_normal(&d, &c, window).unwrap();
            for y in 3..21 {
                for x in 3..29 {
                    assert!(n.get(x, y).unwrap().angle_to(truth) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn sphere_normals_point_radially() {
        let c = cam(64, 64);
        let center = Vec3::new(0.1, -0.05, 8.0);
        let d = sphere_depth(&c, center, 2.5);
        let n = gt_normal_from_gt_depth(&d, &c).unwrap();
        // Interior: at least two window widths from the silhouette, outside
        // the grazing band where a window spans a large arc of the surface.
        let margin = 2 * GT_NORMAL_WINDOW as i32;
        let mut checked = 0;
        for y in 0..64 {
            for x in 0..64 {
                let inside = (-margin..=margin).all(|dy| {
                    (-margin..=margin).all(|dx| {
                        let (xx, yy) = (x as i32 + dx, y as i32 + dy);
                        xx >= 0 && yy >= 0 && xx < 64 && yy < 64 && d.get(xx as usize, yy as usize).is_some()
                    })
                });
                if !inside {
                    continue;
                }
                let p = back_project(PixelCoord::new(x as f64, y as f64), d.get(x, y).unwrap(), &c).unwrap();
                let radial = (p - center).normalized().unwrap();
                assert!(n.get(x, y).unwrap().angle_to(radial) < 0.5f64.to_radians());
                checked += 1;
            }
        }
        assert!(checked > 300);
    }

    #[test]
    fn larger_windows_reduce_noise() {
        let c = cam(48, 40);
        let truth = Vec3::new(0.5, 0.0, -0.866).normalized().unwrap();
        let mut d = plane_depth(&c, truth, -4.0);
        let sigma = 0.1 * 0.05;
        let mut seed = 3u64;
        let mut gauss = || {
            // Box-Muller from two LCG uniforms.
            let mut u = || {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((seed >> 11) as f64 + 0.5) / (1u64 << 53) as f64
            };
            let (a, b) = (u(), u());
            (-2.0 * a.ln()).sqrt() * (core::f64::consts::TAU * b).cos()
        };
        for v in d.values.iter_mut() {
            *v += sigma * gauss();
        }
        let mut prev = f64::INFINITY;
        for window in [3, 5, 7] {
            let n = depth_to_normal(&d, &c, window).unwrap();
            let mut err = 0.0;
            let mut cnt = 0;
            for y in 4..36 {
                for x in 4..44 {
                    err += n.get(x, y).unwrap().angle_to(truth);
                    cnt += 1;
                }
            }
            let mean = err / cnt as f64;
            assert!(mean < prev, "window {window}: {mean} >= {prev}");
            prev = mean;
        }
    }

    #[test]
    fn raw_ingestion_flags_and_zeroes() {
        let raw = [Vec3::new(0.0, 0.0, 2.0), Vec3::ZERO, Vec3::new(0.0, 0.6, 0.8)];
        let flip = AxisFlip {
            z: true,
            ..AxisFlip::NONE
        };
        let (m, off) = NormalMap::from_raw(3, 1, &raw, flip).unwrap();
        assert_eq!(off, 1);
        assert_eq!(m.get(0, 0), Some(Vec3::new(0.0, 0.0, -1.0)));
        assert_eq!(m.get(1, 0), None);
        let v = m.get(2, 0).unwrap();
        assert_eq!((v.y, v.z), (0.6, -0.8));
        let (zeros, _) = NormalMap::from_raw(2, 2, &[Vec3::ZERO; 4], AxisFlip::NONE).unwrap();
        assert_eq!(zeros.valid_count(), 0);
    }

    #[test]
    fn downsample_averages_blocks() {
        let mut m = NormalMap::constant(4, 4, Vec3::new(0.0, 0.0, -1.0));
        m.set(0, 0, Vec3::new(1.0, 0.0, 0.0));
        m.invalidate(3, 3);
        let d = downsample_normals(&m, 1);
        assert_eq!((d.width, d.height), (2, 2));
        let expect = Vec3::new(1.0, 0.0, -3.0).normalized().unwrap();
        assert!(d.get(0, 0).unwrap().angle_to(expect) < 1e-12);
        assert_eq!(d.get(1, 1), Some(Vec3::new(0.0, 0.0, -1.0)));
    }

    fn varied_map(w: usize, h: usize) -> NormalMap {
        let mut m = NormalMap::new(w, h);
        for y in 0..h {
            for x in 0..w {
                m.set(x, y, Vec3::new(0.3 * (x as f64 * 0.7).sin(), 0.2 * (y as f64 * 0.5).cos(), -1.0));
            }
        }
        m
    }

    #[test]
    fn single_patch_is_identity() {
        let m = varied_map(8, 6);
        let p = NormalPatch::cut(&m, 0, 0, 8, 6, 2).unwrap();
        let f = fuse_patch_normals(&[p], 6, 8).unwrap();
        for (a, b) in f.map.values.iter().zip(&m.values) {
            assert!(a.angle_to(*b) < 1e-12);
        }
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn agreeing_patches_fuse_to_common_value() {
        let m = varied_map(12, 6);
        let a = NormalPatch::cut(&m, 0, 0, 8, 6, 2).unwrap();
        let b = NormalPatch::cut(&m, 0, 5, 7, 6, 2).unwrap();
        let f = fuse_patch_normals(&[b, a], 6, 12).unwrap();
        for (x, y) in f.map.values.iter().zip(&m.values) {
            assert!(x.angle_to(*y) < 1e-9);
        }
    }

    #[test]
    fn rotated_patch_is_realigned() {
        let m = varied_map(16, 10);
        let anchor = NormalPatch::cut(&m, 0, 0, 10, 10, 3).unwrap();
        let mut other = NormalPatch::cut(&m, 0, 6, 10, 10, 3).unwrap();
        let rot = Mat3::from_axis_angle(Vec3::new(0.2, 1.0, 0.1), 5f64.to_radians());
        for v in other.values.iter_mut() {
            *v = rot.mul_vec(*v);
        }
        let f = fuse_patch_normals(&[anchor, other], 10, 16).unwrap();
        let residual = f.rotations[1].mul_mat(&rot);
        assert!(residual.rotation_angle() < 1e-6);
        for (a, b) in f.map.values.iter().zip(&m.values) {
            assert!(a.angle_to(*b) < 1e-6);
        }
    }

    #[test]
    fn antipodal_patch_warns_and_uncovered_errors() {
        let m = varied_map(10, 4);
        let a = NormalPatch::cut(&m, 0, 0, 6, 4, 1).unwrap();
        let mut b = NormalPatch::cut(&m, 0, 4, 6, 4, 1).unwrap();
        for v in b.values.iter_mut() {
            *v = -*v;
        }
        let f = fuse_patch_normals(&[a.clone(), b], 4, 10).unwrap();
        assert!(matches!(f.warnings[0], FusionWarning::AlignmentFailed { patch: 1, .. }));
        assert_eq!(f.rotations[1], Mat3::IDENTITY);
        assert!(matches!(fuse_patch_normals(&[a], 4, 10), Err(Error::Coverage { row: 0, col: 6 })));
    }

    proptest! {
        #[test]
        fn fused_output_is_unit(seed in 0u64..200, split in 3usize..9) {
            let mut s = seed;
            let mut rnd = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            let mut m = NormalMap::new(12, 5);
            for y in 0..5 {
                for x in 0..12 {
                    m.set(x, y, Vec3::new(rnd(), rnd(), -1.0));
                }
            }
            let a = NormalPatch::cut(&m, 0, 0, split + 1, 5, 1).unwrap();
            let b = NormalPatch::cut(&m, 0, split - 1, 13 - split, 5, 1).unwrap();
            let f = fuse_patch_normals(&[a, b], 5, 12).unwrap();
            for v in &f.map.values {
                prop_assert!((v.norm() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn plane_fit_window_invariant(nx in -0.5f64..0.5, ny in -0.5f64..0.5, off in 2.0f64..8.0) {
            let c = cam(16, 16);
            let truth = Vec3::new(nx, ny, -1.0).normalized().unwrap();
            let d = plane_depth(&c, truth, -off);
            let a = depth_to_normal(&d, &c, 3).unwrap();
            let b = depth_to_normal(&d, &c, 7).unwrap();
            for y in 3..13 {
                for x in 3..13 {
                    prop_assert!(a.get(x, y).unwrap().angle_to(b.get(x, y).unwrap()) < 1e-9);
                }
            }
        }
    }
}
