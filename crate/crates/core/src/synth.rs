//! Analytic synthetic scenes: one plane or sphere with a view-independent
//! procedural texture, rendered with exact depth and normals.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::depthmap::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Intrinsics, PixelCoord};
use crate::image::RgbImage;
use crate::linalg::{Mat3, Vec3};
use crate::normals::NormalMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Plane { point: Vec3, normal: Vec3 },
    Sphere { center: Vec3, radius: f64 },
}

/// Fractal value noise: `octaves` layers, each doubling the frequency and
/// halving the amplitude of the previous one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureSpec {
    /// Base frequency in lattice cells per scene unit.
    pub frequency: f64,
    pub octaves: u32,
    pub seed: u64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        TextureSpec {
            frequency: 2.0,
            octaves: 4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub primitive: Primitive,
    pub texture: TextureSpec,
    /// Planes are cut to a disc of this radius around their anchor point;
    /// non-finite means unbounded. Spheres ignore it.
    pub extent: f64,
}

impl SceneSpec {
    pub fn new(primitive: Primitive, texture: TextureSpec, extent: f64) -> Result<Self> {
        let s = SceneSpec {
            primitive,
            texture,
            extent,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self.primitive {
            Primitive::Plane { normal, point } => {
                if (normal.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::NonUnitNormal(normal.norm()));
                }
                if !point.is_finite() {
                    return Err(Error::NonFinite("plane point"));
                }
            }
            Primitive::Sphere { center, radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Config("sphere radius must be positive"));
                }
                if !center.is_finite() {
                    return Err(Error::NonFinite("sphere center"));
                }
            }
        }
        if !(self.texture.frequency > 0.0) || self.texture.octaves == 0 {
            return Err(Error::Config("texture needs a positive frequency and at least one octave"));
        }
        if self.extent.is_nan() || self.extent <= 0.0 {
            return Err(Error::Config("extent must be positive"));
        }
        Ok(())
    }

    /// Plane through `point` whose normal is tilted `slant_deg` away from
    /// the `-z` axis about the `y` axis, then `tilt_deg` about the `x` axis.
    pub fn slanted_plane(point: Vec3, slant_deg: f64, tilt_deg: f64, texture: TextureSpec) -> Result<Self> {
        let n = Mat3::from_axis_angle(Vec3::new(1.0, 0.0, 0.0), tilt_deg.to_radians())
            .mul_mat(&Mat3::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), slant_deg.to_radians()))
            .mul_vec(Vec3::new(0.0, 0.0, -1.0));
        SceneSpec::new(
            Primitive::Plane {
                point,
                normal: n.normalized().ok_or(Error::NonFinite("plane normal"))?,
            },
            texture,
            f64::INFINITY,
        )
    }

    /// World-frame hit distance along `dir` from `origin`, nearest positive.
    fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match self.primitive {
            Primitive::Plane { point, normal } => {
                let denom = normal.dot(dir);
                if denom == 0.0 {
                    return None;
                }
                let t = normal.dot(point - origin) / denom;
                if !(t > 0.0) || !t.is_finite() {
                    return None;
                }
                if self.extent.is_finite() && (origin + dir * t - point).norm() > self.extent {
                    return None;
                }
                Some(t)
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.dot(dir);
                let b = 2.0 * dir.dot(oc);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // Numerically stable roots.
                let q = if b > 0.0 { -0.5 * (b + sq) } else { -0.5 * (b - sq) };
                let (t0, t1) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
                let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                if lo > 0.0 {
                    Some(lo)
                } else if hi > 0.0 {
                    Some(hi)
                } else {
                    None
                }
            }
        }
    }

    /// World-frame surface normal at a surface point.
    pub fn normal_at(&self, x: Vec3) -> Vec3 {
        match self.primitive {
            Primitive::Plane { normal, .. } => normal,
            Primitive::Sphere { center, radius } => (x - center) / radius,
        }
    }

    /// Exact depth (camera `z`) of the surface seen through pixel `p`.
    pub fn depth_at(&self, cam: &CameraModel, p: PixelCoord) -> Option<f64> {
        let ray_c = cam.ray(p);
        let dir = cam.rotation.transpose().mul_vec(ray_c);
        // `ray_c` has unit z, so the hit parameter is the camera depth.
        self.intersect(cam.center(), dir)
    }

    /// Colour of the surface at a world point.
    pub fn color_at(&self, x: Vec3) -> [f32; 3] {
        let t = &self.texture;
        let mut c = [0.0f32; 3];
        for (k, v) in c.iter_mut().enumerate() {
            let n = fbm(x * t.frequency, t.octaves, t.seed.wrapping_add(k as u64 * 0x9e37_79b9));
            *v = (0.5 + 1.6 * (n - 0.5)).clamp(0.0, 1.0) as f32;
        }
        c
    }
}

fn hash3(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let mut h = seed ^ 0x51_7cc1_b727_220a;
    for v in [ix, iy, iz] {
        h ^= v as u64;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

/// Trilinear value noise with quintic fade, in `[0, 1]`.
pub fn value_noise(p: Vec3, seed: u64) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (ix, iy, iz) = (fx as i64, fy as i64, fz as i64);
    let (u, v, w) = (fade(p.x - fx), fade(p.y - fy), fade(p.z - fz));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let corner = |dx, dy, dz| hash3(ix + dx, iy + dy, iz + dz, seed);
    let x00 = lerp(corner(0, 0, 0), corner(1, 0, 0), u);
    let x10 = lerp(corner(0, 1, 0), corner(1, 1, 0), u);
    let x01 = lerp(corner(0, 0, 1), corner(1, 0, 1), u);
    let x11 = lerp(corner(0, 1, 1), corner(1, 1, 1), u);
    lerp(lerp(x00, x10, v), lerp(x01, x11, v), w)
}

fn fbm(p: Vec3, octaves: u32, seed: u64) -> f64 {
    let (mut sum, mut amp, mut norm, mut freq) = (0.0, 1.0, 0.0, 1.0);
    for o in 0..octaves {
        sum += amp * value_noise(p * freq, seed.wrapping_add(o as u64));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: RgbImage,
    pub gt_depth: DepthMap,
    pub gt_normal: NormalMap,
    pub cam: CameraModel,
}

pub fn render_view(scene: &SceneSpec, cam: &CameraModel) -> Result<RenderedView> {
    if let Primitive::Sphere { center, radius } = scene.primitive {
        if (cam.center() - center).norm() <= radius {
            return Err(Error::DegenerateView("camera inside the sphere"));
        }
    }
    let (w, h) = (cam.width, cam.height);
    let rt = cam.rotation.transpose();
    let origin = cam.center();
    let mut image = RgbImage::new(w, h);
    let mut depth = DepthMap::new(w, h);
    let mut normal = NormalMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let ray_c = cam.ray(PixelCoord::new(x as f64, y as f64));
            let dir = rt.mul_vec(ray_c);
            let Some(t) = scene.intersect(origin, dir) else { continue };
            let hit = origin + dir * t;
            depth.set(x, y, t);
            let mut n = cam.rotation.mul_vec(scene.normal_at(hit));
            if n.dot(ray_c) > 0.0 {
                n = -n;
            }
            normal.set(x, y, n);
            image.set(x, y, scene.color_at(hit));
        }
    }
    if depth.valid_count() == 0 {
        return Err(Error::DegenerateView("camera does not see the primitive"));
    }
    Ok(RenderedView {
        image,
        gt_depth: depth,
        gt_normal: normal,
        cam: *cam,
    })
}

/// Camera looking from `center` toward `target`, image `y` pointing along
/// world `+y` as far as possible.
pub fn look_at(center: Vec3, target: Vec3, intrinsics: Intrinsics, width: usize, height: usize) -> Result<CameraModel> {
    let z = (target - center).normalized().ok_or(Error::DegenerateView("camera at its target"))?;
    let x = Vec3::new(0.0, 1.0, 0.0)
        .cross(z)
        .normalized()
        .ok_or(Error::DegenerateView("viewing direction parallel to the vertical"))?;
    let y = z.cross(x);
    let r = Mat3::from_rows(x, y, z);
    CameraModel::new(intrinsics, r, -r.mul_vec(center), width, height)
}

/// `n_views` cameras on a horizontal circle around `look_at`, all aimed at it.
///
/// The reference sits at the world origin; the others alternate to its right
/// and left (`+1, -1, +2, -2, ...` steps) with neighbouring centres exactly
/// `baseline` apart.
pub fn make_rig(
    n_views: usize,
    baseline: f64,
    look_at_point: Vec3,
    intrinsics: Intrinsics,
    width: usize,
    height: usize,
) -> Result<Vec<CameraModel>> {
    if n_views < 2 {
        return Err(Error::Argument("a rig needs at least two views"));
    }
    if !(baseline > 0.0) || !baseline.is_finite() {
        return Err(Error::DegenerateView("zero baseline"));
    }
    // Horizontal circle through the origin centred below/above the target.
    let axis_center = Vec3::new(look_at_point.x, 0.0, look_at_point.z);
    let radius = axis_center.norm();
    if radius == 0.0 || baseline >= 2.0 * radius {
        return Err(Error::DegenerateView("baseline incompatible with the viewing distance"));
    }
    let step = 2.0 * (baseline / (2.0 * radius)).asin();
    let start = (-axis_center.x).atan2(-axis_center.z);
    let mut cams = Vec::with_capacity(n_views);
    for i in 0..n_views {
        let k = i.div_ceil(2) as f64;
        let sign = if i % 2 == 1 { -1.0 } else { 1.0 };
        let a = start + sign * k * step;
        let c = axis_center + Vec3::new(a.sin(), 0.0, a.cos()) * radius;
        let c = if i == 0 { Vec3::ZERO } else { c };
        cams.push(look_at(c, look_at_point, intrinsics, width, height)?);
    }
    Ok(cams)
}

/// Pixels of `cams[reference]` at pyramid `level` that see the primitive,
/// lie at least `border` full-resolution pixels inside the frame, and whose
/// surface point projects at least `margin` pixels inside every other view.
pub fn covisible_mask(
    scene: &SceneSpec,
    cams: &[CameraModel],
    reference: usize,
    level: u32,
    border: usize,
    margin: f64,
) -> Result<Vec<bool>> {
    if reference >= cams.len() {
        return Err(Error::Argument("reference index out of range"));
    }
    let levels = cams.iter().map(|c| c.at_level(level)).collect::<Result<Vec<_>>>()?;
    let r = &levels[reference];
    let scale = (1u64 << level) as f64;
    let b = border as f64 / scale;
    let m = margin / scale;
    let (w, h) = (r.width, r.height);
    let mut mask = alloc::vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f64, y as f64);
            if u < b || v < b || u > (w - 1) as f64 - b || v > (h - 1) as f64 - b {
                continue;
            }
            let p = PixelCoord::new(u, v);
            let Some(d) = scene.depth_at(r, p) else { continue };
            let xw = r.camera_to_world(r.ray(p) * d);
            mask[y * w + x] = levels.iter().enumerate().all(|(i, c)| {
                if i == reference {
                    return true;
                }
                match c.project(c.world_to_camera(xw)) {
                    Some(q) => {
                        q.u >= m && q.v >= m && q.u <= (c.width - 1) as f64 - m && q.v <= (c.height - 1) as f64 - m
                    }
                    None => false,
                }
            });
        }
    }
    Ok(mask)
}

/// Additive Gaussian noise, clamped to `[0, 1]`, deterministic in `seed`.
pub fn add_image_noise(image: &RgbImage, sigma: f64, seed: u64) -> Result<RgbImage> {
    let dist = Normal::new(0.0, sigma).map_err(|_| Error::Config("noise sigma must be finite and non-negative"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    for px in out.data.iter_mut() {
        for c in px.iter_mut() {
            *c = (*c as f64 + dist.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    Ok(out)
}
