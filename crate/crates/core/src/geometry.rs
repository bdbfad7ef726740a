//! Pinhole cameras, plane-sweep warping and the planar depth ratio.
//!
//! Pixel coordinates place pixel centres on integer positions: column `u`,
//! row `v`. Camera frames are x right, y down, z forward. Extrinsics map world
//! points into the camera frame, `X_cam = R X_world + t`.

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
#[allow(unused_imports)]
use num_traits::Float;

pub type Point3D = Vec3;

/// Default threshold on `|n · ray|` below which a ray is treated as parallel to
/// the plane.
pub const DEFAULT_RAY_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub const fn new(u: f64, v: f64) -> Self {
        PixelCoord { u, v }
    }

    pub fn distance(self, o: PixelCoord) -> f64 {
        ((self.u - o.u).powi(2) + (self.v - o.v).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: Intrinsics,
    pub rotation: Mat3,
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Mat3,
        translation: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = CameraModel {
            intrinsics,
            rotation,
            translation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0 && k.fx.is_finite() && k.fy.is_finite()) {
            return Err(Error::InvalidCamera("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be positive"));
        }
        if !(k.cx >= 0.0 && k.cx < self.width as f64 && k.cy >= 0.0 && k.cy < self.height as f64)
        {
            return Err(Error::InvalidCamera("principal point outside the image"));
        }
        if !self.translation.is_finite() {
            return Err(Error::InvalidCamera("translation is not finite"));
        }
        let err = self.rotation.orthonormality_error();
        if !(err <= 1e-9) {
            return Err(Error::InvalidCamera("rotation is not orthonormal"));
        }
        if self.rotation.determinant() < 0.0 {
            return Err(Error::InvalidCamera("rotation has a reflection"));
        }
        Ok(())
    }

    pub fn k_matrix(&self) -> Mat3 {
        let k = &self.intrinsics;
        Mat3([[k.fx, 0.0, k.cx], [0.0, k.fy, k.cy], [0.0, 0.0, 1.0]])
    }

    pub fn k_inverse(&self) -> Mat3 {
        let k = &self.intrinsics;
        Mat3([
            [1.0 / k.fx, 0.0, -k.cx / k.fx],
            [0.0, 1.0 / k.fy, -k.cy / k.fy],
            [0.0, 0.0, 1.0],
        ])
    }

    /// Camera centre in world coordinates.
    pub fn center(&self) -> Vec3 {
        -self.rotation.transpose().mul_vec(self.translation)
    }

    pub fn world_to_camera(&self, xw: Vec3) -> Vec3 {
        self.rotation.mul_vec(xw) + self.translation
    }

    pub fn camera_to_world(&self, xc: Vec3) -> Vec3 {
        self.rotation.transpose().mul_vec(xc - self.translation)
    }

    /// Viewing ray through `p` with unit z component: `[(u-cx)/fx, (v-cy)/fy, 1]`.
    pub fn ray(&self, p: PixelCoord) -> Vec3 {
        let k = &self.intrinsics;
        Vec3::new((p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0)
    }

    /// Perspective projection of a camera-frame point. Returns `None` when
    /// the point is not strictly in front of the camera.
    pub fn project(&self, x: Point3D) -> Option<PixelCoord> {
        if !(x.z > 0.0) {
            return None;
        }
        let k = &self.intrinsics;
        Some(PixelCoord::new(
            k.fx * x.x / x.z + k.cx,
            k.fy * x.y / x.z + k.cy,
        ))
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        p.u >= 0.0 && p.v >= 0.0 && p.u <= (self.width - 1) as f64 && p.v <= (self.height - 1) as f64
    }

    /// The same camera observing the image after `level` rounds of 2x2 box
    /// downsampling. Output pixel `x` covers input pixels `2x` and `2x+1`.
    pub fn at_level(&self, level: u32) -> Result<CameraModel> {
        let s = (1u64 << level) as f64;
        let k = &self.intrinsics;
        let intr = Intrinsics {
            fx: k.fx / s,
            fy: k.fy / s,
            cx: (k.cx + 0.5) / s - 0.5,
            cy: (k.cy + 0.5) / s - 0.5,
        };
        let width = self.width >> level;
        let height = self.height >> level;
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image vanishes at this pyramid level"));
        }
        Ok(CameraModel {
            intrinsics: intr,
            width,
            height,
            ..*self
        })
    }
}

/// Back-project a pixel at depth `d` into its camera frame.
pub fn back_project(p: PixelCoord, d: f64, cam: &CameraModel) -> Result<Point3D> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDepth(d));
    }
    Ok(cam.ray(p) * d)
}

/// Rotation and translation taking reference-camera points into a source
/// camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RelativePose {
    pub fn between(reference: &CameraModel, source: &CameraModel) -> Self {
        let rotation = source.rotation.mul_mat(&reference.rotation.transpose());
        let translation = source.translation - rotation.mul_vec(reference.translation);
        RelativePose {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, x: Vec3) -> Vec3 {
        self.rotation.mul_vec(x) + self.translation
    }
}

/// Result of warping a reference pixel into a source view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: PixelCoord,
    /// Depth of the warped point in the source camera frame.
    pub depth: f64,
    /// False when the point is behind the source camera or off its image.
    pub in_frustum: bool,
}

/// Plane-sweep warp from a reference view into one source view, with the
/// per-pair matrices precomputed: `p' ~ K_i R K_0⁻¹ p d + K_i t`.
#[derive(Debug, Clone, Copy)]
pub struct PlaneSweepWarp {
    rot: Mat3,
    trans: Vec3,
    width: usize,
    height: usize,
}

impl PlaneSweepWarp {
    pub fn new(reference: &CameraModel, source: &CameraModel) -> Self {
        let pose = RelativePose::between(reference, source);
        let ks = source.k_matrix();
        PlaneSweepWarp {
            rot: ks.mul_mat(&pose.rotation).mul_mat(&reference.k_inverse()),
            trans: ks.mul_vec(pose.translation),
            width: source.width,
            height: source.height,
        }
    }

    /// Warp without the depth precondition check; callers guarantee `d > 0`.
    #[inline]
    pub fn warp(&self, p: PixelCoord, d: f64) -> Projection {
        let h = self.rot.mul_vec(Vec3::new(p.u, p.v, 1.0)) * d + self.trans;
        if !(h.z > 0.0) {
            return Projection {
                pixel: PixelCoord::new(f64::NAN, f64::NAN),
                depth: h.z,
                in_frustum: false,
            };
        }
        let pixel = PixelCoord::new(h.x / h.z, h.y / h.z);
        let in_frustum = pixel.u >= 0.0
            && pixel.v >= 0.0
            && pixel.u <= (self.width - 1) as f64
            && pixel.v <= (self.height - 1) as f64;
        Projection {
            pixel,
            depth: h.z,
            in_frustum,
        }
    }
}

/// Position in the source image of reference pixel `p` seen at depth `d`.
pub fn project_to_source(
    p: PixelCoord,
    d: f64,
    ref_cam: &CameraModel,
    src_cam: &CameraModel,
) -> Result<Projection> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDepth(d));
    }
    Ok(PlaneSweepWarp::new(ref_cam, src_cam).warp(p, d))
}

/// Ratio `d_j / d_i` of two rays meeting a common plane with normal `n`,
/// computed directly from the ray directions. Homogeneous of degree zero
/// in `n`.
pub fn ray_depth_ratio(ray_i: Vec3, ray_j: Vec3, n: Vec3, eps: f64) -> Result<f64> {
    let denominator = n.dot(ray_j);
    if !(denominator.abs() >= eps) {
        return Err(Error::DegenerateRay { denominator });
    }
    Ok(n.dot(ray_i) / denominator)
}

/// Depth ratio `r_ji = d(p_j) / d(p_i)` for two pixels on a plane with unit
/// normal `n` expressed in the camera frame of `cam`.
pub fn depth_ratio(
    p_i: PixelCoord,
    p_j: PixelCoord,
    n: Vec3,
    cam: &CameraModel,
    eps: f64,
) -> Result<f64> {
    let norm = n.norm();
    if !((norm - 1.0).abs() <= 1e-6) {
        return Err(Error::NonUnitNormal(norm));
    }
    ray_depth_ratio(cam.ray(p_i), cam.ray(p_j), n, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simple_cam(tx: f64) -> CameraModel {
        CameraModel::new(
            Intrinsics {
                fx: 100.0,
                fy: 100.0,
                cx: 50.0,
                cy: 50.0,
            },
            Mat3::IDENTITY,
            Vec3::new(tx, 0.0, 0.0),
            100,
            100,
        )
        .unwrap()
    }

    /// 4x4 homogeneous-matrix chain: K_src [T_src T_ref⁻¹] [K_ref⁻¹ p d; 1].
    fn matrix_chain(p: PixelCoord, d: f64, r: &CameraModel, s: &CameraModel) -> PixelCoord {
        fn to4(c: &CameraModel) -> [[f64; 4]; 4] {
            let m = c.rotation.0;
            let t = c.translation;
            [
                [m[0][0], m[0][1], m[0][2], t.x],
                [m[1][0], m[1][1], m[1][2], t.y],
                [m[2][0], m[2][1], m[2][2], t.z],
                [0.0, 0.0, 0.0, 1.0],
            ]
        }
        fn inv4(m: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
            // Rigid inverse [Rᵀ, -Rᵀt].
            let mut out = [[0.0; 4]; 4];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = m[j][i];
                }
                out[i][3] = -(0..3).map(|k| m[k][i] * m[k][3]).sum::<f64>();
            }
            out[3][3] = 1.0;
            out
        }
        fn mm(a: [[f64; 4]; 4], b: [[f64; 4]; 4]) -> [[f64; 4]; 4] {
            let mut o = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    o[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            o
        }
        let rk = r.intrinsics;
        let x = [(p.u - rk.cx) / rk.fx * d, (p.v - rk.cy) / rk.fy * d, d, 1.0];
        let m = mm(to4(s), inv4(to4(r)));
        let y: [f64; 4] = core::array::from_fn(|i| (0..4).map(|k| m[i][k] * x[k]).sum());
        let sk = s.intrinsics;
        PixelCoord::new(sk.fx * y[0] / y[2] + sk.cx, sk.fy * y[1] / y[2] + sk.cy)
    }

    #[test]
    fn identical_cameras_are_identity() {
        let c = simple_cam(0.0);
        for &(u, v, d) in &[(10.0, 20.0, 1.0), (50.0, 50.0, 3.0), (99.0, 0.5, 0.2)] {
            let pr = project_to_source(PixelCoord::new(u, v), d, &c, &c).unwrap();
            assert!(pr.in_frustum);
            assert!((pr.pixel.u - u).abs() < 1e-12 && (pr.pixel.v - v).abs() < 1e-12);
        }
    }

    #[test]
    fn translated_source_matches_matrix_chain() {
        let r = simple_cam(0.0);
        // Source centre at +1 along x: t = -R C = (-1, 0, 0).
        let s = simple_cam(-1.0);
        let p = PixelCoord::new(50.0, 50.0);
        let got = project_to_source(p, 2.0, &r, &s).unwrap();
        let want = matrix_chain(p, 2.0, &r, &s);
        assert!((got.pixel.u - want.u).abs() < 1e-9);
        assert!((got.pixel.v - want.v).abs() < 1e-9);
        // Source looks from x=+1, so the point at x=0 appears 50 px to the left.
        assert!((got.pixel.u - 0.0).abs() < 1e-9);
    }

    #[test]
    fn behind_source_is_flagged() {
        let r = simple_cam(0.0);
        // Source 5 units ahead of the reference, looking the same way.
        let s = CameraModel {
            translation: Vec3::new(0.0, 0.0, -5.0),
            ..r
        };
        let pr = project_to_source(PixelCoord::new(50.0, 50.0), 2.0, &r, &s).unwrap();
        assert!(!pr.in_frustum);
        assert!(pr.depth <= 0.0);
    }

    #[test]
    fn non_positive_depth_rejected() {
        let c = simple_cam(0.0);
        assert!(matches!(
            project_to_source(PixelCoord::new(1.0, 1.0), 0.0, &c, &c),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(back_project(PixelCoord::new(1.0, 1.0), -1.0, &c).is_err());
    }

    #[test]
    fn back_project_examples() {
        let c = simple_cam(0.0);
        assert_eq!(
            back_project(PixelCoord::new(50.0, 50.0), 5.0, &c).unwrap(),
            Vec3::new(0.0, 0.0, 5.0)
        );
        let x = back_project(PixelCoord::new(150.0, 50.0), 2.0, &c).unwrap();
        assert_eq!(x, Vec3::new(2.0, 0.0, 2.0));
        let back = c.project(x).unwrap();
        assert!((back.u - 150.0).abs() < 1e-12 && (back.v - 50.0).abs() < 1e-12);
    }

    #[test]
    fn fronto_parallel_and_same_ray_ratios() {
        let c = simple_cam(0.0);
        let pi = PixelCoord::new(10.0, 80.0);
        let pj = PixelCoord::new(70.0, 5.0);
        let r = depth_ratio(pi, pj, Vec3::new(0.0, 0.0, 1.0), &c, DEFAULT_RAY_EPSILON).unwrap();
        assert_eq!(r, 1.0);
        let n = Vec3::new(0.3, -0.4, 0.5).normalized().unwrap();
        assert_eq!(depth_ratio(pi, pi, n, &c, DEFAULT_RAY_EPSILON).unwrap(), 1.0);
    }

    #[test]
    fn grazing_plane_is_degenerate() {
        let c = simple_cam(0.0);
        // Ray through (150, 50) is (1, 0, 1); a normal orthogonal to it.
        let n = Vec3::new(1.0, 0.0, -1.0).normalized().unwrap();
        let err = depth_ratio(PixelCoord::new(50.0, 50.0), PixelCoord::new(150.0, 50.0), n, &c, 1e-8);
        assert!(matches!(err, Err(Error::DegenerateRay { .. })));
        let err = depth_ratio(
            PixelCoord::new(50.0, 50.0),
            PixelCoord::new(60.0, 50.0),
            Vec3::new(0.0, 0.0, 2.0),
            &c,
            1e-8,
        );
        assert!(matches!(err, Err(Error::NonUnitNormal(_))));
    }

    #[test]
    fn at_level_keeps_pixel_centres_consistent() {
        let c = simple_cam(0.0);
        let c1 = c.at_level(1).unwrap();
        assert_eq!((c1.width, c1.height), (50, 50));
        // Full-res pixel centres 2x and 2x+1 average to level-1 pixel x.
        let x = Vec3::new(0.3, -0.2, 2.0);
        let p0 = c.project(x).unwrap();
        let p1 = c1.project(x).unwrap();
        assert!(((p0.u - 0.5) / 2.0 - p1.u).abs() < 1e-12);
        assert!(((p0.v - 0.5) / 2.0 - p1.v).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn back_project_round_trip(u in 0.0f64..99.0, v in 0.0f64..99.0, di in 0usize..3) {
            let c = simple_cam(0.0);
            let d = [0.5, 1.0, 10.0][di];
            let x = back_project(PixelCoord::new(u, v), d, &c).unwrap();
            prop_assert_eq!(x.z, d);
            let p = c.project(x).unwrap();
            prop_assert!((p.u - u).abs() < 1e-12 && (p.v - v).abs() < 1e-12);
        }

        #[test]
        fn ratio_is_scale_invariant_in_normal(
            nx in -1.0f64..1.0, ny in -1.0f64..1.0, nz in 0.2f64..1.0, s in 0.01f64..100.0,
            ui in 0.0f64..99.0, vi in 0.0f64..99.0, uj in 0.0f64..99.0, vj in 0.0f64..99.0,
        ) {
            let c = simple_cam(0.0);
            let n = Vec3::new(nx, ny, nz);
            let ri = c.ray(PixelCoord::new(ui, vi));
            let rj = c.ray(PixelCoord::new(uj, vj));
            if let (Ok(a), Ok(b)) = (ray_depth_ratio(ri, rj, n, 1e-6), ray_depth_ratio(ri, rj, n * s, 1e-6 * s)) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
