//! Patch descriptors, two-view correlation volumes and weighted multi-view
//! aggregation.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PixelCoord, PlaneSweepWarp};
use crate::hypotheses::HypothesisVolume;
use crate::image::RgbImage;

/// Number of descriptor channels: intensity, two gradients, 3x3 patch.
pub const FEATURE_CHANNELS: usize = 12;

/// Lower bound on per-view weights.
pub const WEIGHT_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorParams {
    /// Scale applied to the centred intensity channel.
    pub intensity_weight: f64,
    /// Scale descriptors to unit length so correlations are cosines.
    pub normalize: bool,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            intensity_weight: 0.25,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub level: u32,
    /// Pixel-major: `values[(y * width + x) * channels + c]`.
    pub values: Vec<f64>,
}

impl FeatureMap {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.values[i..i + self.channels]
    }

    /// Bilinear sample; `out` is zeroed when `p` is outside the image.
    pub fn sample_bilinear(&self, p: PixelCoord, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let (w, h) = (self.width as f64, self.height as f64);
        if !(p.u >= 0.0 && p.v >= 0.0 && p.u <= w - 1.0 && p.v <= h - 1.0) {
            return;
        }
        let x0 = p.u.floor() as usize;
        let y0 = p.v.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = p.u - x0 as f64;
        let fy = p.v - y0 as f64;
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        for (x, y, wt) in taps {
            if wt == 0.0 {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(self.at(x, y)) {
                *o += wt * v;
            }
        }
    }
}

/// 2x2 box downsampling; odd trailing rows/columns are dropped.
pub fn downsample_box(values: &[f64], width: usize, height: usize) -> (Vec<f64>, usize, usize) {
    let (w2, h2) = (width / 2, height / 2);
    let mut out = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let a = values[(2 * y) * width + 2 * x];
            let b = values[(2 * y) * width + 2 * x + 1];
            let c = values[(2 * y + 1) * width + 2 * x];
            let d = values[(2 * y + 1) * width + 2 * x + 1];
            out.push(0.25 * (a + b + c + d));
        }
    }
    (out, w2, h2)
}

pub fn extract_features(image: &RgbImage, level: u32) -> Result<FeatureMap> {
    extract_features_with(image, level, DescriptorParams::default())
}

/// Fixed 12-channel descriptor at pyramid `level`: centred intensity,
/// central-difference gradients and the mean-subtracted 3x3 neighbourhood.
/// Borders replicate edge pixels.
pub fn extract_features_with(
    image: &RgbImage,
    level: u32,
    params: DescriptorParams,
) -> Result<FeatureMap> {
    let mut gray: Vec<f64> = image.gray().into_iter().map(f64::from).collect();
    let (mut w, mut h) = (image.width, image.height);
    for _ in 0..level {
        if w < 2 || h < 2 {
            break;
        }
        let (g, w2, h2) = downsample_box(&gray, w, h);
        gray = g;
        w = w2;
        h = h2;
    }
    if w < 3 || h < 3 || image.width >> level != w || image.height >> level != h {
        return Err(Error::ImageTooSmall {
            width: image.width,
            height: image.height,
            level,
        });
    }
    let at = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        gray[yc * w + xc]
    };
    let mut values = Vec::with_capacity(w * h * FEATURE_CHANNELS);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut d = [0.0f64; FEATURE_CHANNELS];
            d[0] = params.intensity_weight * (at(x, y) - 0.5);
            d[1] = 0.5 * (at(x + 1, y) - at(x - 1, y));
            d[2] = 0.5 * (at(x, y + 1) - at(x, y - 1));
            let mut patch = [0.0f64; 9];
            let mut k = 0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    patch[k] = at(x + dx, y + dy);
                    k += 1;
                }
            }
            let mean = patch.iter().sum::<f64>() / 9.0;
            for (slot, &p) in d[3..].iter_mut().zip(&patch) {
                *slot = p - mean;
            }
            if params.normalize {
                let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1e-6 {
                    d.iter_mut().for_each(|v| *v /= n);
                }
            }
            values.extend_from_slice(&d);
        }
    }
    Ok(FeatureMap {
        width: w,
        height: h,
        channels: FEATURE_CHANNELS,
        level,
        values,
    })
}

/// Per-pixel, per-hypothesis, per-channel matching scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub channels: usize,
    pub num_hyps: usize,
    pub width: usize,
    pub height: usize,
    /// Pixel-major: `values[((y * width + x) * num_hyps + l) * channels + c]`.
    pub values: Vec<f64>,
}

impl CostVolume {
    pub fn zeros(channels: usize, num_hyps: usize, width: usize, height: usize) -> Self {
        CostVolume {
            channels,
            num_hyps,
            width,
            height,
            values: alloc::vec![0.0; channels * num_hyps * width * height],
        }
    }

    pub fn same_shape(&self, o: &CostVolume) -> bool {
        self.channels == o.channels
            && self.num_hyps == o.num_hyps
            && self.width == o.width
            && self.height == o.height
    }

    pub fn matches_hypotheses(&self, h: &HypothesisVolume) -> bool {
        self.num_hyps == h.num_samples && self.width == h.width && self.height == h.height
    }

    /// All `L x M` scores of one pixel.
    #[inline]
    pub fn pixel(&self, pixel: usize) -> &[f64] {
        let n = self.num_hyps * self.channels;
        &self.values[pixel * n..(pixel + 1) * n]
    }

    #[inline]
    pub fn cell(&self, pixel: usize, hyp: usize) -> &[f64] {
        let i = (pixel * self.num_hyps + hyp) * self.channels;
        &self.values[i..i + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, pixel: usize, hyp: usize) -> &mut [f64] {
        let i = (pixel * self.num_hyps + hyp) * self.channels;
        &mut self.values[i..i + self.channels]
    }

    /// Channel-summed score.
    pub fn summed(&self, pixel: usize, hyp: usize) -> f64 {
        self.cell(pixel, hyp).iter().sum()
    }
}

pub fn two_view_correlation(
    ref_feat: &FeatureMap,
    src_feat: &FeatureMap,
    hyps: &HypothesisVolume,
    ref_cam: &CameraModel,
    src_cam: &CameraModel,
) -> Result<CostVolume> {
    if ref_feat.level != src_feat.level || ref_feat.channels != src_feat.channels {
        return Err(Error::Shape {
            what: "feature levels",
            expected: ref_feat.level as usize,
            found: src_feat.level as usize,
        });
    }
    if hyps.width != ref_feat.width || hyps.height != ref_feat.height {
        return Err(Error::Shape {
            what: "hypotheses vs features",
            expected: ref_feat.width * ref_feat.height,
            found: hyps.width * hyps.height,
        });
    }
    let rc = ref_cam.at_level(ref_feat.level)?;
    let sc = src_cam.at_level(src_feat.level)?;
    if (sc.width, sc.height) != (src_feat.width, src_feat.height)
        || (rc.width, rc.height) != (ref_feat.width, ref_feat.height)
    {
        return Err(Error::Shape {
            what: "camera vs feature size",
            expected: rc.width * rc.height,
            found: ref_feat.width * ref_feat.height,
        });
    }
    let warp = PlaneSweepWarp::new(&rc, &sc);
    let m = ref_feat.channels;
    let l = hyps.num_samples;
    let mut vol = CostVolume::zeros(m, l, ref_feat.width, ref_feat.height);
    let mut sample = alloc::vec![0.0f64; m];
    for y in 0..ref_feat.height {
        for x in 0..ref_feat.width {
            let pixel = y * ref_feat.width + x;
            let p = PixelCoord::new(x as f64, y as f64);
            let f0 = ref_feat.at(x, y);
            let ladder = hyps.ladder_at(pixel);
            for (h, &d) in ladder.iter().enumerate() {
                let pr = warp.warp(p, d);
                if !pr.in_frustum {
                    continue;
                }
                src_feat.sample_bilinear(pr.pixel, &mut sample);
                for ((o, &a), &b) in vol.cell_mut(pixel, h).iter_mut().zip(f0).zip(&sample) {
                    *o = a * b;
                }
            }
        }
    }
    Ok(vol)
}

/// Pixel-wise confidence of one source view, in `[WEIGHT_FLOOR, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeightMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ViewWeightMap {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    /// Nearest-neighbour resize, used to carry stage-0 weights to finer stages.
    pub fn upsample(&self, width: usize, height: usize) -> ViewWeightMap {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = (y * self.height / height).min(self.height - 1);
            for x in 0..width {
                let sx = (x * self.width / width).min(self.width - 1);
                values.push(self.values[sy * self.width + sx]);
            }
        }
        ViewWeightMap {
            width,
            height,
            values,
        }
    }
}

/// Weight of view `i` at pixel `p`: its best channel-summed correlation over
/// the hypotheses, normalised by the largest absolute correlation any view
/// reaches at `p`, then clamped to `[WEIGHT_FLOOR, 1]`.
pub fn compute_view_weights(vols: &[CostVolume]) -> Result<Vec<ViewWeightMap>> {
    let first = vols.first().ok_or(Error::Argument("no source views"))?;
    for v in vols {
        if !v.same_shape(first) {
            return Err(Error::Shape {
                what: "two-view volumes",
                expected: first.values.len(),
                found: v.values.len(),
            });
        }
    }
    let n = first.width * first.height;
    let mut out: Vec<ViewWeightMap> = vols
        .iter()
        .map(|_| ViewWeightMap {
            width: first.width,
            height: first.height,
            values: alloc::vec![WEIGHT_FLOOR; n],
        })
        .collect();
    let mut peaks = alloc::vec![0.0f64; vols.len()];
    for p in 0..n {
        let mut range = 0.0f64;
        for (peak, v) in peaks.iter_mut().zip(vols) {
            *peak = f64::NEG_INFINITY;
            for h in 0..v.num_hyps {
                let s = v.summed(p, h);
                *peak = peak.max(s);
                range = range.max(s.abs());
            }
        }
        if range > 0.0 {
            for (map, &peak) in out.iter_mut().zip(&peaks) {
                map.values[p] = (peak / range).clamp(WEIGHT_FLOOR, 1.0);
            }
        }
    }
    Ok(out)
}

/// `C = Σ W_i ⊙ V_i / Σ W_i`, broadcast over hypotheses and channels.
pub fn aggregate_views(vols: &[CostVolume], weights: &[ViewWeightMap]) -> Result<CostVolume> {
    let first = vols.first().ok_or(Error::Argument("no source views"))?;
    if vols.len() != weights.len() {
        return Err(Error::Shape {
            what: "volume and weight counts",
            expected: vols.len(),
            found: weights.len(),
        });
    }
    let n = first.width * first.height;
    for (v, w) in vols.iter().zip(weights) {
        if !v.same_shape(first) || w.values.len() != n {
            return Err(Error::Shape {
                what: "aggregation inputs",
                expected: first.values.len(),
                found: v.values.len(),
            });
        }
    }
    let block = first.num_hyps * first.channels;
    let mut out = CostVolume::zeros(first.channels, first.num_hyps, first.width, first.height);
    let mut acc = alloc::vec![0.0f64; block];
    for p in 0..n {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut wsum = 0.0f64;
        for (v, w) in vols.iter().zip(weights) {
            let wi = w.values[p];
            wsum += wi;
            for (a, &c) in acc.iter_mut().zip(v.pixel(p)) {
                *a += wi * c;
            }
        }
        let dst = &mut out.values[p * block..(p + 1) * block];
        if wsum > 0.0 {
            for (o, a) in dst.iter_mut().zip(&acc) {
                *o = a / wsum;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Intrinsics;
    use crate::linalg::{Mat3, Vec3};
    use proptest::prelude::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn textured(w: usize, h: usize, seed: u64) -> RgbImage {
        let mut s = seed;
        let data = (0..w * h)
            .map(|_| {
                let g = lcg(&mut s) as f32;
                [g, g, g]
            })
            .collect();
        RgbImage::from_data(w, h, data).unwrap()
    }

    fn random_volume(seed: &mut u64, m: usize, l: usize, w: usize, h: usize) -> CostVolume {
        let mut v = CostVolume::zeros(m, l, w, h);
        v.values.iter_mut().for_each(|x| *x = lcg(seed) * 2.0 - 1.0);
        v
    }

    #[test]
    fn constant_image_has_zero_gradients() {
        let img = RgbImage::from_data(8, 6, alloc::vec![[0.7; 3]; 48]).unwrap();
        let f = extract_features(&img, 0).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                assert!(f.at(x, y)[1..].iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn horizontal_ramp_has_no_vertical_gradient() {
        let (w, h) = (16, 8);
        let data = (0..w * h)
            .map(|i| {
                let g = (i % w) as f32 / w as f32;
                [g, g, g]
            })
            .collect();
        let img = RgbImage::from_data(w, h, data).unwrap();
        let f = extract_features(&img, 0).unwrap();
        for y in 0..h {
            for x in 0..w {
                assert_eq!(f.at(x, y)[2], 0.0);
                if x > 0 && x + 1 < w {
                    assert!(f.at(x, y)[1] > 0.0);
                }
            }
        }
    }

    #[test]
    fn level_halves_resolution() {
        let img = textured(40, 32, 3);
        let f = extract_features(&img, 1).unwrap();
        assert_eq!((f.width, f.height, f.channels), (20, 16, 12));
        let f = extract_features(&img, 2).unwrap();
        assert_eq!((f.width, f.height), (10, 8));
        assert!(matches!(
            extract_features(&img, 4),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    fn cam(w: usize, h: usize, tx: f64) -> CameraModel {
        CameraModel::new(
            Intrinsics {
                fx: 20.0,
                fy: 20.0,
                cx: (w / 2) as f64,
                cy: (h / 2) as f64,
            },
            Mat3::IDENTITY,
            Vec3::new(tx, 0.0, 0.0),
            w,
            h,
        )
        .unwrap()
    }

    #[test]
    fn identical_views_score_squared_features() {
        let img = textured(12, 10, 5);
        let f = extract_features(&img, 0).unwrap();
        let c = cam(12, 10, 0.0);
        let hyps = HypothesisVolume::uniform(1.0, 3.0, 3, 12, 10, 0).unwrap();
        let v = two_view_correlation(&f, &f, &hyps, &c, &c).unwrap();
        for y in 0..10 {
            for x in 0..12 {
                let p = y * 12 + x;
                for h in 0..3 {
                    for (k, &s) in v.cell(p, h).iter().enumerate() {
                        let a = f.at(x, y)[k];
                        assert!((s - a * a).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn out_of_frustum_scores_zero() {
        let img = textured(12, 10, 5);
        let f = extract_features(&img, 0).unwrap();
        let r = cam(12, 10, 0.0);
        // Source shifted far along x: every warp leaves the image.
        let s = cam(12, 10, -100.0);
        let hyps = HypothesisVolume::uniform(1.0, 2.0, 2, 12, 10, 0).unwrap();
        let v = two_view_correlation(&f, &f, &hyps, &r, &s).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn level_mismatch_is_a_shape_error() {
        let img = textured(16, 16, 5);
        let f0 = extract_features(&img, 0).unwrap();
        let f1 = extract_features(&img, 1).unwrap();
        let c = cam(16, 16, 0.0);
        let hyps = HypothesisVolume::uniform(1.0, 2.0, 2, 16, 16, 0).unwrap();
        assert!(matches!(
            two_view_correlation(&f0, &f1, &hyps, &c, &c),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn occluded_view_gets_floor_weight() {
        let mut seed = 11;
        let good = random_volume(&mut seed, 2, 4, 3, 3);
        let dead = CostVolume::zeros(2, 4, 3, 3);
        let w = compute_view_weights(&[good, dead]).unwrap();
        assert!(w[1].values.iter().all(|&v| v == WEIGHT_FLOOR));
        assert!(w[0].values.iter().all(|&v| (WEIGHT_FLOOR..=1.0).contains(&v)));
        assert!(compute_view_weights(&[]).is_err());
    }

    #[test]
    fn single_view_aggregate_is_identity() {
        let mut seed = 1;
        let v = random_volume(&mut seed, 3, 5, 4, 2);
        let w = ViewWeightMap {
            width: 4,
            height: 2,
            values: (0..8).map(|i| 0.1 + 0.1 * i as f64).collect(),
        };
        let c = aggregate_views(&[v.clone()], &[w]).unwrap();
        for (a, b) in c.values.iter().zip(&v.values) {
            assert!((a - b).abs() <= 1e-7 * b.abs().max(1.0));
        }
    }

    #[test]
    fn equal_weights_give_mean_and_dominant_weight_wins() {
        let mut seed = 2;
        let a = random_volume(&mut seed, 2, 3, 2, 2);
        let b = random_volume(&mut seed, 2, 3, 2, 2);
        let ones = ViewWeightMap {
            width: 2,
            height: 2,
            values: alloc::vec![0.5; 4],
        };
        let c = aggregate_views(&[a.clone(), b.clone()], &[ones.clone(), ones]).unwrap();
        for i in 0..c.values.len() {
            assert!((c.values[i] - 0.5 * (a.values[i] + b.values[i])).abs() < 1e-6);
        }
        let w1 = ViewWeightMap {
            width: 2,
            height: 2,
            values: alloc::vec![1.0; 4],
        };
        let w0 = ViewWeightMap {
            width: 2,
            height: 2,
            values: alloc::vec![WEIGHT_FLOOR; 4],
        };
        let c = aggregate_views(&[a.clone(), b.clone()], &[w1, w0]).unwrap();
        for i in 0..c.values.len() {
            assert!((c.values[i] - a.values[i]).abs() <= 2.0 * WEIGHT_FLOOR * 2.0);
        }
    }

    #[test]
    fn aggregate_matches_elementwise_reference() {
        let mut seed = 3;
        let vols: Vec<CostVolume> = (0..3).map(|_| random_volume(&mut seed, 4, 5, 3, 2)).collect();
        let weights: Vec<ViewWeightMap> = (0..3)
            .map(|_| ViewWeightMap {
                width: 3,
                height: 2,
                values: (0..6).map(|_| lcg(&mut seed).max(WEIGHT_FLOOR)).collect(),
            })
            .collect();
        let c = aggregate_views(&vols, &weights).unwrap();
        for p in 0..6 {
            for h in 0..5 {
                for ch in 0..4 {
                    let i = (p * 5 + h) * 4 + ch;
                    let num: f64 = (0..3).map(|v| weights[v].values[p] * vols[v].values[i]).sum();
                    let den: f64 = (0..3).map(|v| weights[v].values[p]).sum();
                    assert!((c.values[i] - num / den).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = CostVolume::zeros(2, 3, 2, 2);
        let b = CostVolume::zeros(2, 4, 2, 2);
        let w = ViewWeightMap {
            width: 2,
            height: 2,
            values: alloc::vec![1.0; 4],
        };
        assert!(aggregate_views(&[a, b], &[w.clone(), w]).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_is_convex_and_scale_invariant(seed in 0u64..1000, scale in 0.01f64..50.0) {
            let mut s = seed;
            let vols: Vec<CostVolume> = (0..3).map(|_| random_volume(&mut s, 2, 3, 2, 2)).collect();
            let weights: Vec<ViewWeightMap> = (0..3)
                .map(|_| ViewWeightMap { width: 2, height: 2, values: (0..4).map(|_| lcg(&mut s).max(WEIGHT_FLOOR)).collect() })
                .collect();
            let c = aggregate_views(&vols, &weights).unwrap();
            for i in 0..c.values.len() {
                let lo = vols.iter().map(|v| v.values[i]).fold(f64::INFINITY, f64::min);
                let hi = vols.iter().map(|v| v.values[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(c.values[i] >= lo - 1e-6 && c.values[i] <= hi + 1e-6);
            }
            let scaled: Vec<ViewWeightMap> = weights
                .iter()
                .map(|w| ViewWeightMap { values: w.values.iter().map(|v| v * scale).collect(), ..w.clone() })
                .collect();
            let c2 = aggregate_views(&vols, &scaled).unwrap();
            for (a, b) in c.values.iter().zip(&c2.values) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
