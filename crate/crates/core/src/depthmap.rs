//! Depth maps, probability volumes, winner-takes-all extraction, the masked
//! cross-entropy score and depth-error metrics.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::costvol::CostVolume;
use crate::error::{Error, Result};
use crate::hypotheses::HypothesisVolume;

/// Floor applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            values: alloc::vec![0.0; width * height],
            valid: alloc::vec![false; width * height],
        }
    }

    /// Builds a map from raw values; entries that are not finite and positive
    /// are marked invalid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape {
                what: "depth values",
                expected: width * height,
                found: values.len(),
            });
        }
        let valid = values.iter().map(|&d| d.is_finite() && d > 0.0).collect();
        let mut m = DepthMap {
            width,
            height,
            values,
            valid,
        };
        for (v, &ok) in m.values.iter_mut().zip(&m.valid) {
            if !ok {
                *v = 0.0;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = self.index(x, y);
        self.valid[i].then(|| self.values[i])
    }

    pub fn set(&mut self, x: usize, y: usize, d: f64) {
        let i = self.index(x, y);
        if d.is_finite() && d > 0.0 {
            self.values[i] = d;
            self.valid[i] = true;
        } else {
            self.values[i] = 0.0;
            self.valid[i] = false;
        }
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = self.index(x, y);
        self.values[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    pub width: usize,
    pub height: usize,
    pub num_hyps: usize,
    /// Pixel-major: `values[(y * width + x) * num_hyps + l]`.
    pub values: Vec<f64>,
    /// Per-pixel maximum probability.
    pub confidence: Vec<f64>,
}

impl ProbabilityVolume {
    #[inline]
    pub fn distribution(&self, pixel: usize) -> &[f64] {
        &self.values[pixel * self.num_hyps..(pixel + 1) * self.num_hyps]
    }
}

/// Channel-sums the cost and applies a max-stabilised softmax along the
/// hypothesis axis of every pixel.
pub fn softmax_probability(cost: &CostVolume) -> Result<ProbabilityVolume> {
    let l = cost.num_hyps;
    let n = cost.width * cost.height;
    let mut values = alloc::vec![0.0f64; n * l];
    let mut confidence = alloc::vec![0.0f64; n];
    for p in 0..n {
        let out = &mut values[p * l..(p + 1) * l];
        for (h, o) in out.iter_mut().enumerate() {
            *o = cost.cell(p, h).iter().sum();
        }
        if out.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cost volume"));
        }
        softmax_in_place(out);
        confidence[p] = out.iter().cloned().fold(0.0, f64::max);
    }
    Ok(ProbabilityVolume {
        width: cost.width,
        height: cost.height,
        num_hyps: l,
        values,
        confidence,
    })
}

pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WtaOptions {
    /// Fit a parabola through the winning bin and its two neighbours.
    pub parabola_refinement: bool,
}

/// Index of the most probable bin; ties resolve to the smaller index.
pub fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn winner_takes_all(
    prob: &ProbabilityVolume,
    hyps: &HypothesisVolume,
    opts: WtaOptions,
) -> Result<DepthMap> {
    if prob.width != hyps.width || prob.height != hyps.height || prob.num_hyps != hyps.num_samples
    {
        return Err(Error::Shape {
            what: "probability vs hypotheses",
            expected: hyps.width * hyps.height * hyps.num_samples,
            found: prob.width * prob.height * prob.num_hyps,
        });
    }
    let mut out = DepthMap::new(prob.width, prob.height);
    for p in 0..prob.width * prob.height {
        let dist = prob.distribution(p);
        let ladder = hyps.ladder_at(p);
        let m = argmax_first(dist);
        let mut depth = ladder[m];
        if opts.parabola_refinement && m > 0 && m + 1 < dist.len() {
            let (a, b, c) = (dist[m - 1], dist[m], dist[m + 1]);
            let denom = a - 2.0 * b + c;
            if denom < 0.0 {
                let offset = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
                let step = if offset >= 0.0 {
                    ladder[m + 1] - ladder[m]
                } else {
                    ladder[m] - ladder[m - 1]
                };
                depth += offset * step;
            }
        }
        out.values[p] = depth;
        out.valid[p] = true;
    }
    Ok(out)
}

/// Index of the ladder sample nearest to `d` (first on ties).
pub fn nearest_bin(ladder: &[f64], d: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &s) in ladder.iter().enumerate() {
        let dist = (s - d).abs();
        if dist < best_dist {
            best = i;
            best_dist = dist;
        }
    }
    best
}

/// Mean over unmasked pixels of `-Σ P' log P`, with `P'` the one-hot on the
/// bin nearest the ground-truth depth. Pixels with invalid ground truth or
/// ground truth outside `[d¹, d^L]` are masked.
pub fn cross_entropy(
    prob: &ProbabilityVolume,
    gt: &DepthMap,
    hyps: &HypothesisVolume,
) -> Result<f64> {
    if gt.width != prob.width || gt.height != prob.height {
        return Err(Error::Shape {
            what: "ground truth vs probability",
            expected: prob.width * prob.height,
            found: gt.width * gt.height,
        });
    }
    if prob.num_hyps != hyps.num_samples || hyps.width != prob.width || hyps.height != prob.height
    {
        return Err(Error::Shape {
            what: "probability vs hypotheses",
            expected: hyps.width * hyps.height * hyps.num_samples,
            found: prob.width * prob.height * prob.num_hyps,
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for p in 0..prob.width * prob.height {
        if !gt.valid[p] {
            continue;
        }
        let d = gt.values[p];
        let ladder = hyps.ladder_at(p);
        if d < ladder[0] || d > ladder[ladder.len() - 1] {
            continue;
        }
        let bin = nearest_bin(ladder, d);
        total += -prob.distribution(p)[bin].max(LOG_FLOOR).ln();
        count += 1;
    }
    if count == 0 {
        return Err(Error::Empty("every pixel is masked"));
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMetrics {
    pub mean_abs_error: f64,
    /// `(threshold, fraction of jointly valid pixels with error <= threshold)`.
    pub within: Vec<(f64, f64)>,
    /// Jointly valid pixels over ground-truth-valid pixels in the mask.
    pub valid_fraction: f64,
    pub evaluated: usize,
}

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap, thresholds: &[f64]) -> Result<DepthMetrics> {
    depth_metrics_masked(pred, gt, None, thresholds)
}

/// Metrics restricted to pixels where `mask` is set (all pixels if `None`).
pub fn depth_metrics_masked(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&[bool]>,
    thresholds: &[f64],
) -> Result<DepthMetrics> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::Shape {
            what: "prediction vs ground truth",
            expected: gt.width * gt.height,
            found: pred.width * pred.height,
        });
    }
    if let Some(m) = mask {
        if m.len() != gt.values.len() {
            return Err(Error::Shape {
                what: "evaluation mask",
                expected: gt.values.len(),
                found: m.len(),
            });
        }
    }
    let mut abs_sum = 0.0;
    let mut joint = 0usize;
    let mut gt_valid = 0usize;
    let mut hits = alloc::vec![0usize; thresholds.len()];
    for p in 0..gt.values.len() {
        if mask.is_some_and(|m| !m[p]) || !gt.valid[p] {
            continue;
        }
        gt_valid += 1;
        if !pred.valid[p] {
            continue;
        }
        joint += 1;
        let e = (pred.values[p] - gt.values[p]).abs();
        abs_sum += e;
        for (h, &t) in hits.iter_mut().zip(thresholds) {
            if e <= t {
                *h += 1;
            }
        }
    }
    if joint == 0 {
        return Err(Error::Empty("no jointly valid pixels"));
    }
    Ok(DepthMetrics {
        mean_abs_error: abs_sum / joint as f64,
        within: thresholds
            .iter()
            .zip(&hits)
            .map(|(&t, &h)| (t, h as f64 / joint as f64))
            .collect(),
        valid_fraction: joint as f64 / gt_valid as f64,
        evaluated: joint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::HypothesisVolume;
    use proptest::prelude::*;

    fn volume_from(l: usize, w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> CostVolume {
        let mut c = CostVolume::zeros(1, l, w, h);
        for p in 0..w * h {
            for k in 0..l {
                c.cell_mut(p, k)[0] = f(p, k);
            }
        }
        c
    }

    fn hyps(l: usize, w: usize, h: usize) -> HypothesisVolume {
        HypothesisVolume::uniform(1.0, l as f64, l, w, h, 0).unwrap()
    }

    /// LCG so the oracle tests do not depend on the crate under test.
    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn uniform_cost_gives_uniform_distribution() {
        let c = volume_from(7, 3, 2, |_, _| 0.25);
        let p = softmax_probability(&c).unwrap();
        for &v in &p.values {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_bin_saturates() {
        let c = volume_from(5, 1, 1, |_, k| if k == 2 { 50.0 } else { 0.0 });
        let p = softmax_probability(&c).unwrap();
        assert!(p.values[2] > 1.0 - 1e-9);
        assert_eq!(p.confidence[0], p.values[2]);
    }

    #[test]
    fn softmax_matches_scalar_formula() {
        let mut seed = 7;
        let raw: Vec<f64> = (0..5).map(|_| lcg(&mut seed) * 4.0 - 2.0).collect();
        let c = volume_from(5, 1, 1, |_, k| raw[k]);
        let p = softmax_probability(&c).unwrap();
        let z: f64 = raw.iter().map(|&x| x.exp()).sum();
        for k in 0..5 {
            assert!((p.values[k] - raw[k].exp() / z).abs() < 1e-7);
        }
    }

    #[test]
    fn non_finite_cost_rejected() {
        let c = volume_from(3, 1, 1, |_, k| if k == 1 { f64::NAN } else { 0.0 });
        assert_eq!(softmax_probability(&c), Err(Error::NonFinite("cost volume")));
    }

    #[test]
    fn wta_one_hot_and_ties() {
        let h = hyps(4, 2, 1);
        let prob = ProbabilityVolume {
            width: 2,
            height: 1,
            num_hyps: 4,
            values: alloc::vec![0.0, 0.0, 1.0, 0.0, 0.4, 0.1, 0.4, 0.1],
            confidence: alloc::vec![1.0, 0.4],
        };
        let d = winner_takes_all(&prob, &h, WtaOptions::default()).unwrap();
        assert_eq!(d.values[0], h.ladder_at(0)[2]);
        assert_eq!(d.values[1], h.ladder_at(1)[0]);
    }

    #[test]
    fn parabola_refinement_moves_towards_heavier_side() {
        let h = hyps(4, 1, 1);
        let prob = ProbabilityVolume {
            width: 1,
            height: 1,
            num_hyps: 4,
            values: alloc::vec![0.1, 0.5, 0.3, 0.1],
            confidence: alloc::vec![0.5],
        };
        let plain = winner_takes_all(&prob, &h, WtaOptions::default()).unwrap();
        let refined = winner_takes_all(
            &prob,
            &h,
            WtaOptions {
                parabola_refinement: true,
            },
        )
        .unwrap();
        assert!(refined.values[0] > plain.values[0]);
        assert!(refined.values[0] < h.ladder_at(0)[2]);
    }

    #[test]
    fn cross_entropy_perfect_and_uniform() {
        let h = hyps(6, 2, 2);
        let mut gt = DepthMap::new(2, 2);
        for p in 0..4 {
            gt.values[p] = 3.0;
            gt.valid[p] = true;
        }
        let bin = nearest_bin(h.ladder_at(0), 3.0);
        let mut onehot = alloc::vec![0.0; 24];
        for p in 0..4 {
            onehot[p * 6 + bin] = 1.0;
        }
        let prob = ProbabilityVolume {
            width: 2,
            height: 2,
            num_hyps: 6,
            values: onehot,
            confidence: alloc::vec![1.0; 4],
        };
        assert!(cross_entropy(&prob, &gt, &h).unwrap() <= 1e-10);
        let uniform = ProbabilityVolume {
            values: alloc::vec![1.0 / 6.0; 24],
            ..prob
        };
        let ce = cross_entropy(&uniform, &gt, &h).unwrap();
        assert!((ce - 6.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn cross_entropy_fully_masked_is_an_error() {
        let h = hyps(4, 1, 2);
        let mut gt = DepthMap::new(1, 2);
        gt.set(0, 0, 100.0);
        let prob = ProbabilityVolume {
            width: 1,
            height: 2,
            num_hyps: 4,
            values: alloc::vec![0.25; 8],
            confidence: alloc::vec![0.25; 2],
        };
        assert!(matches!(cross_entropy(&prob, &gt, &h), Err(Error::Empty(_))));
    }

    #[test]
    fn metrics_identity_and_shift() {
        let gt = DepthMap::from_values(3, 1, alloc::vec![1.0, 2.0, 3.0]).unwrap();
        let m = depth_metrics(&gt, &gt, &[0.0, 0.5]).unwrap();
        assert_eq!(m.mean_abs_error, 0.0);
        assert_eq!(m.within, alloc::vec![(0.0, 1.0), (0.5, 1.0)]);
        assert_eq!(m.valid_fraction, 1.0);
        let shifted = DepthMap::from_values(3, 1, alloc::vec![1.25, 2.25, 3.25]).unwrap();
        let m = depth_metrics(&shifted, &gt, &[0.1]).unwrap();
        assert!((m.mean_abs_error - 0.25).abs() < 1e-15);
        assert_eq!(m.within[0].1, 0.0);
    }

    #[test]
    fn metrics_need_joint_pixels() {
        let gt = DepthMap::from_values(2, 1, alloc::vec![1.0, 0.0]).unwrap();
        let pred = DepthMap::from_values(2, 1, alloc::vec![0.0, 1.0]).unwrap();
        assert!(matches!(depth_metrics(&pred, &gt, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn metrics_match_reference_loop() {
        let mut seed = 99;
        let n = 200;
        let gt_vals: Vec<f64> = (0..n)
            .map(|_| if lcg(&mut seed) < 0.1 { 0.0 } else { 1.0 + lcg(&mut seed) * 5.0 })
            .collect();
        let pred_vals: Vec<f64> = (0..n)
            .map(|_| if lcg(&mut seed) < 0.1 { 0.0 } else { 1.0 + lcg(&mut seed) * 5.0 })
            .collect();
        let gt = DepthMap::from_values(20, 10, gt_vals.clone()).unwrap();
        let pred = DepthMap::from_values(20, 10, pred_vals.clone()).unwrap();
        let thr = [0.5, 1.0, 2.0];
        let m = depth_metrics(&pred, &gt, &thr).unwrap();
        let (mut s, mut c, mut g) = (0.0, 0usize, 0usize);
        let mut within = [0usize; 3];
        for i in 0..n {
            if gt_vals[i] > 0.0 {
                g += 1;
                if pred_vals[i] > 0.0 {
                    let e = (pred_vals[i] - gt_vals[i]).abs();
                    s += e;
                    c += 1;
                    for k in 0..3 {
                        if e <= thr[k] {
                            within[k] += 1;
                        }
                    }
                }
            }
        }
        assert!((m.mean_abs_error - s / c as f64).abs() < 1e-9);
        assert!((m.valid_fraction - c as f64 / g as f64).abs() < 1e-9);
        for k in 0..3 {
            assert!((m.within[k].1 - within[k] as f64 / c as f64).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn softmax_normalises_and_wta_ignores_offsets(
            costs in proptest::collection::vec(-30.0f64..30.0, 8),
            offset in -100.0f64..100.0,
        ) {
            let h = hyps(8, 1, 1);
            let c = volume_from(8, 1, 1, |_, k| costs[k]);
            let p = softmax_probability(&c).unwrap();
            let s: f64 = p.values.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-5);
            prop_assert!(p.values.iter().all(|&v| v >= 0.0));
            let shifted = volume_from(8, 1, 1, |_, k| costs[k] + offset);
            let a = winner_takes_all(&p, &h, WtaOptions::default()).unwrap();
            let b = winner_takes_all(&softmax_probability(&shifted).unwrap(), &h, WtaOptions::default()).unwrap();
            prop_assert_eq!(a.values[0], h.ladder_at(0)[argmax_first(&costs)]);
            prop_assert_eq!(a.values[0], b.values[0]);
        }

        #[test]
        fn cross_entropy_is_non_negative(raw in proptest::collection::vec(-5.0f64..5.0, 6), d in 1.0f64..6.0) {
            let h = hyps(6, 1, 1);
            let mut v = raw.clone();
            softmax_in_place(&mut v);
            let prob = ProbabilityVolume { width: 1, height: 1, num_hyps: 6, values: v, confidence: alloc::vec![0.0] };
            let gt = DepthMap::from_values(1, 1, alloc::vec![d]).unwrap();
            prop_assert!(cross_entropy(&prob, &gt, &h).unwrap() >= 0.0);
        }
    }
}
