//! Per-pixel depth-hypothesis ladders for the cascade.

use alloc::vec::Vec;

use crate::depthmap::DepthMap;
use crate::error::{Error, Result};

/// Samples per stage used by the default three-stage cascade.
pub const DEFAULT_STAGE_SAMPLES: [usize; 3] = [48, 32, 8];
/// Interval multipliers per stage used by the default cascade.
pub const DEFAULT_STAGE_INTERVALS: [f64; 3] = [4.0, 1.0, 0.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub num_samples: usize,
    /// Spacing of the stage as a multiple of the base interval.
    pub interval_scale: f64,
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 2 {
            return Err(Error::Config("a stage needs at least two depth samples"));
        }
        if !(self.interval_scale > 0.0 && self.interval_scale.is_finite()) {
            return Err(Error::Config("interval scale must be positive"));
        }
        Ok(())
    }

    /// The default 48/32/8 samples at 4/1/0.5 intervals.
    pub fn default_cascade() -> [StageConfig; 3] {
        core::array::from_fn(|i| StageConfig {
            num_samples: DEFAULT_STAGE_SAMPLES[i],
            interval_scale: DEFAULT_STAGE_INTERVALS[i],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min > 0.0 && min < max && max.is_finite()) {
            return Err(Error::Config("depth range needs 0 < min < max"));
        }
        Ok(DepthRange { min, max })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    /// Base interval such that the first stage's uniform spacing equals
    /// `stage0.interval_scale` base intervals.
    pub fn base_interval(&self, stage0: &StageConfig) -> f64 {
        self.span() / ((stage0.num_samples - 1) as f64 * stage0.interval_scale)
    }
}

/// Ordered depth samples for every pixel of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisVolume {
    pub width: usize,
    pub height: usize,
    pub num_samples: usize,
    pub stage: usize,
    /// Nominal spacing of the stage in scene units.
    pub interval: f64,
    /// Pixel-major: `samples[(y * width + x) * num_samples + l]`.
    samples: Vec<f64>,
}

impl HypothesisVolume {
    /// Takes pixel-major samples and checks that every ladder is positive and
    /// strictly increasing.
    pub fn from_samples(
        width: usize,
        height: usize,
        num_samples: usize,
        stage: usize,
        interval: f64,
        samples: Vec<f64>,
    ) -> Result<Self> {
        if samples.len() != width * height * num_samples {
            return Err(Error::Shape {
                what: "hypothesis samples",
                expected: width * height * num_samples,
                found: samples.len(),
            });
        }
        if num_samples == 0 {
            return Err(Error::Config("empty hypothesis ladder"));
        }
        for ladder in samples.chunks_exact(num_samples) {
            if !(ladder[0] > 0.0) || !ladder.windows(2).all(|w| w[1] > w[0]) {
                return Err(Error::Config("hypotheses must be positive and strictly increasing"));
            }
            if !ladder[num_samples - 1].is_finite() {
                return Err(Error::NonFinite("hypotheses"));
            }
        }
        Ok(HypothesisVolume {
            width,
            height,
            num_samples,
            stage,
            interval,
            samples,
        })
    }

    /// `count` evenly spaced samples from `min` to `max` at every pixel.
    pub fn uniform(
        min: f64,
        max: f64,
        count: usize,
        width: usize,
        height: usize,
        stage: usize,
    ) -> Result<Self> {
        if count < 2 {
            return Err(Error::Config("a stage needs at least two depth samples"));
        }
        let ladder = uniform_ladder(min, max, count);
        let mut samples = Vec::with_capacity(width * height * count);
        for _ in 0..width * height {
            samples.extend_from_slice(&ladder);
        }
        let interval = (max - min) / (count - 1) as f64;
        HypothesisVolume::from_samples(width, height, count, stage, interval, samples)
    }

    #[inline]
    pub fn ladder(&self, x: usize, y: usize) -> &[f64] {
        self.ladder_at(y * self.width + x)
    }

    #[inline]
    pub fn ladder_at(&self, pixel: usize) -> &[f64] {
        &self.samples[pixel * self.num_samples..(pixel + 1) * self.num_samples]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

fn uniform_ladder(min: f64, max: f64, count: usize) -> Vec<f64> {
    let step = (max - min) / (count - 1) as f64;
    (0..count)
        .map(|l| if l + 1 == count { max } else { min + step * l as f64 })
        .collect()
}

/// Stage-0 hypotheses: `L` uniform samples spanning the depth range.
pub fn sample_initial(
    cfg: &StageConfig,
    range: DepthRange,
    width: usize,
    height: usize,
) -> Result<HypothesisVolume> {
    cfg.validate()?;
    HypothesisVolume::uniform(range.min, range.max, cfg.num_samples, width, height, 0)
}

/// Ladder of `count` samples with spacing `step` centred on `center`, shifted
/// as a whole so that it lies inside `range`. Falls back to a uniform ladder
/// when it cannot fit.
pub fn centered_ladder(center: f64, count: usize, step: f64, range: DepthRange) -> Vec<f64> {
    let half = 0.5 * (count - 1) as f64 * step;
    if 2.0 * half >= range.span() {
        return uniform_ladder(range.min, range.max, count);
    }
    let mut lo = center - half;
    if lo < range.min {
        lo = range.min;
    }
    if lo + 2.0 * half > range.max {
        lo = range.max - 2.0 * half;
    }
    (0..count).map(|l| lo + step * l as f64).collect()
}

/// Hypotheses of the next cascade stage: the previous depth map is upsampled
/// (nearest neighbour) to `width x height` and every pixel receives a ladder
/// centred on it with spacing `interval_scale * base_interval`. Pixels
/// without a previous depth get a uniform ladder over the full range.
pub fn refine_cascade(
    prev: &DepthMap,
    cfg: &StageConfig,
    range: DepthRange,
    base_interval: f64,
    stage: usize,
    width: usize,
    height: usize,
) -> Result<HypothesisVolume> {
    cfg.validate()?;
    if !(base_interval > 0.0) {
        return Err(Error::Config("base interval must be positive"));
    }
    if prev.width == 0 || prev.height == 0 || width < prev.width || height < prev.height {
        return Err(Error::Shape {
            what: "cascade upsampling",
            expected: prev.width * prev.height,
            found: width * height,
        });
    }
    let step = cfg.interval_scale * base_interval;
    let count = cfg.num_samples;
    let mut samples = Vec::with_capacity(width * height * count);
    for y in 0..height {
        let py = (y * prev.height / height).min(prev.height - 1);
        for x in 0..width {
            let px = (x * prev.width / width).min(prev.width - 1);
            match prev.get(px, py) {
                Some(d) => samples.extend(centered_ladder(d, count, step, range)),
                None => samples.extend(uniform_ladder(range.min, range.max, count)),
            }
        }
    }
    HypothesisVolume::from_samples(width, height, count, stage, step, samples)
}

/// Maps a reference ladder into a neighbour's depth space: `r · d` per sample.
pub fn map_hypotheses(ladder: &[f64], ratio: f64) -> Result<Vec<f64>> {
    let mut out = alloc::vec![0.0; ladder.len()];
    map_hypotheses_into(ladder, ratio, &mut out)?;
    Ok(out)
}

pub fn map_hypotheses_into(ladder: &[f64], ratio: f64, out: &mut [f64]) -> Result<()> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Argument("depth ratio must be positive"));
    }
    for (o, &d) in out.iter_mut().zip(ladder) {
        *o = ratio * d;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn initial_samples_span_range() {
        let cfg = StageConfig::default_cascade()[0];
        assert_eq!(cfg.num_samples, 48);
        let h = sample_initial(&cfg, DepthRange::new(425.0, 935.0).unwrap(), 4, 3).unwrap();
        let l = h.ladder(2, 1);
        assert_eq!(l.len(), 48);
        assert_eq!(l[0], 425.0);
        assert_eq!(l[47], 935.0);
        let step = (935.0 - 425.0) / 47.0;
        for w in l.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-9);
        }
        assert_eq!(h.ladder(0, 0), h.ladder(3, 2));
    }

    #[test]
    fn two_samples_are_the_endpoints() {
        let cfg = StageConfig {
            num_samples: 2,
            interval_scale: 1.0,
        };
        let h = sample_initial(&cfg, DepthRange::new(2.0, 7.0).unwrap(), 1, 1).unwrap();
        assert_eq!(h.ladder(0, 0), &[2.0, 7.0]);
        let bad = StageConfig {
            num_samples: 1,
            interval_scale: 1.0,
        };
        assert!(sample_initial(&bad, DepthRange::new(2.0, 7.0).unwrap(), 1, 1).is_err());
    }

    #[test]
    fn default_intervals_follow_four_one_half() {
        let s = StageConfig::default_cascade();
        assert_eq!(
            [s[0].interval_scale, s[1].interval_scale, s[2].interval_scale],
            [4.0, 1.0, 0.5]
        );
        assert_eq!([s[0].num_samples, s[1].num_samples, s[2].num_samples], [48, 32, 8]);
    }

    #[test]
    fn refine_centres_on_previous_depth() {
        let range = DepthRange::new(425.0, 935.0).unwrap();
        let base = 2.5;
        let prev = DepthMap::from_values(1, 1, alloc::vec![600.0]).unwrap();
        let cfg = StageConfig {
            num_samples: 8,
            interval_scale: 0.5,
        };
        let h = refine_cascade(&prev, &cfg, range, base, 2, 2, 2).unwrap();
        let expected: Vec<f64> = [-1.75, -1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 1.75]
            .iter()
            .map(|o| 600.0 + o * base)
            .collect();
        for y in 0..2 {
            for x in 0..2 {
                let l = h.ladder(x, y);
                for (a, b) in l.iter().zip(&expected) {
                    assert!((a - b).abs() < 1e-9);
                }
                let mean = l.iter().sum::<f64>() / 8.0;
                assert!((mean - 600.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn refine_clamps_into_range_and_falls_back() {
        let range = DepthRange::new(425.0, 935.0).unwrap();
        let prev = DepthMap::from_values(2, 1, alloc::vec![425.0, 0.0]).unwrap();
        let cfg = StageConfig {
            num_samples: 32,
            interval_scale: 1.0,
        };
        let h = refine_cascade(&prev, &cfg, range, 2.5, 1, 4, 2).unwrap();
        assert!(h.ladder(0, 0).iter().all(|&d| d >= 425.0));
        assert_eq!(h.ladder(0, 0)[0], 425.0);
        // Missing previous depth: uniform over the full range.
        let l = h.ladder(3, 1);
        assert_eq!((l[0], l[31]), (425.0, 935.0));
    }

    #[test]
    fn map_examples() {
        assert_eq!(map_hypotheses(&[1.0, 2.0, 3.0], 1.0).unwrap(), alloc::vec![1.0, 2.0, 3.0]);
        assert_eq!(map_hypotheses(&[1.0, 2.0, 3.0], 2.0).unwrap(), alloc::vec![2.0, 4.0, 6.0]);
        assert!(map_hypotheses(&[1.0], 0.0).is_err());
        assert!(map_hypotheses(&[1.0], -0.5).is_err());
    }

    proptest! {
        #[test]
        fn refine_is_monotone_and_covers_centre(
            center in 430.0f64..930.0, base in 0.1f64..5.0, stage in 1usize..3,
        ) {
            let range = DepthRange::new(425.0, 935.0).unwrap();
            let cfg = StageConfig::default_cascade()[stage];
            let prev = DepthMap::from_values(1, 1, alloc::vec![center]).unwrap();
            let h = refine_cascade(&prev, &cfg, range, base, stage, 2, 2).unwrap();
            let l = h.ladder(1, 1);
            prop_assert!(l.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(l[0] <= center + 1e-9 && center <= l[l.len() - 1] + 1e-9);
            prop_assert!(l[0] >= range.min - 1e-9 && l[l.len() - 1] <= range.max + 1e-9);
        }

        #[test]
        fn mapping_preserves_order(mut v in proptest::collection::vec(0.1f64..100.0, 2..20), r in 0.01f64..10.0) {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
            let m = map_hypotheses(&v, r).unwrap();
            prop_assert!(m.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
