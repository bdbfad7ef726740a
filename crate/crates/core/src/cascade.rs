//! Three-stage coarse-to-fine depth estimation for one reference view.
//!
//! Each stage builds a weighted multi-view cost volume on its pyramid level,
//! regularises it (propagation plus a `1 x 1 x k_d` kernel, or a plain
//! `k x k x k_d` window), and extracts depth by softmax and winner-takes-all.
//! The winning depth seeds the next stage's hypotheses.

use alloc::vec::Vec;

use crate::costvol::{
    aggregate_views, compute_view_weights, extract_features_with, two_view_correlation, CostVolume,
    DescriptorParams, FeatureMap, ViewWeightMap,
};
use crate::depthmap::{softmax_probability, winner_takes_all, DepthMap, WtaOptions};
use crate::error::{Error, Result};
use crate::gcp::{gcp_aggregate, standard_aggregate, AggregationKernel, PropagationOptions};
use crate::geometry::CameraModel;
use crate::hypotheses::{refine_cascade, sample_initial, DepthRange, HypothesisVolume, StageConfig};
use crate::image::RgbImage;
use crate::linalg::Vec3;
use crate::normals::{depth_to_normal, downsample_normals, NormalMap};

/// Cost regularisation applied at every stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    /// Propagation over a `k x k` window, then a `1 x 1 x k_d` kernel.
    Gcp,
    /// Raw `3 x 3 x 3` window.
    StandardK3,
    /// Raw `3 x 3 x 5` window.
    StandardDepth5,
    /// Raw `3 x 3 x 7` window.
    StandardDepth7,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 4] = [
        AggregationMode::Gcp,
        AggregationMode::StandardK3,
        AggregationMode::StandardDepth5,
        AggregationMode::StandardDepth7,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::Gcp => "gcp",
            AggregationMode::StandardK3 => "standard-k3",
            AggregationMode::StandardDepth5 => "standard-depth5",
            AggregationMode::StandardDepth7 => "standard-depth7",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        AggregationMode::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Taps along the depth axis for the standard modes.
    pub fn standard_depth_taps(self) -> Option<usize> {
        match self {
            AggregationMode::Gcp => None,
            AggregationMode::StandardK3 => Some(3),
            AggregationMode::StandardDepth5 => Some(5),
            AggregationMode::StandardDepth7 => Some(7),
        }
    }
}

/// Where the normals driving propagation come from.
#[derive(Debug, Clone, Copy)]
pub enum NormalCue<'a> {
    /// A full-resolution map in the reference frame, downsampled per stage.
    Map(&'a NormalMap),
    /// Plane fits on the previous stage's depth; fronto-parallel at stage 0.
    FromDepth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeParams {
    pub stages: [StageConfig; 3],
    /// Pyramid level of each stage.
    pub levels: [u32; 3],
    pub range: DepthRange,
    /// Overrides the default `span / ((L0 - 1) * scale0)`.
    pub base_interval: Option<f64>,
    pub mode: AggregationMode,
    /// Propagation window `k`.
    pub gcp_window: usize,
    /// Depth taps `k_d` of the propagation kernel.
    pub gcp_depth_taps: usize,
    /// Replaces the uniform propagation kernel when set.
    pub gcp_kernel: Option<AggregationKernel>,
    pub propagation: PropagationOptions,
    /// Plane-fit window for depth-derived normals.
    pub normal_window: usize,
    pub descriptor: DescriptorParams,
    pub wta: WtaOptions,
}

impl CascadeParams {
    pub fn new(range: DepthRange) -> Self {
        CascadeParams {
            stages: StageConfig::default_cascade(),
            levels: [2, 1, 0],
            range,
            base_interval: None,
            mode: AggregationMode::Gcp,
            gcp_window: 3,
            gcp_depth_taps: 3,
            gcp_kernel: None,
            propagation: PropagationOptions::default(),
            normal_window: 3,
            descriptor: DescriptorParams::default(),
            wta: WtaOptions::default(),
        }
    }

    pub fn base_interval(&self) -> f64 {
        self.base_interval.unwrap_or_else(|| self.range.base_interval(&self.stages[0]))
    }

    /// Hypothesis spacing of stage `s` in scene units. Stage 0 always spans
    /// the full range uniformly.
    pub fn stage_interval(&self, s: usize) -> f64 {
        if s == 0 {
            return self.range.span() / (self.stages[0].num_samples - 1) as f64;
        }
        self.stages[s].interval_scale * self.base_interval()
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.stages {
            s.validate()?;
        }
        if self.levels.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config("stage levels must not increase"));
        }
        if let Some(b) = self.base_interval {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config("base interval must be positive"));
            }
        }
        if self.gcp_window == 0 || self.gcp_window % 2 == 0 {
            return Err(Error::Config("propagation window must be odd"));
        }
        if self.gcp_depth_taps == 0 || self.gcp_depth_taps % 2 == 0 {
            return Err(Error::Config("depth taps must be odd"));
        }
        if let Some(k) = &self.gcp_kernel {
            if k.slots != self.gcp_window * self.gcp_window {
                return Err(Error::Config("kernel slot count must equal the window area"));
            }
        }
        if self.normal_window < 3 || self.normal_window % 2 == 0 {
            return Err(Error::Config("normal window must be odd and at least 3"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput {
    pub level: u32,
    pub depth: DepthMap,
    /// Per-pixel maximum probability.
    pub confidence: Vec<f64>,
    pub hypotheses: HypothesisVolume,
    pub interval: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub stages: Vec<StageOutput>,
    /// Stage-0 view weights, one per source view.
    pub view_weights: Vec<ViewWeightMap>,
}

impl CascadeOutput {
    pub fn final_stage(&self) -> &StageOutput {
        self.stages.last().expect("cascade has stages")
    }
}

fn check_inputs(images: &[RgbImage], cams: &[CameraModel]) -> Result<()> {
    if images.len() < 2 {
        return Err(Error::Argument("need a reference and at least one source view"));
    }
    if images.len() != cams.len() {
        return Err(Error::Shape {
            what: "images vs cameras",
            expected: images.len(),
            found: cams.len(),
        });
    }
    for (im, c) in images.iter().zip(cams) {
        if (im.width, im.height) != (c.width, c.height) {
            return Err(Error::Shape {
                what: "image vs camera size",
                expected: c.width * c.height,
                found: im.width * im.height,
            });
        }
    }
    Ok(())
}

/// Weighted cost volume of reference `images[0]` over `hyps` at `level`.
/// Stage-0 callers pass `weights = None` to compute them from the volumes.
pub fn build_cost(
    feats: &[FeatureMap],
    cams: &[CameraModel],
    hyps: &HypothesisVolume,
    weights: Option<&[ViewWeightMap]>,
) -> Result<(CostVolume, Vec<ViewWeightMap>)> {
    let vols = feats[1..]
        .iter()
        .zip(&cams[1..])
        .map(|(f, c)| two_view_correlation(&feats[0], f, hyps, &cams[0], c))
        .collect::<Result<Vec<_>>>()?;
    let weights = match weights {
        Some(w) => w.iter().map(|m| m.upsample(hyps.width, hyps.height)).collect(),
        None => compute_view_weights(&vols)?,
    };
    let cost = aggregate_views(&vols, &weights)?;
    Ok((cost, weights))
}

/// Regularises `cost` according to `params.mode`. Propagation requires
/// `normals`; the standard modes ignore them.
pub fn regularize(
    cost: &CostVolume,
    hyps: &HypothesisVolume,
    normals: Option<&NormalMap>,
    cam_at_level: &CameraModel,
    params: &CascadeParams,
) -> Result<CostVolume> {
    let m = cost.channels;
    match params.mode.standard_depth_taps() {
        None => {
            let normals = normals.ok_or(Error::Argument("propagation needs a normal map"))?;
            let k = params.gcp_window;
            match &params.gcp_kernel {
                Some(kernel) => gcp_aggregate(cost, hyps, normals, cam_at_level, k, kernel, &params.propagation),
                None => {
                    let kernel = AggregationKernel::uniform(k * k, m, params.gcp_depth_taps)?;
                    gcp_aggregate(cost, hyps, normals, cam_at_level, k, &kernel, &params.propagation)
                }
            }
        }
        Some(taps) => {
            let kernel = AggregationKernel::uniform(9, m, taps)?;
            standard_aggregate(cost, 3, &kernel)
        }
    }
}

fn stage_normals(
    cue: NormalCue,
    level: u32,
    prev: Option<&DepthMap>,
    cam_at_level: &CameraModel,
    hyps: &HypothesisVolume,
    window: usize,
) -> Result<NormalMap> {
    let (w, h) = (hyps.width, hyps.height);
    match cue {
        NormalCue::Map(map) => {
            let n = downsample_normals(map, level);
            if (n.width, n.height) != (w, h) {
                return Err(Error::Shape {
                    what: "normal map vs stage size",
                    expected: w * h,
                    found: n.width * n.height,
                });
            }
            Ok(n)
        }
        NormalCue::FromDepth => match prev {
            None => Ok(NormalMap::constant(w, h, Vec3::new(0.0, 0.0, -1.0))),
            Some(prev) => depth_to_normal(&upsample_depth(prev, w, h), cam_at_level, window),
        },
    }
}

/// Nearest-neighbour resize of a depth map.
pub fn upsample_depth(d: &DepthMap, width: usize, height: usize) -> DepthMap {
    let mut out = DepthMap::new(width, height);
    for y in 0..height {
        let sy = (y * d.height / height).min(d.height - 1);
        for x in 0..width {
            let sx = (x * d.width / width).min(d.width - 1);
            if let Some(v) = d.get(sx, sy) {
                out.set(x, y, v);
            }
        }
    }
    out
}

/// Runs the cascade with `images[0]` / `cams[0]` as the reference.
pub fn run_cascade(
    images: &[RgbImage],
    cams: &[CameraModel],
    params: &CascadeParams,
    normals: NormalCue,
) -> Result<CascadeOutput> {
    params.validate()?;
    check_inputs(images, cams)?;
    let base = params.base_interval();
    let mut stages: Vec<StageOutput> = Vec::with_capacity(3);
    let mut weights: Option<Vec<ViewWeightMap>> = None;
    for s in 0..3 {
        let level = params.levels[s];
        let feats = images
            .iter()
            .map(|im| extract_features_with(im, level, params.descriptor))
            .collect::<Result<Vec<_>>>()?;
        let (w, h) = (feats[0].width, feats[0].height);
        let cam_l = cams[0].at_level(level)?;
        let hyps = match stages.last() {
            None => sample_initial(&params.stages[0], params.range, w, h)?,
            Some(prev) => refine_cascade(&prev.depth, &params.stages[s], params.range, base, s, w, h)?,
        };
        let (cost, stage_weights) = build_cost(&feats, cams, &hyps, weights.as_deref())?;
        if weights.is_none() {
            weights = Some(stage_weights);
        }
        let normal_map = match params.mode {
            AggregationMode::Gcp => Some(stage_normals(
                normals,
                level,
                stages.last().map(|p| &p.depth),
                &cam_l,
                &hyps,
                params.normal_window,
            )?),
            _ => None,
        };
        let regularized = regularize(&cost, &hyps, normal_map.as_ref(), &cam_l, params)?;
        let prob = softmax_probability(&regularized)?;
        let depth = winner_takes_all(&prob, &hyps, params.wta)?;
        stages.push(StageOutput {
            level,
            depth,
            confidence: prob.confidence,
            interval: params.stage_interval(s),
            hypotheses: hyps,
        });
    }
    Ok(CascadeOutput {
        stages,
        view_weights: weights.unwrap_or_default(),
    })
}

/// Reorders views so that `reference` comes first.
pub fn with_reference<T: Clone>(items: &[T], reference: usize) -> Vec<T> {
    let mut v = Vec::with_capacity(items.len());
    v.push(items[reference].clone());
    v.extend(items.iter().enumerate().filter(|(i, _)| *i != reference).map(|(_, x)| x.clone()));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in AggregationMode::ALL {
            assert_eq!(AggregationMode::parse(m.name()), Some(m));
        }
        assert_eq!(AggregationMode::parse("gcp7"), None);
    }

    #[test]
    fn default_intervals_follow_ratio() {
        let p = CascadeParams::new(DepthRange::new(2.0, 12.0).unwrap());
        let (a, b, c) = (p.stage_interval(0), p.stage_interval(1), p.stage_interval(2));
        assert!((a / b - 4.0).abs() < 1e-12 && (b / c - 2.0).abs() < 1e-12);
        assert!((a - 10.0 / 47.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = CascadeParams::new(DepthRange::new(2.0, 12.0).unwrap());
        p.gcp_window = 4;
        assert!(p.validate().is_err());
        let mut p = CascadeParams::new(DepthRange::new(2.0, 12.0).unwrap());
        p.levels = [0, 1, 2];
        assert!(p.validate().is_err());
        let mut p = CascadeParams::new(DepthRange::new(2.0, 12.0).unwrap());
        p.gcp_kernel = Some(AggregationKernel::uniform(25, 3, 3).unwrap());
        assert!(p.validate().is_err());
        p.gcp_window = 5;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn reference_reordering() {
        assert_eq!(with_reference(&[0, 1, 2, 3], 2), alloc::vec![2, 0, 1, 3]);
    }

    #[test]
    fn nearest_depth_upsampling() {
        let mut d = DepthMap::new(2, 1);
        d.set(0, 0, 1.0);
        let u = upsample_depth(&d, 4, 2);
        assert_eq!(u.get(1, 1), Some(1.0));
        assert_eq!(u.get(2, 0), None);
    }
}
