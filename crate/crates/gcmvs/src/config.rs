//! Pipeline configuration, stored as JSON.
//!
//! Every field has a default, so `{}` is a complete config describing the
//! built-in slanted-plane scene. Input paths are resolved relative to the
//! config file; `output_dir` is relative to the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gcmvs_core::cascade::{AggregationMode, CascadeParams};
use gcmvs_core::costvol::DescriptorParams;
use gcmvs_core::depthmap::WtaOptions;
use gcmvs_core::fusion::FilterParams;
use gcmvs_core::gcp::{NormalAnchor, OutOfRange, PropagationOptions};
use gcmvs_core::geometry::{Intrinsics, DEFAULT_RAY_EPSILON};
use gcmvs_core::hypotheses::{
    DepthRange, StageConfig, DEFAULT_STAGE_INTERVALS, DEFAULT_STAGE_SAMPLES,
};
use gcmvs_core::normals::AxisFlip;
use gcmvs_core::synth::{SceneSpec, TextureSpec};
use gcmvs_core::Vec3;

use crate::error::{Error, Result};

pub const CONFIG_FORMAT: &str = "gcmvs-config/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    #[serde(rename = "gcp")]
    Gcp,
    #[serde(rename = "standard-k3")]
    StandardK3,
    #[serde(rename = "standard-depth5")]
    StandardDepth5,
    #[serde(rename = "standard-depth7")]
    StandardDepth7,
}

impl From<Aggregation> for AggregationMode {
    fn from(a: Aggregation) -> Self {
        match a {
            Aggregation::Gcp => AggregationMode::Gcp,
            Aggregation::StandardK3 => AggregationMode::StandardK3,
            Aggregation::StandardDepth5 => AggregationMode::StandardDepth5,
            Aggregation::StandardDepth7 => AggregationMode::StandardDepth7,
        }
    }
}

impl From<AggregationMode> for Aggregation {
    fn from(m: AggregationMode) -> Self {
        match m {
            AggregationMode::Gcp => Aggregation::Gcp,
            AggregationMode::StandardK3 => Aggregation::StandardK3,
            AggregationMode::StandardDepth5 => Aggregation::StandardDepth5,
            AggregationMode::StandardDepth7 => Aggregation::StandardDepth7,
        }
    }
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        AggregationMode::from(self).name()
    }

    pub fn parse(s: &str) -> Option<Self> {
        AggregationMode::parse(s).map(Into::into)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalSource {
    /// Analytic normals of the synthetic scene, or plane fits on the
    /// ground-truth depth for file inputs.
    Gt,
    FromDepth,
    File,
}

impl NormalSource {
    pub fn name(self) -> &'static str {
        match self {
            NormalSource::Gt => "gt",
            NormalSource::FromDepth => "from-depth",
            NormalSource::File => "file",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [NormalSource::Gt, NormalSource::FromDepth, NormalSource::File]
            .into_iter()
            .find(|n| n.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSettings {
    pub samples: usize,
    pub interval_scale: f64,
    pub level: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    Neighbor,
    Reference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutOfLadder {
    Clamp,
    ZeroFill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcpSettings {
    pub window: usize,
    pub depth_taps: usize,
    /// Binary kernel replacing the uniform one.
    pub kernel_file: Option<PathBuf>,
    pub anchor: Anchor,
    pub out_of_range: OutOfLadder,
    pub ray_epsilon: f64,
}

impl Default for GcpSettings {
    fn default() -> Self {
        GcpSettings {
            window: 3,
            depth_taps: 3,
            kernel_file: None,
            anchor: Anchor::Neighbor,
            out_of_range: OutOfLadder::Clamp,
            ray_epsilon: DEFAULT_RAY_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalSettings {
    pub source: NormalSource,
    /// Plane-fit window for `from-depth`.
    pub window: usize,
    /// One normal PFM per view, for `file`.
    pub files: Vec<PathBuf>,
    /// Sign flips applied to file normals, per axis.
    pub flip: [bool; 3],
}

impl Default for NormalSettings {
    fn default() -> Self {
        NormalSettings {
            source: NormalSource::Gt,
            window: 3,
            files: Vec::new(),
            flip: [false; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescriptorSettings {
    pub intensity_weight: f64,
    pub normalize: bool,
}

impl Default for DescriptorSettings {
    fn default() -> Self {
        let d = DescriptorParams::default();
        DescriptorSettings {
            intensity_weight: d.intensity_weight,
            normalize: d.normalize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSettings {
    pub enabled: bool,
    pub tau_pix: f64,
    pub tau_rel: f64,
    pub min_views: usize,
    pub min_confidence: f64,
    /// Voxel edge for duplicate suppression; 0 disables it.
    pub voxel: f64,
}

impl Default for FusionSettings {
    fn default() -> Self {
        let f = FilterParams::default();
        FusionSettings {
            enabled: true,
            tau_pix: f.tau_pix,
            tau_rel: f.tau_rel,
            min_views: f.min_views,
            min_confidence: f.min_confidence,
            voxel: 0.0,
        }
    }
}

impl FusionSettings {
    pub fn filter(&self) -> FilterParams {
        FilterParams {
            tau_pix: self.tau_pix,
            tau_rel: self.tau_rel,
            min_views: self.min_views,
            min_confidence: self.min_confidence,
        }
    }
}

/// Views on disk. Images are PNG; ground-truth depths are optional PFMs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSettings {
    pub images: Vec<PathBuf>,
    pub cameras: Vec<PathBuf>,
    pub gt_depths: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PrimitiveSettings {
    /// Plane through `point`, rotated `slant_deg` about the camera `y` axis
    /// and then `tilt_deg` about `x` from fronto-parallel.
    Plane {
        point: [f64; 3],
        slant_deg: f64,
        tilt_deg: f64,
    },
    Sphere { center: [f64; 3], radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureSettings {
    pub frequency: f64,
    pub octaves: u32,
    pub seed: u64,
}

impl Default for TextureSettings {
    fn default() -> Self {
        TextureSettings {
            frequency: 3.0,
            octaves: 4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigSettings {
    pub views: usize,
    pub baseline: f64,
    pub look_at: [f64; 3],
    pub width: usize,
    pub height: usize,
    pub focal: f64,
}

impl Default for RigSettings {
    fn default() -> Self {
        RigSettings {
            views: 5,
            baseline: 1.2,
            look_at: [0.0, 0.0, 5.0],
            width: 160,
            height: 128,
            focal: 240.0,
        }
    }
}

impl RigSettings {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSettings {
    pub primitive: PrimitiveSettings,
    /// Radius of the plane disc; absent means unbounded.
    pub extent: Option<f64>,
    pub texture: TextureSettings,
    pub rig: RigSettings,
    /// Gaussian image noise, seeded from the run seed.
    pub noise_sigma: f64,
}

impl Default for SceneSettings {
    fn default() -> Self {
        SceneSettings {
            primitive: PrimitiveSettings::Plane {
                point: [0.0, 0.0, 5.0],
                slant_deg: 35.0,
                tilt_deg: 10.0,
            },
            extent: None,
            texture: TextureSettings::default(),
            rig: RigSettings::default(),
            noise_sigma: 0.0,
        }
    }
}

impl SceneSettings {
    pub fn spec(&self) -> Result<SceneSpec> {
        let t = &self.texture;
        let texture = TextureSpec {
            frequency: t.frequency,
            octaves: t.octaves,
            seed: t.seed,
        };
        let extent = self.extent.unwrap_or(f64::INFINITY);
        let spec = match self.primitive {
            PrimitiveSettings::Plane {
                point,
                slant_deg,
                tilt_deg,
            } => {
                let mut s = SceneSpec::slanted_plane(Vec3::from_array(point), slant_deg, tilt_deg, texture)?;
                s.extent = extent;
                s.validate()?;
                s
            }
            PrimitiveSettings::Sphere { center, radius } => SceneSpec::new(
                gcmvs_core::synth::Primitive::Sphere {
                    center: Vec3::from_array(center),
                    radius,
                },
                texture,
                extent,
            )?,
        };
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub format: String,
    pub seed: u64,
    pub stages: [StageSettings; 3],
    /// `[min, max]`. Required for file inputs; derived from ground truth
    /// with 10% slack for synthetic scenes when absent.
    pub depth_range: Option<[f64; 2]>,
    /// Overrides `span / ((L0 - 1) * scale0)`.
    pub base_interval: Option<f64>,
    pub aggregation: Aggregation,
    pub gcp: GcpSettings,
    pub normals: NormalSettings,
    pub descriptor: DescriptorSettings,
    pub parabola_refinement: bool,
    pub fusion: FusionSettings,
    /// Views estimated as references; all views when absent.
    pub references: Option<Vec<usize>>,
    pub input: Option<InputSettings>,
    pub scene: Option<SceneSettings>,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            format: CONFIG_FORMAT.to_string(),
            seed: 0,
            stages: std::array::from_fn(|i| StageSettings {
                samples: DEFAULT_STAGE_SAMPLES[i],
                interval_scale: DEFAULT_STAGE_INTERVALS[i],
                level: 2 - i as u32,
            }),
            depth_range: Some([2.0, 12.0]),
            base_interval: None,
            aggregation: Aggregation::Gcp,
            gcp: GcpSettings::default(),
            normals: NormalSettings::default(),
            descriptor: DescriptorSettings::default(),
            parabola_refinement: false,
            fusion: FusionSettings::default(),
            references: None,
            input: None,
            scene: Some(SceneSettings::default()),
            output_dir: PathBuf::from("gcmvs-run"),
        }
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Parses `path` and resolves relative input paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text).map_err(|m| Error::Config(format!("{}: {m}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(input) = &mut self.input {
            input.images.iter_mut().for_each(fix);
            input.cameras.iter_mut().for_each(fix);
            input.gt_depths.iter_mut().for_each(fix);
        }
        self.normals.files.iter_mut().for_each(fix);
        if let Some(k) = &mut self.gcp.kernel_file {
            fix(k);
        }
    }

    pub fn view_count(&self) -> usize {
        match (&self.input, &self.scene) {
            (Some(i), _) => i.images.len(),
            (None, Some(s)) => s.rig.views,
            (None, None) => 0,
        }
    }

    /// Collects every problem, each prefixed with a JSON pointer to the
    /// offending field.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut bad = |path: &str, msg: &str| p.push(format!("{path}: {msg}"));
        if self.format != CONFIG_FORMAT {
            bad("/format", &format!("expected \"{CONFIG_FORMAT}\""));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.samples < 2 {
                bad(&format!("/stages/{i}/samples"), "must be at least 2");
            }
            if !positive(s.interval_scale) {
                bad(&format!("/stages/{i}/interval_scale"), "must be positive");
            }
            if s.level > 6 {
                bad(&format!("/stages/{i}/level"), "must be at most 6");
            }
            if i > 0 && s.level > self.stages[i - 1].level {
                bad(&format!("/stages/{i}/level"), "levels must not increase");
            }
        }
        if let Some([lo, hi]) = self.depth_range {
            if !(positive(lo) && hi.is_finite() && hi > lo) {
                bad("/depth_range", "must satisfy 0 < min < max");
            }
        }
        if self.base_interval.is_some_and(|b| !positive(b)) {
            bad("/base_interval", "must be positive");
        }
        if self.gcp.window % 2 == 0 {
            bad("/gcp/window", "must be odd");
        }
        if self.gcp.depth_taps % 2 == 0 {
            bad("/gcp/depth_taps", "must be odd");
        }
        if !positive(self.gcp.ray_epsilon) {
            bad("/gcp/ray_epsilon", "must be positive");
        }
        if self.normals.window < 3 || self.normals.window % 2 == 0 {
            bad("/normals/window", "must be odd and at least 3");
        }
        let views = self.view_count();
        if self.normals.source == NormalSource::File
            && self.aggregation == Aggregation::Gcp
            && self.normals.files.len() != views
        {
            bad("/normals/files", "needs one file per view for source \"file\"");
        }
        if !self.descriptor.intensity_weight.is_finite() || self.descriptor.intensity_weight < 0.0 {
            bad("/descriptor/intensity_weight", "must be non-negative");
        }
        let f = &self.fusion;
        if !positive(f.tau_pix) {
            bad("/fusion/tau_pix", "must be positive");
        }
        if !positive(f.tau_rel) {
            bad("/fusion/tau_rel", "must be positive");
        }
        if f.min_views == 0 {
            bad("/fusion/min_views", "must be at least 1");
        }
        if !f.min_confidence.is_finite() || f.min_confidence < 0.0 {
            bad("/fusion/min_confidence", "must be non-negative");
        }
        if !f.voxel.is_finite() || f.voxel < 0.0 {
            bad("/fusion/voxel", "must be non-negative");
        }
        if let Some(r) = &self.references {
            if r.is_empty() {
                bad("/references", "must not be empty");
            }
            if r.iter().any(|&v| v >= views) {
                bad("/references", "index out of range");
            }
            let mut s = r.clone();
            s.sort_unstable();
            s.dedup();
            if s.len() != r.len() {
                bad("/references", "duplicate view");
            }
        }
        match (&self.input, &self.scene) {
            (Some(_), Some(_)) => bad("", "give either \"input\" or \"scene\", not both"),
            (None, None) => bad("", "one of \"input\" or \"scene\" is required"),
            (Some(i), None) => {
                if i.images.len() < 2 {
                    bad("/input/images", "need at least two views");
                }
                if i.cameras.len() != i.images.len() {
                    bad("/input/cameras", "need one camera per image");
                }
                if !i.gt_depths.is_empty() && i.gt_depths.len() != i.images.len() {
                    bad("/input/gt_depths", "need one depth per image or none");
                }
                if self.depth_range.is_none() {
                    bad("/depth_range", "required for file inputs");
                }
                if self.normals.source == NormalSource::Gt
                    && self.aggregation == Aggregation::Gcp
                    && i.gt_depths.is_empty()
                {
                    bad("/normals/source", "\"gt\" with file inputs needs /input/gt_depths");
                }
            }
            (None, Some(s)) => {
                let r = &s.rig;
                if r.views < 2 {
                    bad("/scene/rig/views", "must be at least 2");
                }
                if !positive(r.baseline) {
                    bad("/scene/rig/baseline", "must be positive");
                }
                if !positive(r.focal) {
                    bad("/scene/rig/focal", "must be positive");
                }
                if r.width < 8 || r.height < 8 {
                    bad("/scene/rig", "image must be at least 8x8");
                }
                if !s.noise_sigma.is_finite() || s.noise_sigma < 0.0 {
                    bad("/scene/noise_sigma", "must be non-negative");
                }
                if s.extent.is_some_and(|e| !positive(e)) {
                    bad("/scene/extent", "must be positive");
                }
                if !positive(s.texture.frequency) || s.texture.octaves == 0 {
                    bad("/scene/texture", "needs positive frequency and octaves");
                }
                if let Err(e) = s.spec() {
                    bad("/scene/primitive", &e.to_string());
                }
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }

    pub fn flip(&self) -> AxisFlip {
        let [x, y, z] = self.normals.flip;
        AxisFlip { x, y, z }
    }

    /// Core parameters for a known depth range; the custom kernel is loaded
    /// separately.
    pub fn cascade_params(&self, range: DepthRange) -> CascadeParams {
        let mut p = CascadeParams::new(range);
        p.stages = self.stages.map(|s| StageConfig {
            num_samples: s.samples,
            interval_scale: s.interval_scale,
        });
        p.levels = self.stages.map(|s| s.level);
        p.base_interval = self.base_interval;
        p.mode = self.aggregation.into();
        p.gcp_window = self.gcp.window;
        p.gcp_depth_taps = self.gcp.depth_taps;
        p.propagation = PropagationOptions {
            anchor: match self.gcp.anchor {
                Anchor::Neighbor => NormalAnchor::Neighbor,
                Anchor::Reference => NormalAnchor::Reference,
            },
            out_of_range: match self.gcp.out_of_range {
                OutOfLadder::Clamp => OutOfRange::Clamp,
                OutOfLadder::ZeroFill => OutOfRange::ZeroFill,
            },
            ray_epsilon: self.gcp.ray_epsilon,
        };
        p.normal_window = self.normals.window;
        p.descriptor = DescriptorParams {
            intensity_weight: self.descriptor.intensity_weight,
            normalize: self.descriptor.normalize,
        };
        p.wta = WtaOptions {
            parabola_refinement: self.parabola_refinement,
        };
        p
    }

    /// Short name used in ablation tables and run directories.
    pub fn label(&self) -> String {
        match self.aggregation {
            Aggregation::Gcp => format!("gcp/{}", self.normals.source.name()),
            a => a.name().to_string(),
        }
    }
}
