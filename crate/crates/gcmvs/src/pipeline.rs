//! End-to-end runs: load or render views, run the cascade for each
//! reference view, fuse, score against ground truth and write a
//! self-describing run directory.
//!
//! ```text
//! <output_dir>/
//!   config.json            effective configuration
//!   manifest.json          format tags and file list
//!   metrics.json           only with ground truth
//!   depth/view00_stage0.pfm
//!   confidence/view00.pfm  final-stage peak probability
//!   cloud.ply              only with fusion enabled
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gcmvs_core::cascade::{run_cascade, with_reference, NormalCue};
use gcmvs_core::depthmap::{depth_metrics_masked, DepthMap};
use gcmvs_core::fusion::{consistency_filter, fuse_point_cloud, point_to_plane_rms, PointCloud};
use gcmvs_core::geometry::{CameraModel, PixelCoord};
use gcmvs_core::hypotheses::DepthRange;
use gcmvs_core::image::RgbImage;
use gcmvs_core::normals::{gt_normal_from_gt_depth, NormalMap};
use gcmvs_core::synth::{add_image_noise, covisible_mask, make_rig, render_view, Primitive, SceneSpec};
use gcmvs_core::Vec3;

use crate::config::{NormalSource, PipelineConfig, SceneSettings, CONFIG_FORMAT};
use crate::error::{Error, Result};
use crate::{camfile, imageio, kernelfile, pfm, ply};

pub const MANIFEST_FORMAT: &str = "gcmvs-run/1";
pub const METRICS_FORMAT: &str = "gcmvs-metrics/1";
pub const DEPTH_FORMAT: &str = "pfm-depth/1 (Pf, little-endian, bottom-up, invalid = 0)";
pub const NORMAL_FORMAT: &str = "pfm-normal/1 (PF, little-endian, top-down, invalid = 0 0 0)";
pub const CLOUD_FORMAT: &str = "ply/1 (binary_little_endian, float xyz, uchar rgb)";

/// Pixels closer than this to the image border are not scored.
pub const EVAL_BORDER: usize = 8;
/// Required distance of a scored pixel's correspondence from every source
/// image border, in full-resolution pixels.
pub const EVAL_COVIS_MARGIN: f64 = 4.0;

/// Views with everything known about them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<RgbImage>,
    pub cams: Vec<CameraModel>,
    pub gt_depths: Option<Vec<DepthMap>>,
    /// Analytic normals for synthetic scenes.
    pub gt_normals: Option<Vec<NormalMap>>,
    pub scene: Option<SceneSpec>,
}

/// Renders the synthetic rig. Noise for view `i` is seeded with `seed + i`.
pub fn render_dataset(s: &SceneSettings, seed: u64) -> Result<Dataset> {
    let spec = s.spec()?;
    let r = &s.rig;
    let cams = make_rig(r.views, r.baseline, Vec3::from_array(r.look_at), r.intrinsics(), r.width, r.height)?;
    let mut images = Vec::with_capacity(cams.len());
    let mut depths = Vec::with_capacity(cams.len());
    let mut normals = Vec::with_capacity(cams.len());
    for (i, cam) in cams.iter().enumerate() {
        let v = render_view(&spec, cam)?;
        let img = if s.noise_sigma > 0.0 {
            add_image_noise(&v.image, s.noise_sigma, seed.wrapping_add(i as u64))?
        } else {
            v.image
        };
        images.push(img);
        depths.push(v.gt_depth);
        normals.push(v.gt_normal);
    }
    Ok(Dataset {
        images,
        cams,
        gt_depths: Some(depths),
        gt_normals: Some(normals),
        scene: Some(spec),
    })
}

pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    if let Some(s) = &cfg.scene {
        return render_dataset(s, cfg.seed);
    }
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input or scene".into()))?;
    let images = input.images.iter().map(imageio::read_png).collect::<Result<Vec<_>>>()?;
    let cams = input
        .cameras
        .iter()
        .zip(&images)
        .map(|(p, im)| {
            let cam = camfile::read_camera(p, Some((im.width, im.height)))?;
            if (cam.width, cam.height) != (im.width, im.height) {
                return Err(Error::format(p, "camera size differs from its image"));
            }
            Ok(cam)
        })
        .collect::<Result<Vec<_>>>()?;
    let gt_depths = if input.gt_depths.is_empty() {
        None
    } else {
        Some(input.gt_depths.iter().map(pfm::read_depth).collect::<Result<Vec<_>>>()?)
    };
    Ok(Dataset {
        images,
        cams,
        gt_depths,
        gt_normals: None,
        scene: None,
    })
}

/// Configured range, or the ground-truth range widened by 10% per side.
pub fn depth_range(cfg: &PipelineConfig, data: &Dataset) -> Result<DepthRange> {
    if let Some([lo, hi]) = cfg.depth_range {
        return Ok(DepthRange::new(lo, hi)?);
    }
    let gt = data
        .gt_depths
        .as_ref()
        .ok_or_else(|| Error::Config("/depth_range: required without ground truth".into()))?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for d in gt {
        for (v, &ok) in d.values.iter().zip(&d.valid) {
            if ok {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
    }
    if !(lo <= hi) {
        return Err(Error::Core(gcmvs_core::Error::Empty("ground-truth depth")));
    }
    let pad = 0.1 * (hi - lo).max(0.1 * hi);
    Ok(DepthRange::new((lo - pad).max(1e-3), hi + pad)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: usize,
    pub level: u32,
    pub interval: f64,
    pub mae: f64,
    /// Fraction of scored pixels within this stage's interval.
    pub within_interval: f64,
    /// Fraction within the final-stage interval.
    pub within_final_interval: f64,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub stages: Vec<StageMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudMetrics {
    pub points: usize,
    /// RMS distance to the analytic surface.
    pub rms_to_surface: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub format: String,
    pub label: String,
    pub final_interval: f64,
    /// Final-stage MAE averaged over reference views.
    pub mae: f64,
    pub within_final_interval: f64,
    pub views: Vec<ViewMetrics>,
    pub cloud: Option<CloudMetrics>,
}

#[derive(Debug, Clone)]
pub struct ViewResult {
    pub view: usize,
    /// One depth map per stage, coarse to fine.
    pub depths: Vec<DepthMap>,
    pub levels: Vec<u32>,
    pub intervals: Vec<f64>,
    pub confidence: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub views: Vec<ViewResult>,
    pub cloud: Option<PointCloud>,
    pub metrics: Option<RunMetrics>,
    /// Paths written, relative to `output_dir`.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'a str,
    config_format: &'a str,
    tool: String,
    formats: Formats<'a>,
    files: &'a [String],
}

#[derive(Serialize)]
struct Formats<'a> {
    depth: &'a str,
    confidence: &'a str,
    cloud: &'a str,
    metrics: &'a str,
}

/// Normal maps per view for the configured source; `None` means derive them
/// from depth inside the cascade.
fn normal_maps(cfg: &PipelineConfig, data: &Dataset, warnings: &mut Vec<String>) -> Result<Option<Vec<NormalMap>>> {
    match cfg.normals.source {
        NormalSource::FromDepth => Ok(None),
        NormalSource::Gt => {
            if let Some(n) = &data.gt_normals {
                return Ok(Some(n.clone()));
            }
            let gt = data
                .gt_depths
                .as_ref()
                .ok_or_else(|| Error::Config("/normals/source: \"gt\" needs ground-truth depth".into()))?;
            gt.iter()
                .zip(&data.cams)
                .map(|(d, c)| Ok(gt_normal_from_gt_depth(d, c)?))
                .collect::<Result<Vec<_>>>()
                .map(Some)
        }
        NormalSource::File => {
            let mut out = Vec::new();
            for (path, cam) in cfg.normals.files.iter().zip(&data.cams) {
                let (map, off) = pfm::read_normals(path, cfg.flip())?;
                if (map.width, map.height) != (cam.width, cam.height) {
                    return Err(Error::format(path, "normal map size differs from its view"));
                }
                if off > 0 {
                    warnings.push(format!("{}: {off} normals were not unit length", path.display()));
                }
                out.push(map);
            }
            Ok(Some(out))
        }
    }
}

/// Analytic depth of the scene at pyramid `level` of `cam`.
fn scene_depth(scene: &SceneSpec, cam: &CameraModel) -> DepthMap {
    let mut d = DepthMap::new(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            if let Some(z) = scene.depth_at(cam, PixelCoord::new(x as f64, y as f64)) {
                d.set(x, y, z);
            }
        }
    }
    d
}

fn score_view(data: &Dataset, r: &ViewResult) -> Result<Option<ViewMetrics>> {
    let final_iv = *r.intervals.last().expect("three stages");
    let mut stages = Vec::new();
    for (s, depth) in r.depths.iter().enumerate() {
        let level = r.levels[s];
        let (gt, mask) = match (&data.scene, &data.gt_depths) {
            (Some(scene), _) => {
                let cam = data.cams[r.view].at_level(level)?;
                let mask = covisible_mask(scene, &data.cams, r.view, level, EVAL_BORDER, EVAL_COVIS_MARGIN)?;
                (scene_depth(scene, &cam), Some(mask))
            }
            (None, Some(gt)) if level == 0 => (gt[r.view].clone(), None),
            _ => continue,
        };
        let iv = r.intervals[s];
        let m = depth_metrics_masked(depth, &gt, mask.as_deref(), &[iv, final_iv])?;
        stages.push(StageMetrics {
            stage: s,
            level,
            interval: iv,
            mae: m.mean_abs_error,
            within_interval: m.within[0].1,
            within_final_interval: m.within[1].1,
            evaluated: m.evaluated,
        });
    }
    Ok((!stages.is_empty()).then_some(ViewMetrics { view: r.view, stages }))
}

fn surface_rms(scene: &SceneSpec, points: &[Vec3]) -> Option<f64> {
    match scene.primitive {
        Primitive::Plane { point, normal } => point_to_plane_rms(points, point, normal),
        Primitive::Sphere { center, radius } => {
            if points.is_empty() {
                return None;
            }
            let s: f64 = points.iter().map(|p| ((*p - center).norm() - radius).powi(2)).sum();
            Some((s / points.len() as f64).sqrt())
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Runs the cascade for every reference view without touching the disk.
pub fn estimate(cfg: &PipelineConfig, data: &Dataset, warnings: &mut Vec<String>) -> Result<Vec<ViewResult>> {
    let range = depth_range(cfg, data)?;
    let mut params = cfg.cascade_params(range);
    if let Some(k) = &cfg.gcp.kernel_file {
        params.gcp_kernel = Some(kernelfile::read_kernel(k)?);
    }
    let normals = normal_maps(cfg, data, warnings)?;
    let refs: Vec<usize> = cfg.references.clone().unwrap_or_else(|| (0..data.images.len()).collect());
    let mut out = Vec::with_capacity(refs.len());
    for &r in &refs {
        let images = with_reference(&data.images, r);
        let cams = with_reference(&data.cams, r);
        let cue = match &normals {
            Some(maps) => NormalCue::Map(&maps[r]),
            None => NormalCue::FromDepth,
        };
        let res = run_cascade(&images, &cams, &params, cue)?;
        let fin = res.final_stage();
        out.push(ViewResult {
            view: r,
            confidence: fin.confidence.clone(),
            levels: res.stages.iter().map(|s| s.level).collect(),
            intervals: res.stages.iter().map(|s| s.interval).collect(),
            depths: res.stages.into_iter().map(|s| s.depth).collect(),
        });
    }
    Ok(out)
}

/// Consistency filtering and fusion over the final depth of each result.
pub fn fuse_results(cfg: &PipelineConfig, data: &Dataset, views: &[ViewResult]) -> Result<PointCloud> {
    let depths: Vec<DepthMap> = views.iter().map(|v| v.depths.last().expect("stages").clone()).collect();
    let cams: Vec<CameraModel> = views.iter().map(|v| data.cams[v.view]).collect();
    let images: Vec<RgbImage> = views.iter().map(|v| data.images[v.view].clone()).collect();
    let conf: Vec<Vec<f64>> = views.iter().map(|v| v.confidence.clone()).collect();
    let masks = consistency_filter(&depths, Some(&conf), &cams, &cfg.fusion.filter())?;
    let fused = fuse_point_cloud(&depths, &masks, &cams, Some(&images), Some(&conf), cfg.fusion.voxel)?;
    Ok(fused.cloud)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    run_on(cfg, &data)
}

/// Like [`run_pipeline`] on an already loaded dataset.
pub fn run_on(cfg: &PipelineConfig, data: &Dataset) -> Result<RunReport> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let views = estimate(cfg, data, &mut warnings)?;
    let out = &cfg.output_dir;
    mkdir(&out.join("depth"))?;
    mkdir(&out.join("confidence"))?;
    let mut files = Vec::new();
    for v in &views {
        for (s, d) in v.depths.iter().enumerate() {
            let rel = format!("depth/view{:02}_stage{s}.pfm", v.view);
            pfm::write_depth(out.join(&rel), d)?;
            files.push(rel);
        }
        let d = v.depths.last().expect("stages");
        let rel = format!("confidence/view{:02}.pfm", v.view);
        pfm::write_scalar(out.join(&rel), d.width, d.height, &v.confidence)?;
        files.push(rel);
    }
    let cloud = if cfg.fusion.enabled && views.len() >= 2 {
        let c = fuse_results(cfg, data, &views)?;
        if c.is_empty() {
            warnings.push("fusion kept no points".into());
        }
        ply::write_ply(out.join("cloud.ply"), &ply::PlyCloud::from(&c))?;
        files.push("cloud.ply".into());
        Some(c)
    } else {
        if cfg.fusion.enabled {
            warnings.push("fusion skipped: needs at least two reference views".into());
        }
        None
    };
    let scored = views
        .iter()
        .map(|v| score_view(data, v))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let metrics = if scored.is_empty() {
        None
    } else {
        let finals: Vec<&StageMetrics> = scored.iter().filter_map(|v| v.stages.last()).collect();
        let n = finals.len() as f64;
        Some(RunMetrics {
            format: METRICS_FORMAT.into(),
            label: cfg.label(),
            final_interval: *views[0].intervals.last().expect("stages"),
            mae: finals.iter().map(|s| s.mae).sum::<f64>() / n,
            within_final_interval: finals.iter().map(|s| s.within_final_interval).sum::<f64>() / n,
            cloud: cloud.as_ref().map(|c| CloudMetrics {
                points: c.len(),
                rms_to_surface: data.scene.as_ref().and_then(|s| surface_rms(s, &c.points)),
            }),
            views: scored,
        })
    };
    if let Some(m) = &metrics {
        write_json(&out.join("metrics.json"), m)?;
        files.push("metrics.json".into());
    }
    let cfg_path = out.join("config.json");
    fs::write(&cfg_path, cfg.to_json() + "\n").map_err(|e| Error::io(&cfg_path, e))?;
    files.push("config.json".into());
    files.sort();
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        config_format: CONFIG_FORMAT,
        tool: format!("gcmvs {}", env!("CARGO_PKG_VERSION")),
        formats: Formats {
            depth: DEPTH_FORMAT,
            confidence: "pfm-scalar/1 (Pf, little-endian, bottom-up)",
            cloud: CLOUD_FORMAT,
            metrics: METRICS_FORMAT,
        },
        files: &files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunReport {
        output_dir: out.clone(),
        views,
        cloud,
        metrics,
        files,
        warnings,
    })
}

/// Writes each view of a synthetic scene as PNG, camera text, depth PFM
/// and normal PFM, plus a config that runs the pipeline on those files.
pub fn write_scene(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let s = cfg
        .scene
        .as_ref()
        .ok_or_else(|| Error::Config("/scene: required to synthesise views".into()))?;
    let data = render_dataset(s, cfg.seed)?;
    mkdir(dir)?;
    let mut written = Vec::new();
    let mut input = crate::config::InputSettings::default();
    let mut normal_files = Vec::new();
    for i in 0..data.images.len() {
        let names = [
            format!("view{i:02}.png"),
            format!("view{i:02}.cam.txt"),
            format!("view{i:02}_depth.pfm"),
            format!("view{i:02}_normal.pfm"),
        ];
        imageio::write_png(dir.join(&names[0]), &data.images[i])?;
        camfile::write_camera(dir.join(&names[1]), &data.cams[i])?;
        pfm::write_depth(dir.join(&names[2]), &data.gt_depths.as_ref().expect("synthetic")[i])?;
        pfm::write_normals(dir.join(&names[3]), &data.gt_normals.as_ref().expect("synthetic")[i])?;
        input.images.push(names[0].clone().into());
        input.cameras.push(names[1].clone().into());
        input.gt_depths.push(names[2].clone().into());
        normal_files.push(PathBuf::from(&names[3]));
        written.extend(names.iter().map(|n| dir.join(n)));
    }
    let mut run = cfg.clone();
    run.scene = None;
    run.input = Some(input);
    run.normals.files = normal_files;
    if run.depth_range.is_none() {
        let r = depth_range(cfg, &data)?;
        run.depth_range = Some([r.min, r.max]);
    }
    let path = dir.join("scene.json");
    fs::write(&path, run.to_json() + "\n").map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}
