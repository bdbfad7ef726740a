//! Command-line front end. Flags override values from `--config`.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use gcmvs_core::depthmap::depth_metrics;
use gcmvs_core::fusion::{consistency_filter, fuse_point_cloud};

use crate::ablation::run_ablation;
use crate::config::{Aggregation, Anchor, NormalSource, OutOfLadder, PipelineConfig};
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, write_scene};
use crate::{camfile, imageio, pfm, ply};

#[derive(Debug, Parser)]
#[command(name = "gcmvs", version, about = "Multi-view stereo with geometrically consistent cost propagation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline and write a run directory.
    Run(RunArgs),
    /// Compare aggregation modes or normal sources on one scene.
    Ablate(AblateArgs),
    /// Render the configured synthetic scene to disk.
    Synth(SynthArgs),
    /// Fuse existing depth maps into a point cloud.
    Fuse(FuseArgs),
    /// Score a depth map against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// JSON pipeline config.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// gcp, standard-k3, standard-depth5 or standard-depth7.
    #[arg(long, value_parser = parse_aggregation)]
    pub aggregation: Option<Aggregation>,
    /// gt, from-depth or file.
    #[arg(long, value_parser = parse_normal_source)]
    pub normal_source: Option<NormalSource>,
    /// Normal PFMs, one per view.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub normal_files: Option<Vec<PathBuf>>,
    /// Axes whose normal component is negated on load, e.g. `yz`.
    #[arg(long)]
    pub normal_flip: Option<String>,
    /// Plane-fit window for depth-derived normals.
    #[arg(long)]
    pub normal_window: Option<usize>,
    #[arg(long)]
    pub gcp_window: Option<usize>,
    #[arg(long)]
    pub gcp_depth_taps: Option<usize>,
    /// Binary aggregation kernel.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// neighbor or reference.
    #[arg(long, value_parser = parse_anchor)]
    pub anchor: Option<Anchor>,
    /// clamp or zero-fill.
    #[arg(long, value_parser = parse_out_of_range)]
    pub out_of_range: Option<OutOfLadder>,
    /// Samples per stage, e.g. `48,32,8`.
    #[arg(long, value_delimiter = ',')]
    pub samples: Option<Vec<usize>>,
    /// Interval scales per stage, e.g. `4,1,0.5`.
    #[arg(long, value_delimiter = ',')]
    pub intervals: Option<Vec<f64>>,
    /// Pyramid level per stage, e.g. `2,1,0`.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<u32>>,
    #[arg(long, requires = "depth_max")]
    pub depth_min: Option<f64>,
    #[arg(long, requires = "depth_min")]
    pub depth_max: Option<f64>,
    #[arg(long)]
    pub base_interval: Option<f64>,
    /// Refine winning depths with a three-bin parabola.
    #[arg(long)]
    pub parabola: bool,
    #[arg(long)]
    pub no_fusion: bool,
    #[arg(long)]
    pub tau_pix: Option<f64>,
    #[arg(long)]
    pub tau_rel: Option<f64>,
    #[arg(long)]
    pub min_views: Option<usize>,
    #[arg(long)]
    pub min_confidence: Option<f64>,
    #[arg(long)]
    pub voxel: Option<f64>,
    /// Reference views to estimate, e.g. `0,2`.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub references: Option<Vec<usize>>,
    /// Image noise of the synthetic scene.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// PNG inputs; replaces the synthetic scene.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub images: Option<Vec<PathBuf>>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub cameras: Option<Vec<PathBuf>>,
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub gt_depths: Option<Vec<PathBuf>>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Print metrics as JSON instead of a summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Extra complete configs to compare; each keeps its own settings.
    #[arg(long = "with", num_args = 1..)]
    pub with: Vec<PathBuf>,
    /// Aggregation modes to sweep on the base config.
    #[arg(long, num_args = 1.., value_delimiter = ',', value_parser = parse_aggregation)]
    pub modes: Vec<Aggregation>,
    /// Normal sources to sweep for the gcp mode.
    #[arg(long, num_args = 1.., value_delimiter = ',', value_parser = parse_normal_source)]
    pub normal_sources: Vec<NormalSource>,
    /// Also write the table as JSON here.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Depth PFMs, one per view.
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub depths: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1.., value_delimiter = ',')]
    pub cameras: Vec<PathBuf>,
    /// PNGs for point colours.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub images: Option<Vec<PathBuf>>,
    /// Confidence PFMs.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    pub confidences: Option<Vec<PathBuf>>,
    #[arg(long, default_value_t = 1.0)]
    pub tau_pix: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tau_rel: f64,
    #[arg(long, default_value_t = 2)]
    pub min_views: usize,
    #[arg(long, default_value_t = 0.0)]
    pub min_confidence: f64,
    #[arg(long, default_value_t = 0.0)]
    pub voxel: f64,
    /// Output PLY.
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted depth PFM.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth depth PFM.
    #[arg(long)]
    pub gt: PathBuf,
    /// Absolute error thresholds in scene units.
    #[arg(long, num_args = 1.., value_delimiter = ',', default_value = "0.01,0.05,0.1")]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub json: bool,
}

fn parse_aggregation(s: &str) -> std::result::Result<Aggregation, String> {
    Aggregation::parse(s).ok_or_else(|| "expected gcp, standard-k3, standard-depth5 or standard-depth7".into())
}

fn parse_normal_source(s: &str) -> std::result::Result<NormalSource, String> {
    NormalSource::parse(s).ok_or_else(|| "expected gt, from-depth or file".into())
}

fn parse_anchor(s: &str) -> std::result::Result<Anchor, String> {
    match s {
        "neighbor" => Ok(Anchor::Neighbor),
        "reference" => Ok(Anchor::Reference),
        _ => Err("expected neighbor or reference".into()),
    }
}

fn parse_out_of_range(s: &str) -> std::result::Result<OutOfLadder, String> {
    match s {
        "clamp" => Ok(OutOfLadder::Clamp),
        "zero-fill" => Ok(OutOfLadder::ZeroFill),
        _ => Err("expected clamp or zero-fill".into()),
    }
}

impl Overrides {
    /// Config file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.output {
            c.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.aggregation {
            c.aggregation = v;
        }
        if let Some(v) = self.normal_source {
            c.normals.source = v;
        }
        if let Some(v) = &self.normal_files {
            c.normals.files = v.clone();
        }
        if let Some(f) = &self.normal_flip {
            if let Some(bad) = f.chars().find(|ch| !"xyz".contains(*ch)) {
                return Err(Error::Usage(format!("--normal-flip: unexpected axis '{bad}'")));
            }
            c.normals.flip = [f.contains('x'), f.contains('y'), f.contains('z')];
        }
        if let Some(v) = self.normal_window {
            c.normals.window = v;
        }
        if let Some(v) = self.gcp_window {
            c.gcp.window = v;
        }
        if let Some(v) = self.gcp_depth_taps {
            c.gcp.depth_taps = v;
        }
        if let Some(v) = &self.kernel {
            c.gcp.kernel_file = Some(v.clone());
        }
        if let Some(v) = self.anchor {
            c.gcp.anchor = v;
        }
        if let Some(v) = self.out_of_range {
            c.gcp.out_of_range = v;
        }
        for (flag, n) in [
            ("samples", self.samples.as_ref().map(Vec::len)),
            ("intervals", self.intervals.as_ref().map(Vec::len)),
            ("levels", self.levels.as_ref().map(Vec::len)),
        ] {
            if n.is_some_and(|n| n != 3) {
                return Err(Error::Usage(format!("--{flag}: expected three comma-separated values")));
            }
        }
        for (i, st) in c.stages.iter_mut().enumerate() {
            if let Some(v) = &self.samples {
                st.samples = v[i];
            }
            if let Some(v) = &self.intervals {
                st.interval_scale = v[i];
            }
            if let Some(v) = &self.levels {
                st.level = v[i];
            }
        }
        if let (Some(lo), Some(hi)) = (self.depth_min, self.depth_max) {
            c.depth_range = Some([lo, hi]);
        }
        if let Some(v) = self.base_interval {
            c.base_interval = Some(v);
        }
        if self.parabola {
            c.parabola_refinement = true;
        }
        if self.no_fusion {
            c.fusion.enabled = false;
        }
        if let Some(v) = self.tau_pix {
            c.fusion.tau_pix = v;
        }
        if let Some(v) = self.tau_rel {
            c.fusion.tau_rel = v;
        }
        if let Some(v) = self.min_views {
            c.fusion.min_views = v;
        }
        if let Some(v) = self.min_confidence {
            c.fusion.min_confidence = v;
        }
        if let Some(v) = self.voxel {
            c.fusion.voxel = v;
        }
        if let Some(v) = &self.references {
            c.references = Some(v.clone());
        }
        if let Some(v) = self.noise_sigma {
            match &mut c.scene {
                Some(s) => s.noise_sigma = v,
                None => return Err(Error::Usage("--noise-sigma applies to synthetic scenes only".into())),
            }
        }
        if self.images.is_some() || self.cameras.is_some() || self.gt_depths.is_some() {
            let mut input = c.input.take().unwrap_or_default();
            if let Some(v) = &self.images {
                input.images = v.clone();
            }
            if let Some(v) = &self.cameras {
                input.cameras = v.clone();
            }
            if let Some(v) = &self.gt_depths {
                input.gt_depths = v.clone();
            }
            c.input = Some(input);
            c.scene = None;
        }
        c.validate()?;
        Ok(c)
    }
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let cfg = a.overrides.resolve()?;
    let report = run_pipeline(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report.metrics).expect("metrics serialise"));
        return Ok(());
    }
    println!("run directory: {}", report.output_dir.display());
    println!("views estimated: {}", report.views.len());
    if let Some(c) = &report.cloud {
        println!("fused points: {}", c.len());
    }
    if let Some(m) = &report.metrics {
        println!("final interval: {:.6}", m.final_interval);
        println!("mae: {:.6}", m.mae);
        println!("within final interval: {:.4}", m.within_final_interval);
        if let Some(rms) = m.cloud.as_ref().and_then(|c| c.rms_to_surface) {
            println!("cloud rms to surface: {rms:.6}");
        }
    }
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let base = a.overrides.resolve()?;
    let mut configs = Vec::new();
    let modes = if a.modes.is_empty() && a.with.is_empty() {
        vec![
            Aggregation::Gcp,
            Aggregation::StandardK3,
            Aggregation::StandardDepth5,
            Aggregation::StandardDepth7,
        ]
    } else {
        a.modes.clone()
    };
    let sources = if a.normal_sources.is_empty() {
        vec![base.normals.source]
    } else {
        a.normal_sources.clone()
    };
    for m in modes {
        let srcs: &[NormalSource] = if m == Aggregation::Gcp { &sources } else { &sources[..1] };
        for &s in srcs {
            let mut c = base.clone();
            c.aggregation = m;
            c.normals.source = s;
            c.output_dir = base.output_dir.join(c.label().replace('/', "-"));
            configs.push(c);
        }
    }
    for p in &a.with {
        let mut c = PipelineConfig::load(p)?;
        if configs.iter().any(|o| o.output_dir == c.output_dir) {
            c.output_dir = base.output_dir.join(c.label().replace('/', "-"));
        }
        configs.push(c);
    }
    let table = run_ablation(&configs)?;
    print!("{}", table.render());
    if let Some(p) = &a.json_out {
        let text = serde_json::to_string_pretty(&table).expect("table serialises");
        fs::write(p, text + "\n").map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let cfg = a.overrides.resolve()?;
    let files = write_scene(&cfg, &cfg.output_dir)?;
    println!("wrote {} files to {}", files.len(), cfg.output_dir.display());
    Ok(())
}

fn read_list<T>(paths: &[PathBuf], f: impl Fn(&PathBuf) -> Result<T>) -> Result<Vec<T>> {
    paths.iter().map(f).collect()
}

fn cmd_fuse(a: &FuseArgs) -> Result<()> {
    let views = a.depths.len();
    if views < 2 {
        return Err(Error::Usage("--depths: at least two views are required".into()));
    }
    let same = |n: usize, what: &str| {
        if n == views {
            Ok(())
        } else {
            Err(Error::Usage(format!("--{what}: expected {views} files, got {n}")))
        }
    };
    same(a.cameras.len(), "cameras")?;
    let depths = read_list(&a.depths, |p| pfm::read_depth(p))?;
    let cams = a
        .cameras
        .iter()
        .zip(&depths)
        .map(|(p, d)| camfile::read_camera(p, Some((d.width, d.height))))
        .collect::<Result<Vec<_>>>()?;
    let images = match &a.images {
        Some(p) => {
            same(p.len(), "images")?;
            Some(read_list(p, |p| imageio::read_png(p))?)
        }
        None => None,
    };
    let conf = match &a.confidences {
        Some(p) => {
            same(p.len(), "confidences")?;
            Some(read_list(p, |p| {
                let m = pfm::read_pfm(p, pfm::RowOrder::BottomUp)?;
                Ok(m.data.iter().map(|&v| v as f64).collect::<Vec<f64>>())
            })?)
        }
        None => None,
    };
    let params = gcmvs_core::fusion::FilterParams {
        tau_pix: a.tau_pix,
        tau_rel: a.tau_rel,
        min_views: a.min_views,
        min_confidence: a.min_confidence,
    };
    let masks = consistency_filter(&depths, conf.as_deref(), &cams, &params)?;
    let fused = fuse_point_cloud(&depths, &masks, &cams, images.as_deref(), conf.as_deref(), a.voxel)?;
    ply::write_ply(&a.output, &ply::PlyCloud::from(&fused.cloud))?;
    if fused.empty {
        eprintln!("warning: no pixel passed the consistency filter");
    }
    println!("fused points: {}", fused.cloud.len());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let pred = pfm::read_depth(&a.pred)?;
    let gt = pfm::read_depth(&a.gt)?;
    let m = depth_metrics(&pred, &gt, &a.thresholds)?;
    if a.json {
        let v = serde_json::json!({
            "mae": m.mean_abs_error,
            "within": m.within.iter().map(|(t, f)| serde_json::json!({"threshold": t, "fraction": f})).collect::<Vec<_>>(),
            "valid_fraction": m.valid_fraction,
            "evaluated": m.evaluated,
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("metrics serialise"));
    } else {
        println!("mae: {:.6}", m.mean_abs_error);
        for (t, f) in &m.within {
            println!("within {t}: {f:.4}");
        }
        println!("valid fraction: {:.4}", m.valid_fraction);
        println!("evaluated pixels: {}", m.evaluated);
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
