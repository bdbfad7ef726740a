//! Side-by-side runs of configs that differ only in how costs are
//! regularised or where normals come from.

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pipeline::{load_dataset, run_on};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub aggregation: String,
    pub normal_source: String,
    pub mae: f64,
    pub within_final_interval: f64,
    pub cloud_points: Option<usize>,
    pub cloud_rms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub final_interval: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Aligned plain-text table.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
        let mut s = format!(
            "{:<width$}  {:>10}  {:>10}  {:>8}  {:>10}\n",
            "config", "mae", "<=iv_final", "points", "cloud_rms"
        );
        for r in &self.rows {
            let pts = r.cloud_points.map_or("-".to_string(), |p| p.to_string());
            let rms = r.cloud_rms.map_or("-".to_string(), |v| format!("{v:.6}"));
            s.push_str(&format!(
                "{:<width$}  {:>10.6}  {:>10.4}  {:>8}  {:>10}\n",
                r.label, r.mae, r.within_final_interval, pts, rms
            ));
        }
        s.push_str(&format!("final interval {:.6}\n", self.final_interval));
        s
    }
}

fn scene_key(c: &PipelineConfig) -> serde_json::Value {
    let noisy = c.scene.as_ref().is_some_and(|s| s.noise_sigma > 0.0);
    serde_json::json!({
        "scene": c.scene,
        "input": c.input,
        "depth_range": c.depth_range,
        "references": c.references,
        "seed": if noisy { Some(c.seed) } else { None },
    })
}

/// Runs every config on one shared dataset. Each config writes to its own
/// `output_dir`.
pub fn run_ablation(configs: &[PipelineConfig]) -> Result<AblationTable> {
    if configs.len() < 2 {
        return Err(Error::Usage(format!("ablation needs at least two configs, got {}", configs.len())));
    }
    for c in configs {
        c.validate()?;
    }
    let key = scene_key(&configs[0]);
    if let Some(i) = configs.iter().position(|c| scene_key(c) != key) {
        return Err(Error::Comparison(format!(
            "config {i} ({}) describes a different scene or view set than config 0",
            configs[i].label()
        )));
    }
    let mut labels: Vec<String> = configs.iter().map(PipelineConfig::label).collect();
    labels.sort();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Comparison(format!("two configs share the label {}", w[0])));
    }
    let mut dirs: Vec<_> = configs.iter().map(|c| c.output_dir.clone()).collect();
    dirs.sort();
    if dirs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Usage("each config needs its own output_dir".into()));
    }
    let data = load_dataset(&configs[0])?;
    let mut rows = Vec::with_capacity(configs.len());
    let mut final_interval = 0.0;
    for c in configs {
        let report = run_on(c, &data)?;
        let m = report
            .metrics
            .ok_or_else(|| Error::Comparison("ablation needs ground-truth depth".into()))?;
        final_interval = m.final_interval;
        rows.push(AblationRow {
            label: c.label(),
            aggregation: c.aggregation.name().into(),
            normal_source: c.normals.source.name().into(),
            mae: m.mae,
            within_final_interval: m.within_final_interval,
            cloud_points: m.cloud.as_ref().map(|c| c.points),
            cloud_rms: m.cloud.and_then(|c| c.rms_to_surface),
        });
    }
    Ok(AblationTable { final_interval, rows })
}
