//! End-to-end saliency: gradient descent → superpixel smoothing →
//! low-level refinement, plus batch execution, output files and timing.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::color::rgb_to_lab;
use crate::config::PipelineConfig;
use crate::error::{Error, Result, Stage};
use crate::exec::Execution;
use crate::image::{save_labels16, ImageRgb, SaliencyMap};
use crate::lowlevel::{self, LowLevelMap};
use crate::nn::Network;
use crate::saliency::run_saliency;
use crate::superpixel::{slic_lab, smooth, SuperpixelMap};

pub const STAGE_NAMES: [&str; 3] = ["raw", "smoothed", "refined"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

/// Per-image metadata, written as the JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub image_id: String,
    pub label: usize,
    pub label_name: String,
    pub epsilon: f64,
    pub cost_trace: Vec<f64>,
    /// In execution order: raw, smoothed, refined.
    pub stages: Vec<StageTime>,
    pub total_seconds: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub raw: SaliencyMap,
    pub smoothed: SaliencyMap,
    pub refined: SaliencyMap,
    pub superpixels: SuperpixelMap,
    pub lowlevel: LowLevelMap,
    pub metadata: RunMetadata,
}

impl PipelineOutput {
    pub fn stage_map(&self, stage: &str) -> Option<&SaliencyMap> {
        match stage {
            "raw" => Some(&self.raw),
            "smoothed" => Some(&self.smoothed),
            "refined" => Some(&self.refined),
            _ => None,
        }
    }
}

/// Runs the three stages on one image. Errors carry the failing stage.
pub fn run_pipeline(net: &Network, image: &ImageRgb, id: &str, cfg: &PipelineConfig, exec: Execution) -> Result<PipelineOutput> {
    run_pipeline_with(net, image, id, cfg, exec, |_, _| Ok(None))
}

/// Like [`run_pipeline`], letting `override_lowlevel` replace the computed
/// low-level map (used to pin `S_L` in experiments).
pub fn run_pipeline_with(
    net: &Network,
    image: &ImageRgb,
    id: &str,
    cfg: &PipelineConfig,
    exec: Execution,
    override_lowlevel: impl FnOnce(&SuperpixelMap, f64) -> Result<Option<LowLevelMap>>,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let start = Instant::now();

    let t = Instant::now();
    let run = run_saliency(net, image, &cfg.saliency).map_err(|e| e.in_stage(Stage::Saliency))?;
    let raw_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let smoothing = || -> Result<_> {
        let lab = rgb_to_lab(image)?;
        let sp = slic_lab(&lab, &cfg.slic, exec)?;
        let smoothed = smooth(&run.raw, &sp)?;
        Ok((lab, sp, smoothed))
    };
    let (lab, superpixels, smoothed) = smoothing().map_err(|e| e.in_stage(Stage::Smoothing))?;
    let smooth_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let refinement = || -> Result<_> {
        let low = match override_lowlevel(&superpixels, cfg.lowlevel.alpha)? {
            Some(l) => l,
            None => lowlevel::low_level_map(&lab, &superpixels, &cfg.lowlevel, exec)?,
        };
        let refined = lowlevel::refine(&smoothed, &low, cfg.refine_theta)?;
        Ok((low, refined))
    };
    let (lowlevel, refined) = refinement().map_err(|e| e.in_stage(Stage::Refinement))?;
    let refine_time = t.elapsed().as_secs_f64();

    let metadata = RunMetadata {
        image_id: id.to_string(),
        label: run.label,
        label_name: net.labels()[run.label].clone(),
        epsilon: run.epsilon,
        cost_trace: run.cost_trace,
        stages: STAGE_NAMES
            .iter()
            .zip([raw_time, smooth_time, refine_time])
            .map(|(s, seconds)| StageTime { stage: s.to_string(), seconds })
            .collect(),
        total_seconds: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
    };
    Ok(PipelineOutput {
        raw: run.raw,
        smoothed,
        refined,
        superpixels,
        lowlevel,
        metadata,
    })
}

/// Runs every image under `exec`; results keep input order.
pub fn run_batch(
    net: &Network,
    images: &[(String, ImageRgb)],
    cfg: &PipelineConfig,
    exec: Execution,
) -> Vec<Result<PipelineOutput>> {
    // Images are the unit of parallel work; inner loops stay sequential.
    let inner = if exec.is_parallel() && images.len() > 1 { Execution::Sequential } else { exec };
    exec.map(images, |(id, img)| run_pipeline(net, img, id, cfg, inner))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapFormat {
    Png,
    Pgm,
}

impl MapFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MapFormat::Png => "png",
            MapFormat::Pgm => "pgm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutputOptions {
    pub format: MapFormat,
    /// Also write contrast, distribution and `S_L` maps plus the label map.
    pub intermediates: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        Self {
            format: MapFormat::Png,
            intermediates: false,
        }
    }
}

/// Writes `<out>/<stage>/<id>.<ext>` for the selected stages and
/// `<out>/<id>.json`.
pub fn write_outputs(out_dir: &Path, out: &PipelineOutput, cfg: &PipelineConfig, opts: OutputOptions) -> Result<()> {
    let id = &out.metadata.image_id;
    let ext = opts.format.extension();
    for stage in STAGE_NAMES {
        if cfg.stages.includes(stage) {
            let dir = out_dir.join(stage);
            fs::create_dir_all(&dir)?;
            out.stage_map(stage).expect("known stage").save(dir.join(format!("{id}.{ext}")))?;
        }
    }
    if opts.intermediates {
        let dir = out_dir.join("lowlevel");
        fs::create_dir_all(&dir)?;
        let a = out.lowlevel.alpha;
        let scaled: Vec<f64> = out.lowlevel.map.data().iter().map(|v| (v - a).clamp(0.0, 1.0)).collect();
        SaliencyMap::new(out.raw.width(), out.raw.height(), scaled)?.save(dir.join(format!("{id}.{ext}")))?;
        let sp = &out.superpixels;
        let dir = out_dir.join("labels");
        fs::create_dir_all(&dir)?;
        save_labels16(sp.width(), sp.height(), sp.labels(), dir.join(format!("{id}.png")))?;
    }
    fs::write(out_dir.join(format!("{id}.json")), serde_json::to_string_pretty(&out.metadata)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub image_id: String,
    /// Seconds per stage, in [`STAGE_NAMES`] order.
    pub stages: [f64; 3],
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub mean: TimingRow,
}

pub fn timing_report(runs: &[RunMetadata]) -> Result<TimingReport> {
    if runs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sorted: BTreeMap<&str, &RunMetadata> = BTreeMap::new();
    for r in runs {
        sorted.insert(&r.image_id, r);
    }
    let rows: Vec<TimingRow> = sorted
        .values()
        .map(|r| {
            let mut stages = [0.0; 3];
            for st in &r.stages {
                if let Some(i) = STAGE_NAMES.iter().position(|s| *s == st.stage) {
                    stages[i] = st.seconds;
                }
            }
            TimingRow { image_id: r.image_id.clone(), stages, total: r.total_seconds }
        })
        .collect();
    let n = rows.len() as f64;
    let mut mean = TimingRow { image_id: "mean".into(), stages: [0.0; 3], total: 0.0 };
    for r in &rows {
        for i in 0..3 {
            mean.stages[i] += r.stages[i] / n;
        }
        mean.total += r.total / n;
    }
    Ok(TimingReport { rows, mean })
}

impl TimingReport {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["image_id", "raw_s", "smoothed_s", "refined_s", "total_s"])?;
        for r in self.rows.iter().chain(std::iter::once(&self.mean)) {
            let mut rec = vec![r.image_id.clone()];
            rec.extend(r.stages.iter().map(f64::to_string));
            rec.push(r.total.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads every `*.json` sidecar in `dir`.
pub fn load_sidecars(dir: &Path) -> Result<Vec<RunMetadata>> {
    let mut out = Vec::new();
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    for p in paths {
        if p.extension().and_then(|e| e.to_str()) == Some("json") {
            out.push(serde_json::from_str(&fs::read_to_string(&p)?)?);
        }
    }
    Ok(out)
}
