//! Precision/recall over 256 cutoffs and F-beta scoring.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::image::{quantize, Mask, SaliencyMap};

pub const CUTOFFS: usize = 256;
pub const DEFAULT_BETA_SQ: f64 = 0.3;

/// Precision/recall at cutoffs `0..=255`. Precision is `None` where nothing
/// reaches the cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BestF {
    pub f: f64,
    pub cutoff: usize,
}

/// A pixel is predicted foreground at cutoff `c` when `round(255·s) >= c`.
pub fn pr_curve(s: &SaliencyMap, gt: &Mask) -> Result<PrCurve> {
    if s.width() != gt.width() || s.height() != gt.height() {
        return Err(Error::Shape(format!(
            "{}x{} map vs {}x{} mask",
            s.width(),
            s.height(),
            gt.width(),
            gt.height()
        )));
    }
    let positives = gt.count();
    if positives == 0 {
        return Err(Error::InvalidInput("ground-truth mask has no foreground".into()));
    }
    let mut fg = [0u64; CUTOFFS];
    let mut bg = [0u64; CUTOFFS];
    for (&v, &is_fg) in s.data().iter().zip(gt.data()) {
        let q = quantize(v) as usize;
        if is_fg {
            fg[q] += 1;
        } else {
            bg[q] += 1;
        }
    }
    let mut precision = vec![None; CUTOFFS];
    let mut recall = vec![0.0; CUTOFFS];
    let (mut tp, mut fp) = (0u64, 0u64);
    for c in (0..CUTOFFS).rev() {
        tp += fg[c];
        fp += bg[c];
        if tp + fp > 0 {
            precision[c] = Some(tp as f64 / (tp + fp) as f64);
        }
        recall[c] = tp as f64 / positives as f64;
    }
    Ok(PrCurve { precision, recall })
}

/// `(1 + β²)·P·R / (β²·P + R)`, defined as zero when the denominator is.
pub fn f_beta(precision: f64, recall: f64, beta_sq: f64) -> f64 {
    // A weighted harmonic mean of equal values is that value; the general
    // formula can be an ulp off.
    if precision == recall {
        return precision;
    }
    let denom = beta_sq * precision + recall;
    if denom == 0.0 {
        return 0.0;
    }
    (1.0 + beta_sq) * precision * recall / denom
}

/// Largest F-beta over the valid points; the lowest cutoff wins ties.
pub fn best_f(curve: &PrCurve, beta_sq: f64) -> Result<BestF> {
    let mut best: Option<BestF> = None;
    for (c, (p, &r)) in curve.precision.iter().zip(&curve.recall).enumerate() {
        let Some(p) = *p else { continue };
        let f = f_beta(p, r, beta_sq);
        if best.is_none_or(|b| f > b.f) {
            best = Some(BestF { f, cutoff: c });
        }
    }
    best.ok_or_else(|| Error::InvalidInput("PR curve has no valid point".into()))
}

/// Pointwise mean over curves, skipping invalid precision entries.
pub fn mean_curve(curves: &[PrCurve]) -> PrCurve {
    let mut precision = vec![None; CUTOFFS];
    let mut recall = vec![0.0; CUTOFFS];
    for c in 0..CUTOFFS {
        let valid: Vec<f64> = curves.iter().filter_map(|k| k.precision[c]).collect();
        if !valid.is_empty() {
            precision[c] = Some(valid.iter().sum::<f64>() / valid.len() as f64);
        }
        if !curves.is_empty() {
            recall[c] = curves.iter().map(|k| k.recall[c]).sum::<f64>() / curves.len() as f64;
        }
    }
    PrCurve { precision, recall }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub id: String,
    pub best: BestF,
    pub curve: PrCurve,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchReport {
    pub images: Vec<ImageScore>,
    pub mean_best_f: f64,
    pub mean_curve: PrCurve,
    /// Best point of the mean curve.
    pub mean_best: BestF,
    /// Inputs that could not be scored, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl BatchReport {
    pub fn from_scores(images: Vec<ImageScore>, beta_sq: f64) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let curves: Vec<PrCurve> = images.iter().map(|s| s.curve.clone()).collect();
        let mean_curve = mean_curve(&curves);
        let mean_best = best_f(&mean_curve, beta_sq)?;
        let mean_best_f = images.iter().map(|s| s.best.f).sum::<f64>() / images.len() as f64;
        Ok(Self {
            images,
            mean_best_f,
            mean_curve,
            mean_best,
            skipped: Vec::new(),
        })
    }

    /// Header `image_id,best_f,best_cutoff,p0..p255,r0..r255`, one row per
    /// image in id order, then a `mean` row carrying the mean best-F and the
    /// mean curve. Invalid precision is an empty field.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["image_id".to_string(), "best_f".into(), "best_cutoff".into()];
        header.extend((0..CUTOFFS).map(|c| format!("p{c}")));
        header.extend((0..CUTOFFS).map(|c| format!("r{c}")));
        w.write_record(&header)?;
        let row = |id: &str, f: f64, cutoff: usize, curve: &PrCurve| {
            let mut r = vec![id.to_string(), f.to_string(), cutoff.to_string()];
            r.extend(curve.precision.iter().map(|p| p.map(|v| v.to_string()).unwrap_or_default()));
            r.extend(curve.recall.iter().map(|v| v.to_string()));
            r
        };
        for s in &self.images {
            w.write_record(row(&s.id, s.best.f, s.best.cutoff, &s.curve))?;
        }
        w.write_record(row("mean", self.mean_best_f, self.mean_best.cutoff, &self.mean_curve))?;
        w.flush()?;
        Ok(())
    }
}

pub fn score(id: &str, s: &SaliencyMap, gt: &Mask, beta_sq: f64) -> Result<ImageScore> {
    let curve = pr_curve(s, gt)?;
    Ok(ImageScore {
        id: id.to_string(),
        best: best_f(&curve, beta_sq)?,
        curve,
    })
}

fn image_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("png" | "pgm" | "pnm")) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Scores every map in `maps_dir` against the mask with the same file stem
/// in `gt_dir`. Unmatched or unreadable files land in `skipped`.
pub fn batch_report(maps_dir: &Path, gt_dir: &Path, beta_sq: f64, exec: Execution) -> Result<BatchReport> {
    let maps = image_files(maps_dir)?;
    let masks = image_files(gt_dir)?;
    let mut skipped = Vec::new();
    let mut pairs = Vec::new();
    for (id, path) in &maps {
        match masks.get(id) {
            Some(gt) => pairs.push((id.clone(), path.clone(), gt.clone())),
            None => skipped.push((id.clone(), "no ground-truth mask".to_string())),
        }
    }
    for id in masks.keys().filter(|id| !maps.contains_key(*id)) {
        skipped.push((id.clone(), "no saliency map".to_string()));
    }
    let scored = exec.map(&pairs, |(id, map, gt)| -> Result<ImageScore> {
        score(id, &SaliencyMap::load(map)?, &Mask::load(gt)?, beta_sq)
    });
    let mut images = Vec::new();
    for ((id, ..), r) in pairs.iter().zip(scored) {
        match r {
            Ok(s) => images.push(s),
            Err(e) => skipped.push((id.clone(), e.to_string())),
        }
    }
    skipped.sort();
    let mut report = BatchReport::from_scores(images, beta_sq)?;
    report.skipped = skipped;
    Ok(report)
}
