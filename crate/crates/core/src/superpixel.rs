//! SLIC superpixels and per-superpixel mean smoothing.

use std::collections::{BTreeSet, VecDeque};

use crate::color::{rgb_to_lab, LabImage};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::image::{ImageRgb, SaliencyMap};

/// Label image with labels `0..k`, every label owning at least one pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuperpixelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    counts: Vec<usize>,
}

impl SuperpixelMap {
    /// Builds a map with `k` labels; fails if any label in `0..k` is unused
    /// or any pixel carries a label `>= k`.
    pub fn new(width: usize, height: usize, labels: Vec<u32>, k: usize) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} label map with {} entries",
                labels.len()
            )));
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            *counts
                .get_mut(l as usize)
                .ok_or_else(|| Error::InvalidInput(format!("label {l} outside [0, {k})")))? += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("superpixel {empty} has no pixels")));
        }
        Ok(Self {
            width,
            height,
            labels,
            counts,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Whether every label's pixels form one 4-connected region.
    pub fn is_connected(&self) -> bool {
        let (comp, _) = components(&self.labels, self.width, self.height);
        let mut owner = vec![usize::MAX; self.k()];
        for (&c, &l) in comp.iter().zip(&self.labels) {
            let o = &mut owner[l as usize];
            if *o == usize::MAX {
                *o = c;
            } else if *o != c {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlicParams {
    pub k_target: usize,
    pub compactness: f64,
    pub max_iters: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            k_target: 100,
            compactness: 10.0,
            max_iters: 10,
        }
    }
}

impl SlicParams {
    pub fn validate(&self) -> Result<()> {
        if self.k_target < 1 {
            return Err(Error::Config("superpixel count must be at least 1".into()));
        }
        if !(self.compactness.is_finite() && self.compactness > 0.0) {
            return Err(Error::Config(format!(
                "compactness must be finite and > 0, got {}",
                self.compactness
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

pub fn slic(image: &ImageRgb, params: &SlicParams, exec: Execution) -> Result<SuperpixelMap> {
    slic_lab(&rgb_to_lab(image)?, params, exec)
}

/// SLIC on an already converted image.
///
/// Seeds sit on a regular grid of roughly `k_target` cells. Each iteration
/// assigns every pixel to the center minimizing
/// `d_lab² + (compactness / S)² · d_xy²` among centers within `S` of it
/// (`S = sqrt(H·W / k_target)`; ties go to the lower center index), then
/// moves centers to their members' means. Iteration stops after
/// `max_iters` or once no label changes. Finally every 4-connected fragment
/// smaller than `S² / 4` pixels is merged into its largest neighbor.
/// Coordinates are pixel centers.
pub fn slic_lab(lab: &LabImage, params: &SlicParams, exec: Execution) -> Result<SuperpixelMap> {
    params.validate()?;
    let (w, h) = (lab.width(), lab.height());
    if params.k_target > w * h {
        return Err(Error::InvalidInput(format!(
            "{} superpixels requested for {} pixels",
            params.k_target,
            w * h
        )));
    }
    let k = params.k_target as f64;
    let step = ((w * h) as f64 / k).sqrt();
    let ny = ((k * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
    let nx = ((k / ny as f64).round() as usize).clamp(1, w);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);

    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = ((i as f64 + 0.5) * sx, (j as f64 + 0.5) * sy);
            let lab = lab.get((x as usize).min(w - 1), (y as usize).min(h - 1));
            centers.push(Center { lab, x, y });
        }
    }
    let mut labels: Vec<u32> = (0..w * h)
        .map(|p| {
            let (x, y) = ((p % w) as f64 + 0.5, (p / w) as f64 + 0.5);
            let i = ((x / sx) as usize).min(nx - 1);
            let j = ((y / sy) as usize).min(ny - 1);
            (j * nx + i) as u32
        })
        .collect();

    let spatial = (params.compactness / step).powi(2);
    let pixels = lab.pixels();
    for _ in 0..params.max_iters {
        let mut next = labels.clone();
        exec.fill_chunks(&mut next, w, |y, row| {
            let py = y as f64 + 0.5;
            for (x, label) in row.iter_mut().enumerate() {
                let px = x as f64 + 0.5;
                let c = pixels[y * w + x];
                let mut best = f64::INFINITY;
                for (ci, center) in centers.iter().enumerate() {
                    let (dx, dy) = (center.x - px, center.y - py);
                    if dx.abs() > step || dy.abs() > step {
                        continue;
                    }
                    let dl = [0, 1, 2].map(|i| c[i] - center.lab[i]);
                    let d = dl[0] * dl[0] + dl[1] * dl[1] + dl[2] * dl[2] + spatial * (dx * dx + dy * dy);
                    if d < best {
                        best = d;
                        *label = ci as u32;
                    }
                }
            }
        });
        let changed = next != labels;
        labels = next;
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            let c = pixels[p];
            s[0] += c[0];
            s[1] += c[1];
            s[2] += c[2];
            s[3] += (p % w) as f64 + 0.5;
            s[4] += (p / w) as f64 + 0.5;
            s[5] += 1.0;
        }
        for (center, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                *center = Center {
                    lab: [s[0] / s[5], s[1] / s[5], s[2] / s[5]],
                    x: s[3] / s[5],
                    y: s[4] / s[5],
                };
            }
        }
    }
    let min_size = ((step * step) / 4.0).ceil() as usize;
    enforce_connectivity(&labels, w, h, min_size)
}

/// 4-connected components in row-major discovery order.
fn components(labels: &[u32], w: usize, h: usize) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; labels.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        comp[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == labels[start] {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Splits every label into its connected components, then repeatedly merges
/// components under `min_size` pixels into their largest adjacent component
/// (lowest id on ties). Labels are renumbered in row-major order.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize, min_size: usize) -> Result<SuperpixelMap> {
    let (comp, mut size) = components(labels, w, h);
    let n = size.len();
    let mut adj = vec![BTreeSet::new(); n];
    for p in 0..labels.len() {
        let (x, y) = (p % w, p / w);
        for q in [(x + 1 < w).then(|| p + 1), (y + 1 < h).then(|| p + w)].into_iter().flatten() {
            if comp[p] != comp[q] {
                adj[comp[p]].insert(comp[q]);
                adj[comp[q]].insert(comp[p]);
            }
        }
    }
    // `parent[c] == c` marks a surviving component; merged ones point at
    // their absorber.
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut c: usize) -> usize {
        while parent[c] != c {
            parent[c] = parent[parent[c]];
            c = parent[c];
        }
        c
    }
    loop {
        let mut merged = false;
        for c in 0..n {
            if parent[c] != c || size[c] >= min_size {
                continue;
            }
            let neighbors: BTreeSet<usize> = adj[c].iter().map(|&d| root(&mut parent, d)).filter(|&d| d != c).collect();
            let Some(&target) = neighbors.iter().max_by(|&&a, &&b| size[a].cmp(&size[b]).then(b.cmp(&a))) else {
                continue;
            };
            parent[c] = target;
            size[target] += size[c];
            let moved = std::mem::take(&mut adj[c]);
            adj[target].extend(moved);
            merged = true;
        }
        if !merged {
            break;
        }
    }
    let mut new_id = vec![u32::MAX; n];
    let mut next = 0u32;
    let mut out = Vec::with_capacity(labels.len());
    for &c in &comp {
        let r = root(&mut parent, c);
        if new_id[r] == u32::MAX {
            new_id[r] = next;
            next += 1;
        }
        out.push(new_id[r]);
    }
    SuperpixelMap::new(w, h, out, next as usize)
}

/// Replaces each pixel by the mean of its superpixel.
///
/// The mean is taken relative to the region's first pixel `r` (row-major),
/// `r + Σ(v − r) / N`, and clamped to the region's range, so a constant
/// region reproduces its value exactly and smoothing is idempotent.
pub fn smooth(s: &SaliencyMap, sp: &SuperpixelMap) -> Result<SaliencyMap> {
    if s.width() != sp.width() || s.height() != sp.height() {
        return Err(Error::Shape("saliency map and superpixel map differ in size".into()));
    }
    let k = sp.k();
    if sp.counts().contains(&0) {
        return Err(Error::InvalidInput("superpixel map has an empty label".into()));
    }
    let mut reference = vec![f64::NAN; k];
    let mut seen = vec![false; k];
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    let mut sum = vec![0.0; k];
    for (&l, &v) in sp.labels().iter().zip(s.data()) {
        let l = l as usize;
        if !seen[l] {
            seen[l] = true;
            reference[l] = v;
        }
        sum[l] += v - reference[l];
        lo[l] = lo[l].min(v);
        hi[l] = hi[l].max(v);
    }
    let mean: Vec<f64> = (0..k)
        .map(|l| (reference[l] + sum[l] / sp.counts()[l] as f64).clamp(lo[l], hi[l]))
        .collect();
    let data = sp.labels().iter().map(|&l| mean[l as usize]).collect();
    SaliencyMap::new(s.width(), s.height(), data)
}
