//! Helpers and brute-force reference implementations shared by the
//! integration tests. The references deliberately avoid the library's data
//! layouts and fast paths.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salient_core::lowlevel::RegionStats;
use salient_core::superpixel::SuperpixelMap;
use salient_core::{ImageRgb, Mask, SaliencyMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(w: usize, h: usize, rng: &mut impl Rng) -> ImageRgb {
    ImageRgb::new(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
}

/// Central differences of `f` with respect to every pixel value.
pub fn numeric_gradient(x: &ImageRgb, h: f64, f: impl Fn(&ImageRgb) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.data().len())
        .map(|i| {
            let v = x.data()[i];
            probe.data_mut()[i] = v + h;
            let up = f(&probe);
            probe.data_mut()[i] = v - h;
            let down = f(&probe);
            probe.data_mut()[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Random labelling where every label in `0..k` occurs at least once.
/// Not necessarily connected, which smoothing does not require.
pub fn random_labels(w: usize, h: usize, k: usize, rng: &mut impl Rng) -> SuperpixelMap {
    let n = w * h;
    let k = k.min(n);
    let mut labels: Vec<u32> = (0..n).map(|_| rng.random_range(0..k as u32)).collect();
    let mut slots: Vec<usize> = (0..n).collect();
    for l in 0..k {
        let j = rng.random_range(l..n);
        slots.swap(l, j);
        labels[slots[l]] = l as u32;
    }
    SuperpixelMap::new(w, h, labels, k).unwrap()
}

/// Region mean relative to the region's first pixel, clamped to its range.
pub fn smooth_reference(s: &SaliencyMap, sp: &SuperpixelMap) -> Vec<f64> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for y in 0..s.height() {
        for x in 0..s.width() {
            groups.entry(sp.label_at(x, y)).or_default().push(s.data()[y * s.width() + x]);
        }
    }
    let means: BTreeMap<u32, f64> = groups
        .iter()
        .map(|(&l, vals)| {
            let r = vals[0];
            let mut acc = 0.0;
            for v in vals {
                acc += v - r;
            }
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (l, (r + acc / vals.len() as f64).clamp(lo, hi))
        })
        .collect();
    sp.labels().iter().map(|l| means[l]).collect()
}

pub fn contrast_reference(colors: &[[f64; 3]]) -> Vec<f64> {
    let mut out = vec![0.0; colors.len()];
    for i in 0..colors.len() {
        for j in 0..colors.len() {
            let (a, b) = (colors[i], colors[j]);
            out[i] += (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2);
        }
    }
    out
}

pub fn stats_from_colors(colors: &[[f64; 3]]) -> Vec<RegionStats> {
    colors
        .iter()
        .enumerate()
        .map(|(i, &color)| RegionStats {
            color,
            position: [i as f64, 0.0],
            count: 1,
        })
        .collect()
}

/// `(tp, fp)` at each of the 256 cutoffs by direct counting.
pub fn pr_counts_reference(s: &SaliencyMap, gt: &Mask) -> Vec<(u64, u64)> {
    (0..256u32)
        .map(|c| {
            let mut tp = 0;
            let mut fp = 0;
            for (v, &fg) in s.data().iter().zip(gt.data()) {
                let level = (v * 255.0).round() as u32;
                if level >= c {
                    if fg {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            (tp, fp)
        })
        .collect()
}

pub fn random_map(w: usize, h: usize, rng: &mut impl Rng) -> SaliencyMap {
    // Mix exact quantization levels with arbitrary values so ties and
    // rounding boundaries both occur.
    let data = (0..w * h)
        .map(|_| {
            if rng.random_bool(0.5) {
                rng.random_range(0..=255u32) as f64 / 255.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    SaliencyMap::new(w, h, data).unwrap()
}

pub fn random_mask(w: usize, h: usize, rng: &mut impl Rng) -> Mask {
    let mut data: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.3)).collect();
    let i = rng.random_range(0..w * h);
    data[i] = true;
    Mask::new(w, h, data).unwrap()
}
