//! Low-level color saliency used to refine the network-derived map.
//!
//! Per superpixel: mean LAB color, global color contrast against every
//! other superpixel, contrast smoothing over color neighbors, and a
//! color-distribution cue favoring spatially compact colors. The product of
//! the two cues is mapped into `[α, 1 + α]` and multiplied into the smoothed
//! saliency.

use crate::color::LabImage;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::image::SaliencyMap;
use crate::saliency::Prune;
use crate::superpixel::SuperpixelMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionStats {
    /// Mean `[L, a, b]`.
    pub color: [f64; 3],
    /// Mean pixel-center position `[x, y]`.
    pub position: [f64; 2],
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowLevelParams {
    pub alpha: f64,
    /// Color-similarity bandwidth, in LAB units.
    pub sigma_color: f64,
    /// Spatial bandwidth as a fraction of the image diagonal.
    pub sigma_dist: f64,
    /// Color neighbors averaged by [`contrast_smooth`], self included.
    pub neighbors: usize,
}

impl Default for LowLevelParams {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            sigma_color: 10.0,
            sigma_dist: 0.25,
            neighbors: 10,
        }
    }
}

impl LowLevelParams {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        for (name, v) in [("sigma_color", self.sigma_color), ("sigma_dist", self.sigma_dist)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.neighbors == 0 {
            return Err(Error::Config("neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Low-level map with values in `[alpha, 1 + alpha]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowLevelMap {
    pub alpha: f64,
    pub map: SaliencyMap,
}

pub fn region_stats(lab: &LabImage, sp: &SuperpixelMap) -> Result<Vec<RegionStats>> {
    if lab.width() != sp.width() || lab.height() != sp.height() {
        return Err(Error::Shape("LAB image and superpixel map differ in size".into()));
    }
    let w = lab.width();
    let mut sums = vec![[0.0f64; 5]; sp.k()];
    for (p, (&l, c)) in sp.labels().iter().zip(lab.pixels()).enumerate() {
        let s = &mut sums[l as usize];
        s[0] += c[0];
        s[1] += c[1];
        s[2] += c[2];
        s[3] += (p % w) as f64 + 0.5;
        s[4] += (p / w) as f64 + 0.5;
    }
    Ok(sums
        .iter()
        .zip(sp.counts())
        .map(|(s, &n)| {
            let n_f = n as f64;
            RegionStats {
                color: [s[0] / n_f, s[1] / n_f, s[2] / n_f],
                position: [s[3] / n_f, s[4] / n_f],
                count: n,
            }
        })
        .collect())
}

fn color_dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// `GC_i = Σ_j ‖C_i − C_j‖²` over all superpixels, summed in index order.
pub fn global_contrast(stats: &[RegionStats], exec: Execution) -> Vec<f64> {
    exec.map(stats, |si| stats.iter().map(|sj| color_dist2(&si.color, &sj.color)).sum())
}

/// Replaces each contrast by a weighted mean over its `neighbors` nearest
/// superpixels in LAB (itself first), with weights
/// `exp(−d² / 2σ_c²)` normalized to one.
pub fn contrast_smooth(gc: &[f64], stats: &[RegionStats], sigma_color: f64, neighbors: usize, exec: Execution) -> Result<Vec<f64>> {
    if gc.len() != stats.len() {
        return Err(Error::Shape(format!("{} contrasts for {} superpixels", gc.len(), stats.len())));
    }
    let m = neighbors.clamp(1, stats.len().max(1));
    let denom = 2.0 * sigma_color * sigma_color;
    Ok(exec.map_range(stats.len(), |i| {
        let mut near: Vec<(f64, usize)> = stats
            .iter()
            .enumerate()
            .map(|(j, s)| (if i == j { 0.0 } else { color_dist2(&stats[i].color, &s.color) }, j))
            .collect();
        // Self sorts first among zero distances.
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1 != i).cmp(&(b.1 != i))).then(a.1.cmp(&b.1)));
        near.truncate(m);
        let weights: Vec<f64> = near.iter().map(|&(d, _)| (-d / denom).exp()).collect();
        let total: f64 = weights.iter().sum();
        near.iter().zip(&weights).map(|(&(_, j), &w)| w * gc[j]).sum::<f64>() / total
    }))
}

/// Color-weighted spatial variance of each superpixel's color: with
/// `w_ij ∝ exp(−‖C_i − C_j‖² / 2σ_c²)`, `μ_i = Σ_j w_ij p_j` and
/// `D_i = Σ_j w_ij ‖p_j − μ_i‖²`.
pub fn spatial_variance(stats: &[RegionStats], sigma_color: f64, exec: Execution) -> Vec<f64> {
    let denom = 2.0 * sigma_color * sigma_color;
    exec.map(stats, |si| {
        let w: Vec<f64> = stats.iter().map(|sj| (-color_dist2(&si.color, &sj.color) / denom).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut mu = [0.0; 2];
        for (wj, sj) in w.iter().zip(stats) {
            mu[0] += wj * sj.position[0];
            mu[1] += wj * sj.position[1];
        }
        mu = mu.map(|v| v / total);
        w.iter()
            .zip(stats)
            .map(|(wj, sj)| {
                let (dx, dy) = (sj.position[0] - mu[0], sj.position[1] - mu[1]);
                wj * (dx * dx + dy * dy)
            })
            .sum::<f64>()
            / total
    })
}

/// `exp(−D_i / σ_d²)` with `σ_d` in pixels: compact colors score near one.
pub fn color_distribution(stats: &[RegionStats], sigma_color: f64, sigma_dist_px: f64, exec: Execution) -> Vec<f64> {
    let s2 = sigma_dist_px * sigma_dist_px;
    spatial_variance(stats, sigma_color, exec)
        .into_iter()
        .map(|d| (-d / s2).exp())
        .collect()
}

/// Min-max normalization to `[0, 1]`; a constant input maps to all ones.
pub fn unit_normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![1.0; v.len()];
    }
    v.iter().map(|&x| (x - lo) / (hi - lo)).collect()
}

/// Product of the normalized cues, broadcast to pixels and mapped affinely
/// onto `[alpha, 1 + alpha]`.
pub fn build_lowlevel(contrast: &[f64], distribution: &[f64], sp: &SuperpixelMap, alpha: f64) -> Result<LowLevelMap> {
    check_alpha(alpha)?;
    if contrast.len() != sp.k() || distribution.len() != sp.k() {
        return Err(Error::Shape(format!(
            "cue lengths {} and {} for {} superpixels",
            contrast.len(),
            distribution.len(),
            sp.k()
        )));
    }
    let product: Vec<f64> = unit_normalize(contrast)
        .iter()
        .zip(unit_normalize(distribution))
        .map(|(c, d)| c * d)
        .collect();
    let region: Vec<f64> = unit_normalize(&product).into_iter().map(|v| alpha + v).collect();
    let data = sp.labels().iter().map(|&l| region[l as usize]).collect();
    Ok(LowLevelMap {
        alpha,
        map: SaliencyMap::new(sp.width(), sp.height(), data)?,
    })
}

/// The whole low-level chain for one image.
pub fn low_level_map(lab: &LabImage, sp: &SuperpixelMap, params: &LowLevelParams, exec: Execution) -> Result<LowLevelMap> {
    params.validate()?;
    let stats = region_stats(lab, sp)?;
    let gc = global_contrast(&stats, exec);
    let gc = contrast_smooth(&gc, &stats, params.sigma_color, params.neighbors, exec)?;
    let diag = ((lab.width() * lab.width() + lab.height() * lab.height()) as f64).sqrt();
    let dist = color_distribution(&stats, params.sigma_color, params.sigma_dist * diag, exec);
    build_lowlevel(&gc, &dist, sp, params.alpha)
}

/// `S_L ⊙ S̄`, then pruned and max-normalized.
pub fn refine(smoothed: &SaliencyMap, low: &LowLevelMap, theta: Prune) -> Result<SaliencyMap> {
    let l = &low.map;
    if smoothed.width() != l.width() || smoothed.height() != l.height() {
        return Err(Error::Shape("smoothed map and low-level map differ in size".into()));
    }
    let data = smoothed.data().iter().zip(l.data()).map(|(s, w)| s * w).collect();
    Ok(theta.apply(SaliencyMap::new(smoothed.width(), smoothed.height(), data)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(color: [f64; 3], position: [f64; 2]) -> RegionStats {
        RegionStats { color, position, count: 1 }
    }

    const SEQ: Execution = Execution::Sequential;

    #[test]
    fn global_contrast_examples() {
        let same = vec![stat([5.0, 1.0, 2.0], [0.0, 0.0]); 4];
        assert!(global_contrast(&same, SEQ).iter().all(|&g| g == 0.0));
        let two = [stat([1.0, 2.0, 3.0], [0.0; 2]), stat([4.0, 6.0, 3.0], [0.0; 2])];
        assert_eq!(global_contrast(&two, SEQ), vec![25.0, 25.0]);
        let three = [
            stat([0.0, 0.0, 0.0], [0.0; 2]),
            stat([1.0, 0.0, 0.0], [0.0; 2]),
            stat([0.0, 2.0, 0.0], [0.0; 2]),
        ];
        assert_eq!(global_contrast(&three, SEQ), vec![5.0, 6.0, 9.0]);
    }

    #[test]
    fn contrast_smooth_examples() {
        let stats = [stat([0.0; 3], [0.0; 2]), stat([30.0, 0.0, 0.0], [0.0; 2]), stat([0.0, 60.0, 0.0], [0.0; 2])];
        let gc = [1.0, 2.0, 7.0];
        assert_eq!(contrast_smooth(&gc, &stats, 1e-3, 10, SEQ).unwrap(), gc.to_vec());
        let out = contrast_smooth(&gc, &stats, 25.0, 3, SEQ).unwrap();
        assert!(out.iter().all(|&v| (1.0..=7.0).contains(&v)));

        let twins = [stat([3.0; 3], [0.0; 2]), stat([3.0; 3], [9.0; 2])];
        let out = contrast_smooth(&[0.25, 0.75], &twins, 10.0, 10, SEQ).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
        assert!(contrast_smooth(&[1.0], &twins, 10.0, 10, SEQ).is_err());
    }

    #[test]
    fn single_region_distribution_is_one() {
        let s = [stat([1.0; 3], [3.0, 4.0])];
        assert_eq!(spatial_variance(&s, 10.0, SEQ), vec![0.0]);
        assert_eq!(color_distribution(&s, 10.0, 5.0, SEQ), vec![1.0]);
    }

    #[test]
    fn spread_color_scores_lower() {
        let apart = [stat([1.0; 3], [0.0, 0.0]), stat([1.0; 3], [63.0, 63.0])];
        let cue = color_distribution(&apart, 10.0, 22.0, SEQ);
        assert!(cue[0] < 1.0 && cue[1] < 1.0);
    }

    #[test]
    fn distribution_matches_direct_evaluation() {
        let s = [
            stat([0.0, 0.0, 0.0], [1.0, 1.0]),
            stat([10.0, 0.0, 0.0], [5.0, 1.0]),
            stat([0.0, 0.0, 20.0], [1.0, 9.0]),
        ];
        let sigma = 10.0f64;
        // Weights for i = 0: exp(0), exp(-100/200), exp(-400/200).
        let w = [1.0, (-0.5f64).exp(), (-2.0f64).exp()];
        let t: f64 = w.iter().sum();
        let mx = (w[0] * 1.0 + w[1] * 5.0 + w[2] * 1.0) / t;
        let my = (w[0] * 1.0 + w[1] * 1.0 + w[2] * 9.0) / t;
        let d0 = (w[0] * ((1.0 - mx).powi(2) + (1.0 - my).powi(2))
            + w[1] * ((5.0 - mx).powi(2) + (1.0 - my).powi(2))
            + w[2] * ((1.0 - mx).powi(2) + (9.0 - my).powi(2)))
            / t;
        let got = spatial_variance(&s, sigma, SEQ);
        assert!((got[0] - d0).abs() < 1e-12, "{} vs {d0}", got[0]);
    }

    #[test]
    fn build_lowlevel_examples() {
        let sp = SuperpixelMap::new(3, 1, vec![0, 1, 2], 3).unwrap();
        let c = build_lowlevel(&[2.0; 3], &[0.4; 3], &sp, 0.3).unwrap();
        assert!(c.map.data().iter().all(|&v| v == 1.3));
        let s = build_lowlevel(&[0.0, 0.5, 1.0], &[1.0; 3], &sp, 0.3).unwrap();
        assert_eq!(s.map.data(), &[0.3, 0.8, 1.3]);
        assert!(build_lowlevel(&[0.0; 3], &[0.0; 3], &sp, 1.0).is_err());
        assert!(build_lowlevel(&[0.0; 3], &[0.0; 3], &sp, 0.0).is_err());
        assert!(build_lowlevel(&[0.0; 2], &[0.0; 3], &sp, 0.5).is_err());
    }

    #[test]
    fn refine_examples() {
        let alpha = 0.3;
        let s_bar = SaliencyMap::new(2, 1, vec![0.2, 0.8]).unwrap();
        let ones = LowLevelMap { alpha, map: SaliencyMap::new(2, 1, vec![1.0; 2]).unwrap() };
        assert_eq!(refine(&s_bar, &ones, Prune::Absolute(0.0)).unwrap(), s_bar.clone().max_normalized());
        let zero = SaliencyMap::zeros(2, 1);
        assert!(refine(&zero, &ones, Prune::Absolute(0.0)).unwrap().is_zero());
        let sl = LowLevelMap { alpha, map: SaliencyMap::new(2, 1, vec![0.5, 1.25]).unwrap() };
        let out = refine(&s_bar, &sl, Prune::Absolute(0.0)).unwrap();
        assert!((out.data()[0] - 0.1).abs() < 1e-15);
        assert_eq!(out.data()[1], 1.0);
        let wrong = LowLevelMap { alpha, map: SaliencyMap::zeros(3, 1) };
        assert!(refine(&s_bar, &wrong, Prune::Absolute(0.0)).is_err());
    }
}
