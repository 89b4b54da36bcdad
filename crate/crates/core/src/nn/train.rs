use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::image::ImageRgb;

#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub image: ImageRgb,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch, measured as batches were visited.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&v| (v - m).exp()).sum();
    let lse = m + z.ln();
    let mut grad: Vec<f64> = logits.iter().map(|&v| (v - lse).exp()).collect();
    grad[label] -= 1.0;
    (lse - logits[label], grad)
}

fn check_labels(net: &Network, data: &[LabeledImage]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(s) = data.iter().find(|s| s.label >= net.num_classes()) {
        return Err(Error::InvalidInput(format!(
            "label {} outside [0, {})",
            s.label,
            net.num_classes()
        )));
    }
    Ok(())
}

/// Minibatch SGD with momentum on softmax cross-entropy.
///
/// Per-sample gradients are computed under `exec` and summed in sample
/// order, so the trained parameters do not depend on the thread count.
pub fn train(
    net: &mut Network,
    data: &[LabeledImage],
    cfg: &TrainConfig,
    exec: Execution,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    check_labels(net, data)?;
    if cfg.batch_size == 0 || !cfg.learning_rate.is_finite() || !cfg.momentum.is_finite() {
        return Err(Error::Config("batch size must be positive and rates finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut velocity = net.zero_grads();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let frozen: &Network = net;
            let per_sample = exec.map(batch, |&i| -> Result<_> {
                let s = &data[i];
                let pass = frozen.forward_pass(&s.image)?;
                let (loss, e) = cross_entropy(pass.logits().values(), s.label);
                let mut g = frozen.zero_grads();
                pass.accumulate_param_grads(&e, &mut g)?;
                Ok((loss, pass.logits().argmax() == s.label, g))
            });
            let mut grads = net.zero_grads();
            for r in per_sample {
                let (loss, hit, g) = r?;
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "training loss became {loss} in epoch {epoch}; try a smaller learning rate"
                    )));
                }
                loss_sum += loss;
                correct += usize::from(hit);
                for (acc, gb) in grads.iter_mut().zip(&g) {
                    acc.iter_mut().zip(gb).for_each(|(a, b)| *a += b);
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for ((p, v), g) in net.param_blocks_mut().into_iter().zip(&mut velocity).zip(&grads) {
                for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = cfg.momentum * *v - scale * g;
                    *p += *v;
                }
            }
        }
        if !net.params_finite() {
            return Err(Error::Numerical(format!(
                "parameters diverged in epoch {epoch}; try a smaller learning rate"
            )));
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        };
        on_epoch(&stats);
        report.epochs.push(stats);
    }
    Ok(report)
}

/// Fraction of samples whose argmax logit equals the label.
pub fn accuracy(net: &Network, data: &[LabeledImage], exec: Execution) -> Result<f64> {
    check_labels(net, data)?;
    let hits = exec.map(data, |s| -> Result<bool> { Ok(net.forward(&s.image)?.argmax() == s.label) });
    let mut n = 0usize;
    for h in hits {
        n += usize::from(h?);
    }
    Ok(n as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let (loss, g) = cross_entropy(&[1.0, 2.0, 3.0], 2);
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        assert!((loss - (z.ln() - 3.0)).abs() < 1e-12);
        assert!((g[0] - 1f64.exp() / z).abs() < 1e-12);
        assert!((g[2] - (3f64.exp() / z - 1.0)).abs() < 1e-12);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_stable_for_large_logits() {
        let (loss, g) = cross_entropy(&[1000.0, 0.0], 0);
        assert!(loss.is_finite() && loss < 1e-12);
        assert!(g.iter().all(|v| v.is_finite()));
    }
}
