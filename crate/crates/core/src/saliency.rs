//! Raw saliency by gradient descent on the input image.
//!
//! The image is repeatedly darkened along the positive part of the gradient
//! of
//!
//! ```text
//! F(X | l) = a_l + (γ/2) Σ_{k≠l} (a_k − o_k)²
//! ```
//!
//! where `a` are the live logits, `o` the logits of the unmodified image and
//! `l` its predicted class. Lowering `a_l` erases the recognized object while
//! the penalty clamps every other output near its starting value, so the
//! background is left mostly untouched. The per-pixel drop, averaged over
//! channels, is the raw saliency map.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{ImageRgb, SaliencyMap};
use crate::nn::{ForwardPass, Logits, Network};

/// Halvings tried by [`StepSize::Probe`] before settling for the smallest step.
pub const MAX_PROBE_HALVINGS: u32 = 20;

/// Learning rate for the descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// Start at 1 and halve until the first step lowers the cost.
    Probe,
}

/// Noise threshold subtracted before normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prune {
    Absolute(f64),
    /// Fraction of the map's maximum.
    RelativeToMax(f64),
}

impl Prune {
    pub fn threshold(self, max: f64) -> f64 {
        match self {
            Prune::Absolute(t) => t,
            Prune::RelativeToMax(f) => f * max.max(0.0),
        }
    }

    fn validate(self) -> Result<()> {
        let v = match self {
            Prune::Absolute(t) | Prune::RelativeToMax(t) => t,
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Config(format!("prune threshold must be finite and >= 0, got {v}")));
        }
        Ok(())
    }

    /// `max(s − θ, 0)` followed by max-normalization.
    pub fn apply(self, s: SaliencyMap) -> SaliencyMap {
        let theta = self.threshold(s.max());
        s.pruned(theta).max_normalized()
    }
}

impl fmt::Display for StepSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSize::Fixed(e) => write!(f, "{e}"),
            StepSize::Probe => f.write_str("probe"),
        }
    }
}

impl FromStr for StepSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "probe" {
            return Ok(StepSize::Probe);
        }
        s.parse()
            .map(StepSize::Fixed)
            .map_err(|_| Error::Config(format!("step size must be a number or `probe`, got `{s}`")))
    }
}

/// Written as a plain number for an absolute threshold, or `rel:<f>` for a
/// fraction of the maximum.
impl fmt::Display for Prune {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prune::Absolute(t) => write!(f, "{t}"),
            Prune::RelativeToMax(r) => write!(f, "rel:{r}"),
        }
    }
}

impl FromStr for Prune {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("threshold must be `<number>` or `rel:<number>`, got `{s}`"));
        let p = match s.strip_prefix("rel:") {
            Some(r) => Prune::RelativeToMax(r.trim().parse().map_err(|_| bad())?),
            None => Prune::Absolute(s.parse().map_err(|_| bad())?),
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaliencyParams {
    /// Penalty weight on the clamped outputs.
    pub gamma: f64,
    pub step: StepSize,
    pub iterations: usize,
    pub theta: Prune,
}

impl Default for SaliencyParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            step: StepSize::Probe,
            iterations: 10,
            theta: Prune::RelativeToMax(0.1),
        }
    }
}

impl SaliencyParams {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if let StepSize::Fixed(e) = self.step {
            if !e.is_finite() || e < 0.0 {
                return Err(Error::Config(format!("epsilon must be finite and >= 0, got {e}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        self.theta.validate()
    }
}

/// Everything one descent produced.
#[derive(Clone, Debug)]
pub struct SaliencyRun {
    pub initial: ImageRgb,
    pub final_image: ImageRgb,
    pub label: usize,
    /// Logits of the unmodified image.
    pub baseline: Logits,
    pub final_logits: Logits,
    /// Learning rate actually used.
    pub epsilon: f64,
    /// `F(X⁽⁰⁾), …, F(X⁽ᵀ⁾)`.
    pub cost_trace: Vec<f64>,
    pub raw: SaliencyMap,
}

impl SaliencyRun {
    /// `Σ_{k≠l} (a_k − o_k)²` at the final iterate.
    pub fn terminal_penalty(&self) -> f64 {
        penalty(&self.final_logits, &self.baseline, self.label).expect("aligned by construction")
    }
}

fn check_outputs(a: &Logits, o: &Logits, l: usize) -> Result<()> {
    if a.len() != o.len() {
        return Err(Error::Shape(format!("{} live vs {} baseline logits", a.len(), o.len())));
    }
    if l >= a.len() {
        return Err(Error::InvalidInput(format!("class {l} out of range for {} outputs", a.len())));
    }
    Ok(())
}

/// `Σ_{k≠l} (a_k − o_k)²`.
pub fn penalty(a: &Logits, o: &Logits, l: usize) -> Result<f64> {
    check_outputs(a, o, l)?;
    Ok(a.values()
        .iter()
        .zip(o.values())
        .enumerate()
        .filter(|&(k, _)| k != l)
        .map(|(_, (a, o))| (a - o) * (a - o))
        .sum())
}

pub fn cost(a: &Logits, o: &Logits, l: usize, gamma: f64) -> Result<f64> {
    let p = penalty(a, o, l)?;
    Ok(a.values()[l] + 0.5 * gamma * p)
}

/// `∂F/∂a`: one at the target class, `γ(a_i − o_i)` elsewhere.
pub fn output_error(a: &Logits, o: &Logits, l: usize, gamma: f64) -> Result<Vec<f64>> {
    check_outputs(a, o, l)?;
    Ok(a.values()
        .iter()
        .zip(o.values())
        .enumerate()
        .map(|(i, (a, o))| if i == l { 1.0 } else { gamma * (a - o) })
        .collect())
}

/// `max(x − ε·max(g, 0), 0)`: pixels only ever get darker.
pub fn gd_step(x: &ImageRgb, grad: &ImageRgb, epsilon: f64) -> Result<ImageRgb> {
    if !x.same_shape(grad) {
        return Err(Error::Shape("gradient does not match image".into()));
    }
    if grad.data().iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite input gradient".into()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&v, &g)| (v - epsilon * g.max(0.0)).max(0.0))
        .collect();
    ImageRgb::new(x.width(), x.height(), data)
}

/// Channel-mean drop from `x0` to `xt`, pruned and max-normalized.
pub fn raw_saliency(x0: &ImageRgb, xt: &ImageRgb, theta: Prune) -> Result<SaliencyMap> {
    if !x0.same_shape(xt) {
        return Err(Error::Shape("initial and final images differ in size".into()));
    }
    let diff = x0
        .data()
        .chunks_exact(3)
        .zip(xt.data().chunks_exact(3))
        .map(|(a, b)| ((a[0] - b[0]) + (a[1] - b[1]) + (a[2] - b[2])) / 3.0)
        .collect();
    Ok(theta.apply(SaliencyMap::new(x0.width(), x0.height(), diff)?))
}

pub fn run_saliency(net: &Network, x: &ImageRgb, params: &SaliencyParams) -> Result<SaliencyRun> {
    run_saliency_observed(net, x, params, |_, _| {})
}

/// Like [`run_saliency`], calling `observe(t, X⁽ᵗ⁾)` for every iterate of
/// the accepted descent.
pub fn run_saliency_observed(
    net: &Network,
    x: &ImageRgb,
    params: &SaliencyParams,
    mut observe: impl FnMut(usize, &ImageRgb),
) -> Result<SaliencyRun> {
    params.validate()?;
    let pass = net.forward_pass(x)?;
    let baseline = pass.logits().clone();
    let label = baseline.argmax();
    let problem = Problem {
        net,
        baseline: &baseline,
        label,
        gamma: params.gamma,
        iterations: params.iterations,
    };
    let (epsilon, descent) = match params.step {
        StepSize::Fixed(e) => (e, problem.descend(x, pass, e)?),
        StepSize::Probe => problem.probe(x)?,
    };
    for (t, img) in descent.iterates.iter().enumerate() {
        observe(t + 1, img);
    }
    let final_image = descent.iterates.last().cloned().unwrap_or_else(|| x.clone());
    let raw = raw_saliency(x, &final_image, params.theta)?;
    Ok(SaliencyRun {
        initial: x.clone(),
        final_image,
        label,
        baseline,
        final_logits: descent.final_logits,
        epsilon,
        cost_trace: descent.trace,
        raw,
    })
}

struct Problem<'a> {
    net: &'a Network,
    baseline: &'a Logits,
    label: usize,
    gamma: f64,
    iterations: usize,
}

struct Descent {
    iterates: Vec<ImageRgb>,
    trace: Vec<f64>,
    final_logits: Logits,
}

impl<'a> Problem<'a> {
    fn cost_of(&self, a: &Logits, t: usize) -> Result<f64> {
        let f = cost(a, self.baseline, self.label, self.gamma)?;
        if !f.is_finite() {
            return Err(Error::Numerical(format!("cost became {f} at iteration {t}")));
        }
        Ok(f)
    }

    fn descend(&self, x: &ImageRgb, mut pass: ForwardPass<'a>, epsilon: f64) -> Result<Descent> {
        let mut image = x.clone();
        let mut iterates = Vec::with_capacity(self.iterations);
        let mut trace = Vec::with_capacity(self.iterations + 1);
        for t in 0..self.iterations {
            let a = pass.logits();
            trace.push(self.cost_of(a, t)?);
            let e = output_error(a, self.baseline, self.label, self.gamma)?;
            let grad = pass.backward_to_input(&e)?;
            image = gd_step(&image, &grad, epsilon)?;
            iterates.push(image.clone());
            pass = self.net.forward_pass(&image)?;
        }
        let final_logits = pass.into_logits();
        trace.push(self.cost_of(&final_logits, self.iterations)?);
        Ok(Descent {
            iterates,
            trace,
            final_logits,
        })
    }

    /// Halves ε from 1 until the whole descent never raises the cost and
    /// ends below where it started.
    fn probe(&self, x: &ImageRgb) -> Result<(f64, Descent)> {
        let mut eps = 1.0;
        let mut last = None;
        for _ in 0..=MAX_PROBE_HALVINGS {
            let d = self.descend(x, self.net.forward_pass(x)?, eps)?;
            let monotone = d.trace.windows(2).all(|w| w[1] <= w[0]);
            if monotone && d.trace[d.trace.len() - 1] < d.trace[0] {
                return Ok((eps, d));
            }
            last = Some((eps, d));
            eps *= 0.5;
        }
        Ok(last.expect("at least one trial"))
    }
}
