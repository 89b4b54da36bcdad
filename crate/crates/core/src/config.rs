//! Flat `key = value` configuration with `#` comments. Unknown or repeated
//! keys are errors. Every key can also be set programmatically through
//! [`PipelineConfig::set`], which is how command-line overrides are applied.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lowlevel::LowLevelParams;
use crate::saliency::{Prune, SaliencyParams};
use crate::superpixel::SlicParams;

/// Which maps a run writes out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputStages {
    Raw,
    Smoothed,
    Refined,
    #[default]
    All,
}

impl OutputStages {
    pub fn includes(self, stage: &str) -> bool {
        matches!(
            (self, stage),
            (OutputStages::All, _)
                | (OutputStages::Raw, "raw")
                | (OutputStages::Smoothed, "smoothed")
                | (OutputStages::Refined, "refined")
        )
    }

    fn as_str(self) -> &'static str {
        match self {
            OutputStages::Raw => "raw",
            OutputStages::Smoothed => "smoothed",
            OutputStages::Refined => "refined",
            OutputStages::All => "all",
        }
    }
}

impl FromStr for OutputStages {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "raw" => OutputStages::Raw,
            "smoothed" => OutputStages::Smoothed,
            "refined" => OutputStages::Refined,
            "all" => OutputStages::All,
            other => {
                return Err(Error::Config(format!(
                    "stage must be raw, smoothed, refined or all, got `{other}`"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub model: Option<PathBuf>,
    pub saliency: SaliencyParams,
    pub slic: SlicParams,
    pub lowlevel: LowLevelParams,
    /// Threshold applied after refinement.
    pub refine_theta: Prune,
    pub stages: OutputStages,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let saliency = SaliencyParams::default();
        Self {
            model: None,
            refine_theta: saliency.theta,
            saliency,
            slic: SlicParams::default(),
            lowlevel: LowLevelParams::default(),
            stages: OutputStages::All,
            seed: 0,
        }
    }
}

pub const KEYS: [&str; 15] = [
    "model",
    "gamma",
    "epsilon",
    "iters",
    "theta",
    "refine_theta",
    "superpixels",
    "compactness",
    "slic_iters",
    "alpha",
    "sigma_color",
    "sigma_dist",
    "neighbors",
    "stage",
    "seed",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}` has invalid value `{value}`")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = (!v.is_empty()).then(|| PathBuf::from(v)),
            "gamma" => self.saliency.gamma = num(key, v)?,
            "epsilon" => self.saliency.step = v.parse()?,
            "iters" => self.saliency.iterations = num(key, v)?,
            "theta" => self.saliency.theta = v.parse()?,
            "refine_theta" => self.refine_theta = v.parse()?,
            "superpixels" => self.slic.k_target = num(key, v)?,
            "compactness" => self.slic.compactness = num(key, v)?,
            "slic_iters" => self.slic.max_iters = num(key, v)?,
            "alpha" => self.lowlevel.alpha = num(key, v)?,
            "sigma_color" => self.lowlevel.sigma_color = num(key, v)?,
            "sigma_dist" => self.lowlevel.sigma_dist = num(key, v)?,
            "neighbors" => self.lowlevel.neighbors = num(key, v)?,
            "stage" => self.stages = v.parse()?,
            "seed" => self.seed = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.saliency.validate()?;
        self.slic.validate()?;
        self.lowlevel.validate()?;
        Ok(())
    }

    /// Parses a full configuration on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(Error::Config(format!("line {}: `{key}` set twice", n + 1)));
            }
            cfg.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                e => e,
            })?;
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(m) = &self.model {
            put("model", m.display().to_string());
        }
        put("gamma", self.saliency.gamma.to_string());
        put("epsilon", self.saliency.step.to_string());
        put("iters", self.saliency.iterations.to_string());
        put("theta", self.saliency.theta.to_string());
        put("refine_theta", self.refine_theta.to_string());
        put("superpixels", self.slic.k_target.to_string());
        put("compactness", self.slic.compactness.to_string());
        put("slic_iters", self.slic.max_iters.to_string());
        put("alpha", self.lowlevel.alpha.to_string());
        put("sigma_color", self.lowlevel.sigma_color.to_string());
        put("sigma_dist", self.lowlevel.sigma_dist.to_string());
        put("neighbors", self.lowlevel.neighbors.to_string());
        put("stage", self.stages.as_str().to_string());
        put("seed", self.seed.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::StepSize;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::parse(&c.serialize()).unwrap(), c);
        assert_eq!(c.slic.k_target, 100);
        assert_eq!(c.slic.compactness, 10.0);
    }

    #[test]
    fn comments_and_whitespace() {
        let c = PipelineConfig::parse("# hi\n\n gamma = 2.5  # trailing\nepsilon=probe\nstage = raw\n").unwrap();
        assert_eq!(c.saliency.gamma, 2.5);
        assert_eq!(c.stages, OutputStages::Raw);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(matches!(PipelineConfig::parse("gama = 1"), Err(Error::Config(_))));
        assert!(PipelineConfig::parse("gamma = 1\ngamma = 2").is_err());
        assert!(PipelineConfig::parse("gamma").is_err());
        assert!(PipelineConfig::parse("alpha = 1.5").is_err());
        assert!(PipelineConfig::parse("iters = 0").is_err());
        assert!(PipelineConfig::parse("superpixels = 0").is_err());
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(
            gamma in 0.0f64..100.0,
            eps in proptest::option::of(0.0f64..4.0),
            iters in 1usize..50,
            theta in 0.0f64..1.0,
            rel in any::<bool>(),
            k in 1usize..400,
            m in 0.1f64..40.0,
            alpha in 0.01f64..0.99,
            sc in 0.5f64..50.0,
            seed in any::<u64>(),
            stage in 0usize..4,
            model in proptest::option::of("[a-z]{1,8}/[a-z]{1,8}\\.bin"),
        ) {
            let mut c = PipelineConfig { model: model.map(PathBuf::from), ..Default::default() };
            c.saliency.gamma = gamma;
            c.saliency.step = eps.map_or(StepSize::Probe, StepSize::Fixed);
            c.saliency.iterations = iters;
            c.saliency.theta = if rel { Prune::RelativeToMax(theta) } else { Prune::Absolute(theta) };
            c.refine_theta = Prune::Absolute(theta / 2.0);
            c.slic.k_target = k;
            c.slic.compactness = m;
            c.lowlevel.alpha = alpha;
            c.lowlevel.sigma_color = sc;
            c.seed = seed;
            c.stages = [OutputStages::Raw, OutputStages::Smoothed, OutputStages::Refined, OutputStages::All][stage];
            prop_assert_eq!(PipelineConfig::parse(&c.serialize()).unwrap(), c);
        }
    }
}
