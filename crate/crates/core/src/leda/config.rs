use std::fmt;
use std::str::FromStr;

use crate::config::{parse_value, unknown_key};
use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;

/// Which alignment terms enter the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LedaMode {
    Full,
    /// LEDA-C: continuous-feature term only.
    ContinuousOnly,
    /// LEDA-D: quantized-embedding term only.
    DiscreteOnly,
    MseOnly,
}

impl LedaMode {
    pub const ALL: [LedaMode; 4] = [
        LedaMode::Full,
        LedaMode::ContinuousOnly,
        LedaMode::DiscreteOnly,
        LedaMode::MseOnly,
    ];

    pub fn uses_continuous(self) -> bool {
        matches!(self, LedaMode::Full | LedaMode::ContinuousOnly)
    }

    pub fn uses_discrete(self) -> bool {
        matches!(self, LedaMode::Full | LedaMode::DiscreteOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LedaMode::Full => "full",
            LedaMode::ContinuousOnly => "continuous-only",
            LedaMode::DiscreteOnly => "discrete-only",
            LedaMode::MseOnly => "mse-only",
        }
    }

    /// Row label used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            LedaMode::Full => "LEDA",
            LedaMode::ContinuousOnly => "LEDA-C",
            LedaMode::DiscreteOnly => "LEDA-D",
            LedaMode::MseOnly => "MSE",
        }
    }
}

impl fmt::Display for LedaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LedaMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "leda" => Ok(LedaMode::Full),
            "continuous-only" | "continuous" | "leda-c" => Ok(LedaMode::ContinuousOnly),
            "discrete-only" | "discrete" | "leda-d" => Ok(LedaMode::DiscreteOnly),
            "mse-only" | "mse" => Ok(LedaMode::MseOnly),
            other => Err(format!(
                "unknown mode `{other}` (expected full, continuous-only, discrete-only or mse-only)"
            )),
        }
    }
}

/// How the discrete term reaches the denoised image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteGrad {
    /// Through the quantizer via the straight-through estimator.
    StraightThrough,
    /// No gradient; the term is reported but cannot train.
    Detached,
}

impl FromStr for DiscreteGrad {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "straight-through" | "ste" => Ok(DiscreteGrad::StraightThrough),
            "detached" => Ok(DiscreteGrad::Detached),
            other => Err(format!("unknown discrete gradient `{other}` (expected straight-through or detached)")),
        }
    }
}

impl fmt::Display for DiscreteGrad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscreteGrad::StraightThrough => "straight-through",
            DiscreteGrad::Detached => "detached",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    /// Channels of every hidden layer of the backbone.
    pub width: usize,
    pub lambda: f64,
    pub mode: LedaMode,
    pub discrete_grad: DiscreteGrad,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            width: 16,
            lambda: 0.5,
            mode: LedaMode::Full,
            discrete_grad: DiscreteGrad::StraightThrough,
            optimizer: OptimizerConfig {
                lr: 1e-3,
                lr_min: 1e-5,
                ..OptimizerConfig::default()
            },
            batch_size: 4,
            steps: 300,
            checkpoint_every: 100,
            seed: 0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda = {} must be finite and >= 0", self.lambda)));
        }
        if self.width == 0 || self.batch_size == 0 {
            return Err(Error::Config("denoiser width and batch size must be positive".into()));
        }
        self.optimizer.validate()
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vec![
            ("width".into(), self.width.to_string()),
            ("lambda".into(), self.lambda.to_string()),
            ("mode".into(), self.mode.to_string()),
            ("discrete_grad".into(), self.discrete_grad.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("steps".into(), self.steps.to_string()),
            ("checkpoint_every".into(), self.checkpoint_every.to_string()),
            ("seed".into(), self.seed.to_string()),
        ];
        out.extend(self.optimizer.to_kv("optimizer"));
        out
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "width" => self.width = parse_value(key, v)?,
            "lambda" => self.lambda = parse_value(key, v)?,
            "mode" => self.mode = parse_value(key, v)?,
            "discrete_grad" => self.discrete_grad = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "steps" => self.steps = parse_value(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            _ => {
                let handled = match key.strip_prefix("optimizer.") {
                    Some(rest) => self.optimizer.set(rest, v)?,
                    None => false,
                };
                if !handled {
                    return Err(unknown_key("denoiser", key));
                }
            }
        }
        Ok(())
    }

    pub fn from_kv<'a>(entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in entries {
            c.set(k, v)?;
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_flags() {
        assert!(LedaMode::Full.uses_continuous() && LedaMode::Full.uses_discrete());
        assert!(LedaMode::ContinuousOnly.uses_continuous() && !LedaMode::ContinuousOnly.uses_discrete());
        assert!(!LedaMode::DiscreteOnly.uses_continuous() && LedaMode::DiscreteOnly.uses_discrete());
        assert!(!LedaMode::MseOnly.uses_continuous() && !LedaMode::MseOnly.uses_discrete());
    }

    #[test]
    fn modes_parse_from_their_names_and_labels() {
        for m in LedaMode::ALL {
            assert_eq!(m.as_str().parse::<LedaMode>().unwrap(), m);
            assert_eq!(m.label().parse::<LedaMode>().unwrap(), m);
        }
        assert!("bogus".parse::<LedaMode>().is_err());
    }

    #[test]
    fn kv_round_trip_and_validation() {
        let mut c = DenoiserConfig {
            mode: LedaMode::DiscreteOnly,
            discrete_grad: DiscreteGrad::Detached,
            lambda: 0.25,
            ..DenoiserConfig::default()
        };
        let kv = c.to_kv();
        let back = DenoiserConfig::from_kv(kv.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, c);
        c.lambda = -1.0;
        assert!(c.validate().is_err());
        assert!(DenoiserConfig::default().set("mode", "nope").is_err());
    }
}
