//! Small building blocks shared by the autoencoder and the denoiser:
//! seeded parameter storage, layers, the checkpoint archive and the
//! optimizer schedule.

mod archive;
mod frozen;
mod layers;
mod params;
mod unfold;

pub use archive::{checkpoint_file_hash, manifest_path, normalize_stem, payload_path, TensorArchive};
pub use frozen::apply_frozen;
pub use layers::{leaky_relu, upsample2x, AttnBlock, Conv2d, GroupNorm, ResBlock};
pub use params::{Init, ParamStore};
pub use unfold::{patch_conv, unfold};

use candle_core::{backprop::GradStore, Tensor, Var};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::parse_value;
use crate::error::{Error, Result};

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `total - 1`.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total <= 1 {
        return lr_max;
    }
    let t = (step.min(total - 1)) as f64 / (total - 1) as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            lr_min: 1e-6,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 1e-9,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        [
            ("lr", self.lr),
            ("lr_min", self.lr_min),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("weight_decay", self.weight_decay),
            ("eps", self.eps),
        ]
        .into_iter()
        .map(|(k, v)| (format!("{prefix}.{k}"), v.to_string()))
        .collect()
    }

    /// Sets one field by its key (without prefix).
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let slot = match key {
            "lr" => &mut self.lr,
            "lr_min" => &mut self.lr_min,
            "beta1" => &mut self.beta1,
            "beta2" => &mut self.beta2,
            "weight_decay" => &mut self.weight_decay,
            "eps" => &mut self.eps,
            _ => return Ok(false),
        };
        *slot = parse_value(key, value)?;
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr_min >= 0.0
            && self.lr_min <= self.lr
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.weight_decay >= 0.0
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// AdamW over a fixed variable set with a cosine learning-rate schedule.
pub struct ScheduledAdamW {
    inner: AdamW,
    config: OptimizerConfig,
    total_steps: usize,
}

impl ScheduledAdamW {
    pub fn new(vars: Vec<Var>, config: OptimizerConfig, total_steps: usize) -> Result<Self> {
        config.validate()?;
        let inner = AdamW::new(
            vars,
            ParamsAdamW {
                lr: config.lr,
                beta1: config.beta1,
                beta2: config.beta2,
                eps: config.eps,
                weight_decay: config.weight_decay,
            },
        )?;
        Ok(Self {
            inner,
            config,
            total_steps,
        })
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        cosine_lr(step, self.total_steps, self.config.lr, self.config.lr_min)
    }

    /// Applies one update at schedule position `step`; returns the lr used.
    pub fn step(&mut self, grads: &GradStore, step: usize) -> Result<f64> {
        let lr = self.lr_at(step);
        self.inner.set_learning_rate(lr);
        self.inner.step(grads)?;
        Ok(lr)
    }
}

/// Endless stream of mini-batches: a seeded shuffle of all indices per
/// epoch, cut into consecutive batches that may span epochs.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    len: usize,
    batch: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(len: usize, batch: usize, seed: u64) -> Result<Self> {
        if len == 0 || batch == 0 {
            return Err(Error::Invalid("cannot sample batches from an empty dataset".into()));
        }
        Ok(Self {
            len,
            batch,
            order: Vec::new(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.cursor == self.order.len() {
                self.order = (0..self.len).collect();
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Scalar value of a 0-d or 1-element tensor as `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.flatten_all()?.to_vec1::<f64>()?[0])
}
