use crate::codebook::PyramidGeometry;
use crate::config::{parse_list, parse_value, render_list, unknown_key};
use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderConfig {
    /// Square input side in pixels.
    pub image_size: usize,
    /// Spatial downsampling factor `f`; a power of two.
    pub downsample: usize,
    pub base_channels: usize,
    /// Channel multiplier per resolution level, `log2(f) + 1` entries.
    pub channel_mult: Vec<usize>,
    /// Residual blocks at each resolution level.
    pub res_blocks: usize,
    /// (residual, attention) pairs in the bottleneck.
    pub attn_blocks: usize,
    pub norm_groups: usize,
    /// Latent width `d`; must equal the codebook dimension.
    pub latent_dim: usize,
    pub pyramid_depth: usize,
    pub pyramid_ratio: usize,
    /// Candidate-pool threshold per layer, coarsest first.
    pub thresholds: Vec<f32>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
    pub disc_start: usize,
    pub disc_channels: usize,
    pub perceptual_channels: usize,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub steps: usize,
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl AutoencoderConfig {
    /// 64x64 inputs, `f = 16`, a 1x1 / 4x4 token pyramid and narrow layers.
    pub fn desk() -> Self {
        Self {
            image_size: 64,
            downsample: 16,
            base_channels: 8,
            channel_mult: vec![1, 2, 2, 4, 4],
            res_blocks: 1,
            attn_blocks: 1,
            norm_groups: 4,
            latent_dim: 16,
            pyramid_depth: 2,
            pyramid_ratio: 4,
            thresholds: vec![0.3, 0.25],
            alpha: 0.3,
            beta: 0.3,
            gamma: 0.1,
            eta: 0.1,
            disc_start: 500,
            disc_channels: 16,
            perceptual_channels: 8,
            optimizer: OptimizerConfig {
                lr: 2e-3,
                lr_min: 1e-5,
                ..OptimizerConfig::default()
            },
            batch_size: 4,
            steps: 300,
            checkpoint_every: 100,
            seed: 0,
        }
    }

    /// 512x512 inputs and a 2x2 / 8x8 / 32x32 pyramid: 4 levels x 1
    /// residual block plus 2 (residual, attention) pairs give 6 residual
    /// and 2 attention blocks per network.
    pub fn full() -> Self {
        Self {
            image_size: 512,
            downsample: 16,
            base_channels: 64,
            channel_mult: vec![1, 1, 2, 2, 4],
            res_blocks: 1,
            attn_blocks: 2,
            norm_groups: 32,
            latent_dim: 512,
            pyramid_depth: 3,
            pyramid_ratio: 4,
            thresholds: vec![0.95, 0.9, 0.8],
            alpha: 0.3,
            beta: 0.3,
            gamma: 0.1,
            eta: 0.1,
            disc_start: 500,
            disc_channels: 64,
            perceptual_channels: 32,
            optimizer: OptimizerConfig::default(),
            batch_size: 4,
            steps: 100_000,
            checkpoint_every: 5_000,
            seed: 0,
        }
    }

    /// Every field as `(key, value)` text, optimizer keys under `optimizer.`.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vec![
            ("image_size".into(), self.image_size.to_string()),
            ("downsample".into(), self.downsample.to_string()),
            ("base_channels".into(), self.base_channels.to_string()),
            ("channel_mult".into(), render_list(&self.channel_mult)),
            ("res_blocks".into(), self.res_blocks.to_string()),
            ("attn_blocks".into(), self.attn_blocks.to_string()),
            ("norm_groups".into(), self.norm_groups.to_string()),
            ("latent_dim".into(), self.latent_dim.to_string()),
            ("pyramid_depth".into(), self.pyramid_depth.to_string()),
            ("pyramid_ratio".into(), self.pyramid_ratio.to_string()),
            ("thresholds".into(), render_list(&self.thresholds)),
            ("alpha".into(), self.alpha.to_string()),
            ("beta".into(), self.beta.to_string()),
            ("gamma".into(), self.gamma.to_string()),
            ("eta".into(), self.eta.to_string()),
            ("disc_start".into(), self.disc_start.to_string()),
            ("disc_channels".into(), self.disc_channels.to_string()),
            ("perceptual_channels".into(), self.perceptual_channels.to_string()),
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
            "image_size" => self.image_size = parse_value(key, v)?,
            "downsample" => self.downsample = parse_value(key, v)?,
            "base_channels" => self.base_channels = parse_value(key, v)?,
            "channel_mult" => self.channel_mult = parse_list(key, v)?,
            "res_blocks" => self.res_blocks = parse_value(key, v)?,
            "attn_blocks" => self.attn_blocks = parse_value(key, v)?,
            "norm_groups" => self.norm_groups = parse_value(key, v)?,
            "latent_dim" => self.latent_dim = parse_value(key, v)?,
            "pyramid_depth" => self.pyramid_depth = parse_value(key, v)?,
            "pyramid_ratio" => self.pyramid_ratio = parse_value(key, v)?,
            "thresholds" => self.thresholds = parse_list(key, v)?,
            "alpha" => self.alpha = parse_value(key, v)?,
            "beta" => self.beta = parse_value(key, v)?,
            "gamma" => self.gamma = parse_value(key, v)?,
            "eta" => self.eta = parse_value(key, v)?,
            "disc_start" => self.disc_start = parse_value(key, v)?,
            "disc_channels" => self.disc_channels = parse_value(key, v)?,
            "perceptual_channels" => self.perceptual_channels = parse_value(key, v)?,
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
                    return Err(unknown_key("autoencoder", key));
                }
            }
        }
        Ok(())
    }

    /// Starts from the named preset (`desk` or `full`) and applies `entries`.
    pub fn from_kv<'a>(preset: &str, entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut c = match preset {
            "desk" => Self::desk(),
            "full" => Self::full(),
            other => return Err(Error::Config(format!("unknown preset `{other}` (expected desk or full)"))),
        };
        for (k, v) in entries {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn levels(&self) -> usize {
        self.downsample.trailing_zeros() as usize
    }

    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels * self.channel_mult[level]
    }

    pub fn latent_side(&self) -> usize {
        self.image_size / self.downsample
    }

    pub fn geometry(&self) -> Result<PyramidGeometry> {
        let s = self.latent_side();
        PyramidGeometry::new(s, s, self.pyramid_depth, self.pyramid_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !self.downsample.is_power_of_two() || self.downsample < 2 {
            return bad(format!("downsample factor {} is not a power of two >= 2", self.downsample));
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(self.downsample) {
            return bad(format!(
                "image size {} not divisible by downsample factor {}",
                self.image_size, self.downsample
            ));
        }
        if self.channel_mult.len() != self.levels() + 1 {
            return bad(format!(
                "channel_mult needs {} entries for f = {}, got {}",
                self.levels() + 1,
                self.downsample,
                self.channel_mult.len()
            ));
        }
        if self.base_channels == 0 || self.channel_mult.contains(&0) || self.latent_dim == 0 {
            return bad("channel counts must be positive".into());
        }
        for l in 0..=self.levels() {
            if !self.channels_at(l).is_multiple_of(self.norm_groups.min(self.channels_at(l))) {
                return bad(format!(
                    "{} channels at level {l} not divisible into {} groups",
                    self.channels_at(l),
                    self.norm_groups
                ));
            }
        }
        if self.thresholds.len() != self.pyramid_depth {
            return bad(format!(
                "{} thresholds for a {}-layer pyramid",
                self.thresholds.len(),
                self.pyramid_depth
            ));
        }
        if self.thresholds.iter().any(|t| !(-1.0..=1.0).contains(t)) {
            return bad("thresholds must lie in [-1, 1]".into());
        }
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("eta", self.eta)] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("loss weight {name} = {w} must be finite and >= 0"));
            }
        }
        if self.batch_size == 0 || self.disc_channels == 0 || self.perceptual_channels == 0 {
            return bad("batch size and network widths must be positive".into());
        }
        self.optimizer.validate()?;
        self.geometry().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        AutoencoderConfig::desk().validate().unwrap();
        AutoencoderConfig::full().validate().unwrap();
    }

    #[test]
    fn preset_pyramids() {
        let full = AutoencoderConfig::full().geometry().unwrap();
        assert_eq!(full.sides(), &[(2, 2), (8, 8), (32, 32)]);
        assert_eq!(full.token_counts(), vec![4, 64, 1024]);
        let desk = AutoencoderConfig::desk().geometry().unwrap();
        assert_eq!(desk.sides(), &[(1, 1), (4, 4)]);
    }

    #[test]
    fn kv_round_trip() {
        let mut c = AutoencoderConfig::desk();
        c.alpha = 0.125;
        c.thresholds = vec![0.5, 0.1];
        c.optimizer.lr = 3e-4;
        let kv = c.to_kv();
        let back = AutoencoderConfig::from_kv("full", kv.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, c);
        assert!(c.clone().set("nonsense", "1").is_err());
    }

    #[test]
    fn rejects_inconsistent_settings() {
        let mut c = AutoencoderConfig::desk();
        c.downsample = 12;
        assert!(c.validate().is_err());
        let mut c = AutoencoderConfig::desk();
        c.image_size = 72;
        assert!(c.validate().is_err());
        let mut c = AutoencoderConfig::desk();
        c.thresholds.pop();
        assert!(c.validate().is_err());
        let mut c = AutoencoderConfig::desk();
        c.beta = -0.1;
        assert!(c.validate().is_err());
    }
}
