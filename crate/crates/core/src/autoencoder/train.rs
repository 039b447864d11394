use std::path::{Path, PathBuf};

use candle_core::{backprop::GradStore, DType, Device, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::AutoencoderConfig;
use super::loss::{
    commit_loss, constant, hinge_discriminator_loss, hinge_generator_loss, mse, perceptual_loss, semantic_loss,
    total_loss, LossReport, VqganTerms,
};
use super::model::{Autoencoder, Discriminator, FeatureNet, RandomFeatureNet};
use crate::codebook::{pool_layers, quantize_batch, straight_through, CodebookTensors, LlmCodebook, PyramidGeometry};
use crate::ctdata::{apply_window, CtImage, WindowSpec};
use crate::error::{Error, Result};
use crate::history::write_csv;
use crate::nn::{scalar, BatchSampler, ParamStore, ScheduledAdamW, TensorArchive};
use crate::scorer::{build_pools, score_image, CandidatePool, Scorer};

/// One training image: training-window pixels plus its candidate pools.
#[derive(Debug, Clone)]
pub struct AeSample {
    pub id: String,
    pub pixels: Vec<f32>,
    pub pools: Vec<CandidatePool>,
}

#[derive(Debug, Clone)]
pub struct AeDataset {
    pub side: usize,
    pub samples: Vec<AeSample>,
}

/// Stacks `(N, 1, side, side)` from row-major pixel buffers.
pub(crate) fn stack_images(images: &[&[f32]], side: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut data = Vec::with_capacity(images.len() * side * side);
    for p in images {
        data.extend_from_slice(p);
    }
    Ok(Tensor::from_vec(data, (images.len(), 1, side, side), device)?.to_dtype(dtype)?)
}

/// All images must be square and share one side length.
pub(crate) fn common_side<'a>(mut images: impl Iterator<Item = &'a CtImage>) -> Result<usize> {
    let first = images
        .next()
        .ok_or_else(|| Error::Invalid("training set is empty".into()))?;
    let side = first.width();
    if first.height() != side {
        return Err(Error::Shape(format!("image `{}` is not square", first.id())));
    }
    for img in images {
        if img.width() != side || img.height() != side {
            return Err(Error::Shape(format!(
                "image `{}` is {}x{}, expected {side}x{side}",
                img.id(),
                img.width(),
                img.height()
            )));
        }
    }
    Ok(side)
}

impl AeDataset {
    /// Windows every image and builds its per-layer candidate pools.
    pub fn prepare(images: &[CtImage], scorer: &dyn Scorer, thresholds: &[f32]) -> Result<Self> {
        let side = common_side(images.iter())?;
        let samples = images
            .par_iter()
            .map(|img| {
                let win = apply_window(img, WindowSpec::TRAINING)?;
                let sim = score_image(img, scorer)?;
                Ok(AeSample {
                    id: img.id().to_string(),
                    pixels: win.values,
                    pools: build_pools(&sim, thresholds)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { side, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn batch(&self, idx: &[usize], dtype: DType, device: &Device) -> Result<(Tensor, Vec<String>, Vec<Vec<CandidatePool>>)> {
        let picked: Vec<&AeSample> = idx.iter().map(|&i| &self.samples[i]).collect();
        let pixels: Vec<&[f32]> = picked.iter().map(|s| s.pixels.as_slice()).collect();
        let x = stack_images(&pixels, self.side, dtype, device)?;
        Ok((
            x,
            picked.iter().map(|s| s.id.clone()).collect(),
            picked.iter().map(|s| s.pools.clone()).collect(),
        ))
    }
}

/// One row of the loss history CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeHistoryRow {
    pub step: usize,
    pub recon: f64,
    pub commit: f64,
    pub gan: f64,
    pub perceptual: f64,
    pub semantic: f64,
    pub omega: f64,
    pub total: f64,
    pub lr: f64,
}

impl AeHistoryRow {
    fn new(step: usize, r: &LossReport, lr: f64) -> Self {
        Self {
            step,
            recon: r.recon,
            commit: r.commit,
            gan: r.gan,
            perceptual: r.perceptual,
            semantic: r.semantic,
            omega: r.omega,
            total: r.total,
            lr,
        }
    }
}

pub struct AeStepOutput {
    pub row: AeHistoryRow,
    pub report: LossReport,
    /// Gradients of the generator objective, before the update.
    pub generator_grads: GradStore,
}

/// Seed of the frozen perceptual network, derived from the run seed.
pub fn perceptual_seed(seed: u64) -> u64 {
    seed ^ 0x5045_5243_4550_5431
}

/// Single-writer training state: model, discriminator, optimizers and the
/// batch stream.
pub struct AeTrainer {
    config: AutoencoderConfig,
    codebook: LlmCodebook,
    cbt: CodebookTensors,
    geometry: PyramidGeometry,
    store: ParamStore,
    model: Autoencoder,
    disc: Discriminator,
    features: Box<dyn FeatureNet>,
    gen_opt: ScheduledAdamW,
    disc_opt: ScheduledAdamW,
    sampler: Option<BatchSampler>,
    step: usize,
    device: Device,
}

impl AeTrainer {
    pub fn new(config: AutoencoderConfig, codebook: LlmCodebook) -> Result<Self> {
        let features = RandomFeatureNet::new(
            config.perceptual_channels,
            perceptual_seed(config.seed),
            DType::F32,
            &Device::Cpu,
        )?;
        Self::with_feature_net(config, codebook, Box::new(features))
    }

    pub fn with_feature_net(config: AutoencoderConfig, codebook: LlmCodebook, features: Box<dyn FeatureNet>) -> Result<Self> {
        config.validate()?;
        if codebook.dim() != config.latent_dim {
            return Err(Error::Config(format!(
                "codebook dimension {} differs from latent_dim {}",
                codebook.dim(),
                config.latent_dim
            )));
        }
        let device = Device::Cpu;
        let mut store = ParamStore::seeded(config.seed, DType::F32, &device);
        let model = Autoencoder::new(&mut store, &config)?;
        let disc = Discriminator::new(&mut store, config.disc_channels)?;
        let mut gen_vars = store.vars("encoder.");
        gen_vars.extend(store.vars("decoder."));
        let gen_opt = ScheduledAdamW::new(gen_vars, config.optimizer, config.steps)?;
        let disc_opt = ScheduledAdamW::new(store.vars("disc."), config.optimizer, config.steps)?;
        Ok(Self {
            cbt: CodebookTensors::new(&codebook, DType::F32, &device)?,
            geometry: config.geometry()?,
            config,
            codebook,
            store,
            model,
            disc,
            features,
            gen_opt,
            disc_opt,
            sampler: None,
            step: 0,
            device,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn model(&self) -> &Autoencoder {
        &self.model
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.disc
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn codebook_tensors(&self) -> &CodebookTensors {
        &self.cbt
    }

    /// One generator update, then (once enabled) one discriminator update.
    pub fn train_step(&mut self, data: &AeDataset) -> Result<AeStepOutput> {
        if data.side != self.config.image_size {
            return Err(Error::Shape(format!(
                "training images are {0}x{0}, config expects {1}x{1}",
                data.side, self.config.image_size
            )));
        }
        let sampler = match &mut self.sampler {
            Some(s) => s,
            None => self
                .sampler
                .insert(BatchSampler::new(data.len(), self.config.batch_size, self.config.seed)?),
        };
        let idx = sampler.next_batch();
        let s = self.step;
        let cfg = &self.config;
        let (x, ids, pools) = data.batch(&idx, DType::F32, &self.device)?;

        let z = self.model.encode(&x)?;
        let quant = quantize_batch(&z, &ids, &self.codebook, &self.geometry)?;
        let pooled = pool_layers(&z, &self.geometry)?;
        let x_rec = self.model.decode(&straight_through(&z, quant.finest())?)?;
        let disc_on = s >= cfg.disc_start;
        let recon = mse(&x_rec, &x)?;
        let terms = VqganTerms {
            commit: commit_loss(&z, &quant.cumulative)?,
            gan: if disc_on {
                hinge_generator_loss(&self.disc.forward(&x_rec)?)?
            } else {
                constant(0.0, &recon)?
            },
            perceptual: perceptual_loss(self.features.as_ref(), &x_rec, &x)?,
            recon,
        };
        let vq = terms.weighted(cfg.beta, cfg.gamma, cfg.eta)?;
        let sem = semantic_loss(&pooled, &pools, &self.cbt)?;
        let (total, omega) = total_loss(&vq, &sem, cfg.alpha)?;
        let report = LossReport {
            recon: scalar(&terms.recon)?,
            commit: scalar(&terms.commit)?,
            gan: scalar(&terms.gan)?,
            perceptual: scalar(&terms.perceptual)?,
            semantic: scalar(&sem)?,
            omega,
            total: scalar(&total)?,
        };
        if let Some(name) = report.non_finite() {
            return Err(Error::NonFinite {
                what: format!("autoencoder loss component `{name}` at step {}", s + 1),
            });
        }
        let grads = total.backward()?;
        let lr = self.gen_opt.step(&grads, s)?;

        if disc_on {
            let d_loss = hinge_discriminator_loss(&self.disc.forward(&x)?, &self.disc.forward(&x_rec.detach())?)?;
            if !scalar(&d_loss)?.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("discriminator loss at step {}", s + 1),
                });
            }
            self.disc_opt.step(&d_loss.backward()?, s)?;
        }
        self.step += 1;
        Ok(AeStepOutput {
            row: AeHistoryRow::new(self.step, &report, lr),
            report,
            generator_grads: grads,
        })
    }

    /// Encoder, decoder and discriminator weights plus a config echo.
    pub fn archive(&self) -> Result<TensorArchive> {
        let mut a = TensorArchive::default();
        self.store.to_archive("", &mut a)?;
        a.set_meta("kind", "autoencoder");
        a.set_meta("step", self.step);
        a.set_meta("codebook.fingerprint", self.codebook.fingerprint());
        a.set_meta("codebook.vocab_size", self.codebook.len());
        for (k, v) in self.config.to_kv() {
            a.set_meta(&format!("config.autoencoder.{k}"), v);
        }
        Ok(a)
    }
}

pub struct AeTrainOutput {
    pub history: Vec<AeHistoryRow>,
    pub archive: TensorArchive,
}

/// File stem of the final autoencoder checkpoint inside a run directory.
pub const AE_CHECKPOINT: &str = "autoencoder";

/// Runs `config.steps` steps. With `out_dir`, writes periodic checkpoints
/// (`ckpt-step000100`), the final `autoencoder` checkpoint and
/// `history.csv`; on a non-finite loss it writes `last_good` (the weights
/// before the failing step) and the history so far, then returns the error.
pub fn train_autoencoder(
    data: &AeDataset,
    codebook: &LlmCodebook,
    config: &AutoencoderConfig,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&AeHistoryRow),
) -> Result<AeTrainOutput> {
    let mut trainer = AeTrainer::new(config.clone(), codebook.clone())?;
    let mut history = Vec::with_capacity(config.steps);
    let path = |name: &str| -> Option<PathBuf> { out_dir.map(|d| d.join(name)) };
    while trainer.steps_done() < config.steps {
        match trainer.train_step(data) {
            Ok(out) => {
                progress(&out.row);
                history.push(out.row);
                let step = trainer.steps_done();
                if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 && step < config.steps {
                    if let Some(p) = path(&format!("ckpt-step{step:06}")) {
                        trainer.archive()?.write(&p)?;
                    }
                }
            }
            Err(e @ Error::NonFinite { .. }) => {
                if let Some(p) = path("last_good") {
                    trainer.archive()?.write(&p)?;
                }
                if let Some(p) = path("history.csv") {
                    write_csv(&p, &history)?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        }
    }
    let archive = trainer.archive()?;
    if let Some(p) = path(AE_CHECKPOINT) {
        archive.write(&p)?;
    }
    if let Some(p) = path("history.csv") {
        write_csv(&p, &history)?;
    }
    Ok(AeTrainOutput { history, archive })
}
