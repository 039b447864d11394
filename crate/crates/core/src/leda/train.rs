use std::path::{Path, PathBuf};

use candle_core::{backprop::GradStore, DType, Device, Tensor};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backbone::RedCnn;
use super::config::DenoiserConfig;
use super::encoder::LatentEncoder;
use super::loss::{leda_loss, LedaLossReport};
use crate::autoencoder::{common_side, stack_images};
use crate::ctdata::{apply_window, invert_window, CtImage, PairedSample, WindowSpec, WindowedImage};
use crate::error::{Error, Result};
use crate::history::write_csv;
use crate::nn::{BatchSampler, ParamStore, ScheduledAdamW, TensorArchive};

/// Training-window LDCT/NDCT pixels.
#[derive(Debug, Clone)]
pub struct DenoiserSample {
    pub id: String,
    pub input: Vec<f32>,
    pub target: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct DenoiserDataset {
    pub side: usize,
    pub samples: Vec<DenoiserSample>,
}

impl DenoiserDataset {
    pub fn prepare(pairs: &[PairedSample]) -> Result<Self> {
        let side = common_side(pairs.iter().map(|p| p.ndct()))?;
        let samples = pairs
            .par_iter()
            .map(|p| {
                Ok(DenoiserSample {
                    id: p.stem().to_string(),
                    input: apply_window(p.ldct(), WindowSpec::TRAINING)?.values,
                    target: apply_window(p.ndct(), WindowSpec::TRAINING)?.values,
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

    /// `(input, target)`, each `(N, 1, side, side)`.
    pub fn batch(&self, idx: &[usize], dtype: DType, device: &Device) -> Result<(Tensor, Tensor)> {
        let picked: Vec<&DenoiserSample> = idx.iter().map(|&i| &self.samples[i]).collect();
        let x: Vec<&[f32]> = picked.iter().map(|s| s.input.as_slice()).collect();
        let y: Vec<&[f32]> = picked.iter().map(|s| s.target.as_slice()).collect();
        Ok((
            stack_images(&x, self.side, dtype, device)?,
            stack_images(&y, self.side, dtype, device)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserHistoryRow {
    pub step: usize,
    pub mse: f64,
    pub continuous: f64,
    pub discrete: f64,
    pub total: f64,
    pub lr: f64,
}

pub struct DenoiserStepOutput {
    pub row: DenoiserHistoryRow,
    pub report: LedaLossReport,
    pub grads: GradStore,
}

/// Fails if `grads` holds a nonzero gradient for any autoencoder parameter.
pub fn assert_no_encoder_grad(ae: &dyn LatentEncoder, grads: &GradStore) -> Result<()> {
    for (name, t) in ae.parameters() {
        if let Some(g) = grads.get(&t) {
            let peak = g.abs()?.max_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if peak != 0.0 {
                return Err(Error::UnfrozenAutoencoder(name));
            }
        }
    }
    Ok(())
}

pub const DENOISER_CHECKPOINT: &str = "denoiser";

pub struct DenoiserTrainer<'a> {
    config: DenoiserConfig,
    ae: &'a dyn LatentEncoder,
    store: ParamStore,
    net: RedCnn,
    opt: ScheduledAdamW,
    sampler: Option<BatchSampler>,
    step: usize,
    device: Device,
}

impl<'a> DenoiserTrainer<'a> {
    pub fn new(config: DenoiserConfig, ae: &'a dyn LatentEncoder) -> Result<Self> {
        config.validate()?;
        ae.ensure_frozen()?;
        let device = Device::Cpu;
        let mut store = ParamStore::seeded(config.seed, DType::F32, &device);
        let net = RedCnn::new(&mut store, config.width)?;
        let opt = ScheduledAdamW::new(store.vars("denoiser."), config.optimizer, config.steps)?;
        Ok(Self {
            config,
            ae,
            store,
            net,
            opt,
            sampler: None,
            step: 0,
            device,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn network(&self) -> &RedCnn {
        &self.net
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn train_step(&mut self, data: &DenoiserDataset) -> Result<DenoiserStepOutput> {
        let sampler = match &mut self.sampler {
            Some(s) => s,
            None => self
                .sampler
                .insert(BatchSampler::new(data.len(), self.config.batch_size, self.config.seed)?),
        };
        let idx = sampler.next_batch();
        let (x, y) = data.batch(&idx, DType::F32, &self.device)?;
        let y_hat = self.net.forward(&x)?;
        let cfg = &self.config;
        let (total, report) = leda_loss(&y, &y_hat, self.ae, cfg.lambda, cfg.mode, cfg.discrete_grad)?;
        if let Some(name) = report.non_finite() {
            return Err(Error::NonFinite {
                what: format!("denoiser loss component `{name}` at step {}", self.step + 1),
            });
        }
        let grads = total.backward()?;
        assert_no_encoder_grad(self.ae, &grads)?;
        let lr = self.opt.step(&grads, self.step)?;
        self.step += 1;
        Ok(DenoiserStepOutput {
            row: DenoiserHistoryRow {
                step: self.step,
                mse: report.mse,
                continuous: report.continuous,
                discrete: report.discrete,
                total: report.total,
                lr,
            },
            report,
            grads,
        })
    }

    pub fn archive(&self) -> Result<TensorArchive> {
        let mut a = TensorArchive::default();
        self.store.to_archive("denoiser.", &mut a)?;
        a.set_meta("kind", "denoiser");
        a.set_meta("step", self.step);
        for (k, v) in self.config.to_kv() {
            a.set_meta(&format!("config.denoiser.{k}"), v);
        }
        Ok(a)
    }
}

pub struct DenoiserTrainOutput {
    pub history: Vec<DenoiserHistoryRow>,
    pub archive: TensorArchive,
}

/// Runs `config.steps` steps against the frozen `ae`. File outputs mirror
/// the autoencoder trainer: periodic `ckpt-stepNNNNNN`, final `denoiser`,
/// `history.csv`, and `last_good` on a non-finite loss.
pub fn train_denoiser(
    data: &DenoiserDataset,
    ae: &dyn LatentEncoder,
    config: &DenoiserConfig,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(&DenoiserHistoryRow),
) -> Result<DenoiserTrainOutput> {
    let mut trainer = DenoiserTrainer::new(config.clone(), ae)?;
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
    if let Some(p) = path(DENOISER_CHECKPOINT) {
        archive.write(&p)?;
    }
    if let Some(p) = path("history.csv") {
        write_csv(&p, &history)?;
    }
    Ok(DenoiserTrainOutput { history, archive })
}

/// A trained denoiser, or the identity for evaluating the noisy input.
pub enum Denoiser {
    Passthrough,
    Network { net: RedCnn, config: DenoiserConfig },
}

impl Denoiser {
    pub fn from_archive(archive: TensorArchive) -> Result<Self> {
        match archive.meta.get("kind").map(String::as_str) {
            Some("denoiser") => {}
            other => {
                return Err(Error::format(
                    "checkpoint",
                    format!("expected a denoiser checkpoint, found kind {other:?}"),
                ))
            }
        }
        let entries = archive
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.denoiser.").map(|k| (k, v.as_str())));
        let config = DenoiserConfig::from_kv(entries)?;
        let mut store = ParamStore::from_archive(archive, false, DType::F32, &Device::Cpu);
        let net = RedCnn::new(&mut store, config.width)?;
        Ok(Denoiser::Network { net, config })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(TensorArchive::read(path)?)
    }

    /// Denoises a batch of equally sized HU images. The passthrough returns
    /// its inputs untouched.
    pub fn denoise(&self, images: &[CtImage]) -> Result<Vec<CtImage>> {
        let net = match self {
            Denoiser::Passthrough => return Ok(images.to_vec()),
            Denoiser::Network { net, .. } => net,
        };
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let (w, h) = (images[0].width(), images[0].height());
        let mut data = Vec::with_capacity(images.len() * w * h);
        for img in images {
            if (img.width(), img.height()) != (w, h) {
                return Err(Error::Shape("images in a denoising batch differ in size".into()));
            }
            data.extend(apply_window(img, WindowSpec::TRAINING)?.values);
        }
        let x = Tensor::from_vec(data, (images.len(), 1, h, w), &Device::Cpu)?;
        let out = net.forward(&x)?.flatten_all()?.to_vec1::<f32>()?;
        images
            .iter()
            .zip(out.chunks_exact(w * h))
            .map(|(img, values)| {
                let grid = WindowedImage {
                    id: img.id().to_string(),
                    width: w,
                    height: h,
                    values: values.to_vec(),
                };
                invert_window(&grid, WindowSpec::TRAINING)
            })
            .collect()
    }
}
