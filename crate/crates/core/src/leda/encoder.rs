use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::autoencoder::{config_from_archive, Autoencoder, AutoencoderConfig};
use crate::codebook::{LlmCodebook, PyramidGeometry};
use crate::error::{Error, Result};
use crate::nn::{apply_frozen, ParamStore, TensorArchive};

/// The image-to-latent half of an autoencoder together with its quantizer,
/// as seen by the alignment loss.
pub trait LatentEncoder: Send + Sync {
    fn encode(&self, x: &Tensor) -> Result<Tensor>;
    fn codebook(&self) -> &LlmCodebook;
    fn geometry(&self) -> &PyramidGeometry;
    /// Every parameter tensor the encoder reads, by name.
    fn parameters(&self) -> Vec<(String, Tensor)>;

    /// Fails if any parameter is a tracked variable.
    fn ensure_frozen(&self) -> Result<()> {
        match self.parameters().into_iter().find(|(_, t)| t.is_variable()) {
            Some((name, _)) => Err(Error::UnfrozenAutoencoder(name)),
            None => Ok(()),
        }
    }
}

/// A trained autoencoder loaded with constant (untracked) weights.
pub struct FrozenAutoencoder {
    config: AutoencoderConfig,
    model: Autoencoder,
    store: ParamStore,
    codebook: LlmCodebook,
    geometry: PyramidGeometry,
    checkpoint_hash: String,
}

impl FrozenAutoencoder {
    pub fn from_archive(archive: TensorArchive, codebook: LlmCodebook) -> Result<Self> {
        let config = config_from_archive(&archive)?;
        if let Some(fp) = archive.meta.get("codebook.fingerprint") {
            if *fp != codebook.fingerprint() {
                return Err(Error::Invalid(
                    "the autoencoder checkpoint was trained against a different codebook".into(),
                ));
            }
        }
        if codebook.dim() != config.latent_dim {
            return Err(Error::Config(format!(
                "codebook dimension {} differs from latent_dim {}",
                codebook.dim(),
                config.latent_dim
            )));
        }
        let checkpoint_hash = archive.hash();
        let mut store = ParamStore::from_archive(archive, false, DType::F32, &Device::Cpu);
        let model = Autoencoder::new(&mut store, &config)?;
        Ok(Self {
            geometry: config.geometry()?,
            config,
            model,
            store,
            codebook,
            checkpoint_hash,
        })
    }

    pub fn load(path: &Path, codebook: LlmCodebook) -> Result<Self> {
        Self::from_archive(TensorArchive::read(path)?, codebook)
    }

    pub fn config(&self) -> &AutoencoderConfig {
        &self.config
    }

    pub fn model(&self) -> &Autoencoder {
        &self.model
    }

    /// Content hash of the checkpoint this model was loaded from.
    pub fn checkpoint_hash(&self) -> &str {
        &self.checkpoint_hash
    }

    /// Hash of the loaded encoder and decoder weights.
    pub fn param_hash(&self) -> Result<String> {
        self.store.hash("")
    }
}

impl LatentEncoder for FrozenAutoencoder {
    /// The encoder enters the caller's graph as a single node of `x`, so
    /// backpropagating through the latent never touches its weights.
    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        let f = self.config.downsample;
        if c != 1 || h % f != 0 || w % f != 0 {
            return Err(Error::Shape(format!(
                "autoencoder input {:?} must be one channel with sides divisible by {f}",
                x.dims()
            )));
        }
        let encoder = self.model.encoder.clone();
        apply_frozen(x, "frozen-encoder", move |t| {
            encoder
                .forward(t)
                .map_err(|e| candle_core::Error::Msg(e.to_string()))
        })
    }

    fn codebook(&self) -> &LlmCodebook {
        &self.codebook
    }

    fn geometry(&self) -> &PyramidGeometry {
        &self.geometry
    }

    fn parameters(&self) -> Vec<(String, Tensor)> {
        self.store
            .named_tensors()
            .map(|(n, t)| (n.to_string(), t.clone()))
            .collect()
    }
}

/// `encode(x) = x`: the image itself is the latent, quantized per pixel
/// against a codebook whose dimension equals the channel count.
pub struct IdentityAutoencoder {
    codebook: LlmCodebook,
    geometry: PyramidGeometry,
}

impl IdentityAutoencoder {
    /// Single-layer pyramid over an `h x w` image.
    pub fn new(codebook: LlmCodebook, h: usize, w: usize) -> Result<Self> {
        Ok(Self {
            codebook,
            geometry: PyramidGeometry::new(h, w, 1, 1)?,
        })
    }
}

impl LatentEncoder for IdentityAutoencoder {
    fn encode(&self, x: &Tensor) -> Result<Tensor> {
        let c = x.dims4()?.1;
        if c != self.codebook.dim() {
            return Err(Error::Shape(format!(
                "{c}-channel input for a {}-dimensional codebook",
                self.codebook.dim()
            )));
        }
        Ok(x.clone())
    }

    fn codebook(&self) -> &LlmCodebook {
        &self.codebook
    }

    fn geometry(&self) -> &PyramidGeometry {
        &self.geometry
    }

    fn parameters(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }
}
