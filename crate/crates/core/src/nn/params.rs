use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use sha2::{Digest, Sha256};

use super::archive::TensorArchive;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    Normal(f64),
}

impl Init {
    /// PyTorch's default for conv/linear layers: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn fan_in(fan_in: usize) -> Self {
        Init::Uniform(1.0 / (fan_in as f64).sqrt())
    }
}

#[derive(Debug, Clone)]
enum Param {
    Trainable(Var),
    Frozen(Tensor),
}

impl Param {
    fn tensor(&self) -> &Tensor {
        match self {
            Param::Trainable(v) => v.as_tensor(),
            Param::Frozen(t) => t,
        }
    }
}

#[derive(Debug, Clone)]
enum Source {
    /// Fresh parameters drawn from a per-name seeded stream.
    Seeded(u64),
    /// Values read from a checkpoint.
    Archive { archive: TensorArchive, trainable: bool },
}

/// Named parameters of one or more networks.
///
/// Fresh parameters are drawn from a stream seeded by `(seed, name)`, so
/// initialization does not depend on construction order. Parameters loaded
/// with `trainable = false` are plain constant tensors: the autograd engine
/// never tracks them and no gradient can reach them.
#[derive(Debug, Clone)]
pub struct ParamStore {
    dtype: DType,
    device: Device,
    source: Source,
    params: BTreeMap<String, Param>,
}

fn fnv1a(name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ParamStore {
    pub fn seeded(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            dtype,
            device: device.clone(),
            source: Source::Seeded(seed),
            params: BTreeMap::new(),
        }
    }

    pub fn from_archive(archive: TensorArchive, trainable: bool, dtype: DType, device: &Device) -> Self {
        Self {
            dtype,
            device: device.clone(),
            source: Source::Archive { archive, trainable },
            params: BTreeMap::new(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Fetches (creating on first use) the parameter `name`.
    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some(p) = self.params.get(name) {
            if p.tensor().dims() != shape {
                return Err(Error::Shape(format!(
                    "parameter `{name}` requested as {shape:?} but holds {:?}",
                    p.tensor().dims()
                )));
            }
            return Ok(p.tensor().clone());
        }
        let param = match &self.source {
            Source::Seeded(seed) => {
                let numel: usize = shape.iter().product();
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name));
                let values: Vec<f32> = match init {
                    Init::Zeros => vec![0.0; numel],
                    Init::Ones => vec![1.0; numel],
                    Init::Uniform(b) => {
                        let dist = Uniform::new_inclusive(-b, b)
                            .map_err(|e| Error::Invalid(format!("init bound {b}: {e}")))?;
                        (0..numel).map(|_| dist.sample(&mut rng) as f32).collect()
                    }
                    Init::Normal(std) => {
                        let dist = Normal::new(0.0, std)
                            .map_err(|e| Error::Invalid(format!("init std {std}: {e}")))?;
                        (0..numel).map(|_| dist.sample(&mut rng) as f32).collect()
                    }
                };
                let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
                Param::Trainable(Var::from_tensor(&t)?)
            }
            Source::Archive { archive, trainable } => {
                let t = archive.tensor(name, &self.device)?.to_dtype(self.dtype)?;
                if t.dims() != shape {
                    return Err(Error::Shape(format!(
                        "checkpoint tensor `{name}` is {:?}, model expects {shape:?}",
                        t.dims()
                    )));
                }
                if *trainable {
                    Param::Trainable(Var::from_tensor(&t)?)
                } else {
                    Param::Frozen(t)
                }
            }
        };
        let t = param.tensor().clone();
        self.params.insert(name.to_string(), param);
        Ok(t)
    }

    /// Trainable variables whose name starts with `prefix`, in name order.
    pub fn vars(&self, prefix: &str) -> Vec<Var> {
        self.params
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .filter_map(|(_, p)| match p {
                Param::Trainable(v) => Some(v.clone()),
                Param::Frozen(_) => None,
            })
            .collect()
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, p)| (n.as_str(), p.tensor()))
    }

    /// Names of parameters that can receive gradients.
    pub fn trainable_names(&self) -> Vec<&str> {
        self.params
            .iter()
            .filter(|(_, p)| matches!(p, Param::Trainable(_)))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// SHA-256 over names, shapes and f32 values of parameters under `prefix`.
    pub fn hash(&self, prefix: &str) -> Result<String> {
        let mut h = Sha256::new();
        for (name, p) in self.params.iter().filter(|(n, _)| n.starts_with(prefix)) {
            h.update(name.as_bytes());
            for d in p.tensor().dims() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()? {
                h.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Copies every parameter under `prefix` into an archive.
    pub fn to_archive(&self, prefix: &str, archive: &mut TensorArchive) -> Result<()> {
        for (name, p) in self.params.iter().filter(|(n, _)| n.starts_with(prefix)) {
            archive.insert(name, p.tensor())?;
        }
        Ok(())
    }

    /// Overwrites trainable parameters with values from `archive`.
    pub fn restore(&self, archive: &TensorArchive) -> Result<()> {
        for (name, p) in &self.params {
            if let Param::Trainable(v) = p {
                if archive.contains(name) {
                    v.set(&archive.tensor(name, &self.device)?.to_dtype(self.dtype)?)?;
                }
            }
        }
        Ok(())
    }
}
