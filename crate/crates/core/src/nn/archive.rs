//! Named-tensor archive used for checkpoints.
//!
//! A checkpoint `<stem>` is two files. `<stem>.manifest` is text:
//!
//! ```text
//! leda-archive 1
//! meta kind = autoencoder
//! meta step = 300
//! tensor decoder.conv_in.weight f32 64,16,3,3 0 36864
//! ```
//!
//! `<stem>.tensors` is the concatenated little-endian payload; each
//! `tensor` line gives name, dtype, comma-separated shape, byte offset and
//! byte length. Tensors are listed in name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    pub meta: BTreeMap<String, String>,
    tensors: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

pub fn manifest_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".manifest")
}

pub fn payload_path(stem: &Path) -> PathBuf {
    with_suffix(stem, ".tensors")
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Accepts either the stem or a path to one of its two files.
pub fn normalize_stem(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for suffix in [".manifest", ".tensors"] {
        if let Some(stem) = s.strip_suffix(suffix) {
            return PathBuf::from(stem);
        }
    }
    path.to_path_buf()
}

impl TensorArchive {
    pub fn insert(&mut self, name: &str, t: &Tensor) -> Result<()> {
        if name.contains(char::is_whitespace) {
            return Err(Error::Invalid(format!("tensor name `{name}` contains whitespace")));
        }
        let values = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        self.tensors.insert(name.to_string(), (t.dims().to_vec(), values));
        Ok(())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, name: &str, device: &Device) -> Result<Tensor> {
        let (shape, values) = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing tensor `{name}`")))?;
        Ok(Tensor::from_slice(values, shape.as_slice(), device)?)
    }

    fn encode(&self) -> (String, Vec<u8>) {
        let mut manifest = String::from("leda-archive 1\n");
        for (k, v) in &self.meta {
            manifest.push_str(&format!("meta {k} = {v}\n"));
        }
        let mut payload = Vec::new();
        for (name, (shape, values)) in &self.tensors {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            manifest.push_str(&format!(
                "tensor {name} f32 {} {} {}\n",
                if dims.is_empty() { "scalar".to_string() } else { dims.join(",") },
                payload.len(),
                values.len() * 4
            ));
            for v in values {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        (manifest, payload)
    }

    pub fn write(&self, stem: &Path) -> Result<()> {
        if let Some(parent) = stem.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let (manifest, payload) = self.encode();
        let pp = payload_path(stem);
        fs::write(&pp, payload).map_err(|e| Error::io(&pp, e))?;
        let mp = manifest_path(stem);
        fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let stem = normalize_stem(stem);
        let mp = manifest_path(&stem);
        if !mp.exists() {
            return Err(Error::MissingPrerequisite(format!("checkpoint {} not found", mp.display())));
        }
        let manifest = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let pp = payload_path(&stem);
        let payload = fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
        let mut lines = manifest.lines();
        if lines.next() != Some("leda-archive 1") {
            return Err(Error::format("checkpoint manifest", "missing `leda-archive 1` magic"));
        }
        let mut out = Self::default();
        for line in lines {
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest
                    .split_once(" = ")
                    .ok_or_else(|| Error::format("checkpoint manifest", format!("bad meta line `{line}`")))?;
                out.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                let bad = || Error::format("checkpoint manifest", format!("bad tensor line `{line}`"));
                let [name, dtype, dims, offset, len] = parts.as_slice() else {
                    return Err(bad());
                };
                if *dtype != "f32" {
                    return Err(Error::format("checkpoint manifest", format!("unsupported dtype `{dtype}`")));
                }
                let shape: Vec<usize> = if *dims == "scalar" {
                    Vec::new()
                } else {
                    dims.split(',').map(|d| d.parse().map_err(|_| bad())).collect::<Result<_>>()?
                };
                let offset: usize = offset.parse().map_err(|_| bad())?;
                let len: usize = len.parse().map_err(|_| bad())?;
                if len != shape.iter().product::<usize>() * 4 || offset + len > payload.len() {
                    return Err(Error::format(
                        "checkpoint payload",
                        format!("tensor `{name}` extent does not fit the payload"),
                    ));
                }
                let values = payload[offset..offset + len]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                out.tensors.insert(name.to_string(), (shape, values));
            } else if !line.trim().is_empty() {
                return Err(Error::format("checkpoint manifest", format!("unknown line `{line}`")));
            }
        }
        Ok(out)
    }

    /// SHA-256 of the encoded manifest and payload.
    pub fn hash(&self) -> String {
        let (manifest, payload) = self.encode();
        let mut h = Sha256::new();
        h.update(manifest.as_bytes());
        h.update(&payload);
        hex::encode(h.finalize())
    }
}

/// SHA-256 of a checkpoint's two files as stored on disk.
pub fn checkpoint_file_hash(stem: &Path) -> Result<String> {
    let stem = normalize_stem(stem);
    let mut h = Sha256::new();
    for p in [manifest_path(&stem), payload_path(&stem)] {
        h.update(fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dev = Device::Cpu;
        let mut a = TensorArchive::default();
        a.insert("enc.w", &Tensor::new(&[[1.5f32, -2.0], [0.25, 4.0]], &dev).unwrap()).unwrap();
        a.insert("enc.b", &Tensor::new(&[7.0f32], &dev).unwrap()).unwrap();
        a.set_meta("step", 12);
        a.set_meta("config.leda.lambda", 0.5);
        let stem = dir.path().join("ckpt");
        a.write(&stem).unwrap();
        let b = TensorArchive::read(&stem).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let again = TensorArchive::read(&manifest_path(&stem)).unwrap();
        assert_eq!(again, a);
        let t = b.tensor("enc.w", &dev).unwrap();
        assert_eq!(t.dims(), &[2, 2]);
    }

    #[test]
    fn missing_checkpoint_is_a_prerequisite_error() {
        let err = TensorArchive::read(Path::new("/nonexistent/ckpt")).unwrap_err();
        assert!(matches!(err, Error::MissingPrerequisite(_)));
    }

    #[test]
    fn names_with_spaces_rejected() {
        let mut a = TensorArchive::default();
        let t = Tensor::new(&[1.0f32], &Device::Cpu).unwrap();
        assert!(a.insert("bad name", &t).is_err());
    }
}
