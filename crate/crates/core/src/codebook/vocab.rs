use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Magic prefix of the embedding table file, followed by two little-endian
/// `u64` dims (rows, cols) and `rows * cols` little-endian `f32` values.
pub const EMBEDDING_MAGIC: &[u8; 8] = b"LLMEMB01";

/// A frozen text-token vocabulary and its embedding table.
///
/// There is no mutable access to the table: once loaded, the embeddings are
/// the same bytes for the lifetime of the value, which is what lets training
/// runs assert that the codebook never moved.
#[derive(Debug, Clone)]
pub struct LlmCodebook {
    tokens: Arc<[String]>,
    index: Arc<HashMap<String, u32>>,
    dim: usize,
    embeddings: Arc<[f32]>,
    norms_sq: Arc<[f64]>,
}

impl LlmCodebook {
    pub fn new(tokens: Vec<String>, embeddings: Vec<f32>, dim: usize) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::Invalid(format!(
                "codebook needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        if dim == 0 {
            return Err(Error::Invalid("codebook embedding dim must be >= 1".into()));
        }
        if embeddings.len() != tokens.len() * dim {
            return Err(Error::Shape(format!(
                "{} embedding values for {} tokens of dim {dim}",
                embeddings.len(),
                tokens.len()
            )));
        }
        if let Some(pos) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("embedding row {} col {}", pos / dim, pos % dim),
            });
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Invalid(format!("duplicate token `{t}` in vocabulary")));
            }
        }
        let norms_sq = embeddings
            .chunks_exact(dim)
            .map(|row| row.iter().map(|&v| (v as f64) * (v as f64)).sum())
            .collect::<Vec<f64>>();
        Ok(Self {
            tokens: tokens.into(),
            index: Arc::new(index),
            dim,
            embeddings: embeddings.into(),
            norms_sq: norms_sq.into(),
        })
    }

    /// Reads a vocabulary file (one token per line, line number = id) and an
    /// embedding table.
    pub fn load(vocab_path: &Path, embedding_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let tokens: Vec<String> = text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect();
        let bytes = fs::read(embedding_path).map_err(|e| Error::io(embedding_path, e))?;
        let (rows, cols, values) = decode_embeddings(&bytes)?;
        if rows != tokens.len() {
            return Err(Error::Shape(format!(
                "vocabulary has {} tokens but embedding table has {rows} rows",
                tokens.len()
            )));
        }
        Self::new(tokens, values, cols)
    }

    pub fn save(&self, vocab_path: &Path, embedding_path: &Path) -> Result<()> {
        let mut vocab = self.tokens.join("\n");
        vocab.push('\n');
        fs::write(vocab_path, vocab).map_err(|e| Error::io(vocab_path, e))?;
        fs::write(embedding_path, encode_embeddings(self.len(), self.dim, &self.embeddings))
            .map_err(|e| Error::io(embedding_path, e))
    }

    /// A deterministic stand-in vocabulary for desk-scale runs: a short list
    /// of radiology words followed by numbered filler tokens, with Gaussian
    /// embeddings of standard deviation `scale`.
    pub fn synthetic(vocab_size: usize, dim: usize, scale: f32, seed: u64) -> Result<Self> {
        let mut tokens: Vec<String> = RADIOLOGY_WORDS
            .iter()
            .take(vocab_size)
            .map(|s| s.to_string())
            .collect();
        while tokens.len() < vocab_size {
            tokens.push(format!("tok{:05}", tokens.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, scale)
            .map_err(|e| Error::Invalid(format!("embedding scale {scale}: {e}")))?;
        let embeddings = (0..vocab_size * dim).map(|_| normal.sample(&mut rng)).collect();
        Self::new(tokens, embeddings, dim)
    }

    /// Copy with every row scaled to unit L2 norm (zero rows stay zero).
    pub fn normalized(&self) -> Result<Self> {
        let mut values = self.embeddings.to_vec();
        for (row, n2) in values.chunks_exact_mut(self.dim).zip(self.norms_sq.iter()) {
            if *n2 > 0.0 {
                let inv = 1.0 / n2.sqrt();
                row.iter_mut().for_each(|v| *v = (*v as f64 * inv) as f32);
            }
        }
        Self::new(self.tokens.to_vec(), values, self.dim)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn embedding(&self, id: u32) -> &[f32] {
        let start = id as usize * self.dim;
        &self.embeddings[start..start + self.dim]
    }

    /// Row-major `|V| x d` table.
    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn norm_sq(&self, id: u32) -> f64 {
        self.norms_sq[id as usize]
    }

    /// Squared distances from `v` to every row, via the expanded form
    /// `|v|^2 - 2 v.e + |e|^2` with cached row norms.
    pub fn distances_sq(&self, v: &[f32]) -> Vec<f64> {
        let v_sq: f64 = v.iter().map(|&x| (x as f64) * (x as f64)).sum();
        self.embeddings
            .chunks_exact(self.dim)
            .zip(self.norms_sq.iter())
            .map(|(row, n2)| v_sq - 2.0 * dot(v, row) + n2)
            .collect()
    }

    /// Index of the closest row in squared Euclidean distance, lowest id on ties.
    pub fn nearest(&self, v: &[f32]) -> u32 {
        debug_assert_eq!(v.len(), self.dim);
        // |v|^2 is shared by every candidate and does not change the argmin.
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (i, (row, n2)) in self.embeddings.chunks_exact(self.dim).zip(self.norms_sq.iter()).enumerate() {
            let d = n2 - 2.0 * dot(v, row);
            if d < best_d {
                best_d = d;
                best = i as u32;
            }
        }
        best
    }

    /// SHA-256 over the vocabulary and the raw embedding bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tokens.iter() {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.update((self.dim as u64).to_le_bytes());
        for v in self.embeddings.iter() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn encode_embeddings(rows: usize, cols: usize, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + values.len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < 24 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(Error::format("embedding table", "missing LLMEMB01 header"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let body = &bytes[24..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("embedding table", "dims overflow"))?;
    if body.len() != expected {
        return Err(Error::Shape(format!(
            "embedding table declares {rows}x{cols} but holds {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((rows, cols, values))
}

const RADIOLOGY_WORDS: &[&str] = &[
    "ct", "dose", "abdominal", "liver", "organ", "cancer", "kidney", "spleen", "bone", "spine",
    "vertebra", "rib", "aorta", "vessel", "fat", "muscle", "tissue", "lesion", "tumor", "cyst",
    "contrast", "enhancement", "density", "noise", "artifact", "axial", "slice", "scan", "image",
    "pancreas", "stomach", "bowel", "colon", "gallbladder", "bladder", "pelvis", "lung", "air",
    "water", "soft", "dense", "hypodense", "hyperdense", "mass", "nodule", "normal", "abnormal",
    "left", "right", "anterior", "posterior", "medial", "lateral", "upper", "lower", "small",
    "large", "round", "oval", "margin", "boundary", "edge", "texture", "smooth",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn two_token() -> LlmCodebook {
        LlmCodebook::new(vec!["a".into(), "b".into()], vec![0.0, 1.0], 1).unwrap()
    }

    #[test]
    fn two_token_dims() {
        let cb = two_token();
        assert_eq!((cb.len(), cb.dim()), (2, 1));
        assert_eq!(cb.embedding(1), &[1.0]);
        assert_eq!(cb.id_of("b"), Some(1));
    }

    #[test]
    fn duplicate_tokens_rejected() {
        let err = LlmCodebook::new(vec!["liver".into(), "liver".into()], vec![0.0, 1.0], 1).unwrap_err();
        assert!(err.to_string().contains("liver"));
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(LlmCodebook::new(vec!["a".into()], vec![0.0], 1).is_err());
        assert!(LlmCodebook::new(vec!["a".into(), "b".into()], vec![0.0], 1).is_err());
        assert!(LlmCodebook::new(vec!["a".into(), "b".into()], vec![0.0, f32::INFINITY], 1).is_err());
    }

    #[test]
    fn file_round_trip_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let cb = LlmCodebook::synthetic(70, 3, 0.5, 1).unwrap();
        let (v, e) = (dir.path().join("vocab.txt"), dir.path().join("emb.bin"));
        cb.save(&v, &e).unwrap();
        let back = LlmCodebook::load(&v, &e).unwrap();
        assert_eq!(back.fingerprint(), cb.fingerprint());
        assert_eq!(back.token(0), Some("ct"));

        fs::write(&v, "a\nb\n").unwrap();
        assert!(LlmCodebook::load(&v, &e).is_err());
    }

    #[test]
    fn nearest_by_l2() {
        let cb = LlmCodebook::new(vec!["x".into(), "y".into()], vec![0.0, 0.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(cb.nearest(&[0.9, 0.8]), 1);
        assert_eq!(cb.nearest(&[0.0, 0.0]), 0);
        // equidistant: lowest id wins
        assert_eq!(cb.nearest(&[0.5, 0.5]), 0);
    }

    #[test]
    fn normalized_rows_are_unit() {
        let cb = LlmCodebook::synthetic(8, 4, 2.0, 3).unwrap().normalized().unwrap();
        for i in 0..8 {
            assert!((cb.norm_sq(i) - 1.0).abs() < 1e-6);
        }
    }
}
