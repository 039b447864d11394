//! Score files exported by an offline vision-language scoring step.
//!
//! ```text
//! scores 1
//! format = dense        (or: sparse)
//! vocab = 30522
//! count = 4800
//! end
//! ```
//!
//! followed by `count` binary records. Each record starts with the image id
//! as a little-endian `u32` byte length plus UTF-8 bytes. A dense record then
//! holds `vocab` little-endian `f32` scores; a sparse record holds a `u32`
//! count `k` and `k` pairs of (`u32` token id, `f32` score), with every
//! unlisted token scoring -1.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Scorer, SimilarityMatrix};
use crate::ctdata::CtImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFileKind {
    Dense,
    Sparse,
}

/// Score vectors keyed by image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrecomputedScores {
    vocab_size: usize,
    entries: BTreeMap<String, Vec<f32>>,
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::format("score file", "truncated record"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl PrecomputedScores {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, sim: SimilarityMatrix) -> Result<()> {
        if sim.vocab_size() != self.vocab_size {
            return Err(Error::Shape(format!(
                "image `{}` has {} scores, file vocabulary is {}",
                sim.image_id,
                sim.vocab_size(),
                self.vocab_size
            )));
        }
        self.entries.insert(sim.image_id, sim.scores);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_bytes(&self, kind: ScoreFileKind) -> Vec<u8> {
        let name = match kind {
            ScoreFileKind::Dense => "dense",
            ScoreFileKind::Sparse => "sparse",
        };
        let mut out = format!(
            "scores 1\nformat = {name}\nvocab = {}\ncount = {}\nend\n",
            self.vocab_size,
            self.entries.len()
        )
        .into_bytes();
        for (id, scores) in &self.entries {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            match kind {
                ScoreFileKind::Dense => {
                    for s in scores {
                        out.extend_from_slice(&s.to_le_bytes());
                    }
                }
                ScoreFileKind::Sparse => {
                    let listed: Vec<(usize, f32)> = scores
                        .iter()
                        .copied()
                        .enumerate()
                        .filter(|&(_, s)| s != -1.0)
                        .collect();
                    out.extend_from_slice(&(listed.len() as u32).to_le_bytes());
                    for (t, s) in listed {
                        out.extend_from_slice(&(t as u32).to_le_bytes());
                        out.extend_from_slice(&s.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const END: &[u8] = b"end\n";
        let split = bytes
            .windows(END.len())
            .position(|w| w == END)
            .ok_or_else(|| Error::format("score file", "missing `end` header line"))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::format("score file", "header is not UTF-8"))?;
        let mut lines = header.lines();
        if lines.next() != Some("scores 1") {
            return Err(Error::format("score file", "missing `scores 1` magic line"));
        }
        let mut fields = BTreeMap::new();
        for line in lines {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("score file", format!("bad header line `{line}`")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| Error::format("score file", format!("missing `{k}`")))
        };
        let kind = match get("format")?.as_str() {
            "dense" => ScoreFileKind::Dense,
            "sparse" => ScoreFileKind::Sparse,
            other => return Err(Error::format("score file", format!("unknown format `{other}`"))),
        };
        let vocab: usize = get("vocab")?
            .parse()
            .map_err(|_| Error::format("score file", "bad vocab size"))?;
        let count: usize = get("count")?
            .parse()
            .map_err(|_| Error::format("score file", "bad record count"))?;

        let mut reader = Reader {
            buf: &bytes[split + END.len()..],
        };
        let mut out = Self::new(vocab);
        for _ in 0..count {
            let len = reader.u32()? as usize;
            let id = std::str::from_utf8(reader.take(len)?)
                .map_err(|_| Error::format("score file", "image id is not UTF-8"))?
                .to_string();
            let scores = match kind {
                ScoreFileKind::Dense => (0..vocab).map(|_| reader.f32()).collect::<Result<Vec<_>>>()?,
                ScoreFileKind::Sparse => {
                    let mut scores = vec![-1.0f32; vocab];
                    let k = reader.u32()? as usize;
                    for _ in 0..k {
                        let t = reader.u32()? as usize;
                        let s = reader.f32()?;
                        let slot = scores.get_mut(t).ok_or_else(|| {
                            Error::format("score file", format!("token id {t} >= vocab {vocab}"))
                        })?;
                        *slot = s;
                    }
                    scores
                }
            };
            out.insert(SimilarityMatrix::new(id, scores)?)?;
        }
        if !reader.buf.is_empty() {
            return Err(Error::format("score file", "trailing bytes after last record"));
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path, kind: ScoreFileKind) -> Result<()> {
        fs::write(path, self.to_bytes(kind)).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl Scorer for PrecomputedScores {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn score(&self, img: &CtImage) -> Result<SimilarityMatrix> {
        let scores = self.entries.get(img.id()).ok_or_else(|| {
            Error::MissingPrerequisite(format!("no precomputed scores for image `{}`", img.id()))
        })?;
        SimilarityMatrix::new(img.id(), scores.clone())
    }
}
