use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use sha2::{Digest, Sha256};

use super::{score_image, PrecomputedScores, ScoreFileKind, Scorer, SimilarityMatrix};
use crate::ctdata::CtImage;
use crate::error::{Error, Result};

/// SHA-256 of an image's shape and pixel bytes.
pub fn image_hash(img: &CtImage) -> String {
    let mut h = Sha256::new();
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    for v in img.pixels() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Scores keyed by image id, each tagged with the hash of the pixels it was
/// computed from. A changed image invalidates its entry.
///
/// Readers share the lock; only a miss takes the write side.
#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: RwLock<BTreeMap<String, (String, SimilarityMatrix)>>,
}

fn hashes_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".hashes");
    PathBuf::from(name)
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(&self, img: &CtImage, scorer: &dyn Scorer) -> Result<SimilarityMatrix> {
        let hash = image_hash(img);
        {
            let entries = self.entries.read().expect("score cache lock poisoned");
            if let Some((h, sim)) = entries.get(img.id()) {
                if *h == hash && sim.vocab_size() == scorer.vocab_size() {
                    return Ok(sim.clone());
                }
            }
        }
        let sim = score_image(img, scorer)?;
        self.entries
            .write()
            .expect("score cache lock poisoned")
            .insert(img.id().to_string(), (hash, sim.clone()));
        Ok(sim)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("score cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes a dense score file plus a `<path>.hashes` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let entries = self.entries.read().expect("score cache lock poisoned");
        let vocab = entries.values().next().map_or(0, |(_, s)| s.vocab_size());
        let mut file = PrecomputedScores::new(vocab);
        let mut hashes = String::new();
        for (id, (hash, sim)) in entries.iter() {
            file.insert(sim.clone())?;
            hashes.push_str(&format!("{id}\t{hash}\n"));
        }
        file.write(path, ScoreFileKind::Dense)?;
        let hp = hashes_path(path);
        fs::write(&hp, hashes).map_err(|e| Error::io(&hp, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = PrecomputedScores::read(path)?;
        let hp = hashes_path(path);
        let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (id, hash) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("score cache hashes", format!("bad line `{line}`")))?;
            let scores = file
                .get(id)
                .ok_or_else(|| Error::format("score cache hashes", format!("`{id}` not in score file")))?;
            entries.insert(
                id.to_string(),
                (hash.to_string(), SimilarityMatrix::new(id, scores.to_vec())?),
            );
        }
        Ok(Self {
            entries: RwLock::new(entries),
        })
    }
}
