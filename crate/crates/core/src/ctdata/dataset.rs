use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::image::CtImage;
use super::io::{read_cti, write_cti};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Strips a trailing dose tag (`_ldct`, `-ndct`, ...) so that externally
/// named slices still pair up.
pub fn id_stem(id: &str) -> &str {
    for tag in ["_ldct", "_ndct", "-ldct", "-ndct", ".ldct", ".ndct"] {
        if let Some(stem) = id.strip_suffix(tag) {
            return stem;
        }
    }
    id
}

/// A low-dose slice and its normal-dose reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    ldct: CtImage,
    ndct: CtImage,
}

impl PairedSample {
    pub fn new(ldct: CtImage, ndct: CtImage) -> Result<Self> {
        if (ldct.width(), ldct.height()) != (ndct.width(), ndct.height()) {
            return Err(Error::Shape(format!(
                "pair `{}`: ldct {}x{} vs ndct {}x{}",
                ndct.id(),
                ldct.width(),
                ldct.height(),
                ndct.width(),
                ndct.height()
            )));
        }
        if id_stem(ldct.id()) != id_stem(ndct.id()) {
            return Err(Error::Invalid(format!(
                "unpaired ids `{}` and `{}`",
                ldct.id(),
                ndct.id()
            )));
        }
        Ok(Self { ldct, ndct })
    }

    pub fn ldct(&self) -> &CtImage {
        &self.ldct
    }

    pub fn ndct(&self) -> &CtImage {
        &self.ndct
    }

    pub fn stem(&self) -> &str {
        id_stem(self.ndct.id())
    }
}

pub fn split_dir(root: &Path, split: Split, kind: &str) -> PathBuf {
    root.join(split.dir_name()).join(kind)
}

/// Writes both images under `<root>/<split>/{ldct,ndct}/` and returns the
/// written sidecar paths.
pub fn write_pair(root: &Path, split: Split, sample: &PairedSample) -> Result<[PathBuf; 2]> {
    Ok([
        write_cti(&split_dir(root, split, "ldct"), &sample.ldct)?,
        write_cti(&split_dir(root, split, "ndct"), &sample.ndct)?,
    ])
}

fn sidecars(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext == "cti") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every image in one directory, sorted by file name.
pub fn load_images(dir: &Path) -> Result<Vec<CtImage>> {
    sidecars(dir)?.par_iter().map(|p| read_cti(p)).collect()
}

/// Loads all pairs of a split, matched by id stem.
pub fn load_split(root: &Path, split: Split) -> Result<Vec<PairedSample>> {
    let ldct = load_images(&split_dir(root, split, "ldct"))?;
    let ndct = load_images(&split_dir(root, split, "ndct"))?;
    let mut by_stem: std::collections::BTreeMap<String, CtImage> = ldct
        .into_iter()
        .map(|img| (id_stem(img.id()).to_string(), img))
        .collect();
    let mut pairs = Vec::with_capacity(ndct.len());
    for reference in ndct {
        let low = by_stem.remove(id_stem(reference.id())).ok_or_else(|| {
            Error::Invalid(format!("ndct `{}` has no ldct partner", reference.id()))
        })?;
        pairs.push(PairedSample::new(low, reference)?);
    }
    if let Some(orphan) = by_stem.keys().next() {
        return Err(Error::Invalid(format!("ldct `{orphan}` has no ndct partner")));
    }
    Ok(pairs)
}
