use std::path::{Path, PathBuf};

use crate::autoencoder::AutoencoderConfig;
use crate::codebook::LlmCodebook;
use crate::config::{parse_kv_text, parse_list, parse_value, render_kv, section, KvMap};
use crate::ctdata::{PhantomSpec, WindowSpec};
use crate::error::{Error, Result};
use crate::leda::DenoiserConfig;

/// Where the frozen codebook comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CodebookSource {
    /// Vocabulary text file plus embedding matrix file.
    Files { vocab: PathBuf, embeddings: PathBuf },
    /// A seeded stand-in whose dimension follows `autoencoder.latent_dim`.
    Synthetic { size: usize, scale: f32, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub count_train: usize,
    pub count_test: usize,
    pub photon_count: f64,
    pub phantom: PhantomSpec,
}

/// Everything a command needs besides its positional inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub codebook: CodebookSource,
    pub autoencoder_preset: String,
    pub autoencoder: AutoencoderConfig,
    pub denoiser: DenoiserConfig,
    pub metric_window: WindowSpec,
}

/// Per-coordinate std of the synthetic embeddings, about that of exported
/// language-model embedding tables. Much larger values leave the untrained
/// encoder's latents nearest to a handful of small-norm rows and the
/// quantizer collapses onto one token within a few steps.
pub const SYNTHETIC_SCALE: f32 = 0.02;

const INFORMATIONAL: [&str; 2] = ["command", "input."];

impl RunConfig {
    /// Builds from a key/value map. Keys under `input.` and `command` (as
    /// written into config echoes) are ignored. The global `seed` applies
    /// to the phantoms and both trainers unless a section sets its own.
    pub fn from_map(map: &KvMap) -> Result<Self> {
        let seed: u64 = match map.get("seed") {
            Some(v) => parse_value("seed", v)?,
            None => 0,
        };

        let mut data = DataConfig {
            count_train: 32,
            count_test: 8,
            photon_count: 1e4,
            phantom: PhantomSpec::default().with_seed(seed),
        };
        for (k, v) in section(map, "data") {
            match k.as_str() {
                "count_train" => data.count_train = parse_value("data.count_train", &v)?,
                "count_test" => data.count_test = parse_value("data.count_test", &v)?,
                "photon_count" => data.photon_count = parse_value("data.photon_count", &v)?,
                _ => return Err(Error::Config(format!("unknown key `data.{k}`"))),
            }
        }
        for (k, v) in section(map, "phantom") {
            let key = format!("phantom.{k}");
            let p = &mut data.phantom;
            match k.as_str() {
                "size" => p.size = parse_value(&key, &v)?,
                "min_ellipses" => p.min_ellipses = parse_value(&key, &v)?,
                "max_ellipses" => p.max_ellipses = parse_value(&key, &v)?,
                "hu_lo" => p.hu_lo = parse_value(&key, &v)?,
                "hu_hi" => p.hu_hi = parse_value(&key, &v)?,
                "background_hu" => p.background_hu = parse_value(&key, &v)?,
                "edge_px" => p.edge_px = parse_value(&key, &v)?,
                "seed" => p.seed = parse_value(&key, &v)?,
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
        }
        data.phantom.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(data.photon_count > 0.0 && data.photon_count.is_finite()) {
            return Err(Error::Config("data.photon_count must be positive".into()));
        }

        let cb = section(map, "codebook");
        let codebook = match (cb.get("vocab"), cb.get("embeddings")) {
            (Some(v), Some(e)) => CodebookSource::Files {
                vocab: v.into(),
                embeddings: e.into(),
            },
            (None, None) => CodebookSource::Synthetic {
                size: cb.get("size").map(|v| parse_value("codebook.size", v)).transpose()?.unwrap_or(256),
                scale: cb.get("scale").map(|v| parse_value("codebook.scale", v)).transpose()?.unwrap_or(SYNTHETIC_SCALE),
                seed: cb.get("seed").map(|v| parse_value("codebook.seed", v)).transpose()?.unwrap_or(0),
            },
            _ => {
                return Err(Error::Config(
                    "codebook.vocab and codebook.embeddings must be given together".into(),
                ))
            }
        };
        if let Some(k) = cb.keys().find(|k| !["vocab", "embeddings", "size", "scale", "seed"].contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `codebook.{k}`")));
        }

        let ae_map = section(map, "autoencoder");
        let preset = ae_map.get("preset").cloned().unwrap_or_else(|| "desk".into());
        let ae_entries = ae_map
            .iter()
            .filter(|(k, _)| k.as_str() != "preset")
            .map(|(k, v)| (k.as_str(), v.as_str()));
        let mut autoencoder = AutoencoderConfig::from_kv(&preset, ae_entries)?;
        if !ae_map.contains_key("seed") {
            autoencoder.seed = seed;
        }
        autoencoder.validate()?;

        let den_map = section(map, "denoiser");
        let mut denoiser = DenoiserConfig::from_kv(den_map.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        if !den_map.contains_key("seed") {
            denoiser.seed = seed;
        }
        denoiser.validate()?;

        let metric_window = match map.get("eval.window") {
            Some(v) => {
                let b: Vec<f32> = parse_list("eval.window", v)?;
                if b.len() != 2 {
                    return Err(Error::Config("eval.window takes `lo,hi`".into()));
                }
                WindowSpec::new(b[0], b[1]).map_err(|e| Error::Config(e.to_string()))?
            }
            None => WindowSpec::ABDOMINAL,
        };

        let known = ["seed", "data.", "phantom.", "codebook.", "autoencoder.", "denoiser.", "eval.window"];
        for k in map.keys() {
            let ok = known.iter().chain(INFORMATIONAL.iter()).any(|p| {
                if p.ends_with('.') {
                    k.starts_with(p)
                } else {
                    k == p
                }
            });
            if !ok {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
        }

        Ok(Self {
            seed,
            data,
            codebook,
            autoencoder_preset: preset,
            autoencoder,
            denoiser,
            metric_window,
        })
    }

    /// Reads an optional config file, then applies `overrides` in order and
    /// finally the `seed` flag, which resets every seed.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self> {
        let mut map = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                    std::io::ErrorKind::NotFound => {
                        Error::MissingPrerequisite(format!("config file {} does not exist", p.display()))
                    }
                    _ => Error::io(p, e),
                })?;
                parse_kv_text(&text)?
            }
            None => KvMap::new(),
        };
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        if let Some(s) = seed {
            map.insert("seed".into(), s.to_string());
            for k in ["phantom.seed", "autoencoder.seed", "denoiser.seed"] {
                map.remove(k);
            }
        }
        Self::from_map(&map)
    }

    /// Full key/value form; `from_map(parse(to_map()))` reproduces `self`.
    pub fn to_map(&self) -> KvMap {
        let mut m = KvMap::new();
        m.insert("seed".into(), self.seed.to_string());
        m.insert("data.count_train".into(), self.data.count_train.to_string());
        m.insert("data.count_test".into(), self.data.count_test.to_string());
        m.insert("data.photon_count".into(), self.data.photon_count.to_string());
        let p = &self.data.phantom;
        for (k, v) in [
            ("size", p.size.to_string()),
            ("min_ellipses", p.min_ellipses.to_string()),
            ("max_ellipses", p.max_ellipses.to_string()),
            ("hu_lo", p.hu_lo.to_string()),
            ("hu_hi", p.hu_hi.to_string()),
            ("background_hu", p.background_hu.to_string()),
            ("edge_px", p.edge_px.to_string()),
            ("seed", p.seed.to_string()),
        ] {
            m.insert(format!("phantom.{k}"), v);
        }
        match &self.codebook {
            CodebookSource::Files { vocab, embeddings } => {
                m.insert("codebook.vocab".into(), vocab.display().to_string());
                m.insert("codebook.embeddings".into(), embeddings.display().to_string());
            }
            CodebookSource::Synthetic { size, scale, seed } => {
                m.insert("codebook.size".into(), size.to_string());
                m.insert("codebook.scale".into(), scale.to_string());
                m.insert("codebook.seed".into(), seed.to_string());
            }
        }
        m.insert("autoencoder.preset".into(), self.autoencoder_preset.clone());
        for (k, v) in self.autoencoder.to_kv() {
            m.insert(format!("autoencoder.{k}"), v);
        }
        for (k, v) in self.denoiser.to_kv() {
            m.insert(format!("denoiser.{k}"), v);
        }
        m.insert(
            "eval.window".into(),
            format!("{},{}", self.metric_window.lo(), self.metric_window.hi()),
        );
        m
    }

    pub fn render(&self) -> String {
        render_kv(&self.to_map())
    }

    pub fn load_codebook(&self) -> Result<LlmCodebook> {
        match &self.codebook {
            CodebookSource::Files { vocab, embeddings } => {
                for p in [vocab, embeddings] {
                    if !p.exists() {
                        return Err(Error::MissingPrerequisite(format!("codebook file {} does not exist", p.display())));
                    }
                }
                LlmCodebook::load(vocab, embeddings)
            }
            CodebookSource::Synthetic { size, scale, seed } => {
                LlmCodebook::synthetic(*size, self.autoencoder.latent_dim, *scale, *seed)
            }
        }
    }
}
