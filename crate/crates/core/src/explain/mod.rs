//! Human-readable token reports: which vocabulary entries an image
//! quantizes to, layer by layer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::codebook::{latent_to_grids, quantize_pyramid, LlmCodebook, TokenPyramid};
use crate::ctdata::{apply_window, CtImage, WindowSpec, WindowedImage};
use crate::error::{Error, Result};
use crate::leda::LatentEncoder;

/// Layers rendered when none are requested explicitly.
pub const DEFAULT_LAYERS: usize = 2;

/// Encodes an already windowed image and quantizes its latent.
pub fn tokens_for_windowed(img: &WindowedImage, ae: &dyn LatentEncoder) -> Result<TokenPyramid> {
    let x = Tensor::from_slice(&img.values, (1, 1, img.height, img.width), &Device::Cpu)?;
    let z = ae.encode(&x)?;
    let grid = latent_to_grids(&z)?
        .pop()
        .ok_or_else(|| Error::Shape("encoder returned an empty batch".into()))?;
    quantize_pyramid(&img.id, &grid, ae.codebook(), ae.geometry())
}

/// Token pyramid of an HU slice under the training window.
pub fn tokens_for_image(img: &CtImage, ae: &dyn LatentEncoder) -> Result<TokenPyramid> {
    tokens_for_windowed(&apply_window(img, WindowSpec::TRAINING)?, ae)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    /// The first two layers (fewer if the pyramid is shallower).
    Default,
    All,
    /// 1-based layer indices.
    Only(Vec<usize>),
}

impl LayerSelection {
    pub fn resolve(&self, depth: usize) -> Result<Vec<usize>> {
        match self {
            LayerSelection::Default => Ok((1..=depth.min(DEFAULT_LAYERS)).collect()),
            LayerSelection::All => Ok((1..=depth).collect()),
            LayerSelection::Only(layers) => {
                if layers.is_empty() {
                    return Err(Error::Invalid("no layers requested".into()));
                }
                if let Some(&bad) = layers.iter().find(|&&l| l == 0 || l > depth) {
                    return Err(Error::Invalid(format!(
                        "layer {bad} requested from a pyramid with layers 1..={depth}"
                    )));
                }
                let mut v = layers.clone();
                v.sort_unstable();
                v.dedup();
                Ok(v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub row: usize,
    pub col: usize,
    pub id: u32,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTokens {
    /// 1-based, coarsest first.
    pub layer: usize,
    pub height: usize,
    pub width: usize,
    pub tokens: Vec<TokenEntry>,
}

impl LayerTokens {
    pub fn frequencies(&self) -> BTreeMap<u32, usize> {
        let mut f = BTreeMap::new();
        for t in &self.tokens {
            *f.entry(t.id).or_insert(0) += 1;
        }
        f
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenReport {
    pub image_id: String,
    pub depth: usize,
    pub layers: Vec<LayerTokens>,
    pub coverage: String,
}

/// Token counts of a grid of ids.
pub fn frequency_summary(ids: &[u32]) -> BTreeMap<u32, usize> {
    let mut f = BTreeMap::new();
    for &id in ids {
        *f.entry(id).or_insert(0) += 1;
    }
    f
}

pub fn render_report(pyramid: &TokenPyramid, cb: &LlmCodebook, selection: &LayerSelection) -> Result<TokenReport> {
    let depth = pyramid.depth();
    let shown = selection.resolve(depth)?;
    let mut layers = Vec::with_capacity(shown.len());
    for &l in &shown {
        let grid = &pyramid.layers[l - 1];
        let tokens = grid
            .ids
            .iter()
            .enumerate()
            .map(|(p, &id)| {
                let token = cb
                    .token(id)
                    .ok_or_else(|| Error::Invalid(format!("token id {id} outside the vocabulary")))?;
                Ok(TokenEntry {
                    row: p / grid.width,
                    col: p % grid.width,
                    id,
                    token: token.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        layers.push(LayerTokens {
            layer: l,
            height: grid.height,
            width: grid.width,
            tokens,
        });
    }
    let list = shown.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
    let coverage = if shown.len() == depth {
        format!("all {depth} layers shown")
    } else {
        format!("layers {list} of {depth} shown")
    };
    Ok(TokenReport {
        image_id: pyramid.image_id.clone(),
        depth,
        layers,
        coverage,
    })
}

/// Most frequent tokens listed per layer.
const TOP_TOKENS: usize = 10;

impl TokenReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Token report for `{}` ({})", self.image_id, self.coverage);
        for layer in &self.layers {
            let _ = writeln!(out, "\nLayer {} ({}x{} tokens)", layer.layer, layer.height, layer.width);
            let cells: Vec<String> = layer.tokens.iter().map(|t| format!("{:?}", t.token)).collect();
            let w = cells.iter().map(|c| c.chars().count()).max().unwrap_or(0);
            for row in cells.chunks(layer.width) {
                let line: Vec<String> = row.iter().map(|c| format!("{c:<w$}")).collect();
                let _ = writeln!(out, "  {}", line.join(" ").trim_end());
            }
            let mut freq: Vec<(u32, usize)> = layer.frequencies().into_iter().collect();
            freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let _ = writeln!(out, "  most frequent:");
            for (id, n) in freq.iter().take(TOP_TOKENS) {
                let tok = layer
                    .tokens
                    .iter()
                    .find(|t| t.id == *id)
                    .map(|t| t.token.as_str())
                    .unwrap_or_default();
                let _ = writeln!(out, "    {tok:?} (id {id}): {n}");
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::format("token report", e.to_string()))
    }

    /// Writes `<stem>.txt` and the `<stem>.json` sidecar.
    pub fn write(&self, stem: &Path) -> Result<()> {
        let txt = stem.with_extension("txt");
        let json = stem.with_extension("json");
        std::fs::write(&txt, self.to_text()).map_err(|e| Error::io(&txt, e))?;
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))
    }
}
