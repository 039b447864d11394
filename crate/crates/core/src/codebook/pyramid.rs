use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::grid::{pool_to_layer, FeatureGrid};
use super::vocab::LlmCodebook;
use crate::error::{Error, Result};

/// Per-layer token grid sizes, coarsest first. Successive layers grow by a
/// fixed ratio per side; the last layer matches the latent grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidGeometry {
    sides: Vec<(usize, usize)>,
}

impl PyramidGeometry {
    /// Geometry for a `latent_h x latent_w` grid with `depth` layers, each
    /// `ratio` times finer per side than the one before.
    pub fn new(latent_h: usize, latent_w: usize, depth: usize, ratio: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Invalid("pyramid depth must be >= 1".into()));
        }
        if ratio < 2 && depth > 1 {
            return Err(Error::Invalid(format!("pyramid ratio {ratio} must be >= 2")));
        }
        let span = ratio
            .checked_pow(depth as u32 - 1)
            .ok_or_else(|| Error::Invalid("pyramid ratio overflows".into()))?;
        if !latent_h.is_multiple_of(span) || !latent_w.is_multiple_of(span) {
            return Err(Error::Shape(format!(
                "a {latent_h}x{latent_w} latent cannot hold {depth} layers at ratio {ratio}"
            )));
        }
        let sides = (0..depth)
            .map(|l| {
                let f = ratio.pow((depth - 1 - l) as u32);
                (latent_h / f, latent_w / f)
            })
            .collect();
        Ok(Self { sides })
    }

    pub fn from_sides(sides: Vec<(usize, usize)>) -> Result<Self> {
        let Some(&(fh, fw)) = sides.last() else {
            return Err(Error::Invalid("pyramid needs at least one layer".into()));
        };
        for &(h, w) in &sides {
            if h == 0 || w == 0 || fh % h != 0 || fw % w != 0 {
                return Err(Error::Shape(format!(
                    "layer {h}x{w} does not tile the finest {fh}x{fw} grid"
                )));
            }
        }
        Ok(Self { sides })
    }

    pub fn depth(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[(usize, usize)] {
        &self.sides
    }

    pub fn finest(&self) -> (usize, usize) {
        *self.sides.last().expect("non-empty")
    }

    /// Pooling factor (rows, cols) from the finest grid down to layer `l` (0-based).
    pub fn pool_factor(&self, l: usize) -> (usize, usize) {
        let (fh, fw) = self.finest();
        let (h, w) = self.sides[l];
        (fh / h, fw / w)
    }

    pub fn token_counts(&self) -> Vec<usize> {
        self.sides.iter().map(|(h, w)| h * w).collect()
    }
}

/// Token ids of one pyramid layer, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenGrid {
    pub height: usize,
    pub width: usize,
    pub ids: Vec<u32>,
}

/// The quantized pyramid of one latent: per-layer ids, their embeddings, and
/// the cumulative reconstructions at the finest resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenPyramid {
    pub image_id: String,
    pub layers: Vec<TokenGrid>,
    /// `e(t_l)` per layer, `d x h_l x w_l`.
    pub layer_embeddings: Vec<FeatureGrid>,
    /// Running mean of the nearest-upsampled layer embeddings, `d x H' x W'`.
    pub cumulative: Vec<FeatureGrid>,
}

impl TokenPyramid {
    /// Rebuilds embeddings and cumulative grids from token ids alone.
    pub fn from_ids(image_id: impl Into<String>, layers: Vec<TokenGrid>, cb: &LlmCodebook) -> Result<Self> {
        let geometry = PyramidGeometry::from_sides(layers.iter().map(|g| (g.height, g.width)).collect())?;
        let (fh, fw) = geometry.finest();
        let d = cb.dim();
        let mut layer_embeddings = Vec::with_capacity(layers.len());
        let mut cumulative = Vec::with_capacity(layers.len());
        let mut running = vec![0.0f64; d * fh * fw];
        for (l, grid) in layers.iter().enumerate() {
            if grid.ids.len() != grid.height * grid.width {
                return Err(Error::Shape(format!(
                    "layer {} has {} ids for {}x{}",
                    l + 1,
                    grid.ids.len(),
                    grid.height,
                    grid.width
                )));
            }
            if let Some(bad) = grid.ids.iter().find(|&&id| id as usize >= cb.len()) {
                return Err(Error::Invalid(format!(
                    "token id {bad} out of range for a vocabulary of {}",
                    cb.len()
                )));
            }
            let plane = grid.height * grid.width;
            let mut emb = vec![0.0f32; d * plane];
            for (p, &id) in grid.ids.iter().enumerate() {
                for (c, &v) in cb.embedding(id).iter().enumerate() {
                    emb[c * plane + p] = v;
                }
            }
            let (ry, rx) = geometry.pool_factor(l);
            for c in 0..d {
                for y in 0..fh {
                    for x in 0..fw {
                        let id = grid.ids[(y / ry) * grid.width + x / rx];
                        running[(c * fh + y) * fw + x] += cb.embedding(id)[c] as f64;
                    }
                }
            }
            let count = (l + 1) as f64;
            cumulative.push(FeatureGrid {
                channels: d,
                height: fh,
                width: fw,
                data: running.iter().map(|&s| (s / count) as f32).collect(),
            });
            layer_embeddings.push(FeatureGrid {
                channels: d,
                height: grid.height,
                width: grid.width,
                data: emb,
            });
        }
        Ok(Self {
            image_id: image_id.into(),
            layers,
            layer_embeddings,
            cumulative,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `ẑ_{≤D}`, the decoder's input.
    pub fn finest_cumulative(&self) -> &FeatureGrid {
        self.cumulative.last().expect("non-empty pyramid")
    }

    /// Serializes the ids: a text header (depth and layer sizes) followed by
    /// every layer's ids as little-endian `u32`, coarsest layer first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = format!("token-pyramid 1\nid = {}\nlayers = {}\n", self.image_id, self.layers.len());
        for g in &self.layers {
            header.push_str(&format!("layer = {}x{}\n", g.height, g.width));
        }
        header.push_str("end\n");
        let mut out = header.into_bytes();
        for g in &self.layers {
            for id in &g.ids {
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], cb: &LlmCodebook) -> Result<Self> {
        const END: &[u8] = b"end\n";
        let split = bytes
            .windows(END.len())
            .position(|w| w == END)
            .ok_or_else(|| Error::format("token pyramid", "missing `end` header line"))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| Error::format("token pyramid", "header is not UTF-8"))?;
        let mut body = &bytes[split + END.len()..];
        let mut lines = header.lines();
        if lines.next() != Some("token-pyramid 1") {
            return Err(Error::format("token pyramid", "missing magic line"));
        }
        let mut image_id = String::new();
        let mut declared = None;
        let mut sides = Vec::new();
        for line in lines {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::format("token pyramid", format!("bad header line `{line}`")))?;
            match k {
                "id" => image_id = v.to_string(),
                "layers" => {
                    declared = Some(v.parse::<usize>().map_err(|_| Error::format("token pyramid", "bad layer count"))?)
                }
                "layer" => {
                    let (h, w) = v
                        .split_once('x')
                        .and_then(|(h, w)| Some((h.parse::<usize>().ok()?, w.parse::<usize>().ok()?)))
                        .ok_or_else(|| Error::format("token pyramid", format!("bad layer size `{v}`")))?;
                    sides.push((h, w));
                }
                other => return Err(Error::format("token pyramid", format!("unknown key `{other}`"))),
            }
        }
        if declared != Some(sides.len()) {
            return Err(Error::format("token pyramid", "layer count does not match layer lines"));
        }
        let mut layers = Vec::with_capacity(sides.len());
        for (h, w) in sides {
            let n = h * w * 4;
            if body.len() < n {
                return Err(Error::format("token pyramid", "truncated id payload"));
            }
            let ids = body[..n]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            body = &body[n..];
            layers.push(TokenGrid { height: h, width: w, ids });
        }
        if !body.is_empty() {
            return Err(Error::format("token pyramid", "trailing bytes after payload"));
        }
        Self::from_ids(image_id, layers, cb)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path, cb: &LlmCodebook) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, cb)
    }
}

/// Nearest-token lookup for every position of a position-major `(n x d)` buffer.
pub fn nearest_tokens(vectors: &[f32], cb: &LlmCodebook) -> Vec<u32> {
    vectors.par_chunks(cb.dim()).map(|v| cb.nearest(v)).collect()
}

pub fn nearest_token(v: &[f32], cb: &LlmCodebook) -> Result<u32> {
    if v.len() != cb.dim() {
        return Err(Error::Shape(format!(
            "query of length {} against a codebook of dim {}",
            v.len(),
            cb.dim()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            what: "quantizer query".into(),
        });
    }
    Ok(cb.nearest(v))
}

/// Pools the latent onto each layer and replaces every position by its
/// nearest codebook row.
pub fn quantize_pyramid(
    image_id: &str,
    latent: &FeatureGrid,
    cb: &LlmCodebook,
    geometry: &PyramidGeometry,
) -> Result<TokenPyramid> {
    if latent.channels != cb.dim() {
        return Err(Error::Shape(format!(
            "latent has {} channels but the codebook dim is {}",
            latent.channels,
            cb.dim()
        )));
    }
    if (latent.height, latent.width) != geometry.finest() {
        return Err(Error::Shape(format!(
            "latent grid {}x{} does not match the finest pyramid layer {:?}",
            latent.height,
            latent.width,
            geometry.finest()
        )));
    }
    let mut layers = Vec::with_capacity(geometry.depth());
    for &(h, w) in geometry.sides() {
        let pooled = pool_to_layer(latent, h, w)?;
        layers.push(TokenGrid {
            height: h,
            width: w,
            ids: nearest_tokens(&pooled.position_major(), cb),
        });
    }
    TokenPyramid::from_ids(image_id, layers, cb)
}
