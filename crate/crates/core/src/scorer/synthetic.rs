use super::{Scorer, SimilarityMatrix};
use crate::codebook::LlmCodebook;
use crate::ctdata::{apply_window, CtImage, WindowSpec};
use crate::error::Result;

const HISTOGRAM_BINS: usize = 16;
/// 16 histogram bins followed by 4 gradient statistics.
pub const DESCRIPTOR_LEN: usize = HISTOGRAM_BINS + 4;

/// Hand-crafted image summary: the normalized 16-bin histogram of
/// training-window intensities, then mean |dx|, mean |dy|, mean gradient
/// magnitude and its standard deviation (forward differences).
pub fn image_descriptor(img: &CtImage) -> Result<[f64; DESCRIPTOR_LEN]> {
    let win = apply_window(img, WindowSpec::TRAINING)?;
    let (w, h) = (win.width, win.height);
    let mut out = [0.0f64; DESCRIPTOR_LEN];
    let n = win.values.len() as f64;
    for &v in &win.values {
        let bin = ((v as f64 * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        out[bin] += 1.0 / n;
    }
    let at = |x: usize, y: usize| win.values[y * w + x] as f64;
    let mut mags = Vec::with_capacity(w * h);
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let gx = if x + 1 < w { at(x + 1, y) - at(x, y) } else { 0.0 };
            let gy = if y + 1 < h { at(x, y + 1) - at(x, y) } else { 0.0 };
            sx += gx.abs();
            sy += gy.abs();
            mags.push((gx * gx + gy * gy).sqrt());
        }
    }
    let mean_mag = mags.iter().sum::<f64>() / n;
    let var_mag = mags.iter().map(|m| (m - mean_mag).powi(2)).sum::<f64>() / n;
    out[HISTOGRAM_BINS] = sx / n;
    out[HISTOGRAM_BINS + 1] = sy / n;
    out[HISTOGRAM_BINS + 2] = mean_mag;
    out[HISTOGRAM_BINS + 3] = var_mag.sqrt();
    Ok(out)
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let y = y as f64;
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Deterministic stand-in for a vision-language scorer: cosine similarity
/// between the image descriptor (zero-padded or truncated to the embedding
/// dim) and each token embedding.
#[derive(Debug, Clone)]
pub struct SyntheticScorer {
    codebook: LlmCodebook,
}

impl SyntheticScorer {
    pub fn new(codebook: LlmCodebook) -> Self {
        Self { codebook }
    }

    pub fn descriptor_for_dim(img: &CtImage, dim: usize) -> Result<Vec<f64>> {
        let full = image_descriptor(img)?;
        let mut v = vec![0.0; dim];
        for (dst, src) in v.iter_mut().zip(full.iter()) {
            *dst = *src;
        }
        Ok(v)
    }
}

impl Scorer for SyntheticScorer {
    fn vocab_size(&self) -> usize {
        self.codebook.len()
    }

    fn score(&self, img: &CtImage) -> Result<SimilarityMatrix> {
        let desc = Self::descriptor_for_dim(img, self.codebook.dim())?;
        let scores = (0..self.codebook.len() as u32)
            .map(|t| cosine_similarity(&desc, self.codebook.embedding(t)) as f32)
            .collect();
        SimilarityMatrix::new(img.id(), scores)
    }
}
