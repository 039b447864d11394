//! Tensor-side glue between a batch of latents and the quantizer.

use candle_core::{DType, Device, Tensor};
use rayon::prelude::*;

use super::grid::FeatureGrid;
use super::pyramid::{quantize_pyramid, PyramidGeometry, TokenPyramid};
use super::vocab::LlmCodebook;
use crate::error::{Error, Result};
use crate::nn::apply_frozen;

/// Forward value is exactly `quantized`; the backward pass hands the
/// incoming gradient to `z` unchanged and gives `quantized` none.
pub fn straight_through(z: &Tensor, quantized: &Tensor) -> Result<Tensor> {
    if z.dims() != quantized.dims() {
        return Err(Error::Shape(format!(
            "straight-through inputs {:?} vs {:?}",
            z.dims(),
            quantized.dims()
        )));
    }
    // z - sg(z) is exactly zero in the forward pass and the identity backward.
    Ok(quantized.detach().add(&(z - z.detach())?)?)
}

/// The frozen embedding table as constant tensors.
#[derive(Debug, Clone)]
pub struct CodebookTensors {
    /// `|V| x d`
    pub embeddings: Tensor,
    /// `d x |V|`, contiguous.
    pub embeddings_t: Tensor,
    /// `1 x |V|` squared row norms.
    pub norms_sq: Tensor,
}

impl CodebookTensors {
    pub fn new(cb: &LlmCodebook, dtype: DType, device: &Device) -> Result<Self> {
        let embeddings = Tensor::from_slice(cb.embeddings(), (cb.len(), cb.dim()), device)?.to_dtype(dtype)?;
        let embeddings_t = embeddings.t()?.contiguous()?;
        let norms_sq = embeddings.sqr()?.sum_keepdim(1)?.t()?.contiguous()?;
        Ok(Self {
            embeddings,
            embeddings_t,
            norms_sq,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.dims()[0]
    }

    /// Squared distances `(P x |V|)` from position-major vectors `(P x d)`.
    /// The table is captured by a frozen op, so gradients reach `vectors`
    /// only and are never computed for any codebook tensor.
    pub fn distances_sq(&self, vectors: &Tensor) -> Result<Tensor> {
        let et = self.embeddings_t.clone();
        let norms = self.norms_sq.clone();
        apply_frozen(vectors, "codebook-distances", move |v| {
            let v_sq = v.sqr()?.sum_keepdim(1)?;
            let cross = v.matmul(&et)?;
            v_sq.broadcast_sub(&(cross * 2.0)?)?.broadcast_add(&norms)
        })
    }
}

/// Splits a `(N, d, H, W)` latent batch into per-image grids.
pub fn latent_to_grids(z: &Tensor) -> Result<Vec<FeatureGrid>> {
    let (n, c, h, w) = z.dims4()?;
    let flat = z.detach().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
    flat.chunks_exact(c * h * w)
        .take(n)
        .map(|chunk| FeatureGrid::new(c, h, w, chunk.to_vec()))
        .collect()
}

/// Stacks per-image grids back into a `(N, d, H, W)` constant tensor.
pub fn grids_to_tensor(grids: &[&FeatureGrid], dtype: DType, device: &Device) -> Result<Tensor> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Invalid("cannot stack an empty batch".into()))?;
    let mut data = Vec::with_capacity(grids.len() * first.data.len());
    for g in grids {
        if (g.channels, g.height, g.width) != (first.channels, first.height, first.width) {
            return Err(Error::Shape("grids in a batch differ in shape".into()));
        }
        data.extend_from_slice(&g.data);
    }
    Ok(Tensor::from_vec(data, (grids.len(), first.channels, first.height, first.width), device)?.to_dtype(dtype)?)
}

/// Quantization of a latent batch: the per-image pyramids plus their
/// cumulative reconstructions as constant tensors, one per layer.
#[derive(Debug, Clone)]
pub struct BatchQuantization {
    pub pyramids: Vec<TokenPyramid>,
    /// `ẑ_{≤l}` for each layer, `(N, d, H', W')`, carrying no gradient.
    pub cumulative: Vec<Tensor>,
}

impl BatchQuantization {
    pub fn finest(&self) -> &Tensor {
        self.cumulative.last().expect("non-empty pyramid")
    }
}

pub fn quantize_batch(
    z: &Tensor,
    ids: &[String],
    cb: &LlmCodebook,
    geometry: &PyramidGeometry,
) -> Result<BatchQuantization> {
    let grids = latent_to_grids(z)?;
    if ids.len() != grids.len() {
        return Err(Error::Shape(format!("{} ids for a batch of {}", ids.len(), grids.len())));
    }
    let pyramids = grids
        .par_iter()
        .zip(ids.par_iter())
        .map(|(g, id)| quantize_pyramid(id, g, cb, geometry))
        .collect::<Result<Vec<_>>>()?;
    let cumulative = (0..geometry.depth())
        .map(|l| {
            let layer: Vec<&FeatureGrid> = pyramids.iter().map(|p| &p.cumulative[l]).collect();
            grids_to_tensor(&layer, z.dtype(), z.device())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchQuantization { pyramids, cumulative })
}

/// Average-pools a `(N, d, H', W')` latent onto every pyramid layer, keeping
/// the result attached to the graph.
pub fn pool_layers(z: &Tensor, geometry: &PyramidGeometry) -> Result<Vec<Tensor>> {
    (0..geometry.depth())
        .map(|l| {
            let (fy, fx) = geometry.pool_factor(l);
            if (fy, fx) == (1, 1) {
                Ok(z.clone())
            } else {
                Ok(z.avg_pool2d((fy, fx))?)
            }
        })
        .collect()
}
