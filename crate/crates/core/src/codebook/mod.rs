//! The frozen LLM codebook and the pyramid vector quantizer.

mod grid;
mod pyramid;
mod ste;
mod vocab;

pub use grid::{pool_to_layer, FeatureGrid};
pub use pyramid::{nearest_token, nearest_tokens, quantize_pyramid, PyramidGeometry, TokenGrid, TokenPyramid};
pub use ste::{
    grids_to_tensor, latent_to_grids, pool_layers, quantize_batch, straight_through, BatchQuantization,
    CodebookTensors,
};
pub use vocab::{decode_embeddings, encode_embeddings, LlmCodebook, EMBEDDING_MAGIC};
