use super::SimilarityMatrix;
use crate::error::{Error, Result};

/// Tokens whose score reaches the layer threshold, or the single best token
/// when none does.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    /// 1-based pyramid layer.
    pub layer: usize,
    pub threshold: f32,
    /// Sorted ascending.
    pub tokens: Vec<u32>,
    pub fallback: bool,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn build_candidate_pool(sim: &SimilarityMatrix, layer: usize, threshold: f32) -> Result<CandidatePool> {
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Invalid(format!("pool threshold {threshold} outside [-1, 1]")));
    }
    if sim.scores.is_empty() {
        return Err(Error::Invalid(format!("image `{}` has no scores", sim.image_id)));
    }
    let tokens: Vec<u32> = sim
        .scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s >= threshold)
        .map(|(t, _)| t as u32)
        .collect();
    if !tokens.is_empty() {
        return Ok(CandidatePool {
            layer,
            threshold,
            tokens,
            fallback: false,
        });
    }
    let mut best = 0usize;
    for (t, &s) in sim.scores.iter().enumerate() {
        if s > sim.scores[best] {
            best = t;
        }
    }
    Ok(CandidatePool {
        layer,
        threshold,
        tokens: vec![best as u32],
        fallback: true,
    })
}

/// One pool per layer, thresholds given coarsest layer first.
pub fn build_pools(sim: &SimilarityMatrix, thresholds: &[f32]) -> Result<Vec<CandidatePool>> {
    thresholds
        .iter()
        .enumerate()
        .map(|(l, &rho)| build_candidate_pool(sim, l + 1, rho))
        .collect()
}
