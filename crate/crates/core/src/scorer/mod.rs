//! Image-token similarity `s(y, t)` and per-layer candidate pools.
//!
//! The vision-language model that produces real scores is not part of this
//! crate: scores arrive either from a precomputed score file or from the
//! deterministic [`SyntheticScorer`], which tests and desk-scale runs use.

mod cache;
mod file;
mod pool;
mod synthetic;

pub use cache::{image_hash, ScoreCache};
pub use file::{PrecomputedScores, ScoreFileKind};
pub use pool::{build_candidate_pool, build_pools, CandidatePool};
pub use synthetic::{cosine_similarity, image_descriptor, SyntheticScorer, DESCRIPTOR_LEN};

use crate::ctdata::CtImage;
use crate::error::{Error, Result};

/// Scores of one image against every vocabulary token, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub image_id: String,
    pub scores: Vec<f32>,
}

impl SimilarityMatrix {
    pub fn new(image_id: impl Into<String>, scores: Vec<f32>) -> Result<Self> {
        let image_id = image_id.into();
        for (t, &s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("score of token {t} for image `{image_id}`"),
                });
            }
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::Invalid(format!(
                    "score {s} of token {t} for image `{image_id}` outside [-1, 1]"
                )));
            }
        }
        Ok(Self { image_id, scores })
    }

    pub fn vocab_size(&self) -> usize {
        self.scores.len()
    }
}

/// Anything that can score an image against the whole vocabulary.
/// Implementations are read-only after construction.
pub trait Scorer: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn score(&self, img: &CtImage) -> Result<SimilarityMatrix>;
}

pub fn score_image(img: &CtImage, scorer: &dyn Scorer) -> Result<SimilarityMatrix> {
    let sim = scorer.score(img)?;
    if sim.vocab_size() != scorer.vocab_size() {
        return Err(Error::Shape(format!(
            "scorer returned {} scores for a vocabulary of {}",
            sim.vocab_size(),
            scorer.vocab_size()
        )));
    }
    Ok(sim)
}
