use serde::{Deserialize, Serialize};

use crate::kb::Candidate;
use crate::scoring::{candidate_text, cosine, EmbeddingProvider};

use super::{DecisionSource, LinkDecision};

/// The cheap path. Implementations must be deterministic.
pub trait EasyLinker: Send + Sync {
    fn link(&self, mention_key: &str, mention: &str, context: &str, candidates: &[Candidate]) -> LinkDecision;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EasyWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for EasyWeights {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.5 }
    }
}

/// Per-candidate `alpha * prior + beta * cos(context, candidate)`.
///
/// With `beta == 0` no embeddings are computed. If an embedding fails, the
/// similarity term is dropped for every candidate and a warning recorded.
pub fn easy_scores(
    context: &str,
    candidates: &[Candidate],
    provider: &dyn EmbeddingProvider,
    weights: EasyWeights,
) -> (Vec<f64>, Option<String>) {
    let prior_only = || candidates.iter().map(|c| weights.alpha * c.prior).collect();
    if weights.beta == 0.0 {
        return (prior_only(), None);
    }
    let sims: Result<Vec<f64>, String> = provider.embed(context).map_err(|e| e.to_string()).and_then(|ctx| {
        candidates
            .iter()
            .map(|c| {
                provider
                    .embed(&candidate_text(c))
                    .and_then(|e| cosine(&ctx, &e))
                    .map_err(|e| e.to_string())
            })
            .collect()
    });
    match sims {
        Ok(sims) => (
            candidates
                .iter()
                .zip(sims)
                .map(|(c, s)| weights.alpha * c.prior + weights.beta * s)
                .collect(),
            None,
        ),
        Err(e) => (
            prior_only(),
            Some(format!("easy link: similarity unavailable ({e}); prior only")),
        ),
    }
}

/// Argmax of [`easy_scores`]; ties go to the better retrieval rank.
pub fn easy_link(
    mention_key: &str,
    context: &str,
    candidates: &[Candidate],
    provider: &dyn EmbeddingProvider,
    weights: EasyWeights,
) -> LinkDecision {
    let mut decision = LinkDecision::none(mention_key, DecisionSource::EasyPath);
    if candidates.is_empty() {
        return decision;
    }
    let (scores, warning) = easy_scores(context, candidates, provider, weights);
    decision.warnings.extend(warning);
    let best = candidates
        .iter()
        .zip(&scores)
        .reduce(|best, cur| {
            let better = cur.1 > best.1 || (cur.1 == best.1 && cur.0.rank < best.0.rank);
            if better {
                cur
            } else {
                best
            }
        })
        .map(|(c, _)| c.entity_id.clone());
    decision.chosen_entity_id = best;
    decision
}

/// Prior + context-similarity stand-in for a trained end-to-end linker.
pub struct PriorSimilarityLinker<P> {
    pub provider: P,
    pub weights: EasyWeights,
}

impl<P: EmbeddingProvider> EasyLinker for PriorSimilarityLinker<P> {
    fn link(&self, mention_key: &str, _mention: &str, context: &str, candidates: &[Candidate]) -> LinkDecision {
        easy_link(mention_key, context, candidates, &self.provider, self.weights)
    }
}
