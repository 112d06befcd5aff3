//! Per-candidate signals: three embedding cosines and the LLM confidence φ.
//!
//! For context vector `c`, mention vector `m` and candidate vectors `e_i`:
//!
//! * `theta1(i) = cos(c, e_i)`
//! * `theta2(i) = cos(m, e_i)`
//! * `theta3(i) = max_{j != i} cos(e_i, e_j)`, or 0 when there is no other candidate

mod embedding;
mod phi;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::Candidate;

pub use embedding::{
    cosine, hash_embed, EmbeddingError, EmbeddingProvider, EmbeddingVector, HashEmbedder, MemoizedProvider,
    RemoteEmbedder,
};
pub use phi::{build_phi_prompt, parse_phi_response, score_phi, PhiParseError, PhiScores, PHI_FALLBACK};

/// Which text failed to embed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedTarget {
    Context,
    Mention,
    Candidate(usize),
}

impl std::fmt::Display for EmbedTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbedTarget::Context => f.write_str("context"),
            EmbedTarget::Mention => f.write_str("mention"),
            EmbedTarget::Candidate(i) => write!(f, "candidate {i}"),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoringError {
    #[error("no candidates to score")]
    NoCandidates,
    #[error("embedding {target}: {source}")]
    Embedding {
        target: EmbedTarget,
        #[source]
        source: EmbeddingError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaScores {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScores {
    pub entity_id: String,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub phi: f64,
}

impl CandidateScores {
    pub fn new(entity_id: impl Into<String>, thetas: ThetaScores, phi: f64) -> Self {
        Self {
            entity_id: entity_id.into(),
            theta1: thetas.theta1,
            theta2: thetas.theta2,
            theta3: thetas.theta3,
            phi,
        }
    }
}

/// `"Title: description"`, or just the title when the description is empty.
pub fn candidate_text(c: &Candidate) -> String {
    let desc = c.description.trim();
    if desc.is_empty() {
        c.title.clone()
    } else {
        format!("{}: {}", c.title, desc)
    }
}

pub fn score_thetas(
    provider: &dyn EmbeddingProvider,
    context: &str,
    mention: &str,
    candidates: &[Candidate],
) -> Result<Vec<ThetaScores>, ScoringError> {
    if candidates.is_empty() {
        return Err(ScoringError::NoCandidates);
    }
    let embed = |text: &str, target| {
        provider
            .embed(text)
            .map_err(|source| ScoringError::Embedding { target, source })
    };
    let cos = |a, b, target| cosine(a, b).map_err(|source| ScoringError::Embedding { target, source });

    let ctx = embed(context, EmbedTarget::Context)?;
    let men = embed(mention, EmbedTarget::Mention)?;
    let ents = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| embed(&candidate_text(c), EmbedTarget::Candidate(i)))
        .collect::<Result<Vec<_>, _>>()?;

    let n = ents.len();
    let mut pairwise = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = cos(&ents[i], &ents[j], EmbedTarget::Candidate(i))?;
            pairwise[i][j] = c;
            pairwise[j][i] = c;
        }
    }

    ents.iter()
        .enumerate()
        .map(|(i, e)| {
            let theta3 = (0..n)
                .filter(|&j| j != i)
                .map(|j| pairwise[i][j])
                .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
                .unwrap_or(0.0);
            Ok(ThetaScores {
                theta1: cos(&ctx, e, EmbedTarget::Candidate(i))?,
                theta2: cos(&men, e, EmbedTarget::Candidate(i))?,
                theta3,
            })
        })
        .collect()
}
