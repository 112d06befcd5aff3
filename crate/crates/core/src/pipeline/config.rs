use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::kb::DEFAULT_CANDIDATE_LIMIT;
use crate::linker::{EasyWeights, StrategyKind};
use crate::llm::{ApproxTokenizer, BpeTokenizer, MergeTable, Tokenizer, TokenizerError};
use crate::router::ForestConfig;
use crate::scoring::{EmbeddingProvider, HashEmbedder, MemoizedProvider, RemoteEmbedder};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TokenizerConfig {
    /// `ceil(bytes / 4)`.
    Approx,
    Bpe {
        merges: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Hash { dim: usize, seed: u64 },
    Remote { url: String, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Answers from a recorded cache; `strict` turns misses into errors.
    Replay { cache: PathBuf, strict: bool },
    /// OpenAI-style chat completions; URL and key come from the environment.
    Http {
        #[serde(default)]
        record_to: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub candidate_limit: usize,
    pub router_candidates: usize,
    pub strategy: StrategyKind,
    pub easy_weights: EasyWeights,
    pub forest: ForestConfig,
    pub tau_override: Option<f64>,
    pub scoring_model: String,
    pub reasoning_model: String,
    pub scoring_max_tokens: u32,
    pub reasoning_max_tokens: u32,
    pub backend: BackendConfig,
    pub tokenizer: TokenizerConfig,
    pub embedding: EmbeddingConfig,
    /// Mentions processed at once.
    pub concurrency: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            candidate_limit: DEFAULT_CANDIDATE_LIMIT,
            router_candidates: 10,
            strategy: StrategyKind::FewShotCot,
            easy_weights: EasyWeights::default(),
            forest: ForestConfig::default(),
            tau_override: None,
            scoring_model: "claude-3-haiku".into(),
            reasoning_model: "claude-3.5-sonnet".into(),
            scoring_max_tokens: 256,
            reasoning_max_tokens: 512,
            backend: BackendConfig::Replay {
                cache: PathBuf::from("replay.jsonl"),
                strict: true,
            },
            tokenizer: TokenizerConfig::Approx,
            embedding: EmbeddingConfig::Hash { dim: 1024, seed: 0 },
            concurrency: 4,
        }
    }
}

fn canonical(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().map(|(k, v)| (k, canonical(v))).collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        other => other,
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.candidate_limit == 0 {
            return bad("candidate_limit must be at least 1".into());
        }
        if self.router_candidates == 0 || self.router_candidates > self.candidate_limit {
            return bad(format!(
                "router_candidates {} must be in 1..={}",
                self.router_candidates, self.candidate_limit
            ));
        }
        let EasyWeights { alpha, beta } = self.easy_weights;
        if !(alpha.is_finite() && beta.is_finite()) {
            return bad("easy_weights must be finite".into());
        }
        if let Some(t) = self.tau_override {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("tau_override {t} outside [0, 1]"));
            }
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        match self.embedding {
            EmbeddingConfig::Hash { dim: 0, .. } | EmbeddingConfig::Remote { dim: 0, .. } => {
                bad("embedding dim must be at least 1".into())
            }
            _ => Ok(()),
        }
    }

    /// SHA-256 of the configuration as key-sorted JSON.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let text = serde_json::to_string(&canonical(value)).expect("json serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn build_tokenizer(&self) -> Result<Box<dyn Tokenizer>, TokenizerError> {
        Ok(match &self.tokenizer {
            TokenizerConfig::Approx => Box::new(ApproxTokenizer),
            TokenizerConfig::Bpe { merges } => {
                let file = std::fs::File::open(merges).map_err(TokenizerError::Io)?;
                Box::new(BpeTokenizer::new(MergeTable::read(std::io::BufReader::new(file))?))
            }
        })
    }

    pub fn build_embedder(&self) -> Box<dyn EmbeddingProvider> {
        match &self.embedding {
            EmbeddingConfig::Hash { dim, seed } => Box::new(HashEmbedder { dim: *dim, seed: *seed }),
            EmbeddingConfig::Remote { url, dim } => Box::new(MemoizedProvider::new(RemoteEmbedder::new(url, *dim))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_operating_point() {
        let c = RunConfig::default();
        assert_eq!((c.candidate_limit, c.router_candidates), (30, 10));
        assert_eq!(c.strategy, StrategyKind::FewShotCot);
        assert_eq!(c.easy_weights, EasyWeights { alpha: 0.5, beta: 0.5 });
        assert!(c.validate().is_ok());
    }

    #[test]
    fn validation() {
        let c = RunConfig {
            router_candidates: 31,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
        let c = RunConfig {
            tau_override: Some(1.5),
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_tracks_every_field() {
        let base = RunConfig::default();
        assert_eq!(base.digest(), RunConfig::default().digest());
        // Round trip through JSON with shuffled key order.
        let mut v = serde_json::to_value(&base).unwrap();
        let reversed: serde_json::Map<String, Value> = v.as_object_mut().unwrap().clone().into_iter().rev().collect();
        let back: RunConfig = serde_json::from_value(Value::Object(reversed)).unwrap();
        assert_eq!(back.digest(), base.digest());

        let variants = [
            RunConfig {
                candidate_limit: 29,
                ..base.clone()
            },
            RunConfig {
                router_candidates: 9,
                ..base.clone()
            },
            RunConfig {
                strategy: StrategyKind::Cot,
                ..base.clone()
            },
            RunConfig {
                easy_weights: EasyWeights { alpha: 0.6, beta: 0.5 },
                ..base.clone()
            },
            RunConfig {
                forest: ForestConfig {
                    seed: 7,
                    ..ForestConfig::default()
                },
                ..base.clone()
            },
            RunConfig {
                tau_override: Some(0.5),
                ..base.clone()
            },
            RunConfig {
                scoring_model: "x".into(),
                ..base.clone()
            },
            RunConfig {
                reasoning_model: "x".into(),
                ..base.clone()
            },
            RunConfig {
                scoring_max_tokens: 1,
                ..base.clone()
            },
            RunConfig {
                reasoning_max_tokens: 1,
                ..base.clone()
            },
            RunConfig {
                backend: BackendConfig::Http { record_to: None },
                ..base.clone()
            },
            RunConfig {
                tokenizer: TokenizerConfig::Bpe { merges: "m.txt".into() },
                ..base.clone()
            },
            RunConfig {
                embedding: EmbeddingConfig::Hash { dim: 1024, seed: 1 },
                ..base.clone()
            },
            RunConfig {
                concurrency: 1,
                ..base.clone()
            },
        ];
        let mut seen = std::collections::BTreeSet::from([base.digest()]);
        for v in &variants {
            assert!(seen.insert(v.digest()), "{v:?}");
        }
    }
}
