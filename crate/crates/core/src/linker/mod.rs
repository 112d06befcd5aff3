//! Mention resolution: the easy path for EASY routes, the LLM reasoner for HARD ones.

mod easy;
mod parse;
mod prompt;

pub use easy::{easy_link, easy_scores, EasyLinker, EasyWeights, PriorSimilarityLinker};
pub use parse::{parse_reasoning_output, ParsedAnswer, ReasoningParseError};
pub use prompt::{
    build_reasoning_prompt, default_exemplars, with_format_reminder, Exemplar, ExemplarAnswer, ExemplarCandidate,
    PromptStrategy, StrategyError, StrategyKind, FORMAT_REMINDER,
};

use serde::{Deserialize, Serialize};

use crate::kb::Candidate;
use crate::llm::{LlmEndpoint, Purpose, TokenLedger};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionSource {
    EasyPath,
    Reasoner,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDecision {
    pub mention_key: String,
    /// `None` is the NONE answer.
    pub chosen_entity_id: Option<String>,
    pub source: DecisionSource,
    #[serde(default)]
    pub reasoning_text: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub degraded: bool,
}

impl LinkDecision {
    pub fn none(mention_key: &str, source: DecisionSource) -> Self {
        Self {
            mention_key: mention_key.to_string(),
            chosen_entity_id: None,
            source,
            reasoning_text: None,
            warnings: Vec::new(),
            degraded: false,
        }
    }
}

/// Prompt, call, parse. One retry with the format reminder appended, after
/// which `fallback` decides and the source becomes FALLBACK. Transport
/// failure on both attempts also sets `degraded`.
#[allow(clippy::too_many_arguments)]
pub fn reason_link(
    llm: &LlmEndpoint<'_>,
    ledger: &mut TokenLedger,
    strategy: &PromptStrategy,
    fallback: &dyn EasyLinker,
    mention_key: &str,
    mention: &str,
    context: &str,
    candidates: &[Candidate],
) -> LinkDecision {
    let base = build_reasoning_prompt(strategy, mention, context, candidates);
    let mut warnings = Vec::new();
    let mut transport_failures = 0;
    for attempt in 0..2u32 {
        let prompt = if attempt == 0 {
            base.clone()
        } else {
            with_format_reminder(&base)
        };
        let completion = match llm.call(ledger, mention_key, Purpose::Reasoning, attempt, &prompt) {
            Ok(c) => c,
            Err(e) => {
                transport_failures += 1;
                warnings.push(format!("reasoner attempt {attempt}: {e}"));
                continue;
            }
        };
        match parse_reasoning_output(&completion.text, candidates) {
            Ok(answer) => {
                warnings.extend(answer.warnings);
                return LinkDecision {
                    mention_key: mention_key.to_string(),
                    chosen_entity_id: answer.entity_id,
                    source: DecisionSource::Reasoner,
                    reasoning_text: answer.reasoning,
                    warnings,
                    degraded: false,
                };
            }
            Err(e) => warnings.push(format!("reasoner attempt {attempt}: {e}")),
        }
    }
    log::warn!("{mention_key}: reasoner failed twice, using the easy path");
    let mut decision = fallback.link(mention_key, mention, context, candidates);
    decision.source = DecisionSource::Fallback;
    decision.degraded = transport_failures == 2;
    warnings.append(&mut decision.warnings);
    decision.warnings = warnings;
    decision
}
