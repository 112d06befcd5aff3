//! LLM confidence scores φ: one call per mention covering all router candidates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::kb::Candidate;
use crate::llm::{LlmEndpoint, Purpose, TokenLedger};
use crate::text::{json_objects, render};

use super::candidate_text;

const PHI_TEMPLATE: &str = include_str!("../../assets/phi_prompt.v1.txt");
const PHI_REMINDER: &str = include_str!("../../assets/phi_reminder.v1.txt");

/// Uninformative score used when no parseable response arrives.
pub const PHI_FALLBACK: f64 = 0.5;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PhiParseError {
    #[error("no JSON object with a \"scores\" map in response")]
    NoScores,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhiScores {
    pub scores: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub degraded: bool,
}

pub fn build_phi_prompt(context: &str, mention: &str, candidates: &[Candidate]) -> String {
    let listing = candidates
        .iter()
        .map(|c| format!("[{}] {}", c.entity_id, candidate_text(c)))
        .collect::<Vec<_>>()
        .join("\n");
    render(
        PHI_TEMPLATE,
        &[("context", context), ("mention", mention), ("candidates", &listing)],
    )
}

fn as_score(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok().filter(|x| x.is_finite()),
        _ => None,
    }
}

/// Parses `{"scores": {"<id>": <confidence>}}`, clipping into [0, 1].
/// Candidates absent from the response score 0 with a warning.
pub fn parse_phi_response(
    text: &str,
    candidates: &[Candidate],
) -> Result<(BTreeMap<String, f64>, Vec<String>), PhiParseError> {
    let mut warnings = Vec::new();
    let raw: BTreeMap<String, Value> =
        match json_objects(text)
            .into_iter()
            .find_map(|mut obj| match obj.remove("scores") {
                Some(Value::Object(m)) => Some(m.into_iter().collect()),
                _ => None,
            }) {
            Some(m) => m,
            None => {
                // A lone number is accepted when only one candidate was asked about.
                let bare = text.trim().parse::<f64>().ok().filter(|x| x.is_finite());
                match (candidates, bare) {
                    ([only], Some(x)) => BTreeMap::from([(only.entity_id.clone(), Value::from(x))]),
                    _ => return Err(PhiParseError::NoScores),
                }
            }
        };

    let offered: BTreeSet<&str> = candidates.iter().map(|c| c.entity_id.as_str()).collect();
    for id in raw.keys().filter(|k| !offered.contains(k.as_str())) {
        warnings.push(format!("phi: ignoring score for unknown candidate {id}"));
    }

    let mut scores = BTreeMap::new();
    for c in candidates {
        let id = &c.entity_id;
        let score = match raw.get(id).map(|v| (v, as_score(v))) {
            Some((_, Some(x))) => {
                let clipped = x.clamp(0.0, 1.0);
                if clipped != x {
                    warnings.push(format!("phi: clipped {x} to {clipped} for {id}"));
                }
                clipped
            }
            Some((v, None)) => {
                warnings.push(format!("phi: non-numeric score {v} for {id}, using 0"));
                0.0
            }
            None => {
                warnings.push(format!("phi: missing score for {id}, using 0"));
                0.0
            }
        };
        scores.insert(id.clone(), score);
    }
    Ok((scores, warnings))
}

/// One scoring call per mention, one retry with a format reminder, then the
/// uniform [`PHI_FALLBACK`] with the degraded flag set.
pub fn score_phi(
    llm: &LlmEndpoint<'_>,
    ledger: &mut TokenLedger,
    mention_key: &str,
    context: &str,
    mention: &str,
    candidates: &[Candidate],
) -> PhiScores {
    let base = build_phi_prompt(context, mention, candidates);
    let mut warnings = Vec::new();
    for attempt in 0..2u32 {
        let prompt = if attempt == 0 {
            base.clone()
        } else {
            format!("{base}\n\n{PHI_REMINDER}")
        };
        match llm.call(ledger, mention_key, Purpose::Scoring, attempt, &prompt) {
            Ok(completion) => match parse_phi_response(&completion.text, candidates) {
                Ok((scores, w)) => {
                    warnings.extend(w);
                    return PhiScores {
                        scores,
                        warnings,
                        degraded: false,
                    };
                }
                Err(e) => warnings.push(format!("phi attempt {attempt}: {e}")),
            },
            Err(e) => warnings.push(format!("phi attempt {attempt}: {e}")),
        }
    }
    log::warn!("{mention_key}: phi scoring degraded to {PHI_FALLBACK}");
    PhiScores {
        scores: candidates.iter().map(|c| (c.entity_id.clone(), PHI_FALLBACK)).collect(),
        warnings,
        degraded: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ApproxTokenizer, Completion, CompletionRequest, FnClient, LlmError};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn cands() -> Vec<Candidate> {
        [("Q312", "Apple Inc."), ("Q89", "Apple")]
            .iter()
            .enumerate()
            .map(|(i, (id, t))| Candidate {
                entity_id: id.to_string(),
                title: t.to_string(),
                description: String::new(),
                prior: 0.5,
                rank: i + 1,
            })
            .collect()
    }

    #[test]
    fn direct_parse() {
        let (s, w) = parse_phi_response(r#"{"scores": {"Q312": 0.9, "Q89": 0.1}}"#, &cands()).unwrap();
        assert_eq!(s, BTreeMap::from([("Q312".into(), 0.9), ("Q89".into(), 0.1)]));
        assert!(w.is_empty());
    }

    #[test]
    fn clip_and_missing() {
        let (s, w) = parse_phi_response(r#"{"scores": {"Q312": 1.7}}"#, &cands()).unwrap();
        assert_eq!(s["Q312"], 1.0);
        assert_eq!(s["Q89"], 0.0);
        assert_eq!(w.len(), 2);
        assert!(w[0].contains("clipped"));
        assert!(w[1].contains("missing") && w[1].contains("Q89"));

        let (s, _) = parse_phi_response(r#"{"scores": {"Q312": -0.2, "Q89": "0.4"}}"#, &cands()).unwrap();
        assert_eq!((s["Q312"], s["Q89"]), (0.0, 0.4));
    }

    #[test]
    fn prose_wrapped_and_bare_number() {
        let text = "Here are my scores:\n{\"note\": 1}\n{\"scores\": {\"Q312\": 0.8, \"Q89\": 0.3}}";
        assert_eq!(parse_phi_response(text, &cands()).unwrap().0["Q312"], 0.8);
        let one = &cands()[..1];
        assert_eq!(parse_phi_response(" 0.75 ", one).unwrap().0["Q312"], 0.75);
        assert_eq!(parse_phi_response("0.75", &cands()), Err(PhiParseError::NoScores));
    }

    #[test]
    fn prompt_lists_every_candidate_once() {
        let p = build_phi_prompt("I love my iPhone", "Apple", &cands());
        assert!(p.contains("[Q312] Apple Inc.") && p.contains("[Q89] Apple"));
        assert!(p.contains("Reply with a single number between 0.0 and 1.0"));
        assert!(p.contains(r#"{"scores": {"<candidate_id>": <confidence>}}"#));
    }

    #[test]
    fn unparseable_twice_falls_back_to_half() {
        let calls = AtomicUsize::new(0);
        let client = FnClient(|_r: &CompletionRequest| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(Completion::text("no idea"))
        });
        let llm = LlmEndpoint {
            client: &client,
            model: "scorer",
            max_tokens: 64,
            tokenizer: &ApproxTokenizer,
        };
        let mut ledger = TokenLedger::new();
        let out = score_phi(&llm, &mut ledger, "m1", "ctx", "Apple", &cands());
        assert!(out.degraded);
        assert!(out.scores.values().all(|v| *v == PHI_FALLBACK));
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(ledger.count(Purpose::Scoring), 2);
    }

    #[test]
    fn retry_succeeds_after_transport_error() {
        let calls = AtomicUsize::new(0);
        let client = FnClient(|_r: &CompletionRequest| {
            if calls.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(LlmError::Transport("reset".into()))
            } else {
                Ok(Completion::text(r#"{"scores": {"Q312": 0.6, "Q89": 0.2}}"#))
            }
        });
        let llm = LlmEndpoint {
            client: &client,
            model: "scorer",
            max_tokens: 64,
            tokenizer: &ApproxTokenizer,
        };
        let mut ledger = TokenLedger::new();
        let out = score_phi(&llm, &mut ledger, "m1", "ctx", "Apple", &cands());
        assert!(!out.degraded);
        assert_eq!(out.scores["Q312"], 0.6);
        assert_eq!(ledger.len(), 1);
        assert_eq!(ledger.entries()[0].attempt, 1);
    }
}
