use serde_json::{Map, Value};
use thiserror::Error;

use crate::kb::Candidate;
use crate::text::json_objects;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ReasoningParseError {
    #[error("no JSON object found in reasoning output")]
    NoJson,
    #[error("JSON object has neither linked_entity nor entity_id")]
    MissingFields,
    #[error("answer is not on the candidate menu (linked_entity {index:?}, entity_id {entity_id:?})")]
    OutOfMenu {
        index: Option<i64>,
        entity_id: Option<String>,
    },
}

impl ReasoningParseError {
    pub fn is_out_of_menu(&self) -> bool {
        matches!(self, Self::OutOfMenu { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    /// `None` for the −1 answer.
    pub entity_id: Option<String>,
    pub reasoning: Option<String>,
    pub warnings: Vec<String>,
}

fn as_index(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| {
            n.as_f64()
                .filter(|f| f.fract() == 0.0 && f.abs() < 1e15)
                .map(|f| f as i64)
        }),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()).filter(|s| !s.is_empty()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn answer_object(text: &str) -> Result<Map<String, Value>, ReasoningParseError> {
    let objects = json_objects(text);
    if objects.is_empty() {
        return Err(ReasoningParseError::NoJson);
    }
    objects
        .into_iter()
        .find(|o| o.contains_key("linked_entity") || o.contains_key("entity_id"))
        .ok_or(ReasoningParseError::MissingFields)
}

/// Reads the first answer object in `text`.
///
/// The 1-based `linked_entity` index is the answer; `entity_id` is a cross
/// check. When the index is unusable a valid `entity_id` is accepted instead.
pub fn parse_reasoning_output(text: &str, offered: &[Candidate]) -> Result<ParsedAnswer, ReasoningParseError> {
    let obj = answer_object(text)?;
    let index = obj.get("linked_entity").and_then(as_index);
    let id = obj.get("entity_id").and_then(as_id);
    let reasoning = obj.get("reasoning").and_then(|v| match v {
        Value::String(s) => Some(s.clone()),
        Value::Null => None,
        other => Some(other.to_string()),
    });
    let mut warnings = Vec::new();
    let on_menu = |id: &str| offered.iter().any(|c| c.entity_id == id);

    if index.is_none() && id.is_none() {
        return Err(ReasoningParseError::MissingFields);
    }

    let chosen = match index {
        Some(-1) => {
            if let Some(id) = id.as_deref().filter(|id| on_menu(id)) {
                warnings.push(format!("linked_entity -1 overrides entity_id {id}"));
            }
            None
        }
        Some(i) if i >= 1 && (i as usize) <= offered.len() => {
            let picked = &offered[i as usize - 1].entity_id;
            if let Some(id) = id.as_deref().filter(|id| *id != picked.as_str()) {
                warnings.push(format!("linked_entity {i} names {picked}; ignoring entity_id {id}"));
            }
            Some(picked.clone())
        }
        _ => match id {
            Some(ref s) if index.is_none() && s == "-1" => None,
            Some(ref s) if on_menu(s) => {
                if let Some(i) = index {
                    warnings.push(format!("linked_entity {i} is invalid; using entity_id {s}"));
                }
                Some(s.clone())
            }
            _ => return Err(ReasoningParseError::OutOfMenu { index, entity_id: id }),
        },
    };
    Ok(ParsedAnswer {
        entity_id: chosen,
        reasoning,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offered() -> Vec<Candidate> {
        ["Q312", "Q89", "Q213710"]
            .iter()
            .enumerate()
            .map(|(i, id)| Candidate {
                entity_id: id.to_string(),
                title: format!("t{i}"),
                description: String::new(),
                prior: 0.1,
                rank: i + 1,
            })
            .collect()
    }

    #[test]
    fn exemplar_output_shape() {
        let a = parse_reasoning_output(
            r#"{"linked_entity": 1, "entity_id": "Q312", "entity_title": "Apple Inc.", "reasoning": "iPhone"}"#,
            &offered(),
        )
        .unwrap();
        assert_eq!(a.entity_id.as_deref(), Some("Q312"));
        assert_eq!(a.reasoning.as_deref(), Some("iPhone"));
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn escape_clause() {
        let a = parse_reasoning_output(
            r#"{"linked_entity": -1, "entity_id": "-1", "entity_title": "None", "reasoning": "..."}"#,
            &offered(),
        )
        .unwrap();
        assert_eq!(a.entity_id, None);
        assert_eq!(
            parse_reasoning_output(r#"{"entity_id": "-1"}"#, &offered())
                .unwrap()
                .entity_id,
            None
        );
    }

    #[test]
    fn preamble_then_json() {
        let text =
            "Let me think. The context is about phones.\n```json\n{\"linked_entity\": 1, \"entity_id\": \"Q312\"}\n```";
        assert_eq!(
            parse_reasoning_output(text, &offered()).unwrap().entity_id.as_deref(),
            Some("Q312")
        );
    }

    #[test]
    fn index_wins_over_conflicting_id() {
        let a = parse_reasoning_output(r#"{"linked_entity": 2, "entity_id": "Q312"}"#, &offered()).unwrap();
        assert_eq!(a.entity_id.as_deref(), Some("Q89"));
        assert_eq!(a.warnings.len(), 1);
    }

    #[test]
    fn valid_id_rescues_bad_index() {
        let a = parse_reasoning_output(r#"{"linked_entity": 9, "entity_id": "Q89"}"#, &offered()).unwrap();
        assert_eq!(a.entity_id.as_deref(), Some("Q89"));
        let a = parse_reasoning_output(r#"{"linked_entity": "3"}"#, &offered()).unwrap();
        assert_eq!(a.entity_id.as_deref(), Some("Q213710"));
    }

    #[test]
    fn failures() {
        assert_eq!(
            parse_reasoning_output("no json here", &offered()),
            Err(ReasoningParseError::NoJson)
        );
        assert_eq!(
            parse_reasoning_output(r#"{"answer": "Q312"}"#, &offered()),
            Err(ReasoningParseError::MissingFields)
        );
        let e = parse_reasoning_output(r#"{"linked_entity": 7, "entity_id": "Q1"}"#, &offered()).unwrap_err();
        assert!(e.is_out_of_menu());
        let e = parse_reasoning_output(r#"{"entity_id": "Q999"}"#, &offered()).unwrap_err();
        assert!(e.is_out_of_menu());
    }
}
