//! Reasoning prompts: a multiple-choice question over the candidate pool.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::Candidate;
use crate::text::render;

const SYSTEM: &str = include_str!("../../assets/reasoning_system.v1.txt");
const COT: &str = include_str!("../../assets/reasoning_cot.v1.txt");
const QUERY: &str = include_str!("../../assets/reasoning_query.v1.txt");
pub const FORMAT_REMINDER: &str = include_str!("../../assets/reasoning_reminder.v1.txt");
const EXEMPLARS: &str = include_str!("../../assets/reasoning_exemplars.v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    ZeroShot,
    FewShot,
    Cot,
    FewShotCot,
    Contrastive,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::ZeroShot,
        StrategyKind::FewShot,
        StrategyKind::Cot,
        StrategyKind::FewShotCot,
        StrategyKind::Contrastive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::ZeroShot => "zero_shot",
            StrategyKind::FewShot => "few_shot",
            StrategyKind::Cot => "cot",
            StrategyKind::FewShotCot => "few_shot_cot",
            StrategyKind::Contrastive => "contrastive",
        }
    }

    fn uses_reasoning(self) -> bool {
        matches!(
            self,
            StrategyKind::Cot | StrategyKind::FewShotCot | StrategyKind::Contrastive
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| StrategyError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StrategyError {
    #[error("unknown prompt strategy {0:?} (expected zero_shot, few_shot, cot, few_shot_cot or contrastive)")]
    UnknownKind(String),
    #[error("{kind} needs at least one exemplar")]
    MissingExemplars { kind: StrategyKind },
    #[error("zero_shot takes no exemplars, got {count}")]
    UnexpectedExemplars { count: usize },
    #[error("contrastive exemplar {index} has no contrast line")]
    MissingContrast { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarCandidate {
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub entity_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarAnswer {
    pub linked_entity: i64,
    pub entity_id: String,
    pub entity_title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub mention: String,
    pub context: String,
    pub candidates: Vec<ExemplarCandidate>,
    pub reasoning: String,
    /// Why a tempting wrong candidate is wrong. Only contrastive prompts show it.
    #[serde(default)]
    pub contrast: Option<String>,
    pub answer: ExemplarAnswer,
}

/// The five bundled worked examples.
pub fn default_exemplars() -> &'static [Exemplar] {
    static CELL: OnceLock<Vec<Exemplar>> = OnceLock::new();
    CELL.get_or_init(|| serde_json::from_str(EXEMPLARS).expect("bundled exemplars are valid JSON"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptStrategy {
    kind: StrategyKind,
    exemplars: Vec<Exemplar>,
}

impl PromptStrategy {
    pub fn new(kind: StrategyKind, exemplars: Vec<Exemplar>) -> Result<Self, StrategyError> {
        let needs_exemplars = matches!(
            kind,
            StrategyKind::FewShot | StrategyKind::FewShotCot | StrategyKind::Contrastive
        );
        if kind == StrategyKind::ZeroShot && !exemplars.is_empty() {
            return Err(StrategyError::UnexpectedExemplars { count: exemplars.len() });
        }
        if needs_exemplars && exemplars.is_empty() {
            return Err(StrategyError::MissingExemplars { kind });
        }
        if kind == StrategyKind::Contrastive {
            if let Some(index) = exemplars.iter().position(|e| e.contrast.is_none()) {
                return Err(StrategyError::MissingContrast { index });
            }
        }
        Ok(Self { kind, exemplars })
    }

    /// The kind with its natural exemplar set: none for ZERO_SHOT and COT,
    /// the bundled five otherwise.
    pub fn standard(kind: StrategyKind) -> Self {
        let exemplars = match kind {
            StrategyKind::ZeroShot | StrategyKind::Cot => Vec::new(),
            _ => default_exemplars().to_vec(),
        };
        Self::new(kind, exemplars).expect("bundled exemplars satisfy every strategy")
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn candidate_entry(n: usize, title: &str, description: &str, entity_id: &str) -> String {
    let description = one_line(description);
    if description.is_empty() {
        format!("{n}. {} [{entity_id}]", one_line(title))
    } else {
        format!("{n}. {} — {description} [{entity_id}]", one_line(title))
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn render_exemplar(i: usize, ex: &Exemplar, kind: StrategyKind) -> String {
    let listing = ex
        .candidates
        .iter()
        .enumerate()
        .map(|(j, c)| candidate_entry(j + 1, &c.title, &c.description, &c.entity_id))
        .collect::<Vec<_>>()
        .join(", ");
    let mut lines = vec![
        format!("Example {}: Mention: {}", i + 1, json_str(&ex.mention)),
        format!("Context: {}", json_str(&ex.context)),
        format!("Candidates: {listing}"),
    ];
    if kind.uses_reasoning() {
        lines.push(format!("Reasoning: {}", ex.reasoning));
    }
    if kind == StrategyKind::Contrastive {
        if let Some(c) = &ex.contrast {
            lines.push(format!("Incorrect choice: {c}"));
        }
    }
    lines.push(format!(
        "Output: {{\"linked_entity\": {}, \"entity_id\": {}, \"entity_title\": {}, \"reasoning\": \"...\"}}",
        ex.answer.linked_entity,
        json_str(&ex.answer.entity_id),
        json_str(&ex.answer.entity_title)
    ));
    lines.join("\n")
}

/// Candidates are listed in slice order, which callers keep equal to rank.
pub fn build_reasoning_prompt(
    strategy: &PromptStrategy,
    mention: &str,
    context: &str,
    candidates: &[Candidate],
) -> String {
    let kind = strategy.kind;
    let mut sections = vec![SYSTEM.to_string()];
    if !strategy.exemplars.is_empty() {
        let header = match kind {
            StrategyKind::FewShot => "Examples:",
            StrategyKind::Contrastive => "Examples with correct and incorrect choices:",
            _ => "Examples with reasoning:",
        };
        let body = strategy
            .exemplars
            .iter()
            .enumerate()
            .map(|(i, e)| render_exemplar(i, e, kind))
            .collect::<Vec<_>>()
            .join("\n");
        sections.push(format!("{header}\n{body}"));
    }
    if kind.uses_reasoning() {
        sections.push(COT.to_string());
    }
    let listing = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| candidate_entry(i + 1, &c.title, &c.description, &c.entity_id))
        .collect::<Vec<_>>()
        .join("\n");
    sections.push(render(
        QUERY,
        &[
            ("mention", &one_line(mention)),
            ("context", &one_line(context)),
            ("candidates", &listing),
        ],
    ));
    sections.join("\n\n")
}

/// The retry prompt: the original with the format reminder appended.
pub fn with_format_reminder(prompt: &str) -> String {
    format!("{prompt}\n\n{FORMAT_REMINDER}")
}
