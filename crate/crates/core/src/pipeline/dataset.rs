use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing or empty \"surface\"")]
    MissingSurface { line: usize },
    #[error("line {line}: duplicate mention_key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub mention_key: String,
    pub surface: String,
    pub context: String,
    /// The sentence of `context` containing the mention.
    pub sentence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_entity_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<MentionRecord>,
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Deserialize)]
struct RawMention {
    #[serde(default)]
    mention_key: Option<String>,
    #[serde(default)]
    surface: Option<String>,
    context: String,
    #[serde(default)]
    sentence: Option<String>,
    #[serde(default)]
    gold_entity_id: Option<String>,
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits after `.`, `!` or `?` when followed by whitespace, so "1.52" stays whole.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            let end = i + c.len_utf8();
            let s = text[start..end].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = end;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// First sentence containing `surface` (case-insensitively), else the whole context.
pub fn extract_sentence(context: &str, surface: &str) -> String {
    let needle = surface.to_lowercase();
    split_sentences(context)
        .into_iter()
        .find(|s| s.to_lowercase().contains(&needle))
        .unwrap_or(context)
        .to_string()
}

/// One JSON object per line with `surface`, `context` and optionally
/// `mention_key`, `sentence` and `gold_entity_id`. Blank lines are skipped;
/// a missing key becomes `line-<n>`.
pub fn load_dataset<R: BufRead>(reader: R) -> Result<Dataset, DatasetError> {
    let mut dataset = Dataset::default();
    let mut keys = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawMention = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let surface = raw
            .surface
            .map(|s| collapse(&s))
            .filter(|s| !s.is_empty())
            .ok_or(DatasetError::MissingSurface { line: line_no })?;
        let context = collapse(&raw.context);
        let mention_key = raw
            .mention_key
            .map(|k| k.trim().to_string())
            .filter(|k| !k.is_empty())
            .unwrap_or_else(|| format!("line-{line_no}"));
        if !keys.insert(mention_key.clone()) {
            return Err(DatasetError::Duplicate {
                line: line_no,
                key: mention_key,
            });
        }
        if !context.to_lowercase().contains(&surface.to_lowercase()) {
            dataset.warnings.push(format!(
                "line {line_no}: surface {surface:?} not found in context of {mention_key}"
            ));
        }
        let sentence = raw
            .sentence
            .map(|s| collapse(&s))
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| extract_sentence(&context, &surface));
        dataset.records.push(MentionRecord {
            mention_key,
            surface,
            context,
            sentence,
            gold_entity_id: raw
                .gold_entity_id
                .map(|g| g.trim().to_string())
                .filter(|g| !g.is_empty()),
        });
    }
    Ok(dataset)
}
