//! Entity knowledge base and alias-table candidate generation.
//!
//! The KB file is line-delimited JSON, one entity per line:
//!
//! ```text
//! {"entity_id": "Q312", "title": "Apple Inc.", "description": "...", "aliases": ["Apple"], "prior": 0.9}
//! ```
//!
//! Candidates come from a two-tier alias matcher. Tier 0 holds entities with
//! an alias equal to the normalized mention, tier 1 holds entities with an
//! alias that merely contains it. Within a tier, higher prior wins and equal
//! priors fall back to `entity_id` order.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default size of the candidate pool handed to the linkers.
pub const DEFAULT_CANDIDATE_LIMIT: usize = 30;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("line {line}: malformed entity record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate entity_id {entity_id:?}")]
    Duplicate { line: usize, entity_id: String },
    #[error("line {line}: invalid entity {entity_id:?}: {reason}")]
    Invalid {
        line: usize,
        entity_id: String,
        reason: String,
    },
    #[error("reading knowledge base: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub prior: f64,
}

impl Entity {
    fn validate(&self) -> Result<(), String> {
        if self.entity_id.trim().is_empty() {
            return Err("entity_id is empty".into());
        }
        if self.title.trim().is_empty() {
            return Err("title is empty".into());
        }
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(format!("prior {} outside [0, 1]", self.prior));
        }
        Ok(())
    }
}

/// A retrieved knowledge-base entry with its 1-based retrieval rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity_id: String,
    pub title: String,
    pub description: String,
    pub prior: f64,
    pub rank: usize,
}

/// Immutable after construction; share it behind `&` or `Arc` across workers.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    entities: BTreeMap<String, Entity>,
    alias_index: BTreeMap<String, Vec<String>>,
}

impl KnowledgeBase {
    pub fn from_entities(entities: impl IntoIterator<Item = Entity>) -> Result<Self, KbError> {
        let mut kb = KnowledgeBase::default();
        for (i, entity) in entities.into_iter().enumerate() {
            kb.insert(i + 1, entity)?;
        }
        Ok(kb)
    }

    fn insert(&mut self, line: usize, entity: Entity) -> Result<(), KbError> {
        entity.validate().map_err(|reason| KbError::Invalid {
            line,
            entity_id: entity.entity_id.clone(),
            reason,
        })?;
        if self.entities.contains_key(&entity.entity_id) {
            return Err(KbError::Duplicate {
                line,
                entity_id: entity.entity_id,
            });
        }
        // The title is always searchable, even when not repeated in `aliases`.
        let surfaces: BTreeSet<String> = std::iter::once(&entity.title)
            .chain(entity.aliases.iter())
            .map(|s| normalize_surface(s))
            .filter(|s| !s.is_empty())
            .collect();
        for surface in surfaces {
            self.alias_index
                .entry(surface)
                .or_default()
                .push(entity.entity_id.clone());
        }
        self.entities.insert(entity.entity_id.clone(), entity);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn alias_count(&self) -> usize {
        self.alias_index.len()
    }

    pub fn get(&self, entity_id: &str) -> Option<&Entity> {
        self.entities.get(entity_id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    /// Entity ids registered under an already-normalized alias.
    pub fn lookup_alias(&self, normalized: &str) -> &[String] {
        self.alias_index.get(normalized).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Ranked candidates for a mention surface form, at most `limit` of them.
    pub fn generate_candidates(&self, mention: &str, limit: usize) -> Vec<Candidate> {
        let needle = normalize_surface(mention);
        if needle.is_empty() || limit == 0 {
            return Vec::new();
        }

        let mut best_tier: BTreeMap<&str, u8> = BTreeMap::new();
        for (alias, ids) in &self.alias_index {
            let tier = if *alias == needle {
                0
            } else if alias.contains(needle.as_str()) {
                1
            } else {
                continue;
            };
            for id in ids {
                best_tier
                    .entry(id.as_str())
                    .and_modify(|t| *t = (*t).min(tier))
                    .or_insert(tier);
            }
        }

        let mut hits: Vec<(u8, &Entity)> = best_tier
            .into_iter()
            .map(|(id, tier)| (tier, &self.entities[id]))
            .collect();
        hits.sort_by(|(ta, a), (tb, b)| {
            ta.cmp(tb)
                .then_with(|| b.prior.total_cmp(&a.prior))
                .then_with(|| a.entity_id.cmp(&b.entity_id))
        });

        hits.into_iter()
            .take(limit)
            .enumerate()
            .map(|(i, (_, e))| Candidate {
                entity_id: e.entity_id.clone(),
                title: e.title.clone(),
                description: e.description.clone(),
                prior: e.prior,
                rank: i + 1,
            })
            .collect()
    }
}

/// Reads a line-delimited KB. Blank lines are skipped.
pub fn load_kb<R: BufRead>(reader: R) -> Result<KnowledgeBase, KbError> {
    let mut kb = KnowledgeBase::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entity: Entity = serde_json::from_str(&line).map_err(|e| KbError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        kb.insert(line_no, entity)?;
    }
    Ok(kb)
}

fn is_edge_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201c}'
                | '\u{201d}'
                | '\u{00ab}'
                | '\u{00bb}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
                | '\u{00bf}'
                | '\u{00a1}'
        )
}

/// Lowercases, collapses whitespace runs and strips punctuation at both edges.
pub fn normalize_surface(s: &str) -> String {
    let lowered = s.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| c.is_whitespace() || is_edge_punct(c));
    trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
}
