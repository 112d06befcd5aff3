//! Append-only token ledger and cost estimation.
//!
//! Prices are held as integer micro-dollars per million tokens, so a token
//! count times a price is an exact integer number of picodollars. Costs add
//! without rounding drift and are only rounded for display.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::client::Completion;
use super::tokenizer::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Purpose {
    Scoring,
    Reasoning,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Purpose::Scoring => "scoring",
            Purpose::Reasoning => "reasoning",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountSource {
    Backend,
    Tokenizer,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub call_id: String,
    pub mention_key: String,
    pub purpose: Purpose,
    pub model: String,
    pub attempt: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub count_source: CountSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTotals {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenTotals {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
        }
    }
}

impl Add for TokenTotals {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.input_tokens + rhs.input_tokens,
            self.output_tokens + rhs.output_tokens,
        )
    }
}

impl AddAssign for TokenTotals {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Entries can only be appended; totals are always recomputed from them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    entries: Vec<LedgerEntry>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    /// Appends every entry of `other`, preserving its order.
    pub fn append(&mut self, other: TokenLedger) {
        self.entries.extend(other.entries);
    }

    pub fn totals(&self) -> TokenTotals {
        self.entries
            .iter()
            .map(|e| TokenTotals::new(e.input_tokens, e.output_tokens))
            .fold(TokenTotals::default(), Add::add)
    }

    pub fn totals_for(&self, purpose: Purpose) -> TokenTotals {
        self.entries
            .iter()
            .filter(|e| e.purpose == purpose)
            .map(|e| TokenTotals::new(e.input_tokens, e.output_tokens))
            .fold(TokenTotals::default(), Add::add)
    }

    /// Totals reported for deployment efficiency: reasoning calls only,
    /// plus scoring calls when `include_scoring` is set.
    pub fn deployment_totals(&self, include_scoring: bool) -> TokenTotals {
        let mut t = self.totals_for(Purpose::Reasoning);
        if include_scoring {
            t += self.totals_for(Purpose::Scoring);
        }
        t
    }

    pub fn count(&self, purpose: Purpose) -> usize {
        self.entries.iter().filter(|e| e.purpose == purpose).count()
    }

    pub fn per_model_totals(&self, purpose: Option<Purpose>) -> BTreeMap<String, TokenTotals> {
        let mut out: BTreeMap<String, TokenTotals> = BTreeMap::new();
        for e in &self.entries {
            if purpose.is_some_and(|p| p != e.purpose) {
                continue;
            }
            *out.entry(e.model.clone()).or_default() += TokenTotals::new(e.input_tokens, e.output_tokens);
        }
        out
    }
}

/// Identifies a call for the ledger.
#[derive(Debug, Clone)]
pub struct CallMeta<'a> {
    pub mention_key: &'a str,
    pub purpose: Purpose,
    pub model: &'a str,
    pub attempt: u32,
}

/// Appends one call. Backend-reported counts take precedence over the tokenizer.
pub fn record_call<'l>(
    ledger: &'l mut TokenLedger,
    meta: CallMeta<'_>,
    prompt: &str,
    response: &Completion,
    tokenizer: &dyn Tokenizer,
) -> &'l LedgerEntry {
    let input_tokens = response.input_tokens.unwrap_or_else(|| tokenizer.count(prompt));
    let output_tokens = response
        .output_tokens
        .unwrap_or_else(|| tokenizer.count(&response.text));
    let count_source = match (response.input_tokens, response.output_tokens) {
        (Some(_), Some(_)) => CountSource::Backend,
        (None, None) => CountSource::Tokenizer,
        _ => CountSource::Mixed,
    };
    ledger.push(LedgerEntry {
        call_id: format!("{}/{}/{}", meta.mention_key, meta.purpose, meta.attempt),
        mention_key: meta.mention_key.to_string(),
        purpose: meta.purpose,
        model: meta.model.to_string(),
        attempt: meta.attempt,
        input_tokens,
        output_tokens,
        count_source,
    });
    ledger.entries.last().expect("just pushed")
}

/// Price per million tokens in integer micro-dollars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelPrice {
    pub input_micros_per_million: u64,
    pub output_micros_per_million: u64,
}

impl ModelPrice {
    /// From dollar prices per million tokens, rounded to the nearest micro-dollar.
    pub fn from_dollars(input: f64, output: f64) -> Result<Self, CostError> {
        let to_micros = |p: f64| {
            if p.is_finite() && p >= 0.0 {
                Ok((p * 1e6).round() as u64)
            } else {
                Err(CostError::InvalidPrice(p))
            }
        };
        Ok(Self {
            input_micros_per_million: to_micros(input)?,
            output_micros_per_million: to_micros(output)?,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct PriceRecord {
    input_price_per_million: f64,
    output_price_per_million: f64,
}

/// Model name to price. Serialized as
/// `{"model": {"input_price_per_million": 0.25, "output_price_per_million": 1.25}}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PriceTable {
    prices: BTreeMap<String, ModelPrice>,
}

impl PriceTable {
    pub fn insert(&mut self, model: impl Into<String>, price: ModelPrice) {
        self.prices.insert(model.into(), price);
    }

    pub fn get(&self, model: &str) -> Option<&ModelPrice> {
        self.prices.get(model)
    }

    pub fn models(&self) -> impl Iterator<Item = &str> {
        self.prices.keys().map(String::as_str)
    }

    /// API list prices used for the published cost estimates.
    pub fn reference() -> Self {
        let mut t = Self::default();
        for (name, i, o) in [
            ("claude-3-haiku", 0.25, 1.25),
            ("claude-3.5-sonnet", 3.00, 15.00),
            ("claude-opus-4", 15.00, 75.00),
            ("gpt-4.1", 2.00, 8.00),
            ("deepseek", 0.14, 2.19),
            ("llama-3.1-8b-instruct", 0.05, 0.08),
        ] {
            t.insert(name, ModelPrice::from_dollars(i, o).expect("static prices"));
        }
        t
    }

    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let raw: BTreeMap<String, PriceRecord> =
            serde_json::from_str(text).map_err(|e| CostError::Parse(e.to_string()))?;
        let mut t = Self::default();
        for (model, r) in raw {
            t.insert(
                model,
                ModelPrice::from_dollars(r.input_price_per_million, r.output_price_per_million)?,
            );
        }
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        let raw: BTreeMap<&str, PriceRecord> = self
            .prices
            .iter()
            .map(|(m, p)| {
                (
                    m.as_str(),
                    PriceRecord {
                        input_price_per_million: p.input_micros_per_million as f64 / 1e6,
                        output_price_per_million: p.output_micros_per_million as f64 / 1e6,
                    },
                )
            })
            .collect();
        serde_json::to_string_pretty(&raw).expect("serializable")
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CostError {
    #[error("no pricing for model {model:?}; known models: {known}")]
    UnknownModel { model: String, known: String },
    #[error("invalid price {0}")]
    InvalidPrice(f64),
    #[error("malformed pricing file: {0}")]
    Parse(String),
}

/// An exact amount in picodollars (1e-12 USD).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UsdCost {
    pub picodollars: u128,
}

impl UsdCost {
    pub fn dollars(self) -> f64 {
        self.picodollars as f64 / 1e12
    }

    /// Rounded half-up to whole micro-dollars.
    pub fn micro_dollars(self) -> u128 {
        (self.picodollars + 500_000) / 1_000_000
    }

    /// Rounded half-up to whole cents.
    pub fn cents(self) -> u128 {
        (self.picodollars + 5_000_000_000) / 10_000_000_000
    }
}

impl Add for UsdCost {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            picodollars: self.picodollars + rhs.picodollars,
        }
    }
}

impl fmt::Display for UsdCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.cents();
        write!(f, "${}.{:02}", c / 100, c % 100)
    }
}

pub fn estimate_cost(totals: TokenTotals, pricing: &PriceTable, model: &str) -> Result<UsdCost, CostError> {
    let price = pricing.get(model).ok_or_else(|| CostError::UnknownModel {
        model: model.to_string(),
        known: pricing.models().collect::<Vec<_>>().join(", "),
    })?;
    let picodollars = totals.input_tokens as u128 * price.input_micros_per_million as u128
        + totals.output_tokens as u128 * price.output_micros_per_million as u128;
    Ok(UsdCost { picodollars })
}
