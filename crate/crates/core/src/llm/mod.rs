//! LLM transport: a uniform client trait, record/replay cache, an HTTP
//! chat-completion backend, tokenizers and the token/cost ledger.

mod client;
mod endpoint;
mod http;
mod ledger;
mod replay;
mod tokenizer;

pub use client::{Completion, CompletionRequest, FnClient, LimitedClient, LlmClient, LlmError};
pub use endpoint::LlmEndpoint;
pub use http::{HttpChatClient, HttpConfig, ENV_API_KEY, ENV_API_URL, ENV_MAX_IN_FLIGHT};
pub use ledger::{
    estimate_cost, record_call, CallMeta, CostError, CountSource, LedgerEntry, ModelPrice, PriceTable, Purpose,
    TokenLedger, TokenTotals, UsdCost,
};
pub use replay::{prompt_digest, CacheRecord, RecordingClient, ReplayCache, ReplayClient, ReplayMode};
pub use tokenizer::{approx_count, bpe_count, ApproxTokenizer, BpeTokenizer, MergeTable, Tokenizer, TokenizerError};
