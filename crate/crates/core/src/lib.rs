//! Cost-aware adaptive entity linking.
//!
//! Mentions get candidates from a knowledge base ([`kb`]) and are scored with
//! embedding cosines plus an LLM confidence ([`scoring`]). A random-forest
//! router ([`router`]) then splits them into easy and hard cases. Easy cases
//! go to a cheap linker and hard cases to an LLM reasoner ([`linker`]).
//! Every LLM token is accounted for in a ledger ([`llm`]), and [`eval`]
//! turns finished runs into accuracy, routing and token-reduction reports.
//! [`pipeline`] ties it all together.

pub mod eval;
pub mod kb;
pub mod linker;
pub mod llm;
pub mod pipeline;
pub mod router;
pub mod scoring;
pub mod synthetic;
pub mod text;
