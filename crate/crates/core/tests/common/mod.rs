#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use linkrouter::kb::{load_kb, KnowledgeBase};
use linkrouter::llm::{ApproxTokenizer, LlmClient, LlmEndpoint, ReplayCache, ReplayClient};
use linkrouter::pipeline::{load_dataset, MentionRecord, RunConfig, Services};
use linkrouter::router::RouterModel;
use linkrouter::scoring::HashEmbedder;
use serde_json::Value;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay20")
}

pub struct Fixture {
    pub kb: KnowledgeBase,
    pub records: Vec<MentionRecord>,
    pub model: RouterModel,
    pub expected: Value,
}

pub fn fixture() -> Fixture {
    let dir = fixture_dir();
    let open = |name: &str| BufReader::new(File::open(dir.join(name)).unwrap());
    Fixture {
        kb: load_kb(open("kb.jsonl")).unwrap(),
        records: load_dataset(open("mentions.jsonl")).unwrap().records,
        model: RouterModel::from_json(&std::fs::read_to_string(dir.join("router.json")).unwrap()).unwrap(),
        expected: serde_json::from_str(&std::fs::read_to_string(dir.join("expected.json")).unwrap()).unwrap(),
    }
}

pub fn strict_replay() -> ReplayClient {
    ReplayClient::strict(ReplayCache::load(&fixture_dir().join("cache.jsonl")).unwrap())
}

pub fn expected_keys(fx: &Fixture, field: &str) -> Vec<String> {
    let mut keys: Vec<String> = fx.expected[field]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    keys.sort();
    keys
}

pub fn fixture_config() -> RunConfig {
    RunConfig::default()
}

pub const EMBEDDER: HashEmbedder = HashEmbedder { dim: 1024, seed: 0 };

/// The same client serves scoring and reasoning; prompts keep them apart.
pub fn services<'a>(client: &'a dyn LlmClient, config: &'a RunConfig) -> Services<'a> {
    Services {
        scoring: LlmEndpoint {
            client,
            model: &config.scoring_model,
            max_tokens: config.scoring_max_tokens,
            tokenizer: &ApproxTokenizer,
        },
        reasoning: LlmEndpoint {
            client,
            model: &config.reasoning_model,
            max_tokens: config.reasoning_max_tokens,
            tokenizer: &ApproxTokenizer,
        },
        embedder: &EMBEDDER,
    }
}
