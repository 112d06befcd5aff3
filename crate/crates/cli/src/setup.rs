//! Config loading and backend construction shared by the verbs.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use linkrouter::kb::{load_kb, KnowledgeBase};
use linkrouter::llm::{
    HttpChatClient, HttpConfig, LimitedClient, LlmClient, LlmEndpoint, RecordingClient, ReplayCache, ReplayClient,
    ReplayMode, Tokenizer, ENV_API_URL, ENV_MAX_IN_FLIGHT,
};
use linkrouter::pipeline::{load_dataset, BackendConfig, MentionRecord, RunConfig, Services, TokenizerConfig};
use linkrouter::router::RouterModel;
use linkrouter::scoring::EmbeddingProvider;

/// Reads a TOML run config; relative paths inside it resolve against its directory.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config: RunConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rebase = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    match &mut config.backend {
        BackendConfig::Replay { cache, .. } => rebase(cache),
        BackendConfig::Http { record_to: Some(p) } => rebase(p),
        BackendConfig::Http { record_to: None } => {}
    }
    if let TokenizerConfig::Bpe { merges } = &mut config.tokenizer {
        rebase(merges);
    }
    config.validate()?;
    Ok(config)
}

pub fn read_kb(path: &Path) -> Result<KnowledgeBase> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(load_kb(BufReader::new(file))?)
}

pub fn read_mentions(path: &Path) -> Result<Vec<MentionRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let dataset = load_dataset(BufReader::new(file)).with_context(|| format!("loading {}", path.display()))?;
    for w in &dataset.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(dataset.records)
}

pub fn read_router(path: &Path) -> Result<RouterModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RouterModel::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Owns the client, tokenizer and embedder a run borrows.
pub struct Backend {
    client: Box<dyn LlmClient>,
    tokenizer: Box<dyn Tokenizer>,
    embedder: Box<dyn EmbeddingProvider>,
}

impl Backend {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        let client: Box<dyn LlmClient> = match &config.backend {
            BackendConfig::Replay { cache, strict } => {
                let records = ReplayCache::load(cache).with_context(|| format!("loading {}", cache.display()))?;
                let mode = if *strict {
                    ReplayMode::Strict
                } else {
                    ReplayMode::Lenient { canned: String::new() }
                };
                Box::new(ReplayClient::new(records, mode))
            }
            BackendConfig::Http { record_to } => {
                let Some(http) = HttpConfig::from_env() else {
                    bail!("the http backend needs {ENV_API_URL} in the environment");
                };
                let cap = match std::env::var(ENV_MAX_IN_FLIGHT) {
                    Ok(v) => v.parse().with_context(|| format!("{ENV_MAX_IN_FLIGHT}={v}"))?,
                    Err(_) => config.concurrency,
                };
                let live = LimitedClient::new(HttpChatClient::new(http), cap);
                match record_to {
                    Some(path) => Box::new(RecordingClient::to_file(live, path)?),
                    None => Box::new(live),
                }
            }
        };
        Ok(Self {
            client,
            tokenizer: config.build_tokenizer()?,
            embedder: config.build_embedder(),
        })
    }

    pub fn services<'a>(&'a self, config: &'a RunConfig) -> Services<'a> {
        let endpoint = |model: &'a str, max_tokens| LlmEndpoint {
            client: self.client.as_ref(),
            model,
            max_tokens,
            tokenizer: self.tokenizer.as_ref(),
        };
        Services {
            scoring: endpoint(&config.scoring_model, config.scoring_max_tokens),
            reasoning: endpoint(&config.reasoning_model, config.reasoning_max_tokens),
            embedder: self.embedder.as_ref(),
        }
    }
}
