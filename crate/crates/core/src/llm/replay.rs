//! Deterministic record/replay of LLM exchanges.
//!
//! A cache file is append-only JSON lines, one [`CacheRecord`] per exchange,
//! keyed by the SHA-256 digest of the prompt. When a digest is recorded more
//! than once the last record wins.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{Completion, CompletionRequest, LlmClient, LlmError};

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub prompt_digest: String,
    pub prompt: String,
    pub response: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

impl CacheRecord {
    pub fn new(model: &str, prompt: &str, completion: &Completion) -> Self {
        Self {
            prompt_digest: prompt_digest(prompt),
            prompt: prompt.to_string(),
            response: completion.text.clone(),
            model: model.to_string(),
            input_tokens: completion.input_tokens,
            output_tokens: completion.output_tokens,
        }
    }

    fn completion(&self) -> Completion {
        Completion {
            text: self.response.clone(),
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayCache {
    records: HashMap<String, CacheRecord>,
}

impl ReplayCache {
    pub fn from_records(records: impl IntoIterator<Item = CacheRecord>) -> Self {
        let mut cache = Self::default();
        for r in records {
            cache.records.insert(r.prompt_digest.clone(), r);
        }
        cache
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn read<R: BufRead>(reader: R) -> std::io::Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CacheRecord = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("cache line {}: {e}", i + 1))
            })?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, digest: &str) -> Option<&CacheRecord> {
        self.records.get(digest)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayMode {
    /// Unknown prompts fail with [`LlmError::CacheMiss`].
    Strict,
    /// Unknown prompts receive the canned response.
    Lenient { canned: String },
}

pub struct ReplayClient {
    cache: ReplayCache,
    mode: ReplayMode,
}

impl ReplayClient {
    pub fn new(cache: ReplayCache, mode: ReplayMode) -> Self {
        Self { cache, mode }
    }

    pub fn strict(cache: ReplayCache) -> Self {
        Self::new(cache, ReplayMode::Strict)
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let digest = prompt_digest(&request.prompt);
        match (self.cache.get(&digest), &self.mode) {
            (Some(record), _) => Ok(record.completion()),
            (None, ReplayMode::Strict) => Err(LlmError::CacheMiss { digest }),
            (None, ReplayMode::Lenient { canned }) => Ok(Completion::text(canned.clone())),
        }
    }
}

/// Forwards to `inner` and appends every successful exchange to a cache sink.
pub struct RecordingClient<C> {
    inner: C,
    sink: Mutex<Box<dyn Write + Send>>,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C, sink: Box<dyn Write + Send>) -> Self {
        Self {
            inner,
            sink: Mutex::new(sink),
        }
    }

    /// Appends to `path`, creating it when absent.
    pub fn to_file(inner: C, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::new(inner, Box::new(file)))
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let completion = self.inner.complete(request)?;
        let record = CacheRecord::new(&request.model, &request.prompt, &completion);
        let mut line = serde_json::to_string(&record).map_err(|e| LlmError::Decode(e.to_string()))?;
        line.push('\n');
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        sink.write_all(line.as_bytes())
            .and_then(|_| sink.flush())
            .map_err(|e| LlmError::Transport(format!("writing replay cache: {e}")))?;
        Ok(completion)
    }
}
