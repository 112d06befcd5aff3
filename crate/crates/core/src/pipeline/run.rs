use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::kb::{Candidate, KnowledgeBase};
use crate::linker::{
    reason_link, DecisionSource, EasyLinker, LinkDecision, PriorSimilarityLinker, PromptStrategy, StrategyKind,
};
use crate::llm::{Purpose, TokenLedger};
use crate::router::{aggregate_features, label_cases, route_with, Difficulty, RouterFeatures, RouterModel};
use crate::scoring::{score_phi, score_thetas, CandidateScores};

use super::{MentionRecord, PipelineError, RunConfig, Services};

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Routed,
    FullPrompting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionOutcome {
    pub mention_key: String,
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_entity_id: Option<String>,
    /// The full pool offered to the reasoner, in rank order.
    pub candidates: Vec<Candidate>,
    /// Router-scored head of the pool; empty in full-prompting runs.
    #[serde(default)]
    pub scores: Vec<CandidateScores>,
    #[serde(default)]
    pub features: Option<RouterFeatures>,
    #[serde(default)]
    pub easy_probability: Option<f64>,
    /// `None` when no router was involved.
    #[serde(default)]
    pub route: Option<Difficulty>,
    pub decision: LinkDecision,
    /// What the easy path would have answered; the source of training labels.
    pub baseline_entity_id: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub mode: RunMode,
    pub config_digest: String,
    pub strategy: StrategyKind,
    pub scoring_model: String,
    pub reasoning_model: String,
    #[serde(default)]
    pub forest_seed: Option<u64>,
    #[serde(default)]
    pub tau: Option<f64>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub format_version: u32,
    pub metadata: RunMetadata,
    pub mentions: Vec<MentionOutcome>,
    pub ledger: TokenLedger,
}

impl RunArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let artifact: Self = serde_json::from_str(text)?;
        if artifact.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(PipelineError::Artifact(format!(
                "unsupported artifact format version {}",
                artifact.format_version
            )));
        }
        Ok(artifact)
    }

    /// Copy with both timestamps zeroed, for reproducibility comparisons.
    pub fn without_timestamps(&self) -> Self {
        let mut a = self.clone();
        a.metadata.started_unix_ms = 0;
        a.metadata.finished_unix_ms = 0;
        a
    }

    pub fn decisions(&self) -> Vec<LinkDecision> {
        self.mentions.iter().map(|m| m.decision.clone()).collect()
    }

    pub fn routes(&self) -> Vec<Difficulty> {
        self.mentions.iter().filter_map(|m| m.route).collect()
    }

    pub fn gold(&self) -> BTreeMap<String, String> {
        self.mentions
            .iter()
            .filter_map(|m| Some((m.mention_key.clone(), m.gold_entity_id.clone()?)))
            .collect()
    }

    pub fn degraded_keys(&self) -> Vec<&str> {
        self.mentions
            .iter()
            .filter(|m| m.degraded)
            .map(|m| m.mention_key.as_str())
            .collect()
    }

    pub fn reasoning_calls(&self) -> usize {
        self.ledger.count(Purpose::Reasoning)
    }
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Runs `work` over `records` on up to `workers` threads. Results come back
/// through one collector in record order.
fn run_pool<T, F>(records: &[MentionRecord], workers: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&MentionRecord) -> T + Sync,
{
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<T>> = std::iter::repeat_with(|| None).take(records.len()).collect();
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers.clamp(1, records.len().max(1)) {
            let tx = tx.clone();
            let (next, work) = (&next, &work);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(record) = records.get(i) else { break };
                if tx.send((i, work(record))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            slots[i] = Some(result);
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every record is processed"))
        .collect()
}

struct Stage<'a> {
    kb: &'a KnowledgeBase,
    config: &'a RunConfig,
    services: &'a Services<'a>,
    strategy: PromptStrategy,
    easy: PriorSimilarityLinker<&'a dyn crate::scoring::EmbeddingProvider>,
}

impl<'a> Stage<'a> {
    fn new(kb: &'a KnowledgeBase, config: &'a RunConfig, services: &'a Services<'a>) -> Self {
        Self {
            kb,
            config,
            services,
            strategy: PromptStrategy::standard(config.strategy),
            easy: PriorSimilarityLinker {
                provider: services.embedder,
                weights: config.easy_weights,
            },
        }
    }

    fn start(&self, r: &MentionRecord) -> (MentionOutcome, Vec<Candidate>) {
        let candidates = self.kb.generate_candidates(&r.surface, self.config.candidate_limit);
        let baseline = self.easy.link(&r.mention_key, &r.surface, &r.context, &candidates);
        let outcome = MentionOutcome {
            mention_key: r.mention_key.clone(),
            surface: r.surface.clone(),
            gold_entity_id: r.gold_entity_id.clone(),
            candidates: candidates.clone(),
            scores: Vec::new(),
            features: None,
            easy_probability: None,
            route: None,
            baseline_entity_id: baseline.chosen_entity_id.clone(),
            warnings: baseline.warnings.clone(),
            decision: baseline,
            degraded: false,
        };
        (outcome, candidates)
    }

    fn reason(&self, r: &MentionRecord, candidates: &[Candidate], ledger: &mut TokenLedger) -> LinkDecision {
        reason_link(
            &self.services.reasoning,
            ledger,
            &self.strategy,
            &self.easy,
            &r.mention_key,
            &r.surface,
            &r.context,
            candidates,
        )
    }

    /// θ and φ for the router head of the pool, then the ten features.
    /// Also used for training, where no routing happens.
    fn score(
        &self,
        r: &MentionRecord,
        candidates: &[Candidate],
        ledger: &mut TokenLedger,
        outcome: &mut MentionOutcome,
    ) -> Option<RouterFeatures> {
        let head = &candidates[..candidates.len().min(self.config.router_candidates)];
        let thetas = match score_thetas(self.services.embedder, &r.context, &r.surface, head) {
            Ok(t) => t,
            Err(e) => {
                outcome.warnings.push(format!("scoring failed: {e}"));
                outcome.degraded = true;
                return None;
            }
        };
        let phi = score_phi(
            &self.services.scoring,
            ledger,
            &r.mention_key,
            &r.context,
            &r.surface,
            head,
        );
        outcome.warnings.extend(phi.warnings);
        outcome.degraded |= phi.degraded;
        outcome.scores = head
            .iter()
            .zip(thetas)
            .map(|(c, t)| CandidateScores::new(c.entity_id.clone(), t, phi.scores[&c.entity_id]))
            .collect();
        match aggregate_features(&outcome.scores, &r.sentence) {
            Ok(f) => {
                outcome.features = Some(f);
                Some(f)
            }
            Err(e) => {
                outcome.warnings.push(format!("features: {e}"));
                outcome.degraded = true;
                None
            }
        }
    }

    fn routed(&self, r: &MentionRecord, model: &RouterModel, tau: f64) -> (MentionOutcome, TokenLedger) {
        let mut ledger = TokenLedger::new();
        let (mut outcome, candidates) = self.start(r);
        if candidates.is_empty() {
            outcome.warnings.push("no candidates; NONE without LLM calls".into());
            outcome.route = Some(Difficulty::Easy);
            return (outcome, ledger);
        }
        let route = match self.score(r, &candidates, &mut ledger, &mut outcome) {
            Some(f) => {
                let p = model.predict_easy_probability(&f);
                outcome.easy_probability = Some(p);
                route_with(p, tau)
            }
            // Without features the safe direction is the reasoner.
            None => Difficulty::Hard,
        };
        outcome.route = Some(route);
        if route == Difficulty::Hard {
            self.finish_with_reasoner(r, &candidates, &mut ledger, &mut outcome);
        }
        (outcome, ledger)
    }

    fn full(&self, r: &MentionRecord) -> (MentionOutcome, TokenLedger) {
        let mut ledger = TokenLedger::new();
        let (mut outcome, candidates) = self.start(r);
        if candidates.is_empty() {
            outcome.warnings.push("no candidates; NONE without LLM calls".into());
            outcome.decision = LinkDecision::none(&r.mention_key, DecisionSource::Reasoner);
            return (outcome, ledger);
        }
        self.finish_with_reasoner(r, &candidates, &mut ledger, &mut outcome);
        (outcome, ledger)
    }

    fn finish_with_reasoner(
        &self,
        r: &MentionRecord,
        candidates: &[Candidate],
        ledger: &mut TokenLedger,
        outcome: &mut MentionOutcome,
    ) {
        let decision = self.reason(r, candidates, ledger);
        outcome.warnings.extend(decision.warnings.iter().cloned());
        outcome.degraded |= decision.degraded;
        outcome.decision = decision;
    }

    fn metadata(&self, mode: RunMode, model: Option<&RouterModel>, tau: Option<f64>, started: u64) -> RunMetadata {
        RunMetadata {
            mode,
            config_digest: self.config.digest(),
            strategy: self.config.strategy,
            scoring_model: self.config.scoring_model.clone(),
            reasoning_model: self.config.reasoning_model.clone(),
            forest_seed: model.map(|m| m.train_seed),
            tau,
            started_unix_ms: started,
            finished_unix_ms: unix_ms(),
        }
    }
}

fn assemble(results: Vec<(MentionOutcome, TokenLedger)>) -> (Vec<MentionOutcome>, TokenLedger) {
    let mut ledger = TokenLedger::new();
    let mentions = results
        .into_iter()
        .map(|(outcome, local)| {
            ledger.append(local);
            outcome
        })
        .collect();
    (mentions, ledger)
}

/// Candidates, scores, features, route and decision for every mention. A
/// failing backend degrades single mentions and never stops the batch.
pub fn run_pipeline(
    kb: &KnowledgeBase,
    records: &[MentionRecord],
    model: &RouterModel,
    config: &RunConfig,
    services: &Services<'_>,
) -> Result<RunArtifact, PipelineError> {
    config.validate()?;
    let started = unix_ms();
    let tau = config.tau_override.unwrap_or(model.tau);
    let stage = Stage::new(kb, config, services);
    let (mentions, ledger) = assemble(run_pool(records, config.concurrency, |r| stage.routed(r, model, tau)));
    Ok(RunArtifact {
        format_version: ARTIFACT_FORMAT_VERSION,
        metadata: stage.metadata(RunMode::Routed, Some(model), Some(tau), started),
        mentions,
        ledger,
    })
}

/// Every mention goes to the reasoner; no scoring, no router.
pub fn run_full_prompting(
    kb: &KnowledgeBase,
    records: &[MentionRecord],
    config: &RunConfig,
    services: &Services<'_>,
) -> Result<RunArtifact, PipelineError> {
    config.validate()?;
    let started = unix_ms();
    let stage = Stage::new(kb, config, services);
    let (mentions, ledger) = assemble(run_pool(records, config.concurrency, |r| stage.full(r)));
    Ok(RunArtifact {
        format_version: ARTIFACT_FORMAT_VERSION,
        metadata: stage.metadata(RunMode::FullPrompting, None, None, started),
        mentions,
        ledger,
    })
}

/// Feature row for router training: features plus the easy-path verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub mention_key: String,
    pub features: RouterFeatures,
    pub label: Difficulty,
}

/// Scores every gold-labelled mention and labels it by easy-path correctness.
/// Mentions without candidates or features are skipped with a warning.
pub fn extract_feature_rows(
    kb: &KnowledgeBase,
    records: &[MentionRecord],
    config: &RunConfig,
    services: &Services<'_>,
) -> Result<(Vec<FeatureRow>, TokenLedger, Vec<String>), PipelineError> {
    config.validate()?;
    if let Some(r) = records.iter().find(|r| r.gold_entity_id.is_none()) {
        return Err(PipelineError::MissingGold(r.mention_key.clone()));
    }
    let stage = Stage::new(kb, config, services);
    let results = run_pool(records, config.concurrency, |r| {
        let mut ledger = TokenLedger::new();
        let (mut outcome, candidates) = stage.start(r);
        let features = if candidates.is_empty() {
            None
        } else {
            stage.score(r, &candidates, &mut ledger, &mut outcome)
        };
        (outcome, features, ledger)
    });

    let baseline: BTreeMap<String, String> = results
        .iter()
        .filter_map(|(o, ..)| Some((o.mention_key.clone(), o.baseline_entity_id.clone()?)))
        .collect();
    let gold: BTreeMap<String, String> = records
        .iter()
        .filter_map(|r| Some((r.mention_key.clone(), r.gold_entity_id.clone()?)))
        .collect();
    let labels: BTreeMap<String, Difficulty> = label_cases(&baseline, &gold)
        .into_iter()
        .map(|l| (l.mention_key, l.label))
        .collect();

    let mut rows = Vec::new();
    let mut ledger = TokenLedger::new();
    let mut warnings = Vec::new();
    for (outcome, features, local) in results {
        ledger.append(local);
        let Some(features) = features else {
            warnings.push(format!("{}: no features, skipped", outcome.mention_key));
            continue;
        };
        rows.push(FeatureRow {
            label: labels[&outcome.mention_key],
            mention_key: outcome.mention_key,
            features,
        });
    }
    Ok((rows, ledger, warnings))
}
