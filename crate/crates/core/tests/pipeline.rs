mod common;

use std::collections::BTreeMap;

use common::*;
use linkrouter::eval::{score_decisions, token_reduction_report};
use linkrouter::kb::KnowledgeBase;
use linkrouter::linker::DecisionSource;
use linkrouter::llm::{Completion, CompletionRequest, FnClient, LedgerEntry, LlmError, Purpose};
use linkrouter::pipeline::{run_full_prompting, run_pipeline, train_end_to_end, MentionRecord, RunArtifact, RunConfig};
use linkrouter::router::{Difficulty, ForestConfig, RouterModel};
use linkrouter::synthetic::{generate, OracleReasoner, ScriptedScorer, SyntheticSpec};

fn routed(config: &RunConfig) -> RunArtifact {
    let fx = fixture();
    let client = strict_replay();
    run_pipeline(&fx.kb, &fx.records, &fx.model, config, &services(&client, config)).unwrap()
}

fn keys_with_route(a: &RunArtifact, route: Difficulty) -> Vec<String> {
    let mut k: Vec<String> = a
        .mentions
        .iter()
        .filter(|m| m.route == Some(route))
        .map(|m| m.mention_key.clone())
        .collect();
    k.sort();
    k
}

#[test]
fn fixture_routes_and_call_accounting() {
    let fx = fixture();
    let a = routed(&fixture_config());
    assert_eq!(keys_with_route(&a, Difficulty::Easy), expected_keys(&fx, "easy_routed"));
    assert_eq!(keys_with_route(&a, Difficulty::Hard), expected_keys(&fx, "hard_routed"));
    assert_eq!(keys_with_route(&a, Difficulty::Hard).len(), 8);
    let retries = a
        .ledger
        .entries()
        .iter()
        .filter(|e| e.purpose == Purpose::Reasoning && e.attempt > 0)
        .count();
    assert_eq!(retries, 1);
    assert_eq!(a.reasoning_calls(), 8 + retries);
    assert_eq!(a.ledger.count(Purpose::Scoring), 20);
    assert!(a.degraded_keys().is_empty(), "{:?}", a.degraded_keys());

    let target = a.mentions.iter().find(|m| m.mention_key == "stocks-target").unwrap();
    assert_eq!(target.decision.chosen_entity_id.as_deref(), Some("Q1046951"));
    assert_eq!(target.decision.source, DecisionSource::Reasoner);
    let washington = a.mentions.iter().find(|m| m.mention_key == "npr-washington").unwrap();
    assert_eq!(washington.decision.chosen_entity_id.as_deref(), Some("Q61"));
    assert_eq!(washington.decision.source, DecisionSource::EasyPath);

    for m in &a.mentions {
        assert!(m.candidates.len() <= 30);
        assert!(m.scores.len() <= 10);
        if let Some(id) = &m.decision.chosen_entity_id {
            assert!(m.candidates.iter().any(|c| &c.entity_id == id));
        }
    }
}

#[test]
fn replay_is_deterministic_across_runs_and_worker_counts() {
    let one = routed(&fixture_config()).without_timestamps();
    let again = routed(&fixture_config()).without_timestamps();
    assert_eq!(one.to_json(), again.to_json());

    let serial = routed(&RunConfig {
        concurrency: 1,
        ..fixture_config()
    })
    .without_timestamps();
    assert_eq!(serial.mentions, one.mentions);
    assert_eq!(serial.ledger, one.ledger);

    let back = RunArtifact::from_json(&one.to_json()).unwrap();
    assert_eq!(back, one);
}

fn reasoning_by_key(a: &RunArtifact) -> BTreeMap<String, Vec<LedgerEntry>> {
    let mut m: BTreeMap<String, Vec<LedgerEntry>> = BTreeMap::new();
    for e in a.ledger.entries().iter().filter(|e| e.purpose == Purpose::Reasoning) {
        m.entry(e.mention_key.clone()).or_default().push(e.clone());
    }
    m
}

#[test]
fn full_prompting_contains_the_routed_ledger() {
    let fx = fixture();
    let config = fixture_config();
    let client = strict_replay();
    let full = run_full_prompting(&fx.kb, &fx.records, &config, &services(&client, &config)).unwrap();
    let routed = routed(&config);
    assert_eq!(full.reasoning_calls(), 20 + 1);
    assert_eq!(full.ledger.count(Purpose::Scoring), 0);
    assert!(full
        .mentions
        .iter()
        .all(|m| m.decision.source == DecisionSource::Reasoner && m.route.is_none()));

    let full_by_key = reasoning_by_key(&full);
    let routed_by_key = reasoning_by_key(&routed);
    let hard = keys_with_route(&routed, Difficulty::Hard);
    for key in &hard {
        assert_eq!(full_by_key[key], routed_by_key[key], "{key}");
    }
    assert_eq!(routed_by_key.keys().cloned().collect::<Vec<_>>(), hard);

    let with = routed.ledger.totals_for(Purpose::Reasoning);
    let without = full.ledger.totals_for(Purpose::Reasoning);
    let r = token_reduction_report(with, without).unwrap();
    assert!(r.input_reduction_pct > 0.0 && r.input_reduction_pct < 100.0);

    let gold = routed.gold();
    let report = score_decisions(&routed.decisions(), &gold).unwrap();
    assert_eq!(report.tp + report.fp + report.fn_, 20);
    assert_eq!(report.mention_distribution.easy_count, 12);
}

#[test]
fn all_easy_run_makes_no_reasoning_calls() {
    let config = RunConfig {
        tau_override: Some(0.0),
        ..fixture_config()
    };
    let a = routed(&config);
    assert_eq!(a.reasoning_calls(), 0);
    assert!(a.routes().iter().all(|r| *r == Difficulty::Easy));
}

fn panicking_client() -> FnClient<impl Fn(&CompletionRequest) -> Result<Completion, LlmError> + Send + Sync> {
    FnClient(|_r: &CompletionRequest| -> Result<Completion, LlmError> { panic!("no LLM call expected") })
}

#[test]
fn mentions_without_candidates_cost_nothing() {
    let fx = fixture();
    let config = fixture_config();
    let client = panicking_client();
    let records = vec![MentionRecord {
        mention_key: "nowhere".into(),
        surface: "Qwzzyx".into(),
        context: "Qwzzyx is not in the knowledge base.".into(),
        sentence: "Qwzzyx is not in the knowledge base.".into(),
        gold_entity_id: Some("Q1".into()),
    }];
    let a = run_pipeline(&fx.kb, &records, &fx.model, &config, &services(&client, &config)).unwrap();
    assert!(a.ledger.is_empty());
    assert_eq!(a.mentions[0].decision.chosen_entity_id, None);
    assert_eq!(a.mentions[0].route, Some(Difficulty::Easy));
    let f = run_full_prompting(&fx.kb, &records, &config, &services(&client, &config)).unwrap();
    assert!(f.ledger.is_empty());

    let empty = run_full_prompting(&fx.kb, &[], &config, &services(&client, &config)).unwrap();
    assert!(empty.mentions.is_empty() && empty.ledger.is_empty());
}

#[test]
fn backend_failure_degrades_without_aborting() {
    let fx = fixture();
    let config = fixture_config();
    let client = FnClient(|_r: &CompletionRequest| -> Result<Completion, LlmError> {
        Err(LlmError::Transport("connection refused".into()))
    });
    let a = run_pipeline(&fx.kb, &fx.records, &fx.model, &config, &services(&client, &config)).unwrap();
    assert_eq!(a.mentions.len(), 20);
    assert!(a.ledger.is_empty());
    assert_eq!(a.degraded_keys().len(), 20);
    for m in a.mentions.iter().filter(|m| m.route == Some(Difficulty::Hard)) {
        assert_eq!(m.decision.source, DecisionSource::Fallback);
        assert!(m.decision.degraded);
    }
}

#[test]
fn strict_replay_miss_is_a_degraded_mention() {
    let fx = fixture();
    let config = RunConfig {
        strategy: linkrouter::linker::StrategyKind::ZeroShot,
        ..fixture_config()
    };
    let client = strict_replay();
    let a = run_pipeline(&fx.kb, &fx.records, &fx.model, &config, &services(&client, &config)).unwrap();
    // Scoring prompts are unchanged, reasoning prompts are not in the cache.
    for m in &a.mentions {
        let hard = m.route == Some(Difficulty::Hard);
        assert_eq!(m.degraded, hard, "{}", m.mention_key);
    }
}

fn synthetic_split(n: usize, seed: u64, prefix: &str) -> linkrouter::synthetic::SyntheticCorpus {
    generate(&SyntheticSpec {
        mentions: n,
        easy_share: 0.5,
        seed,
        key_prefix: prefix.into(),
        ..SyntheticSpec::default()
    })
}

#[test]
fn end_to_end_training_round_trips() {
    let train = synthetic_split(200, 1, "tr");
    let val = synthetic_split(80, 2, "va");
    let kb = KnowledgeBase::from_entities(train.entities.iter().chain(&val.entities).cloned()).unwrap();
    let reasoner = OracleReasoner::new(&[]);
    let scorer = ScriptedScorer;
    let config = RunConfig {
        forest: ForestConfig {
            n_trees: 25,
            ..ForestConfig::default()
        },
        ..RunConfig::default()
    };
    let mut svc = services(&scorer, &config);
    svc.reasoning.client = &reasoner;

    let out = train_end_to_end(&kb, &train.records, &val.records, &config, &svc).unwrap();
    assert_eq!(out.train_rows.len(), 200);
    assert!(out.model.calibration.is_some());
    assert_eq!(out.ledger.count(Purpose::Reasoning), 0);

    let reloaded = RouterModel::from_json(&out.model.to_json().unwrap()).unwrap();
    for row in &out.val_rows {
        assert_eq!(reloaded.route(&row.features), out.model.route(&row.features));
    }

    let other = RunConfig {
        forest: ForestConfig {
            seed: 7,
            ..config.forest.clone()
        },
        ..config.clone()
    };
    let out2 = train_end_to_end(&kb, &train.records, &val.records, &other, &svc).unwrap();
    assert_ne!(out2.model.trees, out.model.trees);
    assert_eq!(out2.train_rows, out.train_rows);
}

#[test]
fn training_requires_gold() {
    let fx = fixture();
    let config = fixture_config();
    let client = strict_replay();
    let mut records = fx.records.clone();
    records[0].gold_entity_id = None;
    let err = train_end_to_end(&fx.kb, &records, &fx.records, &config, &services(&client, &config)).unwrap_err();
    assert!(err.to_string().contains("no gold"));
}
