//! Regenerates the 20-mention replay fixture.
//!
//!     cargo run -p linkrouter-core --example make_fixtures -- crates/core/tests/fixtures/replay20
//!
//! Scoring and reasoning answers come from the scripted backends in
//! `linkrouter::synthetic`, recorded into `cache.jsonl`. The router is a
//! single hand-built split on `margin` placed so the twelve widest-margin
//! mentions route EASY. One hard mention answers garbage before the format
//! reminder, so the routed run records one retry.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use linkrouter::kb::{Entity, KnowledgeBase};
use linkrouter::llm::{ApproxTokenizer, LlmEndpoint, RecordingClient};
use linkrouter::pipeline::{
    extract_feature_rows, extract_sentence, run_full_prompting, run_pipeline, MentionRecord, RunConfig, Services,
};
use linkrouter::router::{feature_index, DecisionTree, Difficulty, ForestConfig, Node, RouterModel};
use linkrouter::scoring::HashEmbedder;
use linkrouter::synthetic::{generate, OracleReasoner, ScriptedScorer, SyntheticSpec};
use serde_json::json;

const EASY_ROUTES: usize = 12;

fn entity(id: &str, title: &str, description: &str, alias: &str, prior: f64) -> Entity {
    Entity {
        entity_id: id.into(),
        title: title.into(),
        description: description.into(),
        aliases: vec![alias.into()],
        prior,
    }
}

fn record(key: &str, surface: &str, context: &str, gold: &str) -> MentionRecord {
    MentionRecord {
        mention_key: key.into(),
        surface: surface.into(),
        context: context.into(),
        sentence: extract_sentence(context, surface),
        gold_entity_id: Some(gold.into()),
    }
}

fn write_jsonl<T: serde::Serialize>(path: PathBuf, items: &[T]) {
    let mut f = fs::File::create(path).unwrap();
    for item in items {
        serde_json::to_writer(&mut f, item).unwrap();
        f.write_all(b"\n").unwrap();
    }
}

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "crates/core/tests/fixtures/replay20".into()),
    );
    fs::create_dir_all(&dir).unwrap();

    let corpus = generate(&SyntheticSpec {
        mentions: 18,
        easy_share: 11.0 / 18.0,
        entities_per_surface: (3, 6),
        seed: 20,
        key_prefix: "fx".into(),
    });
    let mut entities = corpus.entities.clone();
    let mut records = corpus.records.clone();

    entities.extend([
        entity(
            "Q61",
            "Washington, D.C.",
            "Capital city of the United States",
            "Washington",
            0.7,
        ),
        entity(
            "Q1223",
            "Washington (state)",
            "State in the Pacific Northwest of the United States",
            "Washington",
            0.2,
        ),
        entity(
            "Q23",
            "George Washington",
            "First president of the United States",
            "Washington",
            0.3,
        ),
    ]);
    records.push(record(
        "npr-washington",
        "Washington",
        "Documented From NPR news in Washington I'm Corey Flintoff.",
        "Q61",
    ));

    entities.extend([
        entity(
            "Q1046951",
            "Target Corporation",
            "American retailer and supermarket chain",
            "Target",
            0.3,
        ),
        entity(
            "Q7685854",
            "Target Australia",
            "Australian department store chain",
            "Target",
            0.3,
        ),
        entity(
            "Q4140889",
            "Target Canada",
            "Canadian subsidiary of Target Corporation",
            "Target",
            0.3,
        ),
        entity(
            "Q180238",
            "Target (TV series)",
            "British television series",
            "Target",
            0.3,
        ),
        entity(
            "Q12005242",
            "Target Books",
            "Publisher of Doctor Who novelizations",
            "Target",
            0.3,
        ),
        entity("Q971985", "Target (film)", "1985 film by Arthur Penn", "Target", 0.3),
        entity(
            "Q904407",
            "Biological target",
            "Molecular target in drug design",
            "Target",
            0.3,
        ),
    ]);
    let target_context = "Target fell 1.52 or 3 percent to 48.77. Saks rose, Home Depot fell.";
    records.push(record("stocks-target", "Target", target_context, "Q1046951"));

    let kb = KnowledgeBase::from_entities(entities.clone()).unwrap();
    let embedder = HashEmbedder::default();
    let config = RunConfig {
        concurrency: 1,
        ..RunConfig::default()
    };

    // Margins decide the routes.
    let scorer = ScriptedScorer;
    let reasoner = OracleReasoner::new(&records);
    let services = Services {
        scoring: LlmEndpoint {
            client: &scorer,
            model: &config.scoring_model,
            max_tokens: config.scoring_max_tokens,
            tokenizer: &ApproxTokenizer,
        },
        reasoning: LlmEndpoint {
            client: &reasoner,
            model: &config.reasoning_model,
            max_tokens: config.reasoning_max_tokens,
            tokenizer: &ApproxTokenizer,
        },
        embedder: &embedder,
    };
    let (rows, _, warnings) = extract_feature_rows(&kb, &records, &config, &services).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    let margin = feature_index("margin").unwrap();
    let mut margins: Vec<(f64, &str)> = rows
        .iter()
        .map(|r| (r.features.to_array()[margin], r.mention_key.as_str()))
        .collect();
    margins.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (lo, hi) = (margins[EASY_ROUTES].0, margins[EASY_ROUTES - 1].0);
    assert!(lo < hi, "tied margins at the cut");
    let threshold = (lo + hi) / 2.0;
    let easy_keys: Vec<&str> = margins[..EASY_ROUTES].iter().map(|m| m.1).collect();
    assert!(!easy_keys.contains(&"stocks-target"), "Target must route HARD");

    let tree = DecisionTree {
        nodes: vec![
            Node::Split {
                feature: margin,
                threshold,
                left: 1,
                right: 2,
            },
            Node::Leaf { easy_fraction: 0.0 },
            Node::Leaf { easy_fraction: 1.0 },
        ],
    };
    let mut model = RouterModel::new(
        vec![tree],
        ForestConfig {
            n_trees: 1,
            ..ForestConfig::default()
        },
    )
    .unwrap();
    model.tau = 0.5;

    // Record both runs into one cache.
    let cache = dir.join("cache.jsonl");
    let _ = fs::remove_file(&cache);
    let retry_key = margins[EASY_ROUTES].1.to_string();
    let retry_context = records
        .iter()
        .find(|r| r.mention_key == retry_key)
        .unwrap()
        .context
        .clone();
    let scorer = RecordingClient::to_file(ScriptedScorer, &cache).unwrap();
    let reasoner =
        RecordingClient::to_file(OracleReasoner::new(&records).garbage_first_for(&retry_context), &cache).unwrap();
    let services = Services {
        scoring: LlmEndpoint {
            client: &scorer,
            ..services.scoring
        },
        reasoning: LlmEndpoint {
            client: &reasoner,
            ..services.reasoning
        },
        embedder: &embedder,
    };
    let routed = run_pipeline(&kb, &records, &model, &config, &services).unwrap();
    let full = run_full_prompting(&kb, &records, &config, &services).unwrap();

    let hard_keys: Vec<&str> = routed
        .mentions
        .iter()
        .filter(|m| m.route == Some(Difficulty::Hard))
        .map(|m| m.mention_key.as_str())
        .collect();
    assert_eq!(hard_keys.len(), records.len() - EASY_ROUTES);

    write_jsonl(dir.join("kb.jsonl"), &entities);
    write_jsonl(dir.join("mentions.jsonl"), &records);
    fs::write(dir.join("router.json"), model.to_json().unwrap()).unwrap();
    let expected = json!({
        "easy_routed": easy_keys,
        "hard_routed": hard_keys,
        "retry_mentions": [retry_key],
        "reasoning_calls": routed.reasoning_calls(),
        "full_prompting_reasoning_calls": full.reasoning_calls(),
        "intended_easy": records.iter().zip(corpus.intended.iter().chain([Difficulty::Easy, Difficulty::Hard].iter()))
            .filter(|(_, d)| **d == Difficulty::Easy).map(|(r, _)| r.mention_key.clone()).collect::<Vec<_>>(),
    });
    fs::write(
        dir.join("expected.json"),
        serde_json::to_string_pretty(&expected).unwrap() + "\n",
    )
    .unwrap();
    println!(
        "wrote {} mentions, {} easy / {} hard, {} reasoning calls routed, {} full",
        records.len(),
        EASY_ROUTES,
        hard_keys.len(),
        routed.reasoning_calls(),
        full.reasoning_calls()
    );
}
