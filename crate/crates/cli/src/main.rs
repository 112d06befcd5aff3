//! `linkrouter` command line.

mod setup;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use linkrouter::eval::{router_report, score_decisions, token_reduction_report, RouterReport, TokenReduction};
use linkrouter::linker::{build_reasoning_prompt, DecisionSource, PromptStrategy, StrategyKind};
use linkrouter::llm::{estimate_cost, PriceTable, Purpose, TokenTotals};
use linkrouter::pipeline::{
    extract_feature_rows, read_feature_rows, run_full_prompting, run_pipeline, train_router, write_feature_rows,
    FeatureRow, MentionRecord, RunArtifact, RunConfig, RunMode,
};
use linkrouter::router::{feature_index, label_cases, Difficulty, RouterFeatures, FEATURE_NAMES};
use serde_json::json;

use setup::{load_config, read_kb, read_mentions, read_router, write_text, Backend};

#[derive(Parser)]
#[command(
    name = "linkrouter",
    version,
    about = "Cost-aware entity linking with easy/hard routing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Knowledge-base checks.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Route and link a dataset, writing a run artifact.
    Link(LinkArgs),
    /// Send every mention to the reasoner, no routing.
    FullPrompting(FullArgs),
    /// Train the router forest and calibrate τ.
    TrainRouter(TrainArgs),
    /// Refit τ of a trained router on stored validation features.
    Calibrate(CalibrateArgs),
    /// Score a run artifact against gold links.
    Evaluate(EvaluateArgs),
    /// Token totals and dollar cost of one or more run artifacts.
    CostReport(CostArgs),
    /// Route stored feature rows with a trained router.
    Route(RouteArgs),
}

#[derive(Subcommand)]
enum KbCommand {
    /// Load a knowledge-base file and report counts or the first error.
    Validate { path: PathBuf },
}

#[derive(Args)]
struct RunInputs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kb: PathBuf,
    /// Mention records, one JSON object per line.
    #[arg(long)]
    mentions: PathBuf,
    /// Output run artifact.
    #[arg(long)]
    out: PathBuf,
    /// Reasoning prompt strategy, overriding the config.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<StrategyKind>,
    /// Write the rendered reasoning prompt of every reasoned mention here.
    #[arg(long)]
    dump_prompts: Option<PathBuf>,
}

#[derive(Args)]
struct LinkArgs {
    #[command(flatten)]
    inputs: RunInputs,
    #[arg(long)]
    router: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct FullArgs {
    #[command(flatten)]
    inputs: RunInputs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, requires_all = ["train", "val"])]
    kb: Option<PathBuf>,
    /// Training mentions with gold ids.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation mentions with gold ids, used for τ.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Stored training feature rows instead of a dataset.
    #[arg(long, conflicts_with = "kb", requires = "val_features")]
    train_features: Option<PathBuf>,
    #[arg(long, conflicts_with = "kb")]
    val_features: Option<PathBuf>,
    /// Directory for the extracted feature tables.
    #[arg(long)]
    features_out: Option<PathBuf>,
    /// Feature to leave out of every split; repeatable.
    #[arg(long = "drop-feature")]
    drop_feature: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trees: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    router: PathBuf,
    /// Validation feature rows.
    #[arg(long)]
    features: PathBuf,
    /// Defaults to rewriting the router in place.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    artifact: PathBuf,
    /// Mention records carrying gold ids; defaults to the gold stored in the artifact.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Full-prompting artifact for the token reduction report.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Count scoring calls in the token reduction.
    #[arg(long)]
    include_scoring: bool,
    /// Machine-readable report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    /// Run artifacts; repeatable.
    #[arg(long = "artifact", required = true)]
    artifacts: Vec<PathBuf>,
    /// Model prices per million tokens; the bundled list prices when omitted.
    #[arg(long)]
    pricing: Option<PathBuf>,
    /// Count scoring calls in the deployment totals.
    #[arg(long)]
    include_scoring: bool,
    /// Also price the deployment totals under every model in the table.
    #[arg(long)]
    all_models: bool,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    router: PathBuf,
    /// Run artifact whose stored features are routed.
    #[arg(long, conflicts_with = "features", required_unless_present = "features")]
    artifact: Option<PathBuf>,
    /// Feature rows, one JSON object per line.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    /// Print the ten features next to each decision.
    #[arg(long)]
    explain: bool,
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Kb(KbCommand::Validate { path }) => kb_validate(&path),
        Command::Link(args) => link(args),
        Command::FullPrompting(args) => full_prompting(args),
        Command::TrainRouter(args) => train(args),
        Command::Calibrate(args) => calibrate(args),
        Command::Evaluate(args) => evaluate(args),
        Command::CostReport(args) => cost_report(args),
        Command::Route(args) => route(args),
    }
}

fn kb_validate(path: &Path) -> Result<()> {
    let kb = read_kb(path)?;
    let no_description = kb.entities().filter(|e| e.description.trim().is_empty()).count();
    println!("{}: ok", path.display());
    println!("entities {}", kb.len());
    println!("aliases {}", kb.alias_count());
    println!("without description {no_description}");
    Ok(())
}

fn prepare(inputs: &RunInputs) -> Result<(RunConfig, linkrouter::kb::KnowledgeBase, Vec<MentionRecord>)> {
    let mut config = load_config(inputs.config.as_deref())?;
    if let Some(s) = inputs.strategy {
        config.strategy = s;
    }
    Ok((config, read_kb(&inputs.kb)?, read_mentions(&inputs.mentions)?))
}

fn file_stem(key: &str) -> String {
    key.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn dump_prompts(dir: &Path, artifact: &RunArtifact, records: &[MentionRecord], kind: StrategyKind) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    let strategy = PromptStrategy::standard(kind);
    let contexts: BTreeMap<&str, &str> = records
        .iter()
        .map(|r| (r.mention_key.as_str(), r.context.as_str()))
        .collect();
    let mut n = 0;
    for m in &artifact.mentions {
        if m.decision.source == DecisionSource::EasyPath || m.candidates.is_empty() {
            continue;
        }
        let prompt = build_reasoning_prompt(&strategy, &m.surface, contexts[m.mention_key.as_str()], &m.candidates);
        std::fs::write(dir.join(format!("{}.txt", file_stem(&m.mention_key))), prompt)?;
        n += 1;
    }
    Ok(n)
}

fn finish_run(inputs: &RunInputs, artifact: &RunArtifact, records: &[MentionRecord], config: &RunConfig) -> Result<()> {
    write_text(&inputs.out, &artifact.to_json())?;
    let reasoning = artifact.ledger.totals_for(Purpose::Reasoning);
    println!("mentions {}", artifact.mentions.len());
    if artifact.metadata.mode == RunMode::Routed {
        let easy = artifact.routes().iter().filter(|r| **r == Difficulty::Easy).count();
        println!("routed easy {easy}, hard {}", artifact.routes().len() - easy);
    }
    println!(
        "reasoning calls {} ({} input / {} output tokens)",
        artifact.reasoning_calls(),
        reasoning.input_tokens,
        reasoning.output_tokens
    );
    println!("degraded {}", artifact.degraded_keys().len());
    if let Some(dir) = &inputs.dump_prompts {
        let n = dump_prompts(dir, artifact, records, config.strategy)?;
        println!("wrote {n} prompts to {}", dir.display());
    }
    println!("artifact {}", inputs.out.display());
    Ok(())
}

fn link(args: LinkArgs) -> Result<()> {
    let (mut config, kb, records) = prepare(&args.inputs)?;
    if args.tau.is_some() {
        config.tau_override = args.tau;
        config.validate()?;
    }
    let model = read_router(&args.router)?;
    let backend = Backend::from_config(&config)?;
    let artifact = run_pipeline(&kb, &records, &model, &config, &backend.services(&config))?;
    finish_run(&args.inputs, &artifact, &records, &config)
}

fn full_prompting(args: FullArgs) -> Result<()> {
    let (config, kb, records) = prepare(&args.inputs)?;
    let backend = Backend::from_config(&config)?;
    let artifact = run_full_prompting(&kb, &records, &config, &backend.services(&config))?;
    finish_run(&args.inputs, &artifact, &records, &config)
}

fn read_rows(path: &Path) -> Result<Vec<FeatureRow>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_feature_rows(BufReader::new(file))?)
}

fn label_counts(rows: &[FeatureRow]) -> (usize, usize) {
    let easy = rows.iter().filter(|r| r.label == Difficulty::Easy).count();
    (easy, rows.len() - easy)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.forest.seed = seed;
    }
    if let Some(n) = args.trees {
        config.forest.n_trees = n;
    }
    for name in &args.drop_feature {
        let Some(i) = feature_index(name) else {
            bail!("unknown feature {name:?}; known: {}", FEATURE_NAMES.join(", "));
        };
        if !config.forest.dropped_features.contains(&i) {
            config.forest.dropped_features.push(i);
        }
    }

    let (train_rows, val_rows) = match (&args.kb, &args.train_features) {
        (Some(kb_path), _) => {
            let kb = read_kb(kb_path)?;
            let train = read_mentions(args.train.as_deref().expect("required by clap"))?;
            let val = read_mentions(args.val.as_deref().expect("required by clap"))?;
            let backend = Backend::from_config(&config)?;
            let services = backend.services(&config);
            let (t, ledger, _) = extract_feature_rows(&kb, &train, &config, &services)?;
            let (v, val_ledger, _) = extract_feature_rows(&kb, &val, &config, &services)?;
            let scoring = ledger.totals() + val_ledger.totals();
            println!(
                "scoring calls {} ({} input / {} output tokens)",
                ledger.len() + val_ledger.len(),
                scoring.input_tokens,
                scoring.output_tokens
            );
            (t, v)
        }
        (None, Some(train_path)) => (
            read_rows(train_path)?,
            read_rows(args.val_features.as_deref().expect("required by clap"))?,
        ),
        (None, None) => bail!("pass --kb with --train and --val, or --train-features with --val-features"),
    };

    if let Some(dir) = &args.features_out {
        std::fs::create_dir_all(dir)?;
        write_feature_rows(File::create(dir.join("train_features.jsonl"))?, &train_rows)?;
        write_feature_rows(File::create(dir.join("val_features.jsonl"))?, &val_rows)?;
        println!("feature tables in {}", dir.display());
    }

    let (model, oob) = train_router(&train_rows, &val_rows, &config.forest)?;
    let (te, th) = label_counts(&train_rows);
    let (ve, vh) = label_counts(&val_rows);
    println!("train rows {} (easy {te}, hard {th})", train_rows.len());
    println!("val rows {} (easy {ve}, hard {vh})", val_rows.len());
    println!("trees {}, seed {}", model.trees.len(), model.train_seed);
    if !config.forest.dropped_features.is_empty() {
        let names: Vec<&str> = config
            .forest
            .dropped_features
            .iter()
            .map(|i| FEATURE_NAMES[*i])
            .collect();
        println!("dropped features {}", names.join(", "));
    }
    if let Some(acc) = oob {
        println!("out-of-bag accuracy {acc:.4}");
    }
    print_calibration(&model);
    write_text(&args.out, &model.to_json()?)?;
    println!("router {}", args.out.display());
    Ok(())
}

fn print_calibration(model: &linkrouter::router::RouterModel) {
    match &model.calibration {
        Some(c) => {
            println!("tau {:.6} (J {:.4}, TPR {:.4}, FPR {:.4})", c.tau, c.j, c.tpr, c.fpr);
            if let Some(w) = &c.warning {
                println!("warning: {w}");
            }
        }
        None => println!("tau {:.6} (uncalibrated)", model.tau),
    }
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    let mut model = read_router(&args.router)?;
    let rows = read_rows(&args.features)?;
    let (features, labels): (Vec<RouterFeatures>, Vec<Difficulty>) = rows.iter().map(|r| (r.features, r.label)).unzip();
    model.calibrate(&features, &labels)?;
    print_calibration(&model);
    let out = args.out.as_deref().unwrap_or(&args.router);
    write_text(out, &model.to_json()?)?;
    println!("router {}", out.display());
    Ok(())
}

fn read_artifact(path: &Path) -> Result<RunArtifact> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RunArtifact::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

/// Router quality over mentions that got a probability; labels come from the
/// stored easy-path answer.
fn routed_quality(artifact: &RunArtifact, gold: &BTreeMap<String, String>) -> Result<Option<RouterReport>> {
    let scored: Vec<_> = artifact
        .mentions
        .iter()
        .filter(|m| m.easy_probability.is_some() && m.route.is_some() && gold.contains_key(&m.mention_key))
        .collect();
    let baseline: BTreeMap<String, String> = scored
        .iter()
        .filter_map(|m| Some((m.mention_key.clone(), m.baseline_entity_id.clone()?)))
        .collect();
    let subset: BTreeMap<String, String> = scored
        .iter()
        .map(|m| (m.mention_key.clone(), gold[&m.mention_key].clone()))
        .collect();
    let labels: BTreeMap<String, Difficulty> = label_cases(&baseline, &subset)
        .into_iter()
        .map(|l| (l.mention_key, l.label))
        .collect();
    let probs: Vec<f64> = scored.iter().filter_map(|m| m.easy_probability).collect();
    let routes: Vec<Difficulty> = scored.iter().filter_map(|m| m.route).collect();
    let truth: Vec<Difficulty> = scored.iter().map(|m| labels[&m.mention_key]).collect();
    let correct: Vec<bool> = scored
        .iter()
        .map(|m| m.decision.chosen_entity_id.as_ref() == gold.get(&m.mention_key))
        .collect();
    let both = truth.contains(&Difficulty::Easy) && truth.contains(&Difficulty::Hard);
    if !both {
        log::warn!("router labels are single-class; skipping the router report");
        return Ok(None);
    }
    Ok(Some(router_report(&probs, &routes, &truth, &correct)?))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let artifact = read_artifact(&args.artifact)?;
    let gold = match &args.gold {
        Some(path) => read_mentions(path)?
            .into_iter()
            .filter_map(|r| Some((r.mention_key, r.gold_entity_id?)))
            .collect(),
        None => artifact.gold(),
    };
    if gold.is_empty() {
        bail!("no gold links: pass --gold or evaluate an artifact built from gold-labelled mentions");
    }
    let linking = score_decisions(&artifact.decisions(), &gold)?;
    print!("{}", linking.to_table());

    let router = if artifact.metadata.mode == RunMode::Routed {
        routed_quality(&artifact, &gold)?
    } else {
        None
    };
    if let Some(r) = &router {
        println!(
            "router AUC {:.4}  accuracy {:.4}  F1 {:.4}  easy-acc {:.4}  hard-acc {:.4}",
            r.auc, r.accuracy, r.f1, r.easy_acc, r.hard_acc
        );
    }

    let reduction: Option<TokenReduction> = match &args.baseline {
        Some(path) => {
            let base = read_artifact(path)?;
            let with = artifact.ledger.deployment_totals(args.include_scoring);
            let without = base.ledger.deployment_totals(args.include_scoring);
            let r = token_reduction_report(with, without)?;
            println!(
                "tokens with router {} in / {} out, without {} in / {} out",
                with.input_tokens, with.output_tokens, without.input_tokens, without.output_tokens
            );
            println!(
                "input reduction {:.2}%  output reduction {:.2}%",
                r.input_reduction_pct, r.output_reduction_pct
            );
            Some(r)
        }
        None => None,
    };

    let degraded = artifact.degraded_keys();
    if !degraded.is_empty() {
        println!("degraded mentions {}: {}", degraded.len(), degraded.join(", "));
    }

    if let Some(path) = &args.report {
        let report = json!({
            "format_version": 1,
            "kind": "evaluation_report",
            "artifact": args.artifact,
            "config_digest": artifact.metadata.config_digest,
            "mode": artifact.metadata.mode,
            "linking": linking,
            "router": router,
            "token_reduction": reduction,
            "degraded": degraded,
        });
        write_text(path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
        println!("report {}", path.display());
    }
    Ok(())
}

fn load_pricing(path: Option<&Path>) -> Result<PriceTable> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(PriceTable::from_json(&text)?)
        }
        None => Ok(PriceTable::reference()),
    }
}

fn cost_cell(totals: TokenTotals, pricing: &PriceTable, model: &str) -> String {
    match estimate_cost(totals, pricing, model) {
        Ok(c) => format!("${:.6}", c.micro_dollars() as f64 / 1e6),
        Err(_) => "no price".into(),
    }
}

fn cost_report(args: CostArgs) -> Result<()> {
    let pricing = load_pricing(args.pricing.as_deref())?;
    for path in &args.artifacts {
        let artifact = read_artifact(path)?;
        println!("{} ({:?})", path.display(), artifact.metadata.mode);
        println!(
            "{:<10} {:<28} {:>7} {:>12} {:>12} {:>14}",
            "purpose", "model", "calls", "input", "output", "cost"
        );
        for purpose in [Purpose::Scoring, Purpose::Reasoning] {
            let calls = artifact.ledger.count(purpose);
            for (model, t) in artifact.ledger.per_model_totals(Some(purpose)) {
                println!(
                    "{:<10} {:<28} {:>7} {:>12} {:>12} {:>14}",
                    format!("{purpose:?}").to_lowercase(),
                    model,
                    calls,
                    t.input_tokens,
                    t.output_tokens,
                    cost_cell(t, &pricing, &model)
                );
            }
        }
        let deployment = artifact.ledger.deployment_totals(args.include_scoring);
        println!(
            "deployment totals {} input / {} output{}",
            deployment.input_tokens,
            deployment.output_tokens,
            if args.include_scoring {
                " (scoring included)"
            } else {
                ""
            }
        );
        if args.all_models {
            for model in pricing.models() {
                println!("  priced as {model:<28} {:>14}", cost_cell(deployment, &pricing, model));
            }
        }
        println!();
    }
    Ok(())
}

fn route(args: RouteArgs) -> Result<()> {
    let mut model = read_router(&args.router)?;
    if let Some(t) = args.tau {
        if !(0.0..=1.0).contains(&t) {
            bail!("tau {t} outside [0, 1]");
        }
        model.tau = t;
    }
    let rows: Vec<(String, Option<RouterFeatures>)> = match (&args.artifact, &args.features) {
        (Some(path), _) => read_artifact(path)?
            .mentions
            .into_iter()
            .map(|m| (m.mention_key, m.features))
            .collect(),
        (None, Some(path)) => read_rows(path)?
            .into_iter()
            .map(|r| (r.mention_key, Some(r.features)))
            .collect(),
        (None, None) => unreachable!("clap requires one input"),
    };
    println!("tau {:.6}", model.tau);
    for (key, features) in rows {
        let Some(f) = features else {
            println!("{key}\tno features");
            continue;
        };
        let p = model.predict_easy_probability(&f);
        let route = if model.route(&f) == Difficulty::Easy {
            "EASY"
        } else {
            "HARD"
        };
        println!("{key}\tp_easy={p:.4}\t{route}");
        if args.explain {
            for (name, v) in FEATURE_NAMES.iter().zip(f.to_array()) {
                println!("    {name:<18} {v:.6}");
            }
        }
    }
    Ok(())
}
