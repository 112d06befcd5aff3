//! Synthetic corpora and scripted LLM backends for offline runs and tests.
//!
//! Every surface form has its own small set of entities. In an easy mention
//! the gold entity has the top prior and the context repeats words from its
//! description, so the easy path gets it right with a wide margin. In a hard
//! mention a decoy holds the top prior and the context is filler, so the easy
//! path picks the decoy.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kb::Entity;
use crate::llm::{prompt_digest, Completion, CompletionRequest, LlmClient, LlmError};
use crate::pipeline::{extract_sentence, MentionRecord};
use crate::router::Difficulty;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub mentions: usize,
    /// Share of easy mentions, rounded to a whole count.
    pub easy_share: f64,
    /// Inclusive range of entities sharing each surface form.
    pub entities_per_surface: (usize, usize),
    pub seed: u64,
    pub key_prefix: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            mentions: 100,
            easy_share: 0.5,
            entities_per_surface: (4, 8),
            seed: 0,
            key_prefix: "syn".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticCorpus {
    pub entities: Vec<Entity>,
    pub records: Vec<MentionRecord>,
    /// Difficulty each mention was built to have.
    pub intended: Vec<Difficulty>,
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];

struct Words {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Words {
    fn fresh(&mut self, syllables: usize) -> String {
        loop {
            let w: String = (0..syllables)
                .map(|_| {
                    format!(
                        "{}{}",
                        ONSETS[self.rng.gen_range(0..ONSETS.len())],
                        NUCLEI[self.rng.gen_range(0..NUCLEI.len())]
                    )
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

/// Deterministic for a given spec.
pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut words = Words {
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed),
        used: BTreeSet::new(),
    };
    let filler: Vec<String> = (0..200).map(|_| words.fresh(2)).collect();

    let easy_count = (spec.mentions as f64 * spec.easy_share).round() as usize;
    let mut intended: Vec<Difficulty> = (0..spec.mentions)
        .map(|i| {
            if i < easy_count {
                Difficulty::Easy
            } else {
                Difficulty::Hard
            }
        })
        .collect();
    intended.shuffle(&mut rng);

    let mut corpus = SyntheticCorpus::default();
    for (i, difficulty) in intended.iter().enumerate() {
        let surface = capitalize(&words.fresh(3));
        let (lo, hi) = spec.entities_per_surface;
        let k = rng.gen_range(lo.max(2)..=hi.max(lo.max(2)));
        let descriptions: Vec<Vec<String>> = (0..k).map(|_| (0..6).map(|_| words.fresh(3)).collect()).collect();
        let mut priors: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..0.3)).collect();
        let gold = rng.gen_range(0..k);
        let decoy = (gold + 1 + rng.gen_range(0..k - 1)) % k;
        let mut context_words: Vec<String> = (0..4).map(|_| filler[rng.gen_range(0..filler.len())].clone()).collect();
        match difficulty {
            Difficulty::Easy => {
                priors[gold] = rng.gen_range(0.5..0.9);
                context_words.extend(descriptions[gold][..5].iter().cloned());
            }
            Difficulty::Hard => {
                priors[gold] = rng.gen_range(0.01..0.1);
                priors[decoy] = rng.gen_range(0.5..0.9);
                context_words.extend((0..5).map(|_| filler[rng.gen_range(0..filler.len())].clone()));
            }
        }
        context_words.shuffle(&mut rng);
        let at = rng.gen_range(0..=context_words.len());
        context_words.insert(at, surface.clone());
        let context = format!("{}.", context_words.join(" "));

        let ids: Vec<String> = (0..k)
            .map(|j| format!("{}{}x{}", spec.key_prefix.to_uppercase(), i, j))
            .collect();
        for j in 0..k {
            corpus.entities.push(Entity {
                entity_id: ids[j].clone(),
                title: format!("{surface} ({})", capitalize(&descriptions[j][5])),
                description: descriptions[j].join(" "),
                aliases: vec![surface.clone()],
                prior: priors[j],
            });
        }
        corpus.records.push(MentionRecord {
            mention_key: format!("{}-{i:04}", spec.key_prefix),
            sentence: extract_sentence(&context, &surface),
            surface,
            context,
            gold_entity_id: Some(ids[gold].clone()),
        });
    }
    corpus.intended = intended;
    corpus
}

/// Answers scoring prompts with a pseudo-random confidence per listed
/// candidate, derived from a digest of the candidate id and the context.
pub struct ScriptedScorer;

fn between<'t>(text: &'t str, start: &str, end: &str) -> Option<&'t str> {
    let s = text.find(start)? + start.len();
    let e = text[s..].find(end)? + s;
    Some(&text[s..e])
}

impl LlmClient for ScriptedScorer {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let context = between(&request.prompt, "Context: ", "\n").unwrap_or("");
        let listing = between(&request.prompt, "Candidates:\n", "\nFor each candidate").unwrap_or("");
        let scores: Vec<String> = listing
            .lines()
            .filter_map(|l| between(l, "[", "]"))
            .map(|id| {
                let h = u32::from_str_radix(&prompt_digest(&format!("{id}|{context}"))[..4], 16).unwrap_or(0);
                format!("\"{id}\": {:.2}", 0.05 + 0.9 * f64::from(h) / 65535.0)
            })
            .collect();
        Ok(Completion::text(format!("{{\"scores\": {{{}}}}}", scores.join(", "))))
    }
}

/// Answers reasoning prompts with the gold entity when it is on the menu and
/// −1 otherwise. Contexts in `garbage_first` get an unusable reply until the
/// prompt carries the format reminder.
pub struct OracleReasoner {
    gold_by_context: HashMap<String, String>,
    garbage_first: HashSet<String>,
}

impl OracleReasoner {
    pub fn new(records: &[MentionRecord]) -> Self {
        Self {
            gold_by_context: records
                .iter()
                .filter_map(|r| Some((r.context.clone(), r.gold_entity_id.clone()?)))
                .collect(),
            garbage_first: HashSet::new(),
        }
    }

    pub fn garbage_first_for(mut self, context: &str) -> Self {
        self.garbage_first.insert(context.to_string());
        self
    }
}

impl LlmClient for OracleReasoner {
    fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        let prompt = &request.prompt;
        let query = &prompt[prompt.rfind("\nMention: \"").unwrap_or(0)..];
        let context = between(query, "Context: \"", "\"\n").unwrap_or("");
        if self.garbage_first.contains(context) && !prompt.ends_with(crate::linker::FORMAT_REMINDER) {
            return Ok(Completion::text("Hmm, it is probably the company."));
        }
        let gold = self.gold_by_context.get(context);
        let pick = query
            .lines()
            .filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit()))
            .enumerate()
            .find(|(_, l)| gold.is_some_and(|g| l.ends_with(&format!("[{g}]"))));
        let text = match pick {
            Some((i, _)) => format!(
                "The context points to this candidate.\n{{\"linked_entity\": {}, \"entity_id\": \"{}\", \"entity_title\": \"\", \"reasoning\": \"context match\"}}",
                i + 1,
                gold.expect("matched")
            ),
            None => r#"{"linked_entity": -1, "entity_id": "-1", "entity_title": "None", "reasoning": "no candidate fits"}"#.to_string(),
        };
        Ok(Completion::text(text))
    }
}
