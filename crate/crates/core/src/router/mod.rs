//! Easy/hard routing: ten aggregate features per mention, a random forest
//! trained on baseline-correctness labels, and a Youden-calibrated threshold.

mod calibrate;
mod features;
mod forest;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibrate::{calibrate_tau, youden_j, Calibration};
pub use features::{
    aggregate_features, feature_index, flattened_entropy, penalized_score, RouterFeatures, FEATURE_NAMES, N_FEATURES,
};
pub use forest::{forest_probability, train_forest, DecisionTree, Forest, ForestConfig, Node};

/// Threshold reported for the reference configuration; used until a model is calibrated.
pub const REFERENCE_TAU: f64 = 0.735;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("cannot aggregate features without candidate scores")]
    NoScores,
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("need at least 2 training samples, got {0}")]
    TooFewSamples(usize),
    #[error("labels contain a single class; both EASY and HARD are required")]
    SingleClass,
    #[error("invalid router configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid router model: {0}")]
    InvalidModel(String),
    #[error("router model serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Training label and routing decision share one type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "EASY",
            Difficulty::Hard => "HARD",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingLabel {
    pub mention_key: String,
    pub label: Difficulty,
}

/// EASY when the baseline prediction equals the gold id; a missing prediction is HARD.
/// Output follows the key order of `gold`.
pub fn label_cases(
    baseline_predictions: &BTreeMap<String, String>,
    gold: &BTreeMap<String, String>,
) -> Vec<TrainingLabel> {
    gold.iter()
        .map(|(key, gold_id)| TrainingLabel {
            mention_key: key.clone(),
            label: match baseline_predictions.get(key) {
                Some(pred) if pred == gold_id => Difficulty::Easy,
                _ => Difficulty::Hard,
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouterModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub config: ForestConfig,
    pub train_seed: u64,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    pub trees: Vec<DecisionTree>,
}

impl RouterModel {
    /// A model with the reference threshold; call [`RouterModel::calibrate`] to fit τ.
    pub fn new(trees: Vec<DecisionTree>, config: ForestConfig) -> Result<Self, RouterError> {
        let model = Self {
            format_version: MODEL_FORMAT_VERSION,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            train_seed: config.seed,
            config,
            tau: REFERENCE_TAU,
            calibration: None,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn train(
        features: &[RouterFeatures],
        labels: &[Difficulty],
        config: &ForestConfig,
    ) -> Result<(Self, Forest), RouterError> {
        let forest = train_forest(features, labels, config)?;
        let model = Self::new(forest.trees.clone(), config.clone())?;
        Ok((model, forest))
    }

    pub fn validate(&self) -> Result<(), RouterError> {
        let invalid = |m: String| Err(RouterError::InvalidModel(m));
        if self.format_version != MODEL_FORMAT_VERSION {
            return invalid(format!("unsupported format version {}", self.format_version));
        }
        if self.feature_names != FEATURE_NAMES {
            return invalid(format!(
                "feature names {:?} do not match {:?}",
                self.feature_names, FEATURE_NAMES
            ));
        }
        if self.trees.is_empty() {
            return invalid("model has no trees".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return invalid(format!("tau {} outside [0, 1]", self.tau));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate()
                .map_err(|e| RouterError::InvalidModel(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn predict_easy_probability(&self, f: &RouterFeatures) -> f64 {
        forest_probability(&self.trees, f)
    }

    /// EASY iff P(easy) >= τ.
    pub fn route(&self, f: &RouterFeatures) -> Difficulty {
        route_with(self.predict_easy_probability(f), self.tau)
    }

    pub fn calibrate(
        &mut self,
        features: &[RouterFeatures],
        labels: &[Difficulty],
    ) -> Result<&Calibration, RouterError> {
        let probs: Vec<f64> = features.iter().map(|f| self.predict_easy_probability(f)).collect();
        let cal = calibrate_tau(&probs, labels)?;
        self.tau = cal.tau;
        Ok(self.calibration.insert(cal))
    }

    pub fn to_json(&self) -> Result<String, RouterError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, RouterError> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

pub fn route_with(probability: f64, tau: f64) -> Difficulty {
    if probability >= tau {
        Difficulty::Easy
    } else {
        Difficulty::Hard
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut ChaCha8Rng) -> RouterFeatures {
        let mut a = [0.0; N_FEATURES];
        for v in a.iter_mut() {
            *v = rng.gen_range(-1.0..2.0);
        }
        RouterFeatures::from_array(a)
    }

    fn margin_set(n: usize, seed: u64) -> (Vec<RouterFeatures>, Vec<Difficulty>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let f = random_features(&mut rng);
                let l = if f.margin > 0.5 {
                    Difficulty::Easy
                } else {
                    Difficulty::Hard
                };
                (f, l)
            })
            .unzip()
    }

    #[test]
    fn label_rules() {
        let gold = BTreeMap::from([
            ("a".to_string(), "Q61".to_string()),
            ("b".to_string(), "Q61".to_string()),
            ("c".to_string(), "Q61".to_string()),
        ]);
        let pred = BTreeMap::from([
            ("a".to_string(), "Q61".to_string()),
            ("b".to_string(), "Q30".to_string()),
        ]);
        let labels: Vec<_> = label_cases(&pred, &gold).into_iter().map(|l| l.label).collect();
        assert_eq!(labels, [Difficulty::Easy, Difficulty::Hard, Difficulty::Hard]);
    }

    #[test]
    fn probability_is_mean_of_leaves() {
        let f = RouterFeatures::from_array([0.0; N_FEATURES]);
        let one = RouterModel::new(vec![DecisionTree::leaf(1.0)], ForestConfig::default()).unwrap();
        assert_eq!(one.predict_easy_probability(&f), 1.0);
        let two = RouterModel::new(
            vec![DecisionTree::leaf(1.0), DecisionTree::leaf(0.0)],
            ForestConfig::default(),
        )
        .unwrap();
        assert_eq!(two.predict_easy_probability(&f), 0.5);
    }

    /// Walks the serialized node arrays directly, independent of `DecisionTree::predict`.
    fn manual_probability(model_json: &serde_json::Value, x: &[f64; N_FEATURES]) -> f64 {
        let trees = model_json["trees"].as_array().unwrap();
        let mut total = 0.0;
        for t in trees {
            let nodes = t["nodes"].as_array().unwrap();
            let mut i = 0usize;
            loop {
                let node = &nodes[i];
                if let Some(leaf) = node.get("leaf") {
                    total += leaf["easy_fraction"].as_f64().unwrap();
                    break;
                }
                let s = &node["split"];
                let f = s["feature"].as_u64().unwrap() as usize;
                let thr = s["threshold"].as_f64().unwrap();
                i = if x[f] <= thr {
                    s["left"].as_u64().unwrap() as usize
                } else {
                    s["right"].as_u64().unwrap() as usize
                };
            }
        }
        total / trees.len() as f64
    }

    #[test]
    fn forest_matches_manual_traversal() {
        let (x, y) = margin_set(300, 21);
        let cfg = ForestConfig {
            n_trees: 15,
            ..ForestConfig::default()
        };
        let (model, _) = RouterModel::train(&x, &y, &cfg).unwrap();
        let json: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = random_features(&mut rng);
            let a = model.predict_easy_probability(&f);
            let b = manual_probability(&json, &f.to_array());
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn route_threshold_rule() {
        assert_eq!(route_with(0.80, REFERENCE_TAU), Difficulty::Easy);
        assert_eq!(route_with(0.70, REFERENCE_TAU), Difficulty::Hard);
        assert_eq!(route_with(REFERENCE_TAU, REFERENCE_TAU), Difficulty::Easy);
    }

    #[test]
    fn uncalibrated_model_uses_reference_tau() {
        let m = RouterModel::new(vec![DecisionTree::leaf(0.5)], ForestConfig::default()).unwrap();
        assert_eq!(m.tau, 0.735);
    }

    #[test]
    fn serialization_round_trip_preserves_probabilities() {
        let (x, y) = margin_set(400, 8);
        let cfg = ForestConfig {
            n_trees: 30,
            ..ForestConfig::default()
        };
        let (mut model, _) = RouterModel::train(&x, &y, &cfg).unwrap();
        let (vx, vy) = margin_set(100, 9);
        model.calibrate(&vx, &vy).unwrap();
        let back = RouterModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back.tau, model.tau);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let f = random_features(&mut rng);
            assert_eq!(
                back.predict_easy_probability(&f).to_bits(),
                model.predict_easy_probability(&f).to_bits()
            );
        }
    }

    #[test]
    fn from_json_rejects_reordered_feature_names() {
        let m = RouterModel::new(vec![DecisionTree::leaf(0.5)], ForestConfig::default()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["feature_names"].as_array_mut().unwrap().swap(0, 1);
        assert!(matches!(
            RouterModel::from_json(&v.to_string()),
            Err(RouterError::InvalidModel(_))
        ));
        v["feature_names"].as_array_mut().unwrap().swap(0, 1);
        v["tau"] = serde_json::json!(1.5);
        assert!(RouterModel::from_json(&v.to_string()).is_err());
    }

    proptest! {
        #[test]
        fn raising_tau_never_turns_hard_into_easy(p in 0.0f64..=1.0, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if route_with(p, lo) == Difficulty::Hard {
                prop_assert_eq!(route_with(p, hi), Difficulty::Hard);
            }
        }
    }
}
