//! Accuracy, router and token-reduction reports over finished runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linker::{DecisionSource, LinkDecision};
use crate::llm::TokenTotals;
use crate::router::Difficulty;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("decision for {0:?} has no gold entry")]
    UnknownMention(String),
    #[error("mention {0:?} has more than one decision")]
    DuplicateDecision(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("AUC is undefined with only one class present")]
    SingleClass,
    #[error("baseline {0} token total is zero")]
    ZeroBaseline(&'static str),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
}

impl SubsetReport {
    fn new(n: u64, correct: u64) -> Self {
        Self {
            n,
            correct,
            accuracy: ratio(correct, n),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MentionDistribution {
    pub easy_count: u64,
    pub hard_count: u64,
    pub easy_pct: f64,
    pub hard_pct: f64,
}

impl fmt::Display for MentionDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "easy {} ({:.1}%), hard {} ({:.1}%)",
            self.easy_count, self.easy_pct, self.hard_count, self.hard_pct
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: f64,
    /// Decisions made by the easy path.
    pub easy_subset: SubsetReport,
    /// Decisions made by the reasoner, including its fallbacks.
    pub hard_subset: SubsetReport,
    pub mention_distribution: MentionDistribution,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// TP is a correct link, FP a wrong one, FN a NONE answer; accuracy is
/// `tp / (tp + fp + fn)`.
pub fn score_decisions(decisions: &[LinkDecision], gold: &BTreeMap<String, String>) -> Result<EvalReport, EvalError> {
    let mut seen = BTreeSet::new();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut easy = (0, 0);
    let mut hard = (0, 0);
    for d in decisions {
        let expected = gold
            .get(&d.mention_key)
            .ok_or_else(|| EvalError::UnknownMention(d.mention_key.clone()))?;
        if !seen.insert(d.mention_key.as_str()) {
            return Err(EvalError::DuplicateDecision(d.mention_key.clone()));
        }
        let correct = match &d.chosen_entity_id {
            Some(id) if id == expected => {
                tp += 1;
                true
            }
            Some(_) => {
                fp += 1;
                false
            }
            None => {
                fn_ += 1;
                false
            }
        };
        let subset = match d.source {
            DecisionSource::EasyPath => &mut easy,
            DecisionSource::Reasoner | DecisionSource::Fallback => &mut hard,
        };
        subset.0 += 1;
        subset.1 += u64::from(correct);
    }
    Ok(EvalReport {
        tp,
        fp,
        fn_,
        accuracy: ratio(tp, tp + fp + fn_),
        easy_subset: SubsetReport::new(easy.0, easy.1),
        hard_subset: SubsetReport::new(hard.0, hard.1),
        mention_distribution: distribution(easy.0, hard.0),
    })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let row = |name: &str, s: &SubsetReport| format!("{name:<8} {:>6} {:>8} {:>9.4}\n", s.n, s.correct, s.accuracy);
        let mut out = String::new();
        out += &format!(
            "TP {}  FP {}  FN {}  accuracy {:.4}\n",
            self.tp, self.fp, self.fn_, self.accuracy
        );
        out += &format!("{:<8} {:>6} {:>8} {:>9}\n", "subset", "n", "correct", "accuracy");
        out += &row("easy", &self.easy_subset);
        out += &row("hard", &self.hard_subset);
        out += &format!("mentions: {}\n", self.mention_distribution);
        out
    }
}

fn distribution(easy_count: u64, hard_count: u64) -> MentionDistribution {
    let total = easy_count + hard_count;
    MentionDistribution {
        easy_count,
        hard_count,
        easy_pct: 100.0 * ratio(easy_count, total),
        hard_pct: 100.0 * ratio(hard_count, total),
    }
}

pub fn mention_distribution(routes: &[Difficulty]) -> MentionDistribution {
    let easy = routes.iter().filter(|r| **r == Difficulty::Easy).count() as u64;
    distribution(easy, routes.len() as u64 - easy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterReport {
    pub auc: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// Linking accuracy over mentions routed EASY.
    pub easy_acc: f64,
    /// Linking accuracy over mentions routed HARD.
    pub hard_acc: f64,
}

/// Trapezoidal ROC area with EASY as the positive class.
///
/// Thresholds are swept over distinct probabilities from high to low, so tied
/// scores form one diagonal segment. The area is accumulated as an integer
/// (twice the area times `P * N`), which makes it equal to the pair-counting
/// estimate.
pub fn roc_auc(probabilities: &[f64], labels: &[Difficulty]) -> Result<f64, EvalError> {
    if probabilities.len() != labels.len() {
        return Err(EvalError::LengthMismatch(format!(
            "{} probabilities, {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let mut pts: Vec<(f64, bool)> = probabilities
        .iter()
        .zip(labels)
        .map(|(p, l)| (*p, *l == Difficulty::Easy))
        .collect();
    let pos = pts.iter().filter(|p| p.1).count() as u128;
    let neg = pts.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0u128, 0u128);
    let mut twice_area = 0u128;
    for group in pts.chunk_by(|a, b| a.0 == b.0) {
        let gp = group.iter().filter(|p| p.1).count() as u128;
        let gn = group.len() as u128 - gp;
        twice_area += gn * (2 * tp + gp);
        tp += gp;
        fp += gn;
    }
    debug_assert_eq!((tp, fp), (pos, neg));
    Ok(twice_area as f64 / (2 * pos * neg) as f64)
}

/// `linking_correct[i]` says whether mention `i` ended up linked correctly.
pub fn router_report(
    probabilities: &[f64],
    predicted: &[Difficulty],
    true_labels: &[Difficulty],
    linking_correct: &[bool],
) -> Result<RouterReport, EvalError> {
    let n = true_labels.len();
    if predicted.len() != n || linking_correct.len() != n {
        return Err(EvalError::LengthMismatch(format!(
            "{} predictions, {} labels, {} correctness flags",
            predicted.len(),
            n,
            linking_correct.len()
        )));
    }
    let auc = roc_auc(probabilities, true_labels)?;

    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    let mut by_route = [(0u64, 0u64); 2];
    for i in 0..n {
        match (predicted[i], true_labels[i]) {
            (Difficulty::Easy, Difficulty::Easy) => tp += 1,
            (Difficulty::Easy, Difficulty::Hard) => fp += 1,
            (Difficulty::Hard, Difficulty::Easy) => fn_ += 1,
            (Difficulty::Hard, Difficulty::Hard) => tn += 1,
        }
        let slot = &mut by_route[usize::from(predicted[i] == Difficulty::Hard)];
        slot.0 += 1;
        slot.1 += u64::from(linking_correct[i]);
    }
    Ok(RouterReport {
        auc,
        accuracy: ratio(tp + tn, n as u64),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        easy_acc: ratio(by_route[0].1, by_route[0].0),
        hard_acc: ratio(by_route[1].1, by_route[1].0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenReduction {
    pub input_reduction_pct: f64,
    pub output_reduction_pct: f64,
}

/// `100 * (1 - with / without)`, for input and output separately.
pub fn token_reduction_report(
    with_router: TokenTotals,
    without_router: TokenTotals,
) -> Result<TokenReduction, EvalError> {
    if without_router.input_tokens == 0 {
        return Err(EvalError::ZeroBaseline("input"));
    }
    if without_router.output_tokens == 0 {
        return Err(EvalError::ZeroBaseline("output"));
    }
    let pct = |w: u64, wo: u64| 100.0 * (1.0 - w as f64 / wo as f64);
    Ok(TokenReduction {
        input_reduction_pct: pct(with_router.input_tokens, without_router.input_tokens),
        output_reduction_pct: pct(with_router.output_tokens, without_router.output_tokens),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Difficulty::{Easy, Hard};

    fn decision(key: &str, chosen: Option<&str>, source: DecisionSource) -> LinkDecision {
        LinkDecision {
            chosen_entity_id: chosen.map(String::from),
            ..LinkDecision::none(key, source)
        }
    }

    fn gold(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn three_right_one_wrong_one_none() {
        let g = gold(&[("a", "1"), ("b", "2"), ("c", "3"), ("d", "4"), ("e", "5")]);
        let d = [
            decision("a", Some("1"), DecisionSource::EasyPath),
            decision("b", Some("2"), DecisionSource::EasyPath),
            decision("c", Some("3"), DecisionSource::Reasoner),
            decision("d", Some("9"), DecisionSource::Reasoner),
            decision("e", None, DecisionSource::Reasoner),
        ];
        let r = score_decisions(&d, &g).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (3, 1, 1));
        assert_eq!(r.accuracy, 0.6);
        assert_eq!(r.easy_subset, SubsetReport::new(2, 2));
        assert_eq!(r.hard_subset, SubsetReport::new(3, 1));
        assert_eq!(r.mention_distribution.easy_count, 2);
        assert!(r.to_table().contains("accuracy 0.6000"));
    }

    #[test]
    fn all_correct() {
        let g = gold(&[("a", "1"), ("b", "2")]);
        let d = [
            decision("a", Some("1"), DecisionSource::EasyPath),
            decision("b", Some("2"), DecisionSource::Fallback),
        ];
        assert_eq!(score_decisions(&d, &g).unwrap().accuracy, 1.0);
    }

    #[test]
    fn ten_decision_hand_tally() {
        let g = gold(&[
            ("m0", "A"),
            ("m1", "B"),
            ("m2", "C"),
            ("m3", "D"),
            ("m4", "E"),
            ("m5", "F"),
            ("m6", "G"),
            ("m7", "H"),
            ("m8", "I"),
            ("m9", "J"),
        ]);
        use DecisionSource::*;
        let d = [
            decision("m0", Some("A"), EasyPath), // tp easy
            decision("m1", Some("X"), EasyPath), // fp easy
            decision("m2", Some("C"), Reasoner), // tp hard
            decision("m3", None, Reasoner),      // fn hard
            decision("m4", Some("E"), Fallback), // tp hard
            decision("m5", Some("F"), EasyPath), // tp easy
            decision("m6", None, EasyPath),      // fn easy
            decision("m7", Some("Z"), Reasoner), // fp hard
            decision("m8", Some("I"), Reasoner), // tp hard
            decision("m9", Some("J"), EasyPath), // tp easy
        ];
        // Tally: tp 6, fp 2, fn 2; easy 5 with 3 correct, hard 5 with 3 correct.
        let r = score_decisions(&d, &g).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (6, 2, 2));
        assert_eq!(r.accuracy, 0.6);
        assert_eq!((r.easy_subset.n, r.easy_subset.correct), (5, 3));
        assert_eq!((r.hard_subset.n, r.hard_subset.correct), (5, 3));
        assert_eq!(r.easy_subset.correct + r.hard_subset.correct, r.tp);
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let g = gold(&[("a", "1")]);
        assert_eq!(
            score_decisions(&[decision("zz", None, DecisionSource::EasyPath)], &g),
            Err(EvalError::UnknownMention("zz".into()))
        );
        let twice = [
            decision("a", None, DecisionSource::EasyPath),
            decision("a", None, DecisionSource::EasyPath),
        ];
        assert_eq!(
            score_decisions(&twice, &g),
            Err(EvalError::DuplicateDecision("a".into()))
        );
    }

    fn pair_count_auc(probs: &[f64], labels: &[Difficulty]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (pp, lp) in probs.iter().zip(labels) {
            for (pn, ln) in probs.iter().zip(labels) {
                if *lp == Easy && *ln == Hard {
                    pairs += 1.0;
                    if pp > pn {
                        wins += 1.0;
                    } else if pp == pn {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_extremes_and_six_points() {
        let labels = [Easy, Easy, Easy, Hard, Hard, Hard];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.7, 0.3, 0.2, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.3, 0.7, 0.8, 0.9], &labels).unwrap(), 0.0);
        let probs = [0.9, 0.4, 0.6, 0.6, 0.2, 0.7];
        let got = roc_auc(&probs, &labels).unwrap();
        // 9 pairs: (0.9 beats all 3), (0.4 beats 0.2 only), (0.6 beats 0.2, ties 0.6).
        assert_eq!(got, (3.0 + 1.0 + 1.5) / 9.0);
        assert_eq!(got, pair_count_auc(&probs, &labels));
        assert_eq!(roc_auc(&[0.5, 0.6], &[Easy, Easy]), Err(EvalError::SingleClass));
    }

    #[test]
    fn router_report_counts() {
        let probs = [0.9, 0.8, 0.3, 0.2];
        let pred = [Easy, Easy, Hard, Hard];
        let truth = [Easy, Hard, Easy, Hard];
        let correct = [true, false, true, true];
        let r = router_report(&probs, &pred, &truth, &correct).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.f1, 0.5);
        assert_eq!(r.easy_acc, 0.5);
        assert_eq!(r.hard_acc, 1.0);
        assert_eq!(r.auc, 0.75);
    }

    #[test]
    fn ace2004_input_reduction() {
        let r = token_reduction_report(TokenTotals::new(268_576, 12_811), TokenTotals::new(519_186, 25_123)).unwrap();
        assert!((r.input_reduction_pct - 48.2697).abs() < 1e-3);
        assert!((r.output_reduction_pct - 49.0069).abs() < 1e-3);
        let same = token_reduction_report(TokenTotals::new(5, 5), TokenTotals::new(5, 5)).unwrap();
        assert_eq!((same.input_reduction_pct, same.output_reduction_pct), (0.0, 0.0));
        let none = token_reduction_report(TokenTotals::new(0, 0), TokenTotals::new(5, 5)).unwrap();
        assert_eq!(none.input_reduction_pct, 100.0);
        assert!(token_reduction_report(TokenTotals::new(0, 0), TokenTotals::new(0, 5)).is_err());
    }

    #[test]
    fn distribution_examples() {
        let mut routes = vec![Easy; 129];
        routes.extend(vec![Hard; 127]);
        let d = mention_distribution(&routes);
        assert_eq!(format!("{:.1}", d.easy_pct), "50.4");
        assert_eq!(d.to_string(), "easy 129 (50.4%), hard 127 (49.6%)");
        let all = mention_distribution(&[Easy, Easy]);
        assert_eq!((all.easy_pct, all.hard_pct), (100.0, 0.0));
        let empty = mention_distribution(&[]);
        assert_eq!(
            (empty.easy_count, empty.hard_count, empty.easy_pct, empty.hard_pct),
            (0, 0, 0.0, 0.0)
        );
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(pts in proptest::collection::vec((0u8..=10, any::<bool>()), 2..200)) {
            let probs: Vec<f64> = pts.iter().map(|(p, _)| *p as f64 / 10.0).collect();
            let labels: Vec<Difficulty> = pts.iter().map(|(_, e)| if *e { Easy } else { Hard }).collect();
            prop_assume!(labels.contains(&Easy) && labels.contains(&Hard));
            let auc = roc_auc(&probs, &labels).unwrap();
            prop_assert!((auc - pair_count_auc(&probs, &labels)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&auc));
        }

        #[test]
        fn denominator_identity(outcomes in proptest::collection::vec((0u8..3, any::<bool>()), 0..50)) {
            let mut g = BTreeMap::new();
            let mut d = Vec::new();
            for (i, (o, easy)) in outcomes.iter().enumerate() {
                let key = format!("m{i}");
                g.insert(key.clone(), "G".to_string());
                let chosen = match o { 0 => Some("G"), 1 => Some("W"), _ => None };
                let src = if *easy { DecisionSource::EasyPath } else { DecisionSource::Reasoner };
                d.push(decision(&key, chosen, src));
            }
            let r = score_decisions(&d, &g).unwrap();
            prop_assert_eq!(r.tp + r.fp + r.fn_, outcomes.len() as u64);
            prop_assert_eq!(r.easy_subset.n + r.hard_subset.n, outcomes.len() as u64);
            prop_assert_eq!(r.easy_subset.correct + r.hard_subset.correct, r.tp);
            let m = r.mention_distribution;
            prop_assert_eq!(m.easy_count + m.hard_count, outcomes.len() as u64);
        }
    }
}
