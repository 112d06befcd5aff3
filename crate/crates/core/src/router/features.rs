use serde::{Deserialize, Serialize};

use crate::scoring::CandidateScores;
use crate::text::word_count;

use super::RouterError;

/// Feature order used by the forest and by every serialized model.
pub const FEATURE_NAMES: [&str; 10] = [
    "top1", "top2", "margin", "entropy", "n_cands", "sent_len", "score_1", "score_2", "score_3", "score_4",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterFeatures {
    pub top1: f64,
    pub top2: f64,
    pub margin: f64,
    pub entropy: f64,
    pub n_cands: f64,
    pub sent_len: f64,
    pub score_1: f64,
    pub score_2: f64,
    pub score_3: f64,
    pub score_4: f64,
}

impl RouterFeatures {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.top1,
            self.top2,
            self.margin,
            self.entropy,
            self.n_cands,
            self.sent_len,
            self.score_1,
            self.score_2,
            self.score_3,
            self.score_4,
        ]
    }

    pub fn from_array(a: [f64; N_FEATURES]) -> Self {
        Self {
            top1: a[0],
            top2: a[1],
            margin: a[2],
            entropy: a[3],
            n_cands: a[4],
            sent_len: a[5],
            score_1: a[6],
            score_2: a[7],
            score_3: a[8],
            score_4: a[9],
        }
    }
}

/// `(theta1 + theta2 - theta3 + phi) / 3`. Four terms over three, as published.
pub fn penalized_score(s: &CandidateScores) -> f64 {
    (s.theta1 + s.theta2 - s.theta3 + s.phi) / 3.0
}

/// Base-2 entropy of the flattened score multiset after shifting it to be
/// nonnegative and normalizing by its sum. A zero sum has entropy 0.
pub fn flattened_entropy(values: &[f64]) -> f64 {
    let min = values.iter().copied().fold(0.0_f64, f64::min);
    let shifted: Vec<f64> = values.iter().map(|v| v - min).collect();
    let total: f64 = shifted.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = shifted
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| {
            let p = x / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

pub fn aggregate_features(scores: &[CandidateScores], sentence: &str) -> Result<RouterFeatures, RouterError> {
    if scores.is_empty() {
        return Err(RouterError::NoScores);
    }
    let n = scores.len();

    let mut penalized: Vec<f64> = scores.iter().map(penalized_score).collect();
    penalized.sort_by(|a, b| b.total_cmp(a));
    let top1 = penalized[0];
    let top2 = penalized.get(1).copied().unwrap_or(0.0);

    let flat: Vec<f64> = scores
        .iter()
        .flat_map(|s| [s.theta1, s.theta2, s.theta3, s.phi])
        .collect();

    Ok(RouterFeatures {
        top1,
        top2,
        margin: top1 - top2,
        entropy: flattened_entropy(&flat),
        n_cands: n as f64,
        sent_len: word_count(sentence).max(1) as f64,
        score_1: mean(scores.iter().map(|s| s.theta1), n),
        score_2: mean(scores.iter().map(|s| s.theta2), n),
        score_3: mean(scores.iter().map(|s| s.theta3), n),
        score_4: mean(scores.iter().map(|s| s.phi), n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(t1: f64, t2: f64, t3: f64, phi: f64) -> CandidateScores {
        CandidateScores {
            entity_id: "X".into(),
            theta1: t1,
            theta2: t2,
            theta3: t3,
            phi,
        }
    }

    #[test]
    fn penalized_examples() {
        assert!((penalized_score(&s(0.9, 0.9, 0.0, 0.9)) - 0.9).abs() < 1e-15);
        assert_eq!(penalized_score(&s(0.0, 0.0, 0.0, 0.0)), 0.0);
        assert!((penalized_score(&s(0.6, 0.3, 0.5, 0.8)) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn singleton_conventions() {
        let f = aggregate_features(&[s(1.0, 1.0, 0.0, 1.0)], "one two three").unwrap();
        assert_eq!(f.top1, 1.0);
        assert_eq!(f.top2, 0.0);
        assert_eq!(f.margin, 1.0);
        assert_eq!(f.n_cands, 1.0);
        assert_eq!(f.sent_len, 3.0);
    }

    #[test]
    fn uniform_scores_reach_entropy_bound() {
        for k in 1..=10 {
            let scores = vec![s(0.3, 0.3, 0.3, 0.3); k];
            let f = aggregate_features(&scores, "x").unwrap();
            assert!((f.entropy - ((4 * k) as f64).log2()).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_scores_have_zero_entropy() {
        let f = aggregate_features(&vec![s(0.0, 0.0, 0.0, 0.0); 3], "x").unwrap();
        assert_eq!(f.entropy, 0.0);
    }

    #[test]
    fn three_candidates_match_straight_line_recomputation() {
        let scores = [s(0.8, 0.6, 0.2, 0.9), s(0.1, 0.5, 0.4, 0.3), s(-0.2, 0.3, 0.1, 0.0)];
        let f = aggregate_features(&scores, "Target fell 1.52 or 3 percent").unwrap();

        // Independent recomputation, written out long-hand.
        let p0 = (0.8 + 0.6 - 0.2 + 0.9) / 3.0;
        let p1 = (0.1 + 0.5 - 0.4 + 0.3) / 3.0;
        let p2 = (-0.2 + 0.3 - 0.1 + 0.0) / 3.0;
        assert!(p0 > p1 && p1 > p2);
        let flat = [0.8, 0.6, 0.2, 0.9, 0.1, 0.5, 0.4, 0.3, -0.2, 0.3, 0.1, 0.0];
        let shifted: Vec<f64> = flat.iter().map(|x| x + 0.2).collect();
        let total: f64 = shifted.iter().sum();
        let mut h = 0.0;
        for x in &shifted {
            if *x > 0.0 {
                h -= (x / total) * (x / total).log2();
            }
        }
        let expected = [
            p0,
            p1,
            p0 - p1,
            h,
            3.0,
            6.0,
            (0.8 + 0.1 - 0.2) / 3.0,
            (0.6 + 0.5 + 0.3) / 3.0,
            (0.2 + 0.4 + 0.1) / 3.0,
            (0.9 + 0.3 + 0.0) / 3.0,
        ];
        for (i, (got, want)) in f.to_array().iter().zip(expected).enumerate() {
            assert!((got - want).abs() < 1e-12, "{}: {got} vs {want}", FEATURE_NAMES[i]);
        }
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(matches!(aggregate_features(&[], "x"), Err(RouterError::NoScores)));
    }

    proptest! {
        #[test]
        fn margin_identity_and_entropy_bounds(
            raw in proptest::collection::vec((-1.0f64..=1.0, -1.0f64..=1.0, -1.0f64..=1.0, 0.0f64..=1.0), 1..12)
        ) {
            let scores: Vec<_> = raw.iter().map(|(a, b, c, d)| s(*a, *b, *c, *d)).collect();
            let f = aggregate_features(&scores, "a b").unwrap();
            prop_assert_eq!(f.margin, f.top1 - f.top2);
            prop_assert!(f.entropy >= 0.0);
            prop_assert!(f.entropy <= (4.0 * f.n_cands).log2() + 1e-9);
            prop_assert!((0.0..=1.0).contains(&f.score_4));
        }
    }
}
