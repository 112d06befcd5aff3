//! Decision-threshold calibration by Youden's J with EASY as the positive class.

use serde::{Deserialize, Serialize};

use super::{Difficulty, RouterError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tau: f64,
    pub j: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub warning: Option<String>,
}

struct Counts {
    positives: u64,
    negatives: u64,
}

fn class_counts(labels: &[Difficulty]) -> Counts {
    let positives = labels.iter().filter(|l| **l == Difficulty::Easy).count() as u64;
    Counts {
        positives,
        negatives: labels.len() as u64 - positives,
    }
}

/// (true positives, false positives) when predicting EASY for `p >= t`.
fn confusion_at(probs: &[f64], labels: &[Difficulty], t: f64) -> (u64, u64) {
    let mut tp = 0;
    let mut fp = 0;
    for (p, l) in probs.iter().zip(labels) {
        if *p >= t {
            match l {
                Difficulty::Easy => tp += 1,
                Difficulty::Hard => fp += 1,
            }
        }
    }
    (tp, fp)
}

/// J = TPR - FPR at threshold `t`.
pub fn youden_j(probs: &[f64], labels: &[Difficulty], t: f64) -> f64 {
    let c = class_counts(labels);
    let (tp, fp) = confusion_at(probs, labels, t);
    tp as f64 / c.positives as f64 - fp as f64 / c.negatives as f64
}

/// Sweeps every distinct probability as a threshold and keeps the one with
/// the largest J; ties go to the larger threshold.
///
/// J is compared as the integer `tp * N - fp * P` (J scaled by `P * N`), so
/// ties are detected exactly.
pub fn calibrate_tau(probs: &[f64], labels: &[Difficulty]) -> Result<Calibration, RouterError> {
    if probs.len() != labels.len() {
        return Err(RouterError::LengthMismatch {
            features: probs.len(),
            labels: labels.len(),
        });
    }
    let c = class_counts(labels);
    if c.positives == 0 || c.negatives == 0 {
        return Err(RouterError::SingleClass);
    }
    if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(RouterError::InvalidConfig(format!("probability {bad} outside [0, 1]")));
    }

    let mut thresholds: Vec<f64> = probs.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut best: Option<(i128, f64, u64, u64)> = None;
    for &t in &thresholds {
        let (tp, fp) = confusion_at(probs, labels, t);
        let scaled = tp as i128 * c.negatives as i128 - fp as i128 * c.positives as i128;
        // Ascending sweep: `>=` lets a later (larger) threshold win ties.
        if best.is_none_or(|(b, ..)| scaled >= b) {
            best = Some((scaled, t, tp, fp));
        }
    }
    let (_, tau, tp, fp) = best.expect("at least one threshold");
    let tpr = tp as f64 / c.positives as f64;
    let fpr = fp as f64 / c.negatives as f64;
    let warning = (thresholds.len() == 1).then(|| {
        log::warn!("all validation probabilities equal {tau}; threshold is degenerate");
        format!("degenerate calibration: every probability equals {tau}")
    });
    Ok(Calibration {
        tau,
        j: tpr - fpr,
        tpr,
        fpr,
        warning,
    })
}
