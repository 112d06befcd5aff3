use std::io::{BufRead, Write};

use crate::kb::KnowledgeBase;
use crate::llm::TokenLedger;
use crate::router::{Difficulty, ForestConfig, RouterFeatures, RouterModel};

use super::{extract_feature_rows, FeatureRow, MentionRecord, PipelineError, RunConfig, Services};

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub model: RouterModel,
    pub oob_accuracy: Option<f64>,
    pub train_rows: Vec<FeatureRow>,
    pub val_rows: Vec<FeatureRow>,
    pub ledger: TokenLedger,
    pub warnings: Vec<String>,
}

fn split(rows: &[FeatureRow]) -> (Vec<RouterFeatures>, Vec<Difficulty>) {
    rows.iter().map(|r| (r.features, r.label)).unzip()
}

/// Fits the forest on `train` and τ on `val`.
pub fn train_router(
    train: &[FeatureRow],
    val: &[FeatureRow],
    forest: &ForestConfig,
) -> Result<(RouterModel, Option<f64>), PipelineError> {
    let (x, y) = split(train);
    let (mut model, fitted) = RouterModel::train(&x, &y, forest)?;
    let (vx, vy) = split(val);
    model.calibrate(&vx, &vy)?;
    Ok((model, fitted.oob_accuracy))
}

/// Easy-path predictions on `train` become labels, the forest is trained on
/// their features, and τ is calibrated on `val`.
pub fn train_end_to_end(
    kb: &KnowledgeBase,
    train: &[MentionRecord],
    val: &[MentionRecord],
    config: &RunConfig,
    services: &Services<'_>,
) -> Result<TrainingOutcome, PipelineError> {
    let (train_rows, mut ledger, mut warnings) = extract_feature_rows(kb, train, config, services)?;
    let (val_rows, val_ledger, val_warnings) = extract_feature_rows(kb, val, config, services)?;
    ledger.append(val_ledger);
    warnings.extend(val_warnings);
    let (model, oob_accuracy) = train_router(&train_rows, &val_rows, &config.forest)?;
    Ok(TrainingOutcome {
        model,
        oob_accuracy,
        train_rows,
        val_rows,
        ledger,
        warnings,
    })
}

pub fn write_feature_rows<W: Write>(mut out: W, rows: &[FeatureRow]) -> std::io::Result<()> {
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_feature_rows<R: BufRead>(reader: R) -> Result<Vec<FeatureRow>, PipelineError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| PipelineError::Artifact(format!("feature table line {}: {e}", i + 1)))?,
        );
    }
    Ok(rows)
}
