//! Target-domain evaluation of fused branches and of the unified model.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use unilabel_core::data::Dataset;
use unilabel_core::fusion::{build_weight_map, fuse, fuse_weighted, mean_fuse, FusedPrediction};
use unilabel_core::TaxonomyConflict;

use crate::config::FusionConfig;
use crate::error::Result;
use crate::nets::{BranchSet, UnifiedModel};

/// Rows evaluated per forward pass.
pub const EVAL_CHUNK: usize = 512;

/// How branch predictions are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Attention-weighted, with taxonomy weights when conflicts exist.
    Attention,
    /// Plain average of the branch distributions (MBR).
    Mean,
}

/// Accuracy in percent, overall and per class (`None` if a class is absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: f64,
    pub per_class: Vec<Option<f64>>,
    pub samples: usize,
}

pub fn accuracy(pred: &[usize], truth: &[i64], num_classes: usize) -> Accuracy {
    let mut hit = vec![0usize; num_classes];
    let mut seen = vec![0usize; num_classes];
    for (&p, &y) in pred.iter().zip(truth) {
        if y < 0 {
            continue;
        }
        seen[y as usize] += 1;
        if p as i64 == y {
            hit[y as usize] += 1;
        }
    }
    let total: usize = seen.iter().sum();
    let correct: usize = hit.iter().sum();
    Accuracy {
        overall: if total == 0 { 0.0 } else { 100.0 * correct as f64 / total as f64 },
        per_class: hit
            .iter()
            .zip(&seen)
            .map(|(&h, &s)| (s > 0).then(|| 100.0 * h as f64 / s as f64))
            .collect(),
        samples: total,
    }
}

/// Combines per-branch `(probs, attention)` into one prediction.
pub fn fuse_predictions(
    preds: &[(Array2<f64>, Array1<f64>)],
    conflicts: &[TaxonomyConflict],
    fusion: &FusionConfig,
    mode: FusionMode,
) -> Result<FusedPrediction> {
    let probs: Vec<_> = preds.iter().map(|(p, _)| p.view()).collect();
    Ok(match mode {
        FusionMode::Mean => mean_fuse(&probs)?,
        FusionMode::Attention => {
            let att: Vec<_> = preds.iter().map(|(_, a)| a.view()).collect();
            if conflicts.is_empty() {
                fuse(&probs, &att, fusion.zero_attention_fallback)?
            } else {
                let maps = build_weight_map(&probs, conflicts, fusion.v)?;
                fuse_weighted(&probs, &att, &maps, fusion.zero_attention_fallback)?
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedEval {
    pub mode: FusionMode,
    /// Accuracy of the prediction under `mode`.
    pub fused: Accuracy,
    /// Attention-guided fusion, regardless of `mode`.
    pub attention: Accuracy,
    /// Plain average, regardless of `mode`.
    pub mbr: Accuracy,
    pub branches: Vec<Accuracy>,
    /// Mean attention of each branch over the evaluated samples.
    pub mean_attention: Vec<f64>,
}

pub fn evaluate_fused(
    set: &BranchSet,
    data: &Dataset,
    conflicts: &[TaxonomyConflict],
    fusion: &FusionConfig,
    mode: FusionMode,
) -> Result<FusedEval> {
    let preds = set.predict(data, EVAL_CHUNK)?;
    Ok(score_predictions(&preds, &data.labels, set.num_classes, conflicts, fusion, mode)?)
}

pub fn score_predictions(
    preds: &[(Array2<f64>, Array1<f64>)],
    truth: &[i64],
    num_classes: usize,
    conflicts: &[TaxonomyConflict],
    fusion: &FusionConfig,
    mode: FusionMode,
) -> Result<FusedEval> {
    let att = accuracy(&fuse_predictions(preds, conflicts, fusion, FusionMode::Attention)?.labels, truth, num_classes);
    let mbr = accuracy(&fuse_predictions(preds, conflicts, fusion, FusionMode::Mean)?.labels, truth, num_classes);
    let branches = preds
        .iter()
        .map(|(p, _)| {
            let f = FusedPrediction::from_probs(p.clone());
            accuracy(&f.labels, truth, num_classes)
        })
        .collect();
    let mean_attention = preds.iter().map(|(_, a)| a.mean().unwrap_or(0.0)).collect();
    Ok(FusedEval {
        mode,
        fused: match mode {
            FusionMode::Attention => att.clone(),
            FusionMode::Mean => mbr.clone(),
        },
        attention: att,
        mbr,
        branches,
        mean_attention,
    })
}

pub fn evaluate_unified(model: &UnifiedModel, data: &Dataset) -> Result<Accuracy> {
    let f = FusedPrediction::from_probs(model.predict(data, EVAL_CHUNK)?);
    Ok(accuracy(&f.labels, &data.labels, model.num_classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn accuracy_counts() {
        let a = accuracy(&[0, 1, 1, 2], &[0, 1, 2, 2], 4);
        assert_eq!(a.overall, 75.0);
        assert_eq!(a.per_class, vec![Some(100.0), Some(100.0), Some(50.0), None]);
        assert_eq!(a.samples, 4);
    }

    #[test]
    fn complementary_attention_gives_perfect_fusion() {
        // branch 1 knows classes {0, 1}, branch 2 knows {2, 3}; each is
        // confidently wrong outside its classes but says so through attention
        let p1 = array![[0.9, 0.1, 0.0, 0.0], [0.1, 0.9, 0.0, 0.0], [0.0, 0.99, 0.01, 0.0], [0.9, 0.0, 0.0, 0.1]];
        let p2 = array![[0.0, 0.0, 0.2, 0.8], [0.0, 0.0, 0.9, 0.1], [0.0, 0.0, 0.9, 0.1], [0.0, 0.0, 0.1, 0.9]];
        let preds = vec![(p1, array![1.0, 1.0, 0.0, 0.0]), (p2, array![0.0, 0.0, 1.0, 1.0])];
        let truth = [0, 1, 2, 3];
        let e = score_predictions(&preds, &truth, 4, &[], &FusionConfig::default(), FusionMode::Attention).unwrap();
        assert_eq!(e.fused.overall, 100.0);
        assert!(e.mbr.overall < 100.0);
    }

    #[test]
    fn identical_branches_match_single_branch() {
        let p = array![[0.6, 0.4], [0.3, 0.7], [0.8, 0.2]];
        let preds = vec![(p.clone(), array![1.0, 1.0, 1.0]), (p, array![1.0, 1.0, 1.0])];
        let truth = [0, 0, 0];
        let e = score_predictions(&preds, &truth, 2, &[], &FusionConfig::default(), FusionMode::Attention).unwrap();
        assert_eq!(e.fused.overall, e.branches[0].overall);
    }
}
