//! Browser bindings for three operations of `unilabel-core`: fusing branch
//! predictions for one element, completing labels with a confidence
//! threshold, and sweeping that threshold over a batch.
//!
//! Every export takes and returns JSON so the page needs no generated types.
//! The plain Rust functions behind the exports are usable and tested natively.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use unilabel_core::fusion::{build_weight_map, fuse, fuse_weighted, mean_fuse, FusedPrediction, ZeroAttentionFallback};
use unilabel_core::psf::{complete_source, relabel_conflicts, Provenance, ProvenanceCounts};
use unilabel_core::{TaxonomyConflict, VOID};
use wasm_bindgen::prelude::*;

/// Fine and coarse side of a taxonomy conflict, by branch index from 0.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ConflictInput {
    pub fine_branch: usize,
    pub fine_class: usize,
    pub coarse_branch: usize,
    pub coarse_class: usize,
    pub v: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FuseInput {
    /// One class distribution per branch.
    pub probs: Vec<Vec<f64>>,
    /// One attention value in [0, 1] per branch.
    pub attention: Vec<f64>,
    #[serde(default)]
    pub fallback: ZeroAttentionFallback,
    #[serde(default)]
    pub conflict: Option<ConflictInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuseOutput {
    pub fused: Vec<f64>,
    pub label: usize,
    /// Plain average of the branches.
    pub mean: Vec<f64>,
    pub mean_label: usize,
    /// Whether the conflict weight was applied to this element.
    pub conflict_active: bool,
}

fn rows(probs: &[Vec<f64>]) -> Result<Vec<Array2<f64>>, String> {
    let c = probs.first().map_or(0, Vec::len);
    if c < 2 || probs.iter().any(|p| p.len() != c) {
        return Err("every branch needs the same number of classes, at least two".into());
    }
    Ok(probs
        .iter()
        .map(|p| Array2::from_shape_vec((1, c), p.clone()).expect("one row"))
        .collect())
}

fn conflict_of(c: &ConflictInput) -> TaxonomyConflict {
    TaxonomyConflict {
        fine_domain: c.fine_branch + 1,
        fine_class: c.fine_class,
        coarse_domain: c.coarse_branch + 1,
        coarse_class: c.coarse_class,
    }
}

pub fn fuse_element(input: &FuseInput) -> Result<FuseOutput, String> {
    let probs = rows(&input.probs)?;
    if input.attention.len() != probs.len() {
        return Err(format!("{} branches but {} attention values", probs.len(), input.attention.len()));
    }
    let att: Vec<Array1<f64>> = input.attention.iter().map(|&a| Array1::from_elem(1, a)).collect();
    let pv: Vec<_> = probs.iter().map(|p| p.view()).collect();
    let av: Vec<_> = att.iter().map(|a| a.view()).collect();
    let (fused, conflict_active) = match &input.conflict {
        Some(c) => {
            let maps = build_weight_map(&pv, &[conflict_of(c)], c.v).map_err(|e| e.to_string())?;
            let active = maps[c.fine_branch].weights[[0, c.fine_class]] != 1.0;
            (fuse_weighted(&pv, &av, &maps, input.fallback).map_err(|e| e.to_string())?, active)
        }
        None => (fuse(&pv, &av, input.fallback).map_err(|e| e.to_string())?, false),
    };
    let mean = mean_fuse(&pv).map_err(|e| e.to_string())?;
    Ok(FuseOutput {
        fused: fused.probs.row(0).to_vec(),
        label: fused.labels[0],
        mean: mean.probs.row(0).to_vec(),
        mean_label: mean.labels[0],
        conflict_active,
    })
}

#[derive(Debug, Clone, Deserialize)]
pub struct CompleteInput {
    /// Fused distribution per element.
    pub probs: Vec<Vec<f64>>,
    /// Annotation per element, -1 for void.
    pub labels: Vec<i64>,
    pub delta: f64,
    /// `(fine_class, coarse_class)` pairs for which this domain is the coarse side.
    #[serde(default)]
    pub relabel: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompleteOutput {
    pub labels: Vec<i64>,
    /// `ground_truth`, `pseudo`, `void` or `relabeled` per element.
    pub provenance: Vec<&'static str>,
    pub counts: ProvenanceCounts,
}

fn fused_batch(probs: &[Vec<f64>]) -> Result<FusedPrediction, String> {
    let c = probs.first().map_or(0, Vec::len);
    if probs.iter().any(|p| p.len() != c) {
        return Err("all elements need the same number of classes".into());
    }
    let flat: Vec<f64> = probs.iter().flatten().copied().collect();
    let arr = Array2::from_shape_vec((probs.len(), c), flat).map_err(|e| e.to_string())?;
    Ok(FusedPrediction::from_probs(arr))
}

fn provenance_name(p: Provenance) -> &'static str {
    match p {
        Provenance::GroundTruth => "ground_truth",
        Provenance::Pseudo => "pseudo",
        Provenance::Void => "void",
        Provenance::Relabeled => "relabeled",
    }
}

pub fn complete_labels(input: &CompleteInput) -> Result<CompleteOutput, String> {
    let fused = fused_batch(&input.probs)?;
    let mut entry = complete_source(&input.labels, &fused, input.delta).map_err(|e| e.to_string())?;
    if !input.relabel.is_empty() {
        entry = relabel_conflicts(entry, &input.labels, &fused, &input.relabel, input.delta).map_err(|e| e.to_string())?;
    }
    Ok(CompleteOutput {
        provenance: entry.provenance.iter().map(|&p| provenance_name(p)).collect(),
        counts: entry.counts(),
        labels: entry.labels,
    })
}

#[derive(Debug, Clone, Deserialize)]
pub struct SweepInput {
    /// Fused distribution per void element.
    pub probs: Vec<Vec<f64>>,
    /// Hidden true class per element, used only to score the pseudo-labels.
    pub truth: Vec<i64>,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub delta: f64,
    /// Fraction of elements that receive a label.
    pub coverage: f64,
    /// Fraction of assigned labels that are correct; `None` when none are assigned.
    pub accuracy: Option<f64>,
}

pub fn threshold_sweep(input: &SweepInput) -> Result<Vec<SweepPoint>, String> {
    if input.truth.len() != input.probs.len() {
        return Err(format!("{} elements but {} true classes", input.probs.len(), input.truth.len()));
    }
    let fused = fused_batch(&input.probs)?;
    let void = vec![VOID; input.probs.len()];
    input
        .deltas
        .iter()
        .map(|&delta| {
            let entry = complete_source(&void, &fused, delta).map_err(|e| e.to_string())?;
            let assigned: Vec<(i64, i64)> = entry
                .labels
                .iter()
                .zip(&input.truth)
                .filter(|(&y, _)| y != VOID)
                .map(|(&y, &t)| (y, t))
                .collect();
            let n = input.probs.len().max(1) as f64;
            let correct = assigned.iter().filter(|(y, t)| y == t).count();
            Ok(SweepPoint {
                delta,
                coverage: assigned.len() as f64 / n,
                accuracy: (!assigned.is_empty()).then(|| correct as f64 / assigned.len() as f64),
            })
        })
        .collect()
}

fn call<I: for<'de> Deserialize<'de>, O: Serialize>(json: &str, f: impl Fn(&I) -> Result<O, String>) -> Result<String, JsValue> {
    let input: I = serde_json::from_str(json).map_err(|e| JsValue::from_str(&format!("bad input: {e}")))?;
    let out = f(&input).map_err(|e| JsValue::from_str(&e))?;
    serde_json::to_string(&out).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = fuseElement)]
pub fn fuse_element_js(json: &str) -> Result<String, JsValue> {
    call(json, fuse_element)
}

#[wasm_bindgen(js_name = completeLabels)]
pub fn complete_labels_js(json: &str) -> Result<String, JsValue> {
    call(json, complete_labels)
}

#[wasm_bindgen(js_name = thresholdSweep)]
pub fn threshold_sweep_js(json: &str) -> Result<String, JsValue> {
    call(json, threshold_sweep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse<T: for<'de> Deserialize<'de>>(s: &str) -> T {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn attention_overrides_the_plain_average() {
        let out = fuse_element(&parse(
            r#"{"probs": [[0.9, 0.1, 0.0], [0.0, 0.2, 0.8]], "attention": [0.1, 0.9]}"#,
        ))
        .unwrap();
        assert_eq!(out.mean_label, 0);
        assert_eq!(out.label, 2);
        // (0.1 * p1 + 0.9 * p2) / 1
        let want = [0.09, 0.01 + 0.18, 0.72];
        for (a, b) in out.fused.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conflict_weight_tips_toward_the_fine_class() {
        let base = r#"{"probs": [[0.55, 0.45], [0.3, 0.7]], "attention": [1.0, 1.0]"#;
        let plain = fuse_element(&parse(&format!("{base}}}"))).unwrap();
        assert_eq!(plain.label, 1);
        let weighted = fuse_element(&parse(&format!(
            r#"{base}, "conflict": {{"fine_branch": 0, "fine_class": 0, "coarse_branch": 1, "coarse_class": 1, "v": 5.0}}}}"#
        )))
        .unwrap();
        assert!(weighted.conflict_active);
        assert_eq!(weighted.label, 0);
    }

    #[test]
    fn bad_shapes_are_reported() {
        assert!(fuse_element(&parse(r#"{"probs": [[0.5, 0.5], [1.0]], "attention": [1, 1]}"#)).is_err());
        assert!(fuse_element(&parse(r#"{"probs": [[0.5, 0.5]], "attention": [1, 1]}"#)).is_err());
    }

    #[test]
    fn completion_keeps_ground_truth_and_thresholds_void() {
        let out = complete_labels(&parse(
            r#"{"probs": [[0.9, 0.1], [0.6, 0.4], [0.45, 0.55], [0.2, 0.8]], "labels": [1, -1, -1, -1], "delta": 0.58}"#,
        ))
        .unwrap();
        assert_eq!(out.labels, vec![1, 0, VOID, 1]);
        assert_eq!(out.provenance, vec!["ground_truth", "pseudo", "void", "pseudo"]);
        assert_eq!(out.counts.pseudo, 2);
    }

    #[test]
    fn relabel_moves_confident_coarse_annotations() {
        let out = complete_labels(&parse(
            r#"{"probs": [[0.9, 0.1], [0.3, 0.7]], "labels": [1, 1], "delta": 0.5, "relabel": [[0, 1]]}"#,
        ))
        .unwrap();
        assert_eq!(out.labels, vec![0, 1]);
        assert_eq!(out.provenance, vec!["relabeled", "ground_truth"]);
    }

    #[test]
    fn sweep_coverage_falls_as_the_threshold_rises() {
        let pts = threshold_sweep(&parse(
            r#"{"probs": [[0.9, 0.1], [0.6, 0.4], [0.3, 0.7], [0.52, 0.48]], "truth": [0, 1, 1, 0], "deltas": [0.0, 0.55, 0.65, 1.0]}"#,
        ))
        .unwrap();
        let cov: Vec<f64> = pts.iter().map(|p| p.coverage).collect();
        assert_eq!(cov, vec![1.0, 0.75, 0.5, 0.0]);
        assert_eq!(pts[0].accuracy, Some(0.75));
        assert_eq!(pts[1].accuracy, Some(2.0 / 3.0));
        assert_eq!(pts[3].accuracy, None);
    }
}
