//! Attention-guided fusion of per-branch class distributions.
//!
//! Every branch `i` produces, for each element (a sample, or a pixel of a
//! flattened spatial grid), a distribution `p_i` over the unified classes and
//! a reliability `a_i` in `[0, 1]`. The fused distribution is
//! `f = sum_i a_i p_i w_i`, renormalized over classes, where the optional
//! class-wise weights `w_i` resolve taxonomy conflicts.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelspace::TaxonomyConflict;

/// What to return at an element where every branch has zero weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroAttentionFallback {
    /// Unweighted average of the branch distributions.
    #[default]
    Mean,
    Uniform,
}

/// Fused distributions `[elements x classes]` with their hard decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPrediction {
    pub probs: Array2<f64>,
    /// Argmax per element, ties resolved toward the lowest class index.
    pub labels: Vec<usize>,
    /// `probs` at `labels`.
    pub confidence: Vec<f64>,
}

impl FusedPrediction {
    pub fn from_probs(probs: Array2<f64>) -> Self {
        let (labels, confidence) = probs.rows().into_iter().map(|r| argmax(r)).unzip();
        Self {
            probs,
            labels,
            confidence,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }
}

/// Index and value of the largest entry; the first one wins ties.
pub fn argmax(row: ArrayView1<f64>) -> (usize, f64) {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if v > best_v {
            best = j;
            best_v = v;
        }
    }
    (best, best_v)
}

/// Class-wise weights of one branch, `[elements x classes]`, entries in `{1, v}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    pub weights: Array2<f64>,
}

impl WeightMap {
    pub fn ones(elements: usize, classes: usize) -> Self {
        Self {
            weights: Array2::ones((elements, classes)),
        }
    }
}

fn check_inputs(probs: &[ArrayView2<f64>], attention: &[ArrayView1<f64>]) -> Result<(usize, usize)> {
    let first = probs.first().ok_or_else(|| Error::Value("fusion needs at least one branch".into()))?;
    let (n, c) = first.dim();
    if c == 0 {
        return Err(Error::Shape("probability maps have no classes".into()));
    }
    if attention.len() != probs.len() {
        return Err(Error::Shape(format!(
            "{} probability maps but {} attention maps",
            probs.len(),
            attention.len()
        )));
    }
    for (i, (p, a)) in probs.iter().zip(attention).enumerate() {
        if p.dim() != (n, c) {
            return Err(Error::Shape(format!("branch {i} probabilities are {:?}, expected {:?}", p.dim(), (n, c))));
        }
        if a.len() != n {
            return Err(Error::Shape(format!("branch {i} attention has {} elements, expected {n}", a.len())));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Value(format!("branch {i} probabilities must be finite and nonnegative")));
        }
        if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Value(format!("branch {i} attention must lie in [0, 1]")));
        }
    }
    Ok((n, c))
}

/// Attention-weighted fusion of `K` branch predictions.
pub fn fuse(
    probs: &[ArrayView2<f64>],
    attention: &[ArrayView1<f64>],
    fallback: ZeroAttentionFallback,
) -> Result<FusedPrediction> {
    let (n, c) = check_inputs(probs, attention)?;
    fuse_unchecked(probs, attention, None, fallback, n, c)
}

/// Fusion with per-branch class-wise weight maps.
pub fn fuse_weighted(
    probs: &[ArrayView2<f64>],
    attention: &[ArrayView1<f64>],
    weights: &[WeightMap],
    fallback: ZeroAttentionFallback,
) -> Result<FusedPrediction> {
    let (n, c) = check_inputs(probs, attention)?;
    if weights.len() != probs.len() {
        return Err(Error::Shape(format!("{} branches but {} weight maps", probs.len(), weights.len())));
    }
    for (i, w) in weights.iter().enumerate() {
        if w.weights.dim() != (n, c) {
            return Err(Error::Shape(format!("branch {i} weight map is {:?}, expected {:?}", w.weights.dim(), (n, c))));
        }
        if w.weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Value(format!("branch {i} weights must be finite and nonnegative")));
        }
    }
    fuse_unchecked(probs, attention, Some(weights), fallback, n, c)
}

fn fuse_unchecked(
    probs: &[ArrayView2<f64>],
    attention: &[ArrayView1<f64>],
    weights: Option<&[WeightMap]>,
    fallback: ZeroAttentionFallback,
    n: usize,
    c: usize,
) -> Result<FusedPrediction> {
    let weighted = |i: usize| -> Array2<f64> {
        match weights {
            Some(w) => &probs[i] * &w[i].weights,
            None => probs[i].to_owned(),
        }
    };
    let mut num = Array2::<f64>::zeros((n, c));
    let mut plain = Array2::<f64>::zeros((n, c));
    for (i, a) in attention.iter().enumerate() {
        let pw = weighted(i);
        num += &(&pw * &a.view().insert_axis(Axis(1)));
        plain += &pw;
    }
    let denom: Array1<f64> = num.sum_axis(Axis(1));
    let plain_denom: Array1<f64> = plain.sum_axis(Axis(1));
    Zip::from(num.rows_mut())
        .and(&denom)
        .and(plain.rows())
        .and(&plain_denom)
        .for_each(|mut row, &d, plain_row, &pd| {
            if d > 0.0 {
                row.mapv_inplace(|v| v / d);
            } else if fallback == ZeroAttentionFallback::Mean && pd > 0.0 {
                row.assign(&plain_row.mapv(|v| v / pd));
            } else {
                row.fill(1.0 / c as f64);
            }
        });
    Ok(FusedPrediction::from_probs(num))
}

/// Plain average of the branch predictions, ignoring attention.
///
/// Kept as the multi-branch baseline for evaluation reports.
pub fn mean_fuse(probs: &[ArrayView2<f64>]) -> Result<FusedPrediction> {
    let first = probs.first().ok_or_else(|| Error::Value("fusion needs at least one branch".into()))?;
    let ones: Vec<Array1<f64>> = probs.iter().map(|_| Array1::ones(first.nrows())).collect();
    let views: Vec<ArrayView1<f64>> = ones.iter().map(|a| a.view()).collect();
    fuse(probs, &views, ZeroAttentionFallback::Uniform)
}

/// Class-wise weight maps that push conflicting elements toward the fine class.
///
/// For a conflict `(p, q', m, n')` the entry `(e, q')` of branch `p` becomes
/// `v` wherever branch `p` predicts `q'` and branch `m` predicts `n'` at `e`.
/// Branch `i` corresponds to source domain id `i + 1`.
pub fn build_weight_map(probs: &[ArrayView2<f64>], conflicts: &[TaxonomyConflict], v: f64) -> Result<Vec<WeightMap>> {
    if !(v.is_finite() && v >= 1.0) {
        return Err(Error::Value(format!("conflict weight v must be >= 1, got {v}")));
    }
    let first = probs.first().ok_or_else(|| Error::Value("weight map needs at least one branch".into()))?;
    let (n, c) = first.dim();
    if probs.iter().any(|p| p.dim() != (n, c)) {
        return Err(Error::Shape("probability maps disagree in shape".into()));
    }
    let mut maps: Vec<WeightMap> = probs.iter().map(|_| WeightMap::ones(n, c)).collect();
    let predicted: Vec<Vec<usize>> = probs
        .iter()
        .map(|p| p.rows().into_iter().map(|r| argmax(r).0).collect())
        .collect();
    for conflict in conflicts {
        let (p, m) = (conflict.fine_domain, conflict.coarse_domain);
        if p == 0 || m == 0 || p > probs.len() || m > probs.len() {
            return Err(Error::Conflict(format!("conflict refers to domains {p}/{m} but only {} branches", probs.len())));
        }
        if conflict.fine_class >= c || conflict.coarse_class >= c {
            return Err(Error::Conflict("conflict class outside the label space".into()));
        }
        let (fine, coarse) = (&predicted[p - 1], &predicted[m - 1]);
        let w = &mut maps[p - 1].weights;
        for e in 0..n {
            if fine[e] == conflict.fine_class && coarse[e] == conflict.coarse_class {
                w[[e, conflict.fine_class]] = v;
            }
        }
    }
    Ok(maps)
}
