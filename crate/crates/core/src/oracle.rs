//! Scalar-loop reference evaluations.
//!
//! These mirror the fusion and divergence formulas term by term over nested
//! `Vec`s, sharing no code with the vectorized paths they are compared to.
//! Tests and the `toy-verify` command check the production code against them.

/// Fused distribution at every element, `probs[branch][element][class]`.
///
/// Elements with zero total weight come back as the unweighted mean of the
/// (weighted) branch distributions.
pub fn fuse_scalar(probs: &[Vec<Vec<f64>>], attention: &[Vec<f64>], weights: Option<&[Vec<Vec<f64>>]>) -> Vec<Vec<f64>> {
    let k = probs.len();
    let n = probs[0].len();
    let c = probs[0][0].len();
    let mut out = vec![vec![0.0; c]; n];
    for e in 0..n {
        let mut total = 0.0;
        for j in 0..c {
            let mut s = 0.0;
            for i in 0..k {
                let w = weights.map_or(1.0, |w| w[i][e][j]);
                s += attention[i][e] * probs[i][e][j] * w;
            }
            out[e][j] = s;
            total += s;
        }
        if total > 0.0 {
            for j in 0..c {
                out[e][j] /= total;
            }
        } else {
            let mut plain_total = 0.0;
            for j in 0..c {
                let mut s = 0.0;
                for i in 0..k {
                    s += probs[i][e][j] * weights.map_or(1.0, |w| w[i][e][j]);
                }
                out[e][j] = s;
                plain_total += s;
            }
            for j in 0..c {
                out[e][j] = if plain_total > 0.0 { out[e][j] / plain_total } else { 1.0 / c as f64 };
            }
        }
    }
    out
}

fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

/// Class-wise weights for conflicts given as `(fine_domain, fine_class,
/// coarse_domain, coarse_class)` with 1-based domain ids.
pub fn weight_map_scalar(probs: &[Vec<Vec<f64>>], conflicts: &[(usize, usize, usize, usize)], v: f64) -> Vec<Vec<Vec<f64>>> {
    let n = probs[0].len();
    let c = probs[0][0].len();
    let mut w = vec![vec![vec![1.0; c]; n]; probs.len()];
    for &(p, q, m, nn) in conflicts {
        for e in 0..n {
            if argmax_first(&probs[p - 1][e]) == q && argmax_first(&probs[m - 1][e]) == nn {
                w[p - 1][e][q] = v;
            }
        }
    }
    w
}

/// Pearson chi-square divergence in its defining form `sum_j ((p_j / q_j)^2 - 1) q_j`.
pub fn chi2_defining_form(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&pj, &qj)| ((pj / qj).powi(2) - 1.0) * qj).sum()
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 5.0], 1e-3);
        assert!((g[0] - 4.0).abs() < 1e-9);
        assert!((g[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn chi2_defining_form_of_equal_distributions() {
        let q = [0.25; 4];
        assert!(chi2_defining_form(&q, &q).abs() < 1e-15);
    }
}
