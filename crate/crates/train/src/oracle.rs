//! Scalar reference implementations of the losses, written as plain loops
//! over `f64` so tests can compare them (and their finite-difference
//! gradients) with the tensor versions.

use unilabel_core::VOID;

fn log_softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Masked cross-entropy; `logits` is row-major `[labels.len() x c]`.
pub fn psu(logits: &[f64], c: usize, labels: &[i64]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (e, &y) in labels.iter().enumerate() {
        if y == VOID {
            continue;
        }
        total -= log_softmax_row(&logits[e * c..(e + 1) * c])[y as usize];
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

pub fn att(a: &[f64], t: &[f64]) -> f64 {
    a.iter().zip(t).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Mean `sum p^2` over void rows; `probs` row-major `[labels.len() x c]`.
pub fn um_void(probs: &[f64], c: usize, labels: &[i64]) -> f64 {
    let rows: Vec<usize> = (0..labels.len()).filter(|&e| labels[e] == VOID).collect();
    if rows.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &e in &rows {
        for j in 0..c {
            total += probs[e * c + j] * probs[e * c + j];
        }
    }
    total / rows.len() as f64
}

fn clamp(d: f64) -> f64 {
    d.clamp(1e-7, 1.0 - 1e-7)
}

pub fn loss_d(ds: &[f64], dt: &[f64]) -> f64 {
    let s: f64 = ds.iter().map(|&d| -clamp(d).ln()).sum::<f64>() / ds.len() as f64;
    let t: f64 = dt.iter().map(|&d| -(1.0 - clamp(d)).ln()).sum::<f64>() / dt.len() as f64;
    s + t
}

pub fn loss_a3(dt: &[f64]) -> f64 {
    dt.iter().map(|&d| -clamp(d).ln()).sum::<f64>() / dt.len() as f64
}

/// `||a - b|| / ||b||`, with `b` the reference gradient.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        assert!((psu(&[0.0; 10], 10, &[2]) - 10f64.ln()).abs() < 1e-12);
        assert_eq!(psu(&[1.0, 2.0], 2, &[VOID]), 0.0);
        assert_eq!(att(&[0.5; 4], &[0.0, 1.0, 0.0, 1.0]), 0.25);
        assert!((um_void(&[0.5, 0.5, 1.0, 0.0], 2, &[VOID, 0]) - 0.5).abs() < 1e-15);
        assert!((loss_a3(&[0.5]) - 2f64.ln()).abs() < 1e-12);
        assert!((loss_d(&[0.5], &[0.5]) - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(relative_error(&[1.0, 1.0], &[1.0, 1.0]), 0.0);
    }
}
