//! Training objectives for both stages. Every loss is a batch mean.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};
use unilabel_core::{Error as CoreError, VOID};

use crate::error::{Result, TrainError};

/// Discriminator outputs are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1LossConfig {
    pub lambda_adv: f64,
    pub um_enabled: bool,
    pub a3_enabled: bool,
}

impl Default for Stage1LossConfig {
    fn default() -> Self {
        Self {
            lambda_adv: 1.0,
            um_enabled: true,
            a3_enabled: true,
        }
    }
}

fn shape_err(msg: String) -> TrainError {
    TrainError::Core(CoreError::Shape(msg))
}

/// Per-row weights `1/n` on selected rows and 0 elsewhere, so an empty
/// selection yields a zero loss that is still connected to the graph.
fn mean_weights(mask: &[bool], like: &Tensor) -> Result<Tensor> {
    let n = mask.iter().filter(|&&m| m).count();
    let w: Vec<f64> = mask
        .iter()
        .map(|&m| if m { 1.0 / n as f64 } else { 0.0 })
        .collect();
    Ok(Tensor::from_vec(w, mask.len(), like.device())?.to_dtype(like.dtype())?)
}

/// Cross-entropy from logits averaged over non-void rows; 0 when every row is void.
pub fn loss_psu(logits: &Tensor, labels: &[i64]) -> Result<Tensor> {
    let (b, c) = logits.dims2()?;
    if labels.len() != b {
        return Err(shape_err(format!("{} labels for {b} logit rows", labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y != VOID && !(0..c as i64).contains(&y)) {
        return Err(shape_err(format!("label {y} outside 0..{c}")));
    }
    let logp = candle_nn::ops::log_softmax(logits, 1)?;
    let idx: Vec<u32> = labels.iter().map(|&y| if y == VOID { 0 } else { y as u32 }).collect();
    let idx = Tensor::from_vec(idx, (b, 1), logits.device())?;
    let picked = logp.gather(&idx, 1)?.squeeze(1)?;
    let mask: Vec<bool> = labels.iter().map(|&y| y != VOID).collect();
    Ok((picked * mean_weights(&mask, logits)?)?.sum_all()?.neg()?)
}

/// Mean squared error between attention and its targets over all rows.
pub fn loss_att(attention: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if attention.dims() != targets.dims() {
        return Err(shape_err(format!(
            "attention {:?} vs targets {:?}",
            attention.dims(),
            targets.dims()
        )));
    }
    Ok((attention - targets)?.sqr()?.mean_all()?)
}

/// Mean of `sum_j p(j)^2` over all rows of `probs`.
pub fn loss_um(probs: &Tensor) -> Result<Tensor> {
    let (b, _) = probs.dims2()?;
    loss_um_rows(probs, &vec![true; b])
}

/// Uncertainty loss restricted to the rows whose label is void.
pub fn loss_um_void(probs: &Tensor, labels: &[i64]) -> Result<Tensor> {
    let mask: Vec<bool> = labels.iter().map(|&y| y == VOID).collect();
    loss_um_rows(probs, &mask)
}

fn loss_um_rows(probs: &Tensor, mask: &[bool]) -> Result<Tensor> {
    let (b, _) = probs.dims2()?;
    if mask.len() != b {
        return Err(shape_err(format!("{} mask rows for {b} probability rows", mask.len())));
    }
    let sq = probs.sqr()?.sum(1)?;
    Ok((sq * mean_weights(mask, probs)?)?.sum_all()?)
}

/// Pearson chi-square divergence `sum_j ((p_j / q_j)^2 - 1) q_j`.
pub fn chi2_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(shape_err(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    let mut total = 0.0;
    for (&pj, &qj) in p.iter().zip(q) {
        if qj == 0.0 {
            if pj > 0.0 {
                return Err(TrainError::Core(CoreError::Value(
                    "q is zero where p has mass; divergence is infinite".into(),
                )));
            }
            continue;
        }
        let r = pj / qj;
        total += (r * r - 1.0) * qj;
    }
    Ok(total)
}

/// Divergence from the uniform distribution through `C * sum p^2 - 1`.
pub fn uniform_chi2(p: &[f64]) -> f64 {
    p.len() as f64 * p.iter().map(|v| v * v).sum::<f64>() - 1.0
}

/// Scales every class probability of a row by that row's attention.
pub fn gate(probs: &Tensor, attention: &Tensor) -> Result<Tensor> {
    Ok(probs.broadcast_mul(&attention.unsqueeze(1)?)?)
}

fn clamp(d: &Tensor) -> Result<Tensor> {
    Ok(d.clamp(EPS, 1.0 - EPS)?)
}

/// Discriminator loss `-log D(source) - log(1 - D(target))`, batch means.
pub fn loss_d(d_source: &Tensor, d_target: &Tensor) -> Result<Tensor> {
    let s = clamp(d_source)?.log()?.mean_all()?;
    let t = clamp(d_target)?.affine(-1.0, 1.0)?.log()?.mean_all()?;
    Ok((s + t)?.neg()?)
}

/// Generator-side adversarial loss `-log D(target)`.
pub fn loss_a3(d_target: &Tensor) -> Result<Tensor> {
    Ok(clamp(d_target)?.log()?.mean_all()?.neg()?)
}

/// Per-branch stage-1 terms, each a scalar tensor.
#[derive(Debug, Clone)]
pub struct Stage1Terms {
    pub psu: Tensor,
    pub att: Tensor,
    pub um: Tensor,
    pub a3: Tensor,
}

/// `sum_i (psu_i + att_i + um_i) + lambda * sum_i a3_i`, with the flags
/// dropping the uncertainty and adversarial terms.
pub fn loss_all(terms: &[Stage1Terms], cfg: &Stage1LossConfig) -> Result<Tensor> {
    let first = terms
        .first()
        .ok_or_else(|| shape_err("loss_all needs at least one branch".into()))?;
    let mut total = first.psu.zeros_like()?;
    for t in terms {
        total = ((total + &t.psu)? + &t.att)?;
        if cfg.um_enabled {
            total = (total + &t.um)?;
        }
        if cfg.a3_enabled && cfg.lambda_adv != 0.0 {
            total = (total + t.a3.affine(cfg.lambda_adv, 0.0)?)?;
        }
    }
    Ok(total)
}

/// Stage-2 loss: cross-entropy per domain (void skipped), summed over domains.
pub fn loss_fsa(per_domain: &[(Tensor, Vec<i64>)]) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for (logits, labels) in per_domain {
        let l = loss_psu(logits, labels)?;
        total = Some(match total {
            Some(t) => (t + l)?,
            None => l,
        });
    }
    total.ok_or_else(|| shape_err("loss_fsa needs at least one domain".into()))
}

/// Reads a scalar tensor as `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    fn t2(rows: &[&[f64]]) -> Tensor {
        let c = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Tensor::from_vec(flat, (rows.len(), c), &Device::Cpu).unwrap()
    }

    fn t1(v: &[f64]) -> Tensor {
        Tensor::from_slice(v, v.len(), &Device::Cpu).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn psu_cases() {
        let uniform = t2(&[&[0.0; 10], &[0.0; 10]]);
        close(scalar(&loss_psu(&uniform, &[3, VOID]).unwrap()).unwrap(), 10f64.ln(), 1e-12);
        let sharp = t2(&[&[50.0, 0.0, 0.0], &[0.0, 0.0, 50.0]]);
        close(scalar(&loss_psu(&sharp, &[0, 2]).unwrap()).unwrap(), 0.0, 1e-12);
        assert!(loss_psu(&sharp, &[0]).is_err());
        assert!(loss_psu(&sharp, &[0, 3]).is_err());
    }

    #[test]
    fn all_void_psu_has_zero_gradient() {
        let v = Var::from_tensor(&t2(&[&[0.3, -1.0], &[2.0, 0.1]])).unwrap();
        let l = loss_psu(v.as_tensor(), &[VOID, VOID]).unwrap();
        assert_eq!(scalar(&l).unwrap(), 0.0);
        let g = l.backward().unwrap();
        let grad = g.get(v.as_tensor()).unwrap().abs().unwrap().sum_all().unwrap();
        assert_eq!(scalar(&grad).unwrap(), 0.0);
    }

    #[test]
    fn att_cases() {
        let a = t1(&[0.5; 4]);
        close(scalar(&loss_att(&a, &t1(&[0.0, 1.0, 0.0, 1.0])).unwrap()).unwrap(), 0.25, 1e-15);
        close(scalar(&loss_att(&a, &a).unwrap()).unwrap(), 0.0, 0.0);
        assert!(loss_att(&a, &t1(&[0.0])).is_err());
    }

    #[test]
    fn um_cases() {
        close(scalar(&loss_um(&t2(&[&[0.1; 10]])).unwrap()).unwrap(), 0.1, 1e-12);
        let mut onehot = [0.0; 10];
        onehot[4] = 1.0;
        close(scalar(&loss_um(&t2(&[&onehot])).unwrap()).unwrap(), 1.0, 0.0);
        let mut half = [0.0; 10];
        half[0] = 0.5;
        half[1] = 0.5;
        close(scalar(&loss_um(&t2(&[&half])).unwrap()).unwrap(), 0.5, 1e-15);
        // only the void row counts
        let p = t2(&[&onehot, &[0.1; 10]]);
        close(scalar(&loss_um_void(&p, &[4, VOID]).unwrap()).unwrap(), 0.1, 1e-12);
        close(scalar(&loss_um_void(&p, &[4, 1]).unwrap()).unwrap(), 0.0, 0.0);
    }

    #[test]
    fn chi2_cases() {
        let q = [0.25; 4];
        close(chi2_divergence(&q, &q).unwrap(), 0.0, 1e-15);
        close(chi2_divergence(&[1.0, 0.0, 0.0, 0.0], &q).unwrap(), 3.0, 1e-12);
        close(uniform_chi2(&[1.0, 0.0, 0.0, 0.0]), 3.0, 0.0);
        assert!(chi2_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
        close(chi2_divergence(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0, 0.0);
    }

    #[test]
    fn adversarial_cases() {
        let half = t1(&[0.5, 0.5]);
        close(scalar(&loss_a3(&half).unwrap()).unwrap(), 2f64.ln(), 1e-12);
        close(scalar(&loss_d(&half, &half).unwrap()).unwrap(), 2.0 * 2f64.ln(), 1e-12);
        let perfect = loss_d(&t1(&[1.0, 1.0]), &t1(&[0.0, 0.0])).unwrap();
        assert!(scalar(&perfect).unwrap() < 1e-6);
        let worst = loss_a3(&t1(&[0.0])).unwrap();
        close(scalar(&worst).unwrap(), -(EPS.ln()), 1e-9);
    }

    #[test]
    fn gate_zeroes_rows_without_attention() {
        let p = t2(&[&[0.2, 0.8], &[0.6, 0.4]]);
        let g = gate(&p, &t1(&[0.0, 0.5])).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(g, vec![vec![0.0, 0.0], vec![0.3, 0.2]]);
    }

    #[test]
    fn loss_all_respects_flags() {
        let terms = vec![Stage1Terms {
            psu: t1(&[1.0]).sum_all().unwrap(),
            att: t1(&[0.5]).sum_all().unwrap(),
            um: t1(&[0.25]).sum_all().unwrap(),
            a3: t1(&[2.0]).sum_all().unwrap(),
        }];
        let full = Stage1LossConfig::default();
        close(scalar(&loss_all(&terms, &full).unwrap()).unwrap(), 3.75, 1e-15);
        let plain = Stage1LossConfig {
            lambda_adv: 1.0,
            um_enabled: false,
            a3_enabled: false,
        };
        assert_eq!(scalar(&loss_all(&terms, &plain).unwrap()).unwrap(), 1.5);
        let no_adv = Stage1LossConfig {
            lambda_adv: 0.0,
            ..full
        };
        assert_eq!(scalar(&loss_all(&terms, &no_adv).unwrap()).unwrap(), 1.75);
        assert!(loss_all(&[], &full).is_err());
    }

    #[test]
    fn fsa_sums_domains() {
        let uniform = t2(&[&[0.0; 10]]);
        let l = loss_fsa(&[(uniform.clone(), vec![1]), (uniform, vec![VOID])]).unwrap();
        close(scalar(&l).unwrap(), 10f64.ln(), 1e-12);
    }
}
