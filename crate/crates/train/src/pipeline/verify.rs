//! Self-checks behind `toy-verify` and the acceptance suite. Each check
//! compares production code with an independent scalar reference or with a
//! closed-form optimum and reports a single pass/fail line.

use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use candle_core::{Device, Tensor, Var};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unilabel_core::data::{DigitDataset, Split};
use unilabel_core::fusion::{build_weight_map, fuse, fuse_weighted, FusedPrediction, ZeroAttentionFallback};
use unilabel_core::oracle::{central_difference, fuse_scalar, weight_map_scalar};
use unilabel_core::psf::{complete_source, label_target, relabel_conflicts, Provenance};
use unilabel_core::labelspace::DomainRole;
use unilabel_core::{TaxonomyConflict, VOID};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::losses::{chi2_divergence, loss_a3, loss_att, loss_d, loss_psu, loss_um, loss_um_void, scalar, uniform_chi2};
use crate::oracle;
use crate::pipeline::ablate::{mean_std, AblationRow};
use crate::pipeline::{run_ablation, run_experiment, run_source_only, with_seed, Problem, Stages};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub criterion: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}. {}: {}", self.criterion, self.name, self.detail)
    }
}

fn distribution(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Criterion 1 tolerance and instance count.
pub const FUSION_TOL: f64 = 1e-9;
pub const FUSION_INSTANCES: usize = 1000;

/// Vectorised fusion against the scalar loop on random instances with up to
/// 4 branches, 12 classes and 8x8 elements, half of them with a conflict.
pub fn check_fusion_oracle(seed: u64) -> CheckResult {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for inst in 0..FUSION_INSTANCES {
        let k = rng.random_range(1..=4);
        let c = rng.random_range(2..=12);
        let n = rng.random_range(1..=8) * rng.random_range(1..=8);
        let mut probs: Vec<Vec<Vec<f64>>> = (0..k).map(|_| (0..n).map(|_| distribution(&mut rng, c)).collect()).collect();
        let att: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                (0..n)
                    .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>() })
                    .collect()
            })
            .collect();
        let conflict = (k >= 2 && inst % 2 == 1).then(|| {
            let p = rng.random_range(0..k);
            let m = (p + rng.random_range(1..k)) % k;
            let q = rng.random_range(0..c);
            let nn = (q + rng.random_range(1..c)) % c;
            // make the argmax conditions hold on roughly half the elements
            for e in 0..n {
                if rng.random_bool(0.5) {
                    probs[p][e][q] += 2.0;
                    probs[m][e][nn] += 2.0;
                    for b in [p, m] {
                        let s: f64 = probs[b][e].iter().sum();
                        probs[b][e].iter_mut().for_each(|v| *v /= s);
                    }
                }
            }
            (p + 1, q, m + 1, nn)
        });
        let p_arr: Vec<Array2<f64>> = probs
            .iter()
            .map(|b| Array2::from_shape_vec((n, c), b.concat()).expect("shape"))
            .collect();
        let a_arr: Vec<Array1<f64>> = att.iter().map(|a| Array1::from(a.clone())).collect();
        let pv: Vec<_> = p_arr.iter().map(|x| x.view()).collect();
        let av: Vec<_> = a_arr.iter().map(|x| x.view()).collect();
        let (got, want) = match conflict {
            None => (
                fuse(&pv, &av, ZeroAttentionFallback::Mean),
                fuse_scalar(&probs, &att, None),
            ),
            Some((p, q, m, nn)) => {
                let tc = TaxonomyConflict {
                    fine_domain: p,
                    fine_class: q,
                    coarse_domain: m,
                    coarse_class: nn,
                };
                let w = weight_map_scalar(&probs, &[(p, q, m, nn)], 5.0);
                let maps = build_weight_map(&pv, &[tc], 5.0);
                let same_map = maps.as_ref().is_ok_and(|maps| {
                    maps.iter()
                        .zip(&w)
                        .all(|(mm, ww)| mm.weights.iter().zip(ww.iter().flatten()).all(|(a, b)| a == b))
                });
                if !same_map {
                    failures += 1;
                }
                (
                    maps.and_then(|maps| fuse_weighted(&pv, &av, &maps, ZeroAttentionFallback::Mean)),
                    fuse_scalar(&probs, &att, Some(&w)),
                )
            }
        };
        match got {
            Ok(f) => {
                for (e, row) in want.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        worst = worst.max((f.probs[[e, j]] - v).abs());
                    }
                }
            }
            Err(_) => failures += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    CheckResult {
        criterion: 1,
        name: "fusion oracle equivalence",
        passed: failures == 0 && worst <= FUSION_TOL && secs < 10.0,
        detail: format!(
            "{FUSION_INSTANCES} instances, max |diff| {worst:.2e} (tol {FUSION_TOL:.0e}), {failures} failures, {secs:.2}s (limit 10s)"
        ),
    }
}

fn f64_tensor(v: &[f64], shape: &[usize]) -> Tensor {
    Tensor::from_slice(v, shape, &Device::Cpu).expect("tensor")
}

/// Autodiff gradient of `loss` at `x` against central differences of `reference`.
fn gradient_error(
    x: &[f64],
    shape: &[usize],
    loss: impl Fn(&Tensor) -> Result<Tensor>,
    reference: impl Fn(&[f64]) -> f64,
) -> Result<f64> {
    let var = Var::from_tensor(&f64_tensor(x, shape))?;
    let l = loss(var.as_tensor())?;
    let grads = l.backward()?;
    let auto: Vec<f64> = grads
        .get(var.as_tensor())
        .map(|g| g.flatten_all().and_then(|g| g.to_vec1::<f64>()))
        .transpose()?
        .unwrap_or_else(|| vec![0.0; x.len()]);
    let fd = central_difference(reference, x, GRAD_STEP);
    Ok(oracle::relative_error(&auto, &fd))
}

pub const LOSS_TOL: f64 = 1e-10;
pub const GRAD_TOL: f64 = 1e-4;
/// Central-difference step; truncation error scales with h² / x² near the
/// smallest discriminator outputs, so it has to sit well below 1e-3.
pub const GRAD_STEP: f64 = 1e-6;

/// Worst relative gradient error over random 8-element batches for every loss.
pub fn gradient_errors(seed: u64, trials: usize) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = 8;
    let mut worst = vec![("psu", 0.0f64), ("att", 0.0), ("um", 0.0), ("d", 0.0), ("a3", 0.0)];
    for _ in 0..trials {
        let c = rng.random_range(2..=10);
        let logits: Vec<f64> = (0..b * c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let labels: Vec<i64> = (0..b)
            .map(|_| if rng.random_bool(0.3) { VOID } else { rng.random_range(0..c as i64) })
            .collect();
        let e = gradient_error(&logits, &[b, c], |t| loss_psu(t, &labels), |x| oracle::psu(x, c, &labels))?;
        worst[0].1 = worst[0].1.max(e);

        let a: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
        let t: Vec<f64> = (0..b).map(|_| f64::from(rng.random_bool(0.5))).collect();
        let tt = f64_tensor(&t, &[b]);
        let e = gradient_error(&a, &[b], |x| loss_att(x, &tt), |x| oracle::att(x, &t))?;
        worst[1].1 = worst[1].1.max(e);

        let probs: Vec<f64> = (0..b).flat_map(|_| distribution(&mut rng, c)).collect();
        let e = gradient_error(&probs, &[b, c], |x| loss_um_void(x, &labels), |x| oracle::um_void(x, c, &labels))?;
        worst[2].1 = worst[2].1.max(e);

        let ds: Vec<f64> = (0..b).map(|_| rng.random_range(0.05..0.95)).collect();
        let dt: Vec<f64> = (0..b).map(|_| rng.random_range(0.05..0.95)).collect();
        let dtt = f64_tensor(&dt, &[b]);
        let dst = f64_tensor(&ds, &[b]);
        let e1 = gradient_error(&ds, &[b], |x| loss_d(x, &dtt), |x| oracle::loss_d(x, &dt))?;
        let e2 = gradient_error(&dt, &[b], |x| loss_d(&dst, x), |x| oracle::loss_d(&ds, x))?;
        worst[3].1 = worst[3].1.max(e1).max(e2);

        let e = gradient_error(&dt, &[b], loss_a3, oracle::loss_a3)?;
        worst[4].1 = worst[4].1.max(e);
    }
    Ok(worst)
}

/// Plain gradient descent on free logits against the uncertainty loss;
/// returns `max_j |p_j - 1/C|` after `steps` updates.
pub fn um_to_uniform(seed: u64, c: usize, steps: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<f64> = (0..c).map(|_| rng.random_range(-2.0..2.0)).collect();
    let z = Var::from_tensor(&f64_tensor(&init, &[1, c]))?;
    // near uniform the loss curvature in logit space is 2/C^2 per direction
    let lr = (c * c) as f64 / 4.0;
    for _ in 0..steps {
        let p = candle_nn::ops::softmax(z.as_tensor(), 1)?;
        let g = loss_um(&p)?.backward()?;
        let grad = g.get(z.as_tensor()).expect("logit gradient");
        z.set(&(z.as_tensor() - grad.affine(lr, 0.0)?)?)?;
    }
    let p = candle_nn::ops::softmax(z.as_tensor(), 1)?.flatten_all()?.to_vec1::<f64>()?;
    Ok(p.iter().map(|v| (v - 1.0 / c as f64).abs()).fold(0.0, f64::max))
}

/// Closed-form loss values, the two divergence forms, gradients and the
/// uniform fixed point of the uncertainty loss.
pub fn check_loss_analytics(seed: u64) -> CheckResult {
    let run = || -> Result<(bool, String)> {
        let mut uniform = vec![0.1; 10];
        let um_uniform = scalar(&loss_um(&f64_tensor(&uniform, &[1, 10]))?)?;
        uniform.iter_mut().for_each(|v| *v = 0.0);
        uniform[3] = 1.0;
        let um_onehot = scalar(&loss_um(&f64_tensor(&uniform, &[1, 10]))?)?;
        let um_ok = (um_uniform - 0.1).abs() <= LOSS_TOL && (um_onehot - 1.0).abs() <= LOSS_TOL;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chi_worst = 0.0f64;
        for _ in 0..1000 {
            let c = rng.random_range(2..=12);
            let p = distribution(&mut rng, c);
            let q = vec![1.0 / c as f64; c];
            let defining = chi2_divergence(&p, &q)?;
            let via_um = c as f64 * scalar(&loss_um(&f64_tensor(&p, &[1, c]))?)? - 1.0;
            chi_worst = chi_worst.max((defining - uniform_chi2(&p)).abs()).max((defining - via_um).abs());
        }
        let chi_ok = chi_worst <= LOSS_TOL;

        let grads = gradient_errors(seed, 20)?;
        let grad_worst = grads.iter().map(|g| g.1).fold(0.0, f64::max);
        let grad_ok = grad_worst <= GRAD_TOL;

        let uniform_gap = um_to_uniform(seed, 10, 100)?;
        let uniform_ok = uniform_gap <= 1e-3;

        let names: Vec<String> = grads.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
        Ok((
            um_ok && chi_ok && grad_ok && uniform_ok,
            format!(
                "um(uniform)={um_uniform:.12}, um(one-hot)={um_onehot:.12}; chi2 forms max |diff| {chi_worst:.1e} (tol {LOSS_TOL:.0e}); \
                 grad rel err [{}] (tol {GRAD_TOL:.0e}); um descent gap {uniform_gap:.1e} (tol 1e-3)",
                names.join(", ")
            ),
        ))
    };
    let (passed, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        criterion: 2,
        name: "loss analytics",
        passed,
        detail,
    }
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

/// Monotonicity in the threshold, ground-truth preservation and an
/// exhaustive check of the relabel rule over a 3-class grid.
pub fn check_psf_properties(seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deltas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut monotone = true;
    let mut preserved = true;
    for _ in 0..100 {
        let c = rng.random_range(2..=10);
        let n = 64;
        // sharpen some rows so confidences cover the whole threshold range
        let rows: Vec<f64> = (0..n)
            .flat_map(|_| {
                let mut p = distribution(&mut rng, c);
                let j = rng.random_range(0..c);
                p[j] += rng.random_range(0.0..8.0);
                let s: f64 = p.iter().sum();
                p.into_iter().map(move |v| v / s)
            })
            .collect();
        let f = FusedPrediction::from_probs(Array2::from_shape_vec((n, c), rows).expect("shape"));
        let y: Vec<i64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { VOID } else { rng.random_range(0..c as i64) })
            .collect();
        let coarse = rng.random_range(0..c);
        let fine = (coarse + 1) % c;
        let mut prev = usize::MAX;
        for &d in &deltas {
            let Ok(entry) = complete_source(&y, &f, d) else {
                monotone = false;
                continue;
            };
            for (e, (&yy, &orig)) in entry.labels.iter().zip(&y).enumerate() {
                if orig != VOID && (yy != orig || entry.provenance[e] != Provenance::GroundTruth) {
                    preserved = false;
                }
            }
            let relabeled = relabel_conflicts(entry, &y, &f, &[(fine, coarse)], d).expect("valid pair");
            let target = label_target(&f, d).expect("valid delta");
            let count = relabeled.counts().pseudo + relabeled.counts().relabeled + target.counts().pseudo;
            if count > prev {
                monotone = false;
            }
            prev = count;
        }
    }

    // exhaustive relabel grid: all 3-class distributions at 0.05 resolution,
    // every label, every ordered class pair and every threshold on the grid
    let mut grid_ok = true;
    let mut cases = 0usize;
    let steps = 20;
    for i in 0..=steps {
        for j in 0..=(steps - i) {
            let row = [i as f64 / 20.0, j as f64 / 20.0, (steps - i - j) as f64 / 20.0];
            let f = FusedPrediction::from_probs(Array2::from_shape_vec((1, 3), row.to_vec()).expect("shape"));
            let top = argmax_first(&row);
            for y in [VOID, 0, 1, 2] {
                for fine in 0..3 {
                    for coarse in (0..3).filter(|&c| c != fine) {
                        for di in 0..=steps {
                            let d = di as f64 / 20.0;
                            cases += 1;
                            let entry = complete_source(&[y], &f, d).expect("valid delta");
                            let before = entry.labels[0];
                            let out = relabel_conflicts(entry, &[y], &f, &[(fine, coarse)], d).expect("valid pair");
                            let fires = y == coarse as i64 && top == fine && row[fine] > d;
                            let expect = if fires { fine as i64 } else { before };
                            let prov_ok = (out.provenance[0] == Provenance::Relabeled) == fires;
                            if out.labels[0] != expect || !prov_ok {
                                grid_ok = false;
                            }
                        }
                    }
                }
            }
        }
    }
    CheckResult {
        criterion: 3,
        name: "pseudo-label properties",
        passed: monotone && preserved && grid_ok,
        detail: format!(
            "threshold monotone on 100 maps: {monotone}; ground truth preserved: {preserved}; relabel rule exact on {cases} grid cases: {grid_ok}"
        ),
    }
}

/// Measured quantities of the synthetic end-to-end run.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyRun {
    pub bayes: f64,
    pub full: f64,
    pub stage1_fused: f64,
    pub mbr: f64,
    pub seconds: f64,
}

/// Full pipeline and the plain multi-branch row on the default synthetic problem.
pub fn toy_end_to_end(cfg: &ExperimentConfig, seed: u64) -> Result<ToyRun> {
    let start = Instant::now();
    let cfg = with_seed(cfg, seed);
    let problem = Problem::from_config(&cfg)?;
    let full = run_experiment(&AblationRow::Full.apply(&cfg), &problem, Stages { psf: true }, None)?;
    let mbr = run_experiment(&AblationRow::Mbr.apply(&cfg), &problem, Stages { psf: false }, None)?;
    let acc = |r: &crate::pipeline::RunReport| r.target_accuracy.as_ref().map_or(f64::NAN, |a| a.overall);
    Ok(ToyRun {
        bayes: 100.0 * problem.bayes_accuracy.unwrap_or(f64::NAN),
        full: acc(&full),
        stage1_fused: full.stage1.as_ref().map_or(f64::NAN, |s| s.eval.fused.overall),
        mbr: acc(&mbr),
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn check_toy_end_to_end(cfg: &ExperimentConfig, seed: u64) -> CheckResult {
    let (passed, detail) = match toy_end_to_end(cfg, seed) {
        Ok(r) => {
            let ratio = r.full / r.bayes;
            (
                ratio >= 0.95 && r.mbr < r.full && r.seconds < 300.0,
                format!(
                    "full {:.2}% = {:.1}% of Bayes {:.2}% (need 95%); stage-1 fused {:.2}%; MBR {:.2}% (must be lower); {:.1}s (limit 300s)",
                    r.full,
                    100.0 * ratio,
                    r.bayes,
                    r.stage1_fused,
                    r.mbr,
                    r.seconds
                ),
            )
        }
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        criterion: 4,
        name: "synthetic end-to-end",
        passed,
        detail,
    }
}

/// Files the digits configs need that are not on disk.
pub fn missing_digits_files(cfgs: &[&ExperimentConfig]) -> Vec<PathBuf> {
    let mut missing = Vec::new();
    for cfg in cfgs {
        for e in &cfg.label_spaces {
            let Some(ds) = e.dataset.or_else(|| e.domain.parse::<DigitDataset>().ok()) else {
                continue;
            };
            let splits: &[Split] = match e.role {
                DomainRole::Source => &[Split::Train],
                DomainRole::Target => &[Split::Train, Split::Test],
            };
            for split in splits {
                for file in ["images.idx", "labels.idx"] {
                    let p = cfg.data.root.join(ds.dir_name()).join(split.dir_name()).join(file);
                    if !p.exists() && !missing.contains(&p) {
                        missing.push(p);
                    }
                }
            }
        }
    }
    missing
}

fn digits_result(criterion: usize, name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let (passed, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        criterion,
        name,
        passed,
        detail,
    }
}

fn ordered(a: f64, b: f64, strict: bool) -> bool {
    if strict {
        a < b
    } else {
        a <= b
    }
}

/// Component ablation on the reduced digits setting: the plain average, then
/// uncertainty, adversarial alignment and pseudo-labels must improve in order.
pub fn check_digits_ablation(cfg: &ExperimentConfig, seeds: &[u64]) -> CheckResult {
    digits_result(5, "digits ablation ordering", || {
        let start = Instant::now();
        let rows = [AblationRow::Mbr, AblationRow::MbrUm, AblationRow::MbrUmA3, AblationRow::Full];
        let table = run_ablation(cfg, seeds, &rows, None)?;
        let m: Vec<f64> = rows.iter().map(|&r| table.row(r).map_or(f64::NAN, |x| x.mean)).collect();
        let passed = ordered(m[0], m[1], true) && ordered(m[1], m[2], true) && ordered(m[2], m[3], false);
        Ok((
            passed,
            format!(
                "mbr {:.2} < +um {:.2} < +um+a3 {:.2} <= +psf {:.2} (means over {} seeds, {:.0}s)",
                m[0],
                m[1],
                m[2],
                m[3],
                seeds.len(),
                start.elapsed().as_secs_f64()
            ),
        ))
    })
}

/// Source-only, stage-1 fused and stage-2 accuracy averaged over the target choices.
pub fn check_digits_headline(cfgs: &[ExperimentConfig], seeds: &[u64]) -> CheckResult {
    digits_result(6, "digits headline ordering", || {
        let start = Instant::now();
        let (mut so, mut wo, mut full) = (Vec::new(), Vec::new(), Vec::new());
        for cfg in cfgs {
            for &s in seeds {
                let c = with_seed(cfg, s);
                let problem = Problem::from_config(&c)?;
                let base = run_source_only(&c, &problem, None)?;
                let r = run_experiment(&AblationRow::Full.apply(&c), &problem, Stages { psf: true }, None)?;
                so.push(base.target_accuracy.map_or(f64::NAN, |a| a.overall));
                wo.push(r.stage1.as_ref().map_or(f64::NAN, |s| s.eval.fused.overall));
                full.push(r.target_accuracy.map_or(f64::NAN, |a| a.overall));
            }
        }
        let (so, wo, full) = (mean_std(&so).0, mean_std(&wo).0, mean_std(&full).0);
        Ok((
            wo >= so + 10.0 && full >= wo + 2.0,
            format!(
                "source-only {so:.2}, without pseudo-labels {wo:.2} (need >= +10), full {full:.2} (need >= +2); {:.0}s",
                start.elapsed().as_secs_f64()
            ),
        ))
    })
}

/// Stage-1 fused accuracy with four shared source classes against none.
pub fn check_digits_overlap(disjoint: &ExperimentConfig, overlap: &ExperimentConfig, seeds: &[u64]) -> CheckResult {
    digits_result(7, "digits partial overlap", || {
        let fused = |cfg: &ExperimentConfig| -> Result<f64> {
            let mut acc = Vec::new();
            for &s in seeds {
                let c = with_seed(cfg, s);
                let r = run_experiment(&c, &Problem::from_config(&c)?, Stages { psf: false }, None)?;
                acc.push(r.stage1.as_ref().map_or(f64::NAN, |s| s.eval.fused.overall));
            }
            Ok(mean_std(&acc).0)
        };
        let (zero, four) = (fused(disjoint)?, fused(overlap)?);
        Ok((four > zero, format!("fused accuracy with 4 shared classes {four:.2} vs none {zero:.2}")))
    })
}

/// The four checks that run without external data.
pub fn run_all(cfg: &ExperimentConfig, seed: u64) -> Vec<CheckResult> {
    vec![
        check_fusion_oracle(seed),
        check_loss_analytics(seed),
        check_psf_properties(seed),
        check_toy_end_to_end(cfg, seed),
    ]
}
