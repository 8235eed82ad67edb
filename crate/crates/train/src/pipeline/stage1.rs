//! Joint training of all branches under the min-max stage-1 objective,
//! alternating one discriminator step with one generator step.

use std::path::Path;
use std::time::Instant;

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};
use unilabel_core::data::{EpochSampler, LabeledBatch};

use crate::config::{ExperimentConfig, LossConfig};
use crate::error::{Result, TrainError};
use crate::losses::{gate, loss_a3, loss_all, loss_att, loss_d, loss_psu, loss_um_void, scalar, Stage1LossConfig, Stage1Terms};
use crate::nets::{input_tensor, BranchSet};
use crate::optim::Optimizer;
use crate::pipeline::eval::{evaluate_fused, FusionMode};
use crate::pipeline::problem::Problem;

/// Consecutive non-finite steps tolerated before training aborts.
pub const DIVERGENCE_PATIENCE: usize = 10;

impl LossConfig {
    pub fn stage1(&self) -> Stage1LossConfig {
        Stage1LossConfig {
            lambda_adv: self.lambda_adv,
            um_enabled: self.um_enabled,
            a3_enabled: self.a3_enabled,
        }
    }

    /// Attention fusion needs trained attention heads.
    pub fn fusion_mode(&self) -> FusionMode {
        if self.dat_enabled {
            FusionMode::Attention
        } else {
            FusionMode::Mean
        }
    }

    fn adversarial(&self) -> bool {
        self.a3_enabled && self.lambda_adv > 0.0
    }
}

/// Loss components of one step, summed over branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Record {
    pub step: usize,
    pub psu: f64,
    pub att: f64,
    pub um: f64,
    pub a3: f64,
    pub d: f64,
    pub total: f64,
    /// Fused target accuracy, when evaluated at this step.
    pub accuracy: Option<f64>,
}

pub struct Stage1Outcome {
    pub branches: BranchSet,
    pub curve: Vec<Stage1Record>,
    pub wall_clock_s: f64,
}

/// Independent batch streams per domain, derived from one seed.
pub(crate) fn sampler_seed(seed: u64, stream: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream as u64 + 1)
}

pub fn build_branches(cfg: &ExperimentConfig, problem: &Problem, device: &Device) -> Result<BranchSet> {
    BranchSet::new(
        &cfg.model,
        &problem.input_shape,
        problem.num_classes(),
        problem.num_sources(),
        cfg.schedule.seed,
        device,
    )
}

/// Runs stage 1. Checkpoints go to `ckpt_dir` when given.
pub fn train_stage1(cfg: &ExperimentConfig, problem: &Problem, ckpt_dir: Option<&Path>) -> Result<Stage1Outcome> {
    let start = Instant::now();
    let device = Device::Cpu;
    let set = build_branches(cfg, problem, &device)?;
    let k = problem.num_sources();
    let bs = cfg.schedule.batch_size;
    let loss_cfg = cfg.loss.stage1();
    let adversarial = cfg.loss.adversarial();

    let mut gen_opt = Optimizer::new(&cfg.optimizer, set.generator_vars(), cfg.optimizer.lr)?;
    let disc_lr = cfg.optimizer.disc_lr.unwrap_or(cfg.optimizer.lr);
    let mut disc_opt = Optimizer::new(&cfg.optimizer, set.discriminator_vars(), disc_lr)?;

    let seed = cfg.schedule.seed;
    let mut samplers: Vec<EpochSampler> = problem
        .sources
        .iter()
        .enumerate()
        .map(|(i, d)| EpochSampler::new(d.len(), sampler_seed(seed, i)))
        .collect();
    let mut target_sampler = EpochSampler::new(problem.target.len(), sampler_seed(seed, k));
    if problem.sources.iter().any(|d| d.is_empty()) || problem.target.is_empty() {
        return Err(TrainError::Config("every domain needs at least one training sample".into()));
    }

    let mut curve = Vec::with_capacity(cfg.schedule.stage1_steps);
    let mut bad_steps = 0usize;
    for step in 1..=cfg.schedule.stage1_steps {
        let xt = input_tensor(&problem.target.as_dataset().select(&target_sampler.next_batch(bs)), &device)?;
        let shared_t = if set.shared_encoder() { Some(set.features(0, &xt)?) } else { None };

        let mut terms = Vec::with_capacity(k);
        let mut gated = Vec::with_capacity(k);
        for i in 0..k {
            let rows = samplers[i].next_batch(bs);
            let part = problem.sources[i].select(&rows);
            let batch = LabeledBatch::new(part.inputs, part.sample_shape, part.labels, i + 1);
            let out = set.forward(i, &input_tensor_of(&batch, &device)?)?;
            let ft = match &shared_t {
                Some(f) => f.clone(),
                None => set.features(i, &xt)?,
            };
            let out_t = set.heads(i, &ft)?;

            let psu = loss_psu(&out.logits, &batch.labels)?;
            let att = if cfg.loss.dat_enabled {
                let targets = Tensor::from_slice(&batch.attention_targets, batch.len(), &device)?;
                loss_att(&out.attention, &targets)?
            } else {
                psu.zeros_like()?
            };
            let um = loss_um_void(&out.probs, &batch.labels)?;
            let (gs, gt) = if cfg.loss.attention_gated {
                (gate(&out.probs, &out.attention)?, gate(&out_t.probs, &out_t.attention)?)
            } else {
                (out.probs.clone(), out_t.probs.clone())
            };
            gated.push((gs, gt));
            terms.push(Stage1Terms {
                psu,
                att,
                um,
                a3: Tensor::zeros((), candle_core::DType::F32, &device)?,
            });
        }

        // discriminator step on detached inputs
        let mut d_value = 0.0;
        if adversarial {
            let mut d_total: Option<Tensor> = None;
            for (i, (gs, gt)) in gated.iter().enumerate() {
                let ds = set.forward_discriminator(i, &gs.detach())?;
                let dt = set.forward_discriminator(i, &gt.detach())?;
                let l = loss_d(&ds, &dt)?;
                d_total = Some(match d_total {
                    Some(t) => (t + l)?,
                    None => l,
                });
            }
            let d_total = d_total.expect("at least one branch");
            d_value = scalar(&d_total)?;
            if d_value.is_finite() {
                disc_opt.step(&d_total.backward()?)?;
            }
        }

        // generator step against the updated, frozen discriminators
        if adversarial {
            for (i, (_, gt)) in gated.iter().enumerate() {
                terms[i].a3 = loss_a3(&set.forward_discriminator(i, gt)?)?;
            }
        }
        let total = loss_all(&terms, &loss_cfg)?;
        let total_value = scalar(&total)?;
        if total_value.is_finite() && d_value.is_finite() {
            gen_opt.step(&total.backward()?)?;
            bad_steps = 0;
        } else {
            bad_steps += 1;
            log::warn!("stage 1 step {step}: non-finite loss ({total_value}, d={d_value})");
            if bad_steps >= DIVERGENCE_PATIENCE {
                return Err(TrainError::Diverged(format!(
                    "stage 1 loss non-finite for {DIVERGENCE_PATIENCE} consecutive steps (last step {step})"
                )));
            }
        }

        let sum = |f: fn(&Stage1Terms) -> &Tensor| -> Result<f64> {
            terms.iter().map(|t| scalar(f(t))).sum()
        };
        let mut rec = Stage1Record {
            step,
            psu: sum(|t| &t.psu)?,
            att: sum(|t| &t.att)?,
            um: sum(|t| &t.um)?,
            a3: sum(|t| &t.a3)?,
            d: d_value,
            total: total_value,
            accuracy: None,
        };
        let every = cfg.schedule.eval_every;
        if every > 0 && step % every == 0 {
            let e = evaluate_fused(&set, &problem.target_test, &problem.conflicts, &cfg.fusion, cfg.loss.fusion_mode())?;
            rec.accuracy = Some(e.fused.overall);
            log::info!("stage 1 step {step}: loss {total_value:.4}, fused target accuracy {:.2}", e.fused.overall);
        } else if step % 100 == 0 {
            log::debug!("stage 1 step {step}: loss {total_value:.4}");
        }
        curve.push(rec);

        let ck = cfg.schedule.checkpoint_every;
        if let (Some(dir), true) = (ckpt_dir, ck > 0 && step % ck == 0) {
            set.save(dir)?;
        }
    }
    if let Some(dir) = ckpt_dir {
        set.save(dir)?;
    }
    Ok(Stage1Outcome {
        branches: set,
        curve,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

fn input_tensor_of(batch: &LabeledBatch, device: &Device) -> Result<Tensor> {
    let mut shape = vec![batch.len()];
    shape.extend_from_slice(&batch.sample_shape);
    Ok(Tensor::from_slice(&batch.inputs, shape, device)?)
}
