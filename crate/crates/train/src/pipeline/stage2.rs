//! Supervised training of the unified network on completed labels.

use std::path::Path;
use std::time::Instant;

use candle_core::Device;
use serde::{Deserialize, Serialize};
use unilabel_core::data::{Dataset, EpochSampler};
use unilabel_core::VOID;

use crate::config::ExperimentConfig;
use crate::error::{Result, TrainError};
use crate::losses::{loss_fsa, scalar};
use crate::nets::{input_tensor, BranchSet, UnifiedModel};
use crate::optim::Optimizer;
use crate::pipeline::eval::evaluate_unified;
use crate::pipeline::problem::Problem;
use crate::pipeline::psf_run::PsfOutcome;
use crate::pipeline::stage1::{sampler_seed, DIVERGENCE_PATIENCE};

/// One domain's inputs with the labels stage 2 may learn from.
#[derive(Debug, Clone)]
pub struct Stage2Set {
    pub name: String,
    pub data: Dataset,
}

/// Sources with their completed labels and the target with its pseudo-labels.
/// The target inputs come from the label-free [`UnlabeledSet`](super::problem::UnlabeledSet).
pub fn pseudo_labeled_sets(problem: &Problem, psf: &PsfOutcome) -> Result<Vec<Stage2Set>> {
    let mut sets = Vec::with_capacity(problem.num_sources() + 1);
    for ((d, data), entry) in problem.source_domains().iter().zip(&problem.sources).zip(&psf.sources) {
        sets.push(Stage2Set {
            name: d.name.clone(),
            data: data.with_labels(entry.labels.clone())?,
        });
    }
    sets.push(Stage2Set {
        name: problem.target_domain().name.clone(),
        data: problem.target.as_dataset().with_labels(psf.target.labels.clone())?,
    });
    Ok(sets)
}

/// Sources with their original partial labels only; the source-only baseline.
pub fn source_only_sets(problem: &Problem) -> Vec<Stage2Set> {
    problem
        .source_domains()
        .iter()
        .zip(&problem.sources)
        .map(|(d, data)| Stage2Set {
            name: d.name.clone(),
            data: data.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Record {
    pub step: usize,
    pub fsa: f64,
    pub accuracy: Option<f64>,
}

pub struct Stage2Outcome {
    pub model: UnifiedModel,
    pub curve: Vec<Stage2Record>,
    pub wall_clock_s: f64,
}

/// Trains the unified network. Each step draws one batch of labeled rows per
/// domain; domains without any label are skipped. `eval` is scored every
/// `schedule.eval_every` steps for the loss curve only.
pub fn train_stage2(
    cfg: &ExperimentConfig,
    input_shape: &[usize],
    num_classes: usize,
    sets: &[Stage2Set],
    warm_start: Option<&BranchSet>,
    eval: Option<&Dataset>,
    ckpt_dir: Option<&Path>,
) -> Result<Stage2Outcome> {
    let start = Instant::now();
    let device = Device::Cpu;
    let seed = cfg.schedule.seed;
    let model = UnifiedModel::new(&cfg.model, input_shape, num_classes, sampler_seed(seed, 1000), &device)?;
    if cfg.model.stage2_warm_start {
        match warm_start {
            Some(b) => model.warm_start(b)?,
            None => log::warn!("stage2_warm_start set but no stage-1 branches given; starting fresh"),
        }
    }
    let mut opt = Optimizer::new(&cfg.optimizer, model.vars(), cfg.optimizer.lr)?;

    let labeled: Vec<(usize, Vec<usize>)> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| (i, (0..s.data.len()).filter(|&r| s.data.labels[r] != VOID).collect::<Vec<_>>()))
        .filter(|(_, rows)| !rows.is_empty())
        .collect();
    if labeled.is_empty() {
        return Err(TrainError::Config("stage 2 has no labeled samples in any domain".into()));
    }
    for s in sets {
        log::info!(
            "stage 2 domain {}: {} of {} samples labeled",
            s.name,
            s.data.labels.iter().filter(|&&y| y != VOID).count(),
            s.data.len()
        );
    }
    let mut samplers: Vec<EpochSampler> = labeled
        .iter()
        .map(|(i, rows)| EpochSampler::new(rows.len(), sampler_seed(seed, 2000 + i)))
        .collect();

    let mut curve = Vec::with_capacity(cfg.schedule.stage2_steps);
    let mut bad_steps = 0usize;
    for step in 1..=cfg.schedule.stage2_steps {
        let mut per_domain = Vec::with_capacity(labeled.len());
        for ((i, rows), sampler) in labeled.iter().zip(samplers.iter_mut()) {
            let pick: Vec<usize> = sampler.next_batch(cfg.schedule.batch_size).into_iter().map(|j| rows[j]).collect();
            let batch = sets[*i].data.select(&pick);
            per_domain.push((model.logits(&input_tensor(&batch, &device)?)?, batch.labels));
        }
        let loss = loss_fsa(&per_domain)?;
        let value = scalar(&loss)?;
        if value.is_finite() {
            opt.step(&loss.backward()?)?;
            bad_steps = 0;
        } else {
            bad_steps += 1;
            log::warn!("stage 2 step {step}: non-finite loss");
            if bad_steps >= DIVERGENCE_PATIENCE {
                return Err(TrainError::Diverged(format!(
                    "stage 2 loss non-finite for {DIVERGENCE_PATIENCE} consecutive steps (last step {step})"
                )));
            }
        }
        let mut rec = Stage2Record {
            step,
            fsa: value,
            accuracy: None,
        };
        let every = cfg.schedule.eval_every;
        if let (Some(test), true) = (eval, every > 0 && step % every == 0) {
            let acc = evaluate_unified(&model, test)?.overall;
            rec.accuracy = Some(acc);
            log::info!("stage 2 step {step}: loss {value:.4}, target accuracy {acc:.2}");
        }
        curve.push(rec);
        let ck = cfg.schedule.checkpoint_every;
        if let (Some(dir), true) = (ckpt_dir, ck > 0 && step % ck == 0) {
            model.save(dir)?;
        }
    }
    if let Some(dir) = ckpt_dir {
        model.save(dir)?;
    }
    Ok(Stage2Outcome {
        model,
        curve,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}
