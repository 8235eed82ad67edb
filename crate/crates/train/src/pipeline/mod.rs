//! Two-stage orchestration: stage-1 branches, pseudo-labels, stage-2 unified
//! network, evaluation, ablations and the built-in verification suite.

pub mod ablate;
pub mod eval;
pub mod problem;
pub mod psf_run;
pub mod report;
pub mod stage1;
pub mod stage2;
pub mod verify;

use std::path::Path;
use std::time::Instant;

pub use ablate::{run_ablation, AblationRow, AblationTable};
pub use eval::{evaluate_fused, evaluate_unified, Accuracy, FusedEval, FusionMode};
pub use problem::{Problem, UnlabeledSet};
pub use psf_run::{run_psf, PsfOutcome};
pub use report::RunReport;
pub use stage1::{train_stage1, Stage1Outcome};
pub use stage2::{train_stage2, Stage2Outcome};

use crate::config::ExperimentConfig;
use crate::error::Result;
use report::{PsfReport, Stage1Report, Stage2Report};

/// Sets both the training seed and the data seed.
pub fn with_seed(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.schedule.seed = seed;
    c.data.seed = seed;
    c
}

/// Which parts of the pipeline a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub psf: bool,
}

/// Stage 1, fused evaluation and, with `stages.psf`, pseudo-labels and
/// stage 2. Artifacts go below `out` when given (`ckpt/`, `psf/`, reports).
pub fn run_experiment(cfg: &ExperimentConfig, problem: &Problem, stages: Stages, out: Option<&Path>) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new(cfg, problem.bayes_accuracy);
    let ckpt = out.map(|o| o.join("ckpt"));
    let s1 = train_stage1(cfg, problem, ckpt.as_deref())?;
    let e1 = evaluate_fused(&s1.branches, &problem.target_test, &problem.conflicts, &cfg.fusion, cfg.loss.fusion_mode())?;
    log::info!(
        "stage 1 done in {:.1}s: fused {:.2}, attention {:.2}, mbr {:.2}",
        s1.wall_clock_s,
        e1.fused.overall,
        e1.attention.overall,
        e1.mbr.overall
    );
    report.target_accuracy = Some(e1.fused.clone());
    report.stage1 = Some(Stage1Report {
        steps: s1.curve.len(),
        wall_clock_s: s1.wall_clock_s,
        final_loss: s1.curve.last().map(|r| r.total),
        eval: e1,
    });
    report.stage1_curve = s1.curve;

    if stages.psf {
        let psf = run_psf(cfg, problem, &s1.branches)?;
        let quality = psf.quality(problem);
        log::info!(
            "pseudo-labels: {:.1}% of source void filled, {:.1}% of target labeled at {:.2}% accuracy",
            100.0 * quality.source_void_coverage,
            100.0 * quality.target_coverage,
            quality.target_label_accuracy
        );
        if let Some(o) = out {
            psf.write(&o.join("psf"), problem)?;
        }
        let sets = stage2::pseudo_labeled_sets(problem, &psf)?;
        report.psf = Some(PsfReport {
            summary: psf.summary,
            quality,
        });
        let s2 = train_stage2(
            cfg,
            &problem.input_shape,
            problem.num_classes(),
            &sets,
            Some(&s1.branches),
            Some(&problem.target_test),
            ckpt.as_deref(),
        )?;
        let acc = evaluate_unified(&s2.model, &problem.target_test)?;
        log::info!("stage 2 done in {:.1}s: target accuracy {:.2}", s2.wall_clock_s, acc.overall);
        report.target_accuracy = Some(acc.clone());
        report.stage2 = Some(Stage2Report {
            steps: s2.curve.len(),
            wall_clock_s: s2.wall_clock_s,
            final_loss: s2.curve.last().map(|r| r.fsa),
            accuracy: acc,
        });
        report.stage2_curve = s2.curve;
    }
    report.wall_clock_s = start.elapsed().as_secs_f64();
    if let Some(o) = out {
        report.write(o)?;
    }
    Ok(report)
}

/// Source-only baseline: the unified network trained on the sources' partial
/// labels for the stage-1 step budget.
pub fn run_source_only(cfg: &ExperimentConfig, problem: &Problem, out: Option<&Path>) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new(cfg, problem.bayes_accuracy);
    let sets = stage2::source_only_sets(problem);
    let mut budget = cfg.clone();
    budget.schedule.stage2_steps = cfg.schedule.stage1_steps;
    budget.model.stage2_warm_start = false;
    let s2 = train_stage2(&budget, &problem.input_shape, problem.num_classes(), &sets, None, Some(&problem.target_test), None)?;
    let acc = evaluate_unified(&s2.model, &problem.target_test)?;
    report.target_accuracy = Some(acc.clone());
    report.stage2 = Some(Stage2Report {
        steps: s2.curve.len(),
        wall_clock_s: s2.wall_clock_s,
        final_loss: s2.curve.last().map(|r| r.fsa),
        accuracy: acc,
    });
    report.stage2_curve = s2.curve;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    if let Some(o) = out {
        report.write(o)?;
    }
    Ok(report)
}
