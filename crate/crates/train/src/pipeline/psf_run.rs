//! Materialises pseudo-labels for every domain from the fused stage-1 branches.

use std::path::Path;

use serde::{Deserialize, Serialize};
use unilabel_core::labelspace::{conflict_targets, ConflictRole};
use unilabel_core::psf::{complete_source, label_target, read_archive, relabel_conflicts, write_archive, PseudoLabels, PsfSummary};
use unilabel_core::VOID;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::nets::BranchSet;
use crate::pipeline::eval::{fuse_predictions, EVAL_CHUNK};
use crate::pipeline::problem::Problem;

/// Completed labels for each source (id order) and the target.
#[derive(Debug, Clone, PartialEq)]
pub struct PsfOutcome {
    pub sources: Vec<PseudoLabels>,
    pub target: PseudoLabels,
    pub summary: PsfSummary,
}

/// Pseudo-label quality measured against hidden truth, for reports only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfQuality {
    /// Fraction of originally void source elements that received a label.
    pub source_void_coverage: f64,
    /// Fraction of target elements that received a label.
    pub target_coverage: f64,
    /// Accuracy (percent) of the target pseudo-labels that were assigned.
    pub target_label_accuracy: f64,
}

pub fn run_psf(cfg: &ExperimentConfig, problem: &Problem, set: &BranchSet) -> Result<PsfOutcome> {
    let mode = cfg.loss.fusion_mode();
    let mut summary = PsfSummary::default();
    let mut sources = Vec::with_capacity(problem.num_sources());
    for (d, data) in problem.source_domains().iter().zip(&problem.sources) {
        let fused = fuse_predictions(&set.predict(data, EVAL_CHUNK)?, &problem.conflicts, &cfg.fusion, mode)?;
        let delta = cfg.fusion.delta_for(&d.name);
        let mut entry = complete_source(&data.labels, &fused, delta)?;
        let pairs: Vec<(usize, usize)> = conflict_targets(&problem.conflicts, d.domain_id)
            .into_iter()
            .filter(|p| p.role == ConflictRole::Coarse)
            .map(|p| (p.fine_class, p.coarse_class))
            .collect();
        if !pairs.is_empty() {
            entry = relabel_conflicts(entry, &data.labels, &fused, &pairs, delta)?;
        }
        summary.record(&d.name, &entry);
        sources.push(entry);
    }
    let t = problem.target_domain();
    let fused = fuse_predictions(&set.predict(problem.target.as_dataset(), EVAL_CHUNK)?, &problem.conflicts, &cfg.fusion, mode)?;
    let target = label_target(&fused, cfg.fusion.delta_for(&t.name))?;
    summary.record(&t.name, &target);
    Ok(PsfOutcome {
        sources,
        target,
        summary,
    })
}

impl PsfOutcome {
    pub fn write(&self, dir: &Path, problem: &Problem) -> Result<()> {
        for (d, entry) in problem.source_domains().iter().zip(&self.sources) {
            write_archive(dir, &d.name, entry)?;
        }
        write_archive(dir, &problem.target_domain().name, &self.target)?;
        self.summary.write(dir)?;
        Ok(())
    }

    pub fn read(dir: &Path, problem: &Problem) -> Result<Self> {
        let summary = PsfSummary::read(dir)?;
        let load = |name: &str| {
            let delta = summary.domains.get(name).map(|s| s.delta).unwrap_or(f64::NAN);
            read_archive(dir, name, delta)
        };
        let sources = problem
            .source_domains()
            .iter()
            .map(|d| load(&d.name))
            .collect::<unilabel_core::Result<Vec<_>>>()?;
        let target = load(&problem.target_domain().name)?;
        Ok(Self {
            sources,
            target,
            summary,
        })
    }

    pub fn quality(&self, problem: &Problem) -> PsfQuality {
        let mut void = 0usize;
        let mut filled = 0usize;
        for (entry, data) in self.sources.iter().zip(&problem.sources) {
            for (&y, &yy) in data.labels.iter().zip(&entry.labels) {
                if y == VOID {
                    void += 1;
                    filled += usize::from(yy != VOID);
                }
            }
        }
        let assigned: Vec<(i64, i64)> = self
            .target
            .labels
            .iter()
            .zip(&problem.target_train_truth)
            .filter(|(&y, _)| y != VOID)
            .map(|(&y, &t)| (y, t))
            .collect();
        let correct = assigned.iter().filter(|(y, t)| y == t).count();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        PsfQuality {
            source_void_coverage: ratio(filled, void),
            target_coverage: ratio(assigned.len(), self.target.len()),
            target_label_accuracy: 100.0 * ratio(correct, assigned.len()),
        }
    }
}
