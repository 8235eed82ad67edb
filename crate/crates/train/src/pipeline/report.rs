//! Run reports (`report.json`) and loss curves (`metrics.csv`).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unilabel_core::psf::PsfSummary;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pipeline::eval::{Accuracy, FusedEval};
use crate::pipeline::psf_run::PsfQuality;
use crate::pipeline::stage1::Stage1Record;
use crate::pipeline::stage2::Stage2Record;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Report {
    pub steps: usize,
    pub wall_clock_s: f64,
    pub final_loss: Option<f64>,
    pub eval: FusedEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfReport {
    pub summary: PsfSummary,
    pub quality: PsfQuality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Report {
    pub steps: usize,
    pub wall_clock_s: f64,
    pub final_loss: Option<f64>,
    pub accuracy: Accuracy,
}

/// Everything one run produced. `target_accuracy` is the headline number:
/// stage 2 when it ran, otherwise the stage-1 fused prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Closed-form optimum on synthetic data, percent.
    pub bayes_accuracy: Option<f64>,
    pub stage1: Option<Stage1Report>,
    pub psf: Option<PsfReport>,
    pub stage2: Option<Stage2Report>,
    pub target_accuracy: Option<Accuracy>,
    pub wall_clock_s: f64,
    #[serde(skip)]
    pub stage1_curve: Vec<Stage1Record>,
    #[serde(skip)]
    pub stage2_curve: Vec<Stage2Record>,
}

impl RunReport {
    pub fn new(cfg: &ExperimentConfig, bayes_accuracy: Option<f64>) -> Self {
        Self {
            seed: cfg.schedule.seed,
            config: cfg.clone(),
            bayes_accuracy: bayes_accuracy.map(|b| 100.0 * b),
            stage1: None,
            psf: None,
            stage2: None,
            target_accuracy: None,
            wall_clock_s: 0.0,
            stage1_curve: Vec::new(),
            stage2_curve: Vec::new(),
        }
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("stage,step,psu,att,um,a3,d,total,accuracy\n");
        let opt = |v: Option<f64>| v.map(|a| format!("{a:.6}")).unwrap_or_default();
        for r in &self.stage1_curve {
            let _ = writeln!(
                s,
                "1,{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                r.step,
                r.psu,
                r.att,
                r.um,
                r.a3,
                r.d,
                r.total,
                opt(r.accuracy)
            );
        }
        for r in &self.stage2_curve {
            let _ = writeln!(s, "2,{},,,,,,{:.6},{}", r.step, r.fsa, opt(r.accuracy));
        }
        s
    }

    /// Writes `report.json` and `metrics.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(self)?)?;
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("report.json");
        let bytes = std::fs::read(&path).map_err(|_| unilabel_core::Error::MissingData(path))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_one_row_per_step() {
        let mut r = RunReport::new(&ExperimentConfig::default(), Some(0.9));
        r.stage1_curve.push(Stage1Record {
            step: 1,
            psu: 1.0,
            att: 0.5,
            um: 0.25,
            a3: 0.7,
            d: 1.4,
            total: 2.45,
            accuracy: None,
        });
        r.stage2_curve.push(Stage2Record {
            step: 1,
            fsa: 0.3,
            accuracy: Some(50.0),
        });
        let csv = r.metrics_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "1,1,1.000000,0.500000,0.250000,0.700000,1.400000,2.450000,");
        assert_eq!(lines[2], "2,1,,,,,,0.300000,50.000000");
        assert_eq!(r.bayes_accuracy, Some(90.0));
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        let back = RunReport::read(dir.path()).unwrap();
        assert_eq!(back.config, r.config);
    }
}
