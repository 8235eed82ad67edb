//! The component ablation grid: source-only, plain multi-branch averaging,
//! then uncertainty, attention, adversarial alignment and pseudo-labels added
//! one at a time.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pipeline::{run_experiment, run_source_only, with_seed, Problem, RunReport, Stages};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationRow {
    SourceOnly,
    Mbr,
    MbrUm,
    MbrUmDat,
    MbrUmA3,
    Full,
}

impl AblationRow {
    pub const ALL: [AblationRow; 6] = [
        Self::SourceOnly,
        Self::Mbr,
        Self::MbrUm,
        Self::MbrUmDat,
        Self::MbrUmA3,
        Self::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SourceOnly => "source_only",
            Self::Mbr => "mbr",
            Self::MbrUm => "mbr_um",
            Self::MbrUmDat => "mbr_um_dat",
            Self::MbrUmA3 => "mbr_um_a3",
            Self::Full => "full",
        }
    }

    /// The configuration this row trains with.
    pub fn apply(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        let (um, dat, a3) = match self {
            Self::SourceOnly | Self::Mbr => (false, false, false),
            Self::MbrUm => (true, false, false),
            Self::MbrUmDat => (true, true, false),
            Self::MbrUmA3 | Self::Full => (true, true, true),
        };
        c.loss.um_enabled = um;
        c.loss.dat_enabled = dat;
        c.loss.a3_enabled = a3;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub row: AblationRow,
    pub seeds: Vec<u64>,
    /// Target accuracy per seed, percent.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<RowResult>,
    pub bayes_accuracy: Option<f64>,
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn headline(r: &RunReport) -> f64 {
    r.target_accuracy.as_ref().map(|a| a.overall).unwrap_or(f64::NAN)
}

/// Runs every row for every seed. The adversarial row and the full row
/// share one stage-1 run per seed. Reports go to `out/<row>/seed<s>/`.
pub fn run_ablation(cfg: &ExperimentConfig, seeds: &[u64], rows: &[AblationRow], out: Option<&Path>) -> Result<AblationTable> {
    let mut acc: Vec<Vec<f64>> = vec![Vec::new(); AblationRow::ALL.len()];
    let mut bayes = None;
    let dir = |row: AblationRow, s: u64| out.map(|o| o.join(row.name()).join(format!("seed{s}")));
    for &s in seeds {
        let base = with_seed(cfg, s);
        let problem = Problem::from_config(&base)?;
        bayes = problem.bayes_accuracy.map(|b| 100.0 * b);
        for &row in rows {
            let c = row.apply(&base);
            log::info!("ablation row {} seed {s}", row.name());
            match row {
                AblationRow::SourceOnly => {
                    let r = run_source_only(&c, &problem, dir(row, s).as_deref())?;
                    acc[row as usize].push(headline(&r));
                }
                AblationRow::MbrUmA3 if rows.contains(&AblationRow::Full) => {}
                AblationRow::Full => {
                    let r = run_experiment(&c, &problem, Stages { psf: true }, dir(row, s).as_deref())?;
                    if rows.contains(&AblationRow::MbrUmA3) {
                        let s1 = r.stage1.as_ref().expect("stage 1 ran");
                        acc[AblationRow::MbrUmA3 as usize].push(s1.eval.fused.overall);
                    }
                    acc[row as usize].push(headline(&r));
                }
                _ => {
                    let r = run_experiment(&c, &problem, Stages { psf: false }, dir(row, s).as_deref())?;
                    acc[row as usize].push(headline(&r));
                }
            }
        }
    }
    let table = AblationTable {
        rows: rows
            .iter()
            .map(|&row| {
                let a = acc[row as usize].clone();
                let (mean, std) = mean_std(&a);
                RowResult {
                    row,
                    seeds: seeds.to_vec(),
                    accuracies: a,
                    mean,
                    std,
                }
            })
            .collect(),
        bayes_accuracy: bayes,
    };
    if let Some(o) = out {
        std::fs::create_dir_all(o)?;
        std::fs::write(o.join("ablation.json"), serde_json::to_vec_pretty(&table)?)?;
    }
    Ok(table)
}

impl AblationTable {
    pub fn row(&self, row: AblationRow) -> Option<&RowResult> {
        self.rows.iter().find(|r| r.row == row)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>8} {:>7}  per seed", "row", "mean", "std");
        for r in &self.rows {
            let per: Vec<String> = r.accuracies.iter().map(|a| format!("{a:.2}")).collect();
            let _ = writeln!(s, "{:<12} {:>8.2} {:>7.2}  {}", r.row.name(), r.mean, r.std, per.join(" "));
        }
        if let Some(b) = self.bayes_accuracy {
            let _ = writeln!(s, "bayes        {b:>8.2}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_toggle_components() {
        let base = ExperimentConfig::default();
        let m = AblationRow::Mbr.apply(&base);
        assert!(!m.loss.um_enabled && !m.loss.dat_enabled && !m.loss.a3_enabled);
        let d = AblationRow::MbrUmDat.apply(&base);
        assert!(d.loss.um_enabled && d.loss.dat_enabled && !d.loss.a3_enabled);
        let f = AblationRow::Full.apply(&base);
        assert!(f.loss.um_enabled && f.loss.dat_enabled && f.loss.a3_enabled);
    }

    #[test]
    fn mean_and_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
