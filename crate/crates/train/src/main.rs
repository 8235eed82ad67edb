//! `unilabel` command line: runs each pipeline stage on its own or the whole
//! ablation grid. Exit codes: 0 success, 2 usage or config error, 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use candle_core::Device;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use unilabel_train::nets::UnifiedModel;
use unilabel_train::pipeline::report::{PsfReport, Stage2Report};
use unilabel_train::pipeline::stage1::build_branches;
use unilabel_train::pipeline::stage2::pseudo_labeled_sets;
use unilabel_train::pipeline::{
    evaluate_fused, evaluate_unified, run_ablation, run_experiment, run_psf, train_stage2, verify, with_seed, Accuracy,
    AblationRow, FusedEval, Problem, PsfOutcome, RunReport, Stages,
};
use unilabel_train::{ExperimentConfig, Result, TrainError};

#[derive(Parser)]
#[command(name = "unilabel", version, about = "Domain adaptation from partially labeled sources")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; the built-in synthetic setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides both the data and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for checkpoints, pseudo-labels and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Loads every domain, applies the partial-label masks and writes a summary.
    PrepareData,
    /// Trains the per-source branches and evaluates their fused prediction.
    TrainStage1,
    /// Writes pseudo-label archives from the stage-1 checkpoints.
    RunPsf,
    /// Trains the unified network on the pseudo-label archives.
    TrainStage2,
    /// Scores the saved checkpoints on the target test split.
    Evaluate,
    /// Runs the built-in verification suite and prints a PASS/FAIL table.
    ToyVerify,
    /// Runs the component ablation grid over several seeds.
    Ablate {
        /// Number of consecutive seeds, starting at --seed (default 0).
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Subset of rows to run (source_only, mbr, mbr_um, mbr_um_dat, mbr_um_a3, full).
        #[arg(long, value_delimiter = ',', value_parser = parse_row)]
        rows: Vec<AblationRow>,
    },
}

fn parse_row(s: &str) -> std::result::Result<AblationRow, String> {
    AblationRow::ALL
        .into_iter()
        .find(|r| r.name() == s)
        .ok_or_else(|| format!("unknown row `{s}`"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::toy(),
    };
    Ok(match common.seed {
        Some(s) => with_seed(&cfg, s),
        None => cfg,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

/// Returns whether the command succeeded; errors abort with their own code.
fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    match cli.command {
        Command::PrepareData => {
            let problem = Problem::from_config(&cfg)?;
            let summary = problem.summary();
            for d in &summary {
                println!(
                    "{:<12} {:<7} {:>6} samples {:>6} void  classes {}",
                    d.name,
                    format!("{:?}", d.role).to_lowercase(),
                    d.train_samples,
                    d.void_samples,
                    d.labeled_classes.join(",")
                );
            }
            write_json(&out.join("data_summary.json"), &summary)?;
        }
        Command::TrainStage1 => {
            let problem = Problem::from_config(&cfg)?;
            let r = run_experiment(&cfg, &problem, Stages { psf: false }, Some(out))?;
            print_fused(&r.stage1.expect("stage 1 ran").eval);
        }
        Command::RunPsf => {
            let problem = Problem::from_config(&cfg)?;
            let set = build_branches(&cfg, &problem, &Device::Cpu)?;
            set.load(&out.join("ckpt"))?;
            let psf = run_psf(&cfg, &problem, &set)?;
            psf.write(&out.join("psf"), &problem)?;
            let report = PsfReport {
                quality: psf.quality(&problem),
                summary: psf.summary,
            };
            for (name, d) in &report.summary.domains {
                println!(
                    "{name:<12} delta {:.2}  gt {:>6}  pseudo {:>6}  relabeled {:>5}  void {:>6}",
                    d.delta, d.counts.ground_truth, d.counts.pseudo, d.counts.relabeled, d.counts.void
                );
            }
            write_json(&out.join("psf").join("quality.json"), &report.quality)?;
        }
        Command::TrainStage2 => {
            let problem = Problem::from_config(&cfg)?;
            let dir = out.join("psf");
            if !dir.join("summary.json").exists() {
                return Err(TrainError::MissingCheckpoint {
                    stage: "pseudo-label",
                    command: "run-psf",
                    path: dir,
                });
            }
            let psf = PsfOutcome::read(&dir, &problem)?;
            let sets = pseudo_labeled_sets(&problem, &psf)?;
            let ckpt = out.join("ckpt");
            let warm = if cfg.model.stage2_warm_start {
                let set = build_branches(&cfg, &problem, &Device::Cpu)?;
                set.load(&ckpt)?;
                Some(set)
            } else {
                None
            };
            let s2 = train_stage2(
                &cfg,
                &problem.input_shape,
                problem.num_classes(),
                &sets,
                warm.as_ref(),
                Some(&problem.target_test),
                Some(&ckpt),
            )?;
            let acc = evaluate_unified(&s2.model, &problem.target_test)?;
            println!("stage 2 target accuracy {:.2}%", acc.overall);
            let mut report = RunReport::new(&cfg, problem.bayes_accuracy);
            report.psf = Some(PsfReport {
                quality: psf.quality(&problem),
                summary: psf.summary,
            });
            report.stage2 = Some(Stage2Report {
                steps: s2.curve.len(),
                wall_clock_s: s2.wall_clock_s,
                final_loss: s2.curve.last().map(|r| r.fsa),
                accuracy: acc.clone(),
            });
            report.target_accuracy = Some(acc);
            report.wall_clock_s = s2.wall_clock_s;
            report.stage2_curve = s2.curve;
            report.write(&out.join("stage2"))?;
        }
        Command::Evaluate => {
            #[derive(Serialize)]
            struct Evaluation {
                stage1: FusedEval,
                stage2: Option<Accuracy>,
            }
            let problem = Problem::from_config(&cfg)?;
            let ckpt = out.join("ckpt");
            let set = build_branches(&cfg, &problem, &Device::Cpu)?;
            set.load(&ckpt)?;
            let stage1 = evaluate_fused(&set, &problem.target_test, &problem.conflicts, &cfg.fusion, cfg.loss.fusion_mode())?;
            print_fused(&stage1);
            let stage2 = if UnifiedModel::checkpoint_path(&ckpt).exists() {
                let model = UnifiedModel::new(&cfg.model, &problem.input_shape, problem.num_classes(), 0, &Device::Cpu)?;
                model.load(&ckpt)?;
                let acc = evaluate_unified(&model, &problem.target_test)?;
                println!("stage 2 unified {:.2}%", acc.overall);
                Some(acc)
            } else {
                None
            };
            write_json(&out.join("evaluation.json"), &Evaluation { stage1, stage2 })?;
        }
        Command::ToyVerify => {
            let seed = cli.common.seed.unwrap_or(cfg.schedule.seed);
            let results = verify::run_all(&cfg, seed);
            for r in &results {
                println!("{r}");
            }
            let passed = results.iter().filter(|r| r.passed).count();
            println!("{passed}/{} checks passed", results.len());
            return Ok(passed == results.len());
        }
        Command::Ablate { seeds, rows } => {
            let first = cli.common.seed.unwrap_or(0);
            let seeds: Vec<u64> = (first..first + seeds).collect();
            let rows = if rows.is_empty() { AblationRow::ALL.to_vec() } else { rows };
            let table = run_ablation(&cfg, &seeds, &rows, Some(out))?;
            print!("{}", table.render());
        }
    }
    Ok(true)
}

fn print_fused(e: &FusedEval) {
    println!(
        "stage 1 fused {:.2}% (attention {:.2}%, mbr {:.2}%)",
        e.fused.overall, e.attention.overall, e.mbr.overall
    );
    for (i, b) in e.branches.iter().enumerate() {
        println!("  branch {} alone {:.2}%, mean attention {:.3}", i + 1, b.overall, e.mean_attention[i]);
    }
}
