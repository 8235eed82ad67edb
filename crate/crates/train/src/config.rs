//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [[label_spaces]]
//! domain = "svhn"
//! role = "source"
//! dataset = "svhn"
//! classes = ["0", "1", "2", "3", "4"]
//!
//! [loss]
//! lambda_adv = 1.0
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unilabel_core::data::{DigitDataset, ToyOptions};
use unilabel_core::fusion::ZeroAttentionFallback;
use unilabel_core::labelspace::DomainRole;

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub label_spaces: Vec<LabelSpaceEntry>,
    pub conflicts: Vec<ConflictEntry>,
    pub data: DataConfig,
    pub toy: ToyOptions,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub fusion: FusionConfig,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSpaceEntry {
    pub domain: String,
    pub role: DomainRole,
    /// Digits dataset backing this domain; defaults to the domain name.
    #[serde(default)]
    pub dataset: Option<DigitDataset>,
    #[serde(default)]
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictEntry {
    pub fine_domain: String,
    pub fine_class: String,
    pub coarse_domain: String,
    pub coarse_class: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    #[default]
    Toy,
    Digits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    pub root: PathBuf,
    /// Per-domain cap on training samples (class balanced).
    pub limit: Option<usize>,
    /// Cap on target test samples.
    pub test_limit: Option<usize>,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DataKind::Toy,
            root: PathBuf::from("data"),
            limit: None,
            test_limit: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// Two hidden layers over flat inputs.
    #[default]
    Mlp,
    /// Three conv blocks and two fully connected layers over 3x32x32 inputs.
    Digits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub shared_encoder: bool,
    /// Hidden width of the MLP extractor.
    pub hidden: usize,
    /// Output width of the MLP extractor.
    pub feature_dim: usize,
    pub conv_channels: [usize; 3],
    pub fc_dims: [usize; 2],
    pub disc_hidden: usize,
    /// Initialise the stage-2 network from branch 1 instead of from scratch.
    pub stage2_warm_start: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Mlp,
            shared_encoder: true,
            hidden: 64,
            feature_dim: 64,
            conv_channels: [64, 64, 128],
            fc_dims: [3072, 2048],
            disc_hidden: 64,
            stage2_warm_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_adv: f64,
    pub um_enabled: bool,
    pub a3_enabled: bool,
    /// Train the attention heads; without them fusion falls back to a plain average.
    pub dat_enabled: bool,
    /// Feed the discriminators attention-gated probabilities rather than raw ones.
    pub attention_gated: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_adv: 1.0,
            um_enabled: true,
            a3_enabled: true,
            dat_enabled: true,
            attention_gated: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub v: f64,
    pub zero_attention_fallback: ZeroAttentionFallback,
    pub delta: f64,
    /// Per-domain threshold overrides, keyed by domain name.
    pub delta_per_domain: BTreeMap<String, f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            v: 5.0,
            zero_attention_fallback: ZeroAttentionFallback::Mean,
            delta: 0.5,
            delta_per_domain: BTreeMap::new(),
        }
    }
}

impl FusionConfig {
    pub fn delta_for(&self, domain: &str) -> f64 {
        self.delta_per_domain.get(domain).copied().unwrap_or(self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// `adam`, `adamw` or `sgd`.
    pub algorithm: String,
    pub lr: f64,
    /// Discriminator learning rate; falls back to `lr`.
    pub disc_lr: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: "adam".into(),
            lr: 2e-4,
            disc_lr: None,
            beta1: 0.9,
            beta2: 0.999,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluate on the target test split every this many steps; 0 disables.
    pub eval_every: usize,
    /// Write stage-1 checkpoints every this many steps; 0 writes only at the end.
    pub checkpoint_every: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            stage1_steps: 2000,
            stage2_steps: 1500,
            batch_size: 64,
            seed: 0,
            eval_every: 0,
            checkpoint_every: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrainError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Settings tuned for the synthetic problem.
    pub fn toy() -> Self {
        let mut cfg = Self::default();
        cfg.optimizer.lr = 2e-3;
        cfg.schedule.stage2_steps = 3000;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.loss.lambda_adv < 0.0 || !self.loss.lambda_adv.is_finite() {
            return bad(format!("loss.lambda_adv must be >= 0, got {}", self.loss.lambda_adv));
        }
        if !(self.fusion.v >= 1.0 && self.fusion.v.is_finite()) {
            return bad(format!("fusion.v must be >= 1, got {}", self.fusion.v));
        }
        for (name, d) in std::iter::once(("default", &self.fusion.delta))
            .chain(self.fusion.delta_per_domain.iter().map(|(k, v)| (k.as_str(), v)))
        {
            if !(0.0..=1.0).contains(d) {
                return bad(format!("fusion delta for {name} must lie in [0, 1], got {d}"));
            }
        }
        if !matches!(self.optimizer.algorithm.as_str(), "adam" | "adamw" | "sgd") {
            return bad(format!("optimizer.algorithm `{}` is not one of adam, adamw, sgd", self.optimizer.algorithm));
        }
        if self.optimizer.lr <= 0.0 || self.optimizer.disc_lr.is_some_and(|l| l <= 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.schedule.batch_size == 0 {
            return bad("schedule.batch_size must be positive".into());
        }
        match self.data.kind {
            DataKind::Toy => {
                if !self.label_spaces.is_empty() || !self.conflicts.is_empty() {
                    return bad("toy data derives its label spaces; remove `label_spaces` and `conflicts`".into());
                }
            }
            DataKind::Digits => {
                if self.label_spaces.is_empty() {
                    return bad("digits data needs a `label_spaces` section".into());
                }
                if !self.label_spaces.iter().any(|e| e.role == DomainRole::Target) {
                    return bad("digits data needs a target domain".into());
                }
                for e in &self.label_spaces {
                    if e.dataset.is_none() && e.domain.parse::<DigitDataset>().is_err() {
                        return bad(format!("domain `{}` names no digits dataset", e.domain));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_classification_settings() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.optimizer.algorithm, "adam");
        assert_eq!(cfg.optimizer.lr, 2e-4);
        assert_eq!((cfg.optimizer.beta1, cfg.optimizer.beta2), (0.9, 0.999));
        assert_eq!(cfg.optimizer.weight_decay, 5e-4);
        assert_eq!(cfg.loss.lambda_adv, 1.0);
        assert_eq!(cfg.fusion.delta, 0.5);
        assert_eq!(cfg.fusion.v, 5.0);
        assert!(cfg.model.shared_encoder);
    }

    #[test]
    fn parses_digits_config() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            [data]
            kind = "digits"
            root = "/data"
            limit = 5000

            [[label_spaces]]
            domain = "svhn"
            role = "source"
            classes = ["0", "1", "2", "3", "4"]

            [[label_spaces]]
            domain = "syn"
            role = "source"
            classes = ["5", "6", "7", "8", "9"]

            [[label_spaces]]
            domain = "mt"
            role = "target"

            [fusion]
            delta = 0.5
            zero_attention_fallback = "uniform"
            delta_per_domain = { svhn = 0.4 }

            [model]
            arch = "digits"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.label_spaces.len(), 3);
        assert_eq!(cfg.data.limit, Some(5000));
        assert_eq!(cfg.fusion.delta_for("svhn"), 0.4);
        assert_eq!(cfg.fusion.delta_for("syn"), 0.5);
        assert_eq!(cfg.fusion.zero_attention_fallback, ZeroAttentionFallback::Uniform);
        assert_eq!(cfg.model.arch, Arch::Digits);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("[loss]\nlambda_adv = -1.0").unwrap_err().is_config());
        assert!(ExperimentConfig::from_toml("[fusion]\ndelta = 1.5").is_err());
        assert!(ExperimentConfig::from_toml("[fusion]\nv = 0.5").is_err());
        assert!(ExperimentConfig::from_toml("[optimizer]\nalgorithm = \"lbfgs\"").is_err());
        assert!(ExperimentConfig::from_toml("[loss]\nunknown_key = 1").is_err());
        assert!(ExperimentConfig::from_toml("[data]\nkind = \"digits\"").is_err());
        assert!(ExperimentConfig::from_toml("[schedule]\nbatch_size = 0").is_err());
    }

    #[test]
    fn empty_config_is_the_toy_default() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.data.kind, DataKind::Toy);
    }
}
