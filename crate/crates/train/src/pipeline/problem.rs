//! Builds the concrete adaptation problem (domains, label spaces, datasets)
//! from a configuration.

use serde::Serialize;
use unilabel_core::data::{load_digits, make_toy_world, mask_partial, Dataset, DigitDataset, Split};
use unilabel_core::labelspace::{build_unified, DomainDecl, DomainRole, DomainSpec, TaxonomyConflict, UnifiedLabelSpace};
use unilabel_core::VOID;

use crate::config::{DataKind, ExperimentConfig};
use crate::error::{Result, TrainError};

/// Target inputs without labels. Stage 2 only ever receives this type for
/// the target, so it cannot read target ground truth.
#[derive(Debug, Clone)]
pub struct UnlabeledSet {
    data: Dataset,
}

impl UnlabeledSet {
    /// Drops whatever labels `data` carries.
    pub fn strip(data: &Dataset) -> Self {
        Self {
            data: Dataset {
                inputs: data.inputs.clone(),
                sample_shape: data.sample_shape.clone(),
                labels: vec![VOID; data.len()],
            },
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The inputs as a dataset whose labels are all void.
    pub fn as_dataset(&self) -> &Dataset {
        &self.data
    }
}

pub struct Problem {
    pub space: UnifiedLabelSpace,
    /// Sources in id order, then the target.
    pub domains: Vec<DomainSpec>,
    pub conflicts: Vec<TaxonomyConflict>,
    /// Per source, labels masked to the domain's classes.
    pub sources: Vec<Dataset>,
    pub target: UnlabeledSet,
    /// Target training labels, kept for diagnostics of pseudo-label quality only.
    pub target_train_truth: Vec<i64>,
    pub target_test: Dataset,
    pub input_shape: Vec<usize>,
    /// Closed-form optimum when the data is synthetic.
    pub bayes_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainSummary {
    pub name: String,
    pub domain_id: usize,
    pub role: DomainRole,
    pub labeled_classes: Vec<String>,
    pub train_samples: usize,
    pub void_samples: usize,
}

impl Problem {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        match cfg.data.kind {
            DataKind::Toy => Self::toy(cfg),
            DataKind::Digits => Self::digits(cfg),
        }
    }

    fn toy(cfg: &ExperimentConfig) -> Result<Self> {
        let p = make_toy_world(&cfg.toy, cfg.data.seed).map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(Self {
            bayes_accuracy: Some(p.world.bayes_accuracy()),
            input_shape: vec![p.world.dim],
            target: UnlabeledSet::strip(&p.target_train),
            target_train_truth: p.target_train.labels.clone(),
            space: p.space,
            domains: p.domains,
            conflicts: p.conflicts,
            sources: p.sources,
            target_test: p.target_test,
        })
    }

    fn digits(cfg: &ExperimentConfig) -> Result<Self> {
        let decls: Vec<DomainDecl> = cfg
            .label_spaces
            .iter()
            .map(|e| match e.role {
                DomainRole::Source => DomainDecl::source(e.domain.clone(), e.classes.clone()),
                DomainRole::Target => DomainDecl {
                    classes: e.classes.clone(),
                    ..DomainDecl::target(e.domain.clone())
                },
            })
            .collect();
        let config_err = |e: unilabel_core::Error| TrainError::Config(e.to_string());
        let (space, domains) = build_unified(&decls).map_err(config_err)?;
        let conflicts = cfg
            .conflicts
            .iter()
            .map(|c| {
                TaxonomyConflict::from_names(&space, &domains, &c.fine_domain, &c.fine_class, &c.coarse_domain, &c.coarse_class)
                    .map_err(config_err)
            })
            .collect::<Result<Vec<_>>>()?;
        // digit d lives at the unified index of the class named "d"
        let to_unified: Vec<i64> = (0..10)
            .map(|d| {
                space.index_of(&d.to_string()).map(|i| i as i64).ok_or_else(|| {
                    TrainError::Config(format!("digit class `{d}` is not declared by any source"))
                })
            })
            .collect::<Result<_>>()?;
        let remap = |data: Dataset| -> Result<Dataset> {
            let labels = data.labels.iter().map(|&y| to_unified[y as usize]).collect();
            Ok(data.with_labels(labels)?)
        };
        let dataset_of = |name: &str| -> Result<DigitDataset> {
            let entry = cfg.label_spaces.iter().find(|e| e.domain == name).expect("declared domain");
            match entry.dataset {
                Some(d) => Ok(d),
                None => name.parse().map_err(config_err),
            }
        };

        let mut sources = Vec::new();
        let mut target = None;
        for (i, d) in domains.iter().enumerate() {
            let ds = dataset_of(&d.name)?;
            let seed = cfg.data.seed.wrapping_add(i as u64);
            let raw = remap(load_digits(&cfg.data.root, ds, Split::Train, cfg.data.limit, seed)?)?;
            if d.is_source() {
                let masked = mask_partial(&raw.labels, d);
                sources.push(raw.with_labels(masked)?);
            } else {
                let test = remap(load_digits(&cfg.data.root, ds, Split::Test, cfg.data.test_limit, seed)?)?;
                target = Some((raw, test));
            }
        }
        let (train, test) = target.ok_or_else(|| TrainError::Config("no target domain declared".into()))?;
        Ok(Self {
            space,
            conflicts,
            input_shape: train.sample_shape.clone(),
            target: UnlabeledSet::strip(&train),
            target_train_truth: train.labels,
            target_test: test,
            sources,
            domains,
            bayes_accuracy: None,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn num_classes(&self) -> usize {
        self.space.len()
    }

    pub fn source_domains(&self) -> &[DomainSpec] {
        &self.domains[..self.num_sources()]
    }

    pub fn target_domain(&self) -> &DomainSpec {
        &self.domains[self.num_sources()]
    }

    pub fn summary(&self) -> Vec<DomainSummary> {
        let mut out: Vec<DomainSummary> = self
            .source_domains()
            .iter()
            .zip(&self.sources)
            .map(|(d, data)| DomainSummary {
                name: d.name.clone(),
                domain_id: d.domain_id,
                role: d.role,
                labeled_classes: d
                    .labeled_classes()
                    .into_iter()
                    .map(|c| self.space.classes()[c].clone())
                    .collect(),
                train_samples: data.len(),
                void_samples: data.labels.iter().filter(|&&y| y == VOID).count(),
            })
            .collect();
        let t = self.target_domain();
        out.push(DomainSummary {
            name: t.name.clone(),
            domain_id: t.domain_id,
            role: t.role,
            labeled_classes: Vec::new(),
            train_samples: self.target.len(),
            void_samples: self.target.len(),
        });
        out
    }
}
