//! Per-domain branches (extractor, class head, attention head, discriminator)
//! and the single unified network trained in stage 2.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Module, Tensor, Var};
use candle_nn::{Conv2d, Conv2dConfig, Linear};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unilabel_core::data::Dataset;
use unilabel_core::Error as CoreError;

use crate::config::{Arch, ModelConfig};
use crate::error::{Result, TrainError};

/// Named parameters in creation order, initialised from a seeded stream.
pub struct ParamStore {
    vars: Vec<(String, Var)>,
    rng: ChaCha8Rng,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64, device: &Device) -> Self {
        Self {
            vars: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            device: device.clone(),
        }
    }

    /// New parameter drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    fn uniform(&mut self, name: String, shape: &[usize], fan_in: usize) -> Result<Tensor> {
        let bound = 1.0 / (fan_in as f32).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        let var = Var::from_vec(data, shape, &self.device)?;
        let t = var.as_tensor().clone();
        self.vars.push((name, var));
        Ok(t)
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        let w = self.uniform(format!("{prefix}.weight"), &[fan_out, fan_in], fan_in)?;
        let b = self.uniform(format!("{prefix}.bias"), &[fan_out], fan_in)?;
        Ok(Linear::new(w, Some(b)))
    }

    fn conv(&mut self, prefix: &str, c_in: usize, c_out: usize, k: usize) -> Result<Conv2d> {
        let fan_in = c_in * k * k;
        let w = self.uniform(format!("{prefix}.weight"), &[c_out, c_in, k, k], fan_in)?;
        let b = self.uniform(format!("{prefix}.bias"), &[c_out], fan_in)?;
        let cfg = Conv2dConfig {
            padding: k / 2,
            ..Conv2dConfig::default()
        };
        Ok(Conv2d::new(w, Some(b), cfg))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|(n, _)| n.as_str())
    }

    pub fn vars_where(&self, keep: impl Fn(&str) -> bool) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn num_params(&self, keep: impl Fn(&str) -> bool) -> usize {
        self.vars
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(_, v)| v.elem_count())
            .sum()
    }

    /// Writes the selected parameters as safetensors.
    pub fn save(&self, path: &Path, keep: impl Fn(&str) -> bool) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(n, v)| (n.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Overwrites the selected parameters from a file written by [`save`](Self::save).
    fn load(&self, path: &Path, stage: &'static str, command: &'static str, keep: impl Fn(&str) -> bool) -> Result<()> {
        if !path.exists() {
            return Err(TrainError::MissingCheckpoint {
                stage,
                command,
                path: path.to_path_buf(),
            });
        }
        let map = candle_core::safetensors::load(path, &self.device)?;
        for (name, var) in self.vars.iter().filter(|(n, _)| keep(n)) {
            let t = map.get(name).ok_or_else(|| {
                TrainError::Core(CoreError::MalformedData {
                    path: path.to_path_buf(),
                    reason: format!("parameter `{name}` absent"),
                })
            })?;
            if t.dims() != var.dims() {
                return Err(TrainError::Core(CoreError::MalformedData {
                    path: path.to_path_buf(),
                    reason: format!("parameter `{name}` has shape {:?}, expected {:?}", t.dims(), var.dims()),
                }));
            }
            var.set(&t.to_dtype(var.dtype())?)?;
        }
        Ok(())
    }

    /// Copies values between stores, `(from, to)` name pairs.
    fn copy_from(&self, other: &ParamStore, pairs: &[(String, String)]) -> Result<()> {
        for (from, to) in pairs {
            let (Some(src), Some(dst)) = (other.get(from), self.get(to)) else {
                return Err(TrainError::Config(format!("cannot copy parameter {from} to {to}")));
            };
            dst.set(src.as_tensor())?;
        }
        Ok(())
    }
}

/// Maps inputs to a feature vector per sample.
pub enum Extractor {
    Mlp { input_dim: usize, layers: Vec<Linear> },
    Conv { convs: Vec<Conv2d>, fcs: Vec<Linear> },
}

impl Extractor {
    fn new(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, input_shape: &[usize]) -> Result<(Self, usize)> {
        match cfg.arch {
            Arch::Mlp => {
                let input_dim = input_shape.iter().product();
                let l0 = store.linear(&format!("{prefix}.fc0"), input_dim, cfg.hidden)?;
                let l1 = store.linear(&format!("{prefix}.fc1"), cfg.hidden, cfg.feature_dim)?;
                Ok((Self::Mlp { input_dim, layers: vec![l0, l1] }, cfg.feature_dim))
            }
            Arch::Digits => {
                let [c, h, w] = input_shape else {
                    return Err(TrainError::Config(format!(
                        "digits architecture needs [channels, height, width] inputs, got {input_shape:?}"
                    )));
                };
                if h % 4 != 0 || w % 4 != 0 {
                    return Err(TrainError::Config(format!("input side {h}x{w} is not divisible by 4")));
                }
                let ch = cfg.conv_channels;
                let convs = vec![
                    store.conv(&format!("{prefix}.conv0"), *c, ch[0], 5)?,
                    store.conv(&format!("{prefix}.conv1"), ch[0], ch[1], 5)?,
                    store.conv(&format!("{prefix}.conv2"), ch[1], ch[2], 5)?,
                ];
                let flat = ch[2] * (h / 4) * (w / 4);
                let fcs = vec![
                    store.linear(&format!("{prefix}.fc0"), flat, cfg.fc_dims[0])?,
                    store.linear(&format!("{prefix}.fc1"), cfg.fc_dims[0], cfg.fc_dims[1])?,
                ];
                Ok((Self::Conv { convs, fcs }, cfg.fc_dims[1]))
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Self::Mlp { input_dim, layers } => {
                let x = x.flatten_from(1)?;
                if x.dim(1)? != *input_dim {
                    return Err(TrainError::Core(CoreError::Shape(format!(
                        "extractor expects {input_dim} input values per sample, got {}",
                        x.dim(1)?
                    ))));
                }
                let mut h = x;
                for l in layers {
                    h = l.forward(&h)?.relu()?;
                }
                Ok(h)
            }
            Self::Conv { convs, fcs } => {
                if x.rank() != 4 {
                    return Err(TrainError::Core(CoreError::Shape(format!(
                        "conv extractor expects [B, C, H, W], got {:?}",
                        x.dims()
                    ))));
                }
                let h = convs[0].forward(x)?.relu()?.max_pool2d(2)?;
                let h = convs[1].forward(&h)?.relu()?.max_pool2d(2)?;
                let mut h = convs[2].forward(&h)?.relu()?.flatten_from(1)?;
                for l in fcs {
                    h = l.forward(&h)?.relu()?;
                }
                Ok(h)
            }
        }
    }
}

fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

/// Three-layer perceptron on a gated probability vector, output in (0, 1).
pub struct Discriminator {
    layers: Vec<Linear>,
}

impl Discriminator {
    fn new(store: &mut ParamStore, prefix: &str, classes: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            layers: vec![
                store.linear(&format!("{prefix}.l0"), classes, hidden)?,
                store.linear(&format!("{prefix}.l1"), hidden, hidden)?,
                store.linear(&format!("{prefix}.l2"), hidden, 1)?,
            ],
        })
    }

    pub fn forward(&self, gated: &Tensor) -> Result<Tensor> {
        let mut h = gated.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = h.relu()?;
            }
        }
        sigmoid(&h.squeeze(1)?)
    }
}

/// Heads of one branch; the extractor lives in [`BranchSet`].
pub struct Branch {
    class_head: Linear,
    attention_head: Linear,
    pub discriminator: Discriminator,
}

/// Raw outputs of a branch on a batch.
pub struct BranchOutput {
    pub logits: Tensor,
    pub probs: Tensor,
    /// `[B]`, in (0, 1).
    pub attention: Tensor,
}

/// All `K` stage-1 branches with either one shared extractor or one per branch.
pub struct BranchSet {
    pub store: ParamStore,
    extractors: Vec<Extractor>,
    branches: Vec<Branch>,
    pub num_classes: usize,
    pub input_shape: Vec<usize>,
    pub device: Device,
}

fn is_disc(name: &str) -> bool {
    name.starts_with("disc")
}

impl BranchSet {
    pub fn new(cfg: &ModelConfig, input_shape: &[usize], num_classes: usize, k: usize, seed: u64, device: &Device) -> Result<Self> {
        if k == 0 || num_classes < 2 {
            return Err(TrainError::Config(format!("need K >= 1 and C >= 2, got K={k}, C={num_classes}")));
        }
        let mut store = ParamStore::new(seed, device);
        let n_ext = if cfg.shared_encoder { 1 } else { k };
        let mut extractors = Vec::with_capacity(n_ext);
        let mut feat = 0;
        for e in 0..n_ext {
            let (x, f) = Extractor::new(&mut store, &format!("enc{e}"), cfg, input_shape)?;
            extractors.push(x);
            feat = f;
        }
        let mut branches = Vec::with_capacity(k);
        for i in 0..k {
            let class_head = store.linear(&format!("branch{i}.cls"), feat, num_classes)?;
            let attention_head = store.linear(&format!("branch{i}.att"), feat, 1)?;
            let discriminator = Discriminator::new(&mut store, &format!("disc{i}"), num_classes, cfg.disc_hidden)?;
            branches.push(Branch {
                class_head,
                attention_head,
                discriminator,
            });
        }
        Ok(Self {
            store,
            extractors,
            branches,
            num_classes,
            input_shape: input_shape.to_vec(),
            device: device.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn shared_encoder(&self) -> bool {
        self.extractors.len() == 1
    }

    fn extractor_index(&self, branch: usize) -> usize {
        if self.shared_encoder() {
            0
        } else {
            branch
        }
    }

    pub fn features(&self, branch: usize, x: &Tensor) -> Result<Tensor> {
        self.extractors[self.extractor_index(branch)].forward(x)
    }

    /// Class and attention outputs from precomputed features.
    pub fn heads(&self, branch: usize, features: &Tensor) -> Result<BranchOutput> {
        let b = &self.branches[branch];
        let logits = b.class_head.forward(features)?;
        let probs = candle_nn::ops::softmax(&logits, 1)?;
        let attention = sigmoid(&b.attention_head.forward(features)?.squeeze(1)?)?;
        Ok(BranchOutput {
            logits,
            probs,
            attention,
        })
    }

    pub fn forward(&self, branch: usize, x: &Tensor) -> Result<BranchOutput> {
        self.heads(branch, &self.features(branch, x)?)
    }

    pub fn forward_class(&self, branch: usize, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(branch, x)?.probs)
    }

    pub fn forward_attention(&self, branch: usize, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(branch, x)?.attention)
    }

    pub fn forward_discriminator(&self, branch: usize, gated: &Tensor) -> Result<Tensor> {
        self.branches[branch].discriminator.forward(gated)
    }

    /// Extractors and heads, everything the generator step updates.
    pub fn generator_vars(&self) -> Vec<Var> {
        self.store.vars_where(|n| !is_disc(n))
    }

    pub fn discriminator_vars(&self) -> Vec<Var> {
        self.store.vars_where(is_disc)
    }

    fn branch_filter(&self, i: usize) -> impl Fn(&str) -> bool {
        let enc = format!("enc{}.", self.extractor_index(i));
        let heads = format!("branch{i}.");
        let disc = format!("disc{i}.");
        move |n: &str| n.starts_with(&enc) || n.starts_with(&heads) || n.starts_with(&disc)
    }

    /// `ckpt/stage1_branch{i}.bin` with `i` counted from 1.
    pub fn checkpoint_path(dir: &Path, i: usize) -> PathBuf {
        dir.join(format!("stage1_branch{}.bin", i + 1))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for i in 0..self.len() {
            self.store.save(&Self::checkpoint_path(dir, i), self.branch_filter(i))?;
        }
        Ok(())
    }

    pub fn load(&self, dir: &Path) -> Result<()> {
        for i in 0..self.len() {
            self.store
                .load(&Self::checkpoint_path(dir, i), "stage-1", "train-stage1", self.branch_filter(i))?;
        }
        Ok(())
    }

    /// Class probabilities and attention of every branch on every sample.
    pub fn predict(&self, data: &Dataset, chunk: usize) -> Result<Vec<(Array2<f64>, Array1<f64>)>> {
        let k = self.len();
        let c = self.num_classes;
        let n = data.len();
        let mut probs: Vec<Vec<f64>> = vec![Vec::with_capacity(n * c); k];
        let mut att: Vec<Vec<f64>> = vec![Vec::with_capacity(n); k];
        for start in (0..n).step_by(chunk.max(1)) {
            let rows: Vec<usize> = (start..(start + chunk).min(n)).collect();
            let x = input_tensor(&data.select(&rows), &self.device)?;
            let mut feats: Option<Tensor> = None;
            for i in 0..k {
                let f = match (&feats, self.shared_encoder()) {
                    (Some(f), true) => f.clone(),
                    _ => {
                        let f = self.features(i, &x)?;
                        feats = Some(f.clone());
                        f
                    }
                };
                let out = self.heads(i, &f)?;
                probs[i].extend(out.probs.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?);
                att[i].extend(out.attention.to_dtype(DType::F64)?.to_vec1::<f64>()?);
            }
        }
        probs
            .into_iter()
            .zip(att)
            .map(|(p, a)| Ok((Array2::from_shape_vec((n, c), p).map_err(|e| CoreError::Shape(e.to_string()))?, Array1::from(a))))
            .collect()
    }
}

/// Stage-2 network: one extractor and one class head over the unified space.
pub struct UnifiedModel {
    pub store: ParamStore,
    extractor: Extractor,
    class_head: Linear,
    pub num_classes: usize,
    pub device: Device,
}

impl UnifiedModel {
    pub fn new(cfg: &ModelConfig, input_shape: &[usize], num_classes: usize, seed: u64, device: &Device) -> Result<Self> {
        let mut store = ParamStore::new(seed, device);
        let (extractor, feat) = Extractor::new(&mut store, "enc0", cfg, input_shape)?;
        let class_head = store.linear("cls", feat, num_classes)?;
        Ok(Self {
            store,
            extractor,
            class_head,
            num_classes,
            device: device.clone(),
        })
    }

    /// Copies extractor and class head of branch 1.
    pub fn warm_start(&self, branches: &BranchSet) -> Result<()> {
        let pairs: Vec<(String, String)> = self
            .store
            .names()
            .map(|n| {
                let from = match n.strip_prefix("cls") {
                    Some(rest) => format!("branch0.cls{rest}"),
                    None => n.to_string(),
                };
                (from, n.to_string())
            })
            .collect();
        self.store.copy_from(&branches.store, &pairs)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.class_head.forward(&self.extractor.forward(x)?)?)
    }

    pub fn forward_class(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::softmax(&self.logits(x)?, 1)?)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.store.vars_where(|_| true)
    }

    pub fn checkpoint_path(dir: &Path) -> PathBuf {
        dir.join("stage2_unified.bin")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.store.save(&Self::checkpoint_path(dir), |_| true)
    }

    pub fn load(&self, dir: &Path) -> Result<()> {
        self.store
            .load(&Self::checkpoint_path(dir), "stage-2", "train-stage2", |_| true)
    }

    pub fn predict(&self, data: &Dataset, chunk: usize) -> Result<Array2<f64>> {
        let n = data.len();
        let mut out = Vec::with_capacity(n * self.num_classes);
        for start in (0..n).step_by(chunk.max(1)) {
            let rows: Vec<usize> = (start..(start + chunk).min(n)).collect();
            let x = input_tensor(&data.select(&rows), &self.device)?;
            out.extend(self.forward_class(&x)?.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?);
        }
        Ok(Array2::from_shape_vec((n, self.num_classes), out).map_err(|e| CoreError::Shape(e.to_string()))?)
    }
}

/// `[B, ...sample_shape]` tensor of a dataset's inputs.
pub fn input_tensor(data: &Dataset, device: &Device) -> Result<Tensor> {
    let mut shape = vec![data.len()];
    shape.extend_from_slice(&data.sample_shape);
    Ok(Tensor::from_slice(&data.inputs, shape, device)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_set(k: usize, shared: bool) -> BranchSet {
        let cfg = ModelConfig {
            shared_encoder: shared,
            hidden: 16,
            feature_dim: 8,
            disc_hidden: 8,
            ..ModelConfig::default()
        };
        BranchSet::new(&cfg, &[3], 5, k, 11, &Device::Cpu).unwrap()
    }

    fn random_input(n: usize, d: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f32> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        Tensor::from_vec(v, (n, d), &Device::Cpu).unwrap()
    }

    #[test]
    fn class_output_is_a_distribution_over_the_unified_space() {
        let set = toy_set(2, true);
        let p = set.forward_class(1, &random_input(6, 3, 0)).unwrap();
        assert_eq!(p.dims(), &[6, 5]);
        for row in p.to_vec2::<f32>().unwrap() {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn identical_inputs_give_identical_rows() {
        let set = toy_set(2, false);
        let x = Tensor::from_vec(vec![0.3f32, -1.0, 2.0, 0.3, -1.0, 2.0], (2, 3), &Device::Cpu).unwrap();
        let p = set.forward_class(0, &x).unwrap().to_vec2::<f32>().unwrap();
        assert_eq!(p[0], p[1]);
        let a = set.forward_attention(0, &x).unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(a[0], a[1]);
    }

    #[test]
    fn attention_and_discriminator_are_bounded() {
        let set = toy_set(3, true);
        let a = set.forward_attention(2, &random_input(16, 3, 1)).unwrap().to_vec1::<f32>().unwrap();
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        let zeros = Tensor::zeros((4, 5), DType::F32, &Device::Cpu).unwrap();
        let d = set.forward_discriminator(0, &zeros).unwrap().to_vec1::<f32>().unwrap();
        assert!(d.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
        assert!(d.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let set = toy_set(2, true);
        assert!(set.forward_class(0, &random_input(2, 4, 0)).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = toy_set(2, true);
        let b = toy_set(2, true);
        let x = random_input(4, 3, 5);
        assert_eq!(
            a.forward_class(0, &x).unwrap().to_vec2::<f32>().unwrap(),
            b.forward_class(0, &x).unwrap().to_vec2::<f32>().unwrap()
        );
    }

    #[test]
    fn encoder_sharing_changes_parameter_layout() {
        let shared = toy_set(3, true);
        let split = toy_set(3, false);
        let enc = |s: &BranchSet| s.store.names().filter(|n| n.starts_with("enc")).count();
        assert_eq!(enc(&split), 3 * enc(&shared));
        assert!(shared.discriminator_vars().len() == 3 * 6);
    }

    #[test]
    fn gradients_reach_the_extractor() {
        let set = toy_set(2, true);
        let out = set.forward(0, &random_input(8, 3, 2)).unwrap();
        let loss = (out.logits.sqr().unwrap().mean_all().unwrap() + out.attention.mean_all().unwrap()).unwrap();
        let grads = loss.backward().unwrap();
        let w = set.store.get("enc0.fc0.weight").unwrap();
        let norm = grads.get(w.as_tensor()).unwrap().sqr().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
        assert!(norm > 0.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = toy_set(2, true);
        a.save(dir.path()).unwrap();
        assert!(dir.path().join("stage1_branch1.bin").exists());
        assert!(dir.path().join("stage1_branch2.bin").exists());
        let b = BranchSet::new(
            &ModelConfig {
                hidden: 16,
                feature_dim: 8,
                disc_hidden: 8,
                ..ModelConfig::default()
            },
            &[3],
            5,
            2,
            99,
            &Device::Cpu,
        )
        .unwrap();
        let x = random_input(4, 3, 9);
        assert_ne!(
            a.forward_class(1, &x).unwrap().to_vec2::<f32>().unwrap(),
            b.forward_class(1, &x).unwrap().to_vec2::<f32>().unwrap()
        );
        b.load(dir.path()).unwrap();
        assert_eq!(
            a.forward_class(1, &x).unwrap().to_vec2::<f32>().unwrap(),
            b.forward_class(1, &x).unwrap().to_vec2::<f32>().unwrap()
        );
        let missing = tempfile::tempdir().unwrap();
        let err = b.load(missing.path()).unwrap_err();
        assert!(err.to_string().contains("stage-1"), "{err}");
    }

    #[test]
    fn digits_architecture_shapes() {
        let cfg = ModelConfig {
            arch: Arch::Digits,
            conv_channels: [4, 4, 8],
            fc_dims: [16, 12],
            ..ModelConfig::default()
        };
        let set = BranchSet::new(&cfg, &[3, 32, 32], 10, 2, 0, &Device::Cpu).unwrap();
        let x = Tensor::zeros((2, 3, 32, 32), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(set.forward_class(0, &x).unwrap().dims(), &[2, 10]);
        assert!(BranchSet::new(&cfg, &[2], 10, 2, 0, &Device::Cpu).is_err());
    }

    #[test]
    fn unified_model_warm_start_copies_branch_one() {
        let cfg = ModelConfig {
            hidden: 16,
            feature_dim: 8,
            disc_hidden: 8,
            ..ModelConfig::default()
        };
        let set = BranchSet::new(&cfg, &[3], 5, 2, 3, &Device::Cpu).unwrap();
        let g = UnifiedModel::new(&cfg, &[3], 5, 4, &Device::Cpu).unwrap();
        let x = random_input(3, 3, 0);
        g.warm_start(&set).unwrap();
        assert_eq!(
            g.forward_class(&x).unwrap().to_vec2::<f32>().unwrap(),
            set.forward_class(0, &x).unwrap().to_vec2::<f32>().unwrap()
        );
    }
}
