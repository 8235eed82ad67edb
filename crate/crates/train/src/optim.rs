//! First-order optimizers over candle variables.
//!
//! `adam` folds weight decay into the gradient before the moment updates
//! (classic L2), `adamw` decouples it, `sgd` is heavy-ball momentum with L2.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use candle_nn::Optimizer as _;

use crate::config::OptimizerConfig;
use crate::error::{Result, TrainError};

const ADAM_EPS: f64 = 1e-8;

pub enum Optimizer {
    Adam(Adam),
    AdamW(candle_nn::AdamW),
    Sgd(Sgd),
}

impl Optimizer {
    /// Builds the configured optimizer; `lr` overrides the config's rate.
    pub fn new(cfg: &OptimizerConfig, vars: Vec<Var>, lr: f64) -> Result<Self> {
        Ok(match cfg.algorithm.as_str() {
            "adam" => Self::Adam(Adam::new(vars, lr, cfg.beta1, cfg.beta2, cfg.weight_decay)?),
            "adamw" => Self::AdamW(candle_nn::AdamW::new(
                vars,
                candle_nn::ParamsAdamW {
                    lr,
                    beta1: cfg.beta1,
                    beta2: cfg.beta2,
                    eps: ADAM_EPS,
                    weight_decay: cfg.weight_decay,
                },
            )?),
            "sgd" => Self::Sgd(Sgd::new(vars, lr, cfg.momentum, cfg.weight_decay)?),
            other => return Err(TrainError::Config(format!("unknown optimizer `{other}`"))),
        })
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        match self {
            Self::Adam(o) => o.step(grads),
            Self::AdamW(o) => Ok(o.step(grads)?),
            Self::Sgd(o) => o.step(grads),
        }
    }
}

struct Slot {
    var: Var,
    m: Tensor,
    v: Tensor,
}

pub struct Adam {
    slots: Vec<Slot>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    t: i32,
}

impl Adam {
    pub fn new(vars: Vec<Var>, lr: f64, beta1: f64, beta2: f64, weight_decay: f64) -> Result<Self> {
        let slots = vars
            .into_iter()
            .map(|var| {
                let m = var.zeros_like()?;
                let v = var.zeros_like()?;
                Ok(Slot { var, m, v })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            slots,
            lr,
            beta1,
            beta2,
            weight_decay,
            t: 0,
        })
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for s in &mut self.slots {
            let Some(g) = grads.get(s.var.as_tensor()) else {
                continue;
            };
            let theta = s.var.as_tensor();
            let g = if self.weight_decay != 0.0 {
                (g + theta.affine(self.weight_decay, 0.0)?)?
            } else {
                g.clone()
            };
            s.m = (s.m.affine(self.beta1, 0.0)? + g.affine(1.0 - self.beta1, 0.0)?)?;
            s.v = (s.v.affine(self.beta2, 0.0)? + g.sqr()?.affine(1.0 - self.beta2, 0.0)?)?;
            let m_hat = s.m.affine(1.0 / c1, 0.0)?;
            let denom = s.v.affine(1.0 / c2, 0.0)?.sqrt()?.affine(1.0, ADAM_EPS)?;
            let update = (m_hat / denom)?.affine(self.lr, 0.0)?;
            s.var.set(&(theta - update)?)?;
        }
        Ok(())
    }
}

pub struct Sgd {
    slots: Vec<(Var, Tensor)>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    pub fn new(vars: Vec<Var>, lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        let slots = vars
            .into_iter()
            .map(|v| {
                let buf = v.zeros_like()?;
                Ok((v, buf))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            slots,
            lr,
            momentum,
            weight_decay,
        })
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        for (var, buf) in &mut self.slots {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let theta = var.as_tensor();
            let g = (g + theta.affine(self.weight_decay, 0.0)?)?;
            *buf = (buf.affine(self.momentum, 0.0)? + g)?;
            var.set(&(theta - buf.affine(self.lr, 0.0)?)?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn quadratic_descends(algorithm: &str) {
        let cfg = OptimizerConfig {
            algorithm: algorithm.into(),
            weight_decay: 0.0,
            ..OptimizerConfig::default()
        };
        let x = Var::from_slice(&[3.0f64, -2.0], 2, &Device::Cpu).unwrap();
        let mut opt = Optimizer::new(&cfg, vec![x.clone()], 0.05).unwrap();
        for _ in 0..400 {
            let loss = x.as_tensor().sqr().unwrap().sum_all().unwrap();
            opt.step(&loss.backward().unwrap()).unwrap();
        }
        let v = x.as_tensor().to_vec1::<f64>().unwrap();
        assert!(v.iter().all(|a| a.abs() < 0.05), "{algorithm}: {v:?}");
    }

    #[test]
    fn all_optimizers_minimize_a_quadratic() {
        for a in ["adam", "adamw", "sgd"] {
            quadratic_descends(a);
        }
    }

    #[test]
    fn first_adam_step_matches_hand_computation() {
        // with bias correction the first step is lr * g / (|g| + eps) = lr * sign(g)
        let x = Var::from_slice(&[1.0f64], 1, &Device::Cpu).unwrap();
        let mut opt = Adam::new(vec![x.clone()], 0.1, 0.9, 0.999, 0.5).unwrap();
        let loss = x.as_tensor().affine(2.0, 0.0).unwrap().sum_all().unwrap();
        opt.step(&loss.backward().unwrap()).unwrap();
        // g = 2 + 0.5 * 1 = 2.5, step = 0.1 * 2.5 / (2.5 + 1e-8)
        let got = x.as_tensor().to_vec1::<f64>().unwrap()[0];
        assert!((got - (1.0 - 0.1 * 2.5 / (2.5 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn unknown_algorithm_is_a_config_error() {
        let cfg = OptimizerConfig {
            algorithm: "rmsprop".into(),
            ..OptimizerConfig::default()
        };
        assert!(Optimizer::new(&cfg, vec![], 0.1).err().unwrap().is_config());
    }
}
