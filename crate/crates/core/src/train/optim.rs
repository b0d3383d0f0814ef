use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" | "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. `t` is the 1-based step number.
pub fn adam_step(w: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64, cfg: &AdamConfig) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..w.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        w[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// `vel ← μ·vel + g`, `w ← w − lr·vel`.
pub fn sgd_momentum_step(w: &mut [f64], g: &[f64], vel: &mut [f64], lr: f64, momentum: f64) {
    for i in 0..w.len() {
        vel[i] = momentum * vel[i] + g[i];
        w[i] -= lr * vel[i];
    }
}

/// Optimizer state over an ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub adam: AdamConfig,
    pub momentum: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, adam: AdamConfig, momentum: f64, weight_decay: f64) -> Self {
        Optimizer {
            kind,
            adam,
            momentum,
            weight_decay,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Updates each tensor from its gradient plus `weight_decay·w`.
    /// State is created on the first call; later calls must pass tensors of
    /// the same shapes in the same order. A zero learning rate leaves the
    /// tensors untouched.
    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut Tensor>, lr: f64) -> Result<()> {
        let params: Vec<&mut Tensor> = params.collect();
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.second = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        if self.first.len() != params.len() || self.first.iter().zip(&params).any(|(s, p)| s.len() != p.numel()) {
            return Err(Error::Contract("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let mut g = Vec::new();
        for (i, p) in params.into_iter().enumerate() {
            g.clear();
            match p.grad() {
                Some(grad) => g.extend_from_slice(grad),
                None => continue,
            }
            if self.weight_decay != 0.0 {
                g.iter_mut().zip(p.data()).for_each(|(gi, wi)| *gi += self.weight_decay * wi);
            }
            if lr == 0.0 {
                continue;
            }
            match self.kind {
                OptimizerKind::Adam => {
                    adam_step(p.data_mut(), &g, &mut self.first[i], &mut self.second[i], self.step, lr, &self.adam)
                }
                OptimizerKind::SgdMomentum => sgd_momentum_step(p.data_mut(), &g, &mut self.first[i], lr, self.momentum),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_closed_form() {
        let cfg = AdamConfig::default();
        let (mut w, g) = ([1.0, -2.0], [0.5, -3.0]);
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_step(&mut w, &g, &mut m, &mut v, 1, 0.1, &cfg);
        for i in 0..2 {
            let want = [1.0, -2.0][i] - 0.1 * g[i] / ((g[i] * g[i]).sqrt() + 1e-8);
            assert!((w[i] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_momentum_is_gradient_descent() {
        let mut w = [1.0];
        let mut vel = [0.0];
        sgd_momentum_step(&mut w, &[2.0], &mut vel, 0.25, 0.0);
        assert_eq!(w, [0.5]);
    }

    #[test]
    fn adam_minimizes_bowl() {
        // From w = 1 the iterate still oscillates at |w| ≈ 0.016 after 200 steps.
        let mut w = Tensor::vector(vec![0.5]).with_grad();
        let mut opt = Optimizer::new(OptimizerKind::Adam, AdamConfig::default(), 0.9, 0.0);
        for _ in 0..200 {
            w.zero_grad();
            let g = 2.0 * w.data()[0];
            w.accumulate_grad(&[g]).unwrap();
            opt.step(std::iter::once(&mut w), 1e-2).unwrap();
        }
        assert!(w.data()[0].abs() < 1e-2, "{}", w.data()[0]);
    }

    #[test]
    fn state_mismatch_rejected() {
        let mut a = Tensor::vector(vec![1.0]).with_grad();
        let mut b = Tensor::vector(vec![1.0, 2.0]).with_grad();
        let mut opt = Optimizer::new(OptimizerKind::SgdMomentum, AdamConfig::default(), 0.9, 0.0);
        opt.step(std::iter::once(&mut a), 0.1).unwrap();
        assert!(opt.step(std::iter::once(&mut b), 0.1).is_err());
    }
}
