use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

fn check_grads(names: &[String], sizes: &[usize], grads: &[&[f64]]) -> Result<()> {
    if grads.len() != sizes.len() {
        return Err(Error::shape("optimizer tensors", sizes.len(), grads.len()));
    }
    for ((g, &n), name) in grads.iter().zip(sizes).zip(names) {
        if g.len() != n {
            return Err(Error::shape(format!("optimizer tensor {name}"), n, g.len()));
        }
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteGradient { name: name.clone() });
        }
    }
    Ok(())
}

impl AdamState {
    /// Zero moments for tensors of the given lengths.
    pub fn new(cfg: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            cfg,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }
}

/// One bias-corrected Adam update at learning rate `lr`. Rejects non-finite
/// gradients before touching any state.
pub fn adam_step(
    state: &mut AdamState,
    lr: f64,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    names: &[String],
) -> Result<()> {
    let sizes = state.sizes();
    check_grads(names, &sizes, grads)?;
    if params.len() != sizes.len() || params.iter().zip(&sizes).any(|(p, &n)| p.len() != n) {
        return Err(Error::shape("optimizer params", format!("{sizes:?}"), "different lengths"));
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, eps, .. } = state.cfg;
    let c1 = 1.0 - beta1.powi(state.step as i32);
    let c2 = 1.0 - beta2.powi(state.step as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// Heavy-ball SGD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(momentum: f64, sizes: &[usize]) -> Self {
        SgdState {
            momentum,
            velocity: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

pub fn sgd_step(
    state: &mut SgdState,
    lr: f64,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    names: &[String],
) -> Result<()> {
    let sizes: Vec<usize> = state.velocity.iter().map(Vec::len).collect();
    check_grads(names, &sizes, grads)?;
    for ((p, g), vel) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        for i in 0..p.len() {
            vel[i] = state.momentum * vel[i] + g[i];
            p[i] -= lr * vel[i];
        }
    }
    Ok(())
}

/// Either optimizer behind one interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Adam(AdamState),
    Sgd(SgdState),
}

impl Optimizer {
    pub fn step(&mut self, lr: f64, params: &mut [&mut [f64]], grads: &[&[f64]], names: &[String]) -> Result<()> {
        match self {
            Optimizer::Adam(s) => adam_step(s, lr, params, grads, names),
            Optimizer::Sgd(s) => sgd_step(s, lr, params, grads, names),
        }
    }
}

/// Global L2 norm over all tensors.
pub fn global_norm(grads: &[&[f64]]) -> f64 {
    grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales all gradients so their global norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], threshold: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > threshold {
        let c = threshold / norm;
        grads.iter_mut().for_each(|g| g.iter_mut().for_each(|x| *x *= c));
    }
    norm
}

/// Learning rate as a function of the optimizer step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr_end + (lr - lr_end) (1 - step / total)^power`, then `lr_end`.
    Polynomial { power: f64, end_lr: f64, total_steps: u64 },
}

impl LrSchedule {
    pub fn at(&self, lr: f64, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant => lr,
            LrSchedule::Polynomial {
                power,
                end_lr,
                total_steps,
            } => {
                let frac = (step as f64 / total_steps.max(1) as f64).min(1.0);
                end_lr + (lr - end_lr) * (1.0 - frac).powf(power)
            }
        }
    }
}
