use serde::{Deserialize, Serialize};

use super::head::HeadMode;
use super::optim::{AdamConfig, LrSchedule};
use crate::error::{Error, Result};
use crate::lattice::{InitMode, LayerSpec, StackSpec};
use crate::tasks::{LossKind, MarkerPlacement, COPY_ALPHABET};

fn default_train_size() -> usize {
    1000
}

fn default_test_size() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Adding {
        t: usize,
        #[serde(default)]
        markers: MarkerPlacement,
    },
    Copy {
        t: usize,
    },
    Mnist {
        #[serde(default = "default_train_size")]
        train_size: usize,
        #[serde(default = "default_test_size")]
        test_size: usize,
    },
    Pmnist {
        #[serde(default = "default_train_size")]
        train_size: usize,
        #[serde(default = "default_test_size")]
        test_size: usize,
        permutation_seed: u64,
    },
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Adding { .. } => "adding",
            TaskSpec::Copy { .. } => "copy",
            TaskSpec::Mnist { .. } => "mnist",
            TaskSpec::Pmnist { .. } => "pmnist",
        }
    }

    pub fn is_mnist(&self) -> bool {
        matches!(self, TaskSpec::Mnist { .. } | TaskSpec::Pmnist { .. })
    }

    pub fn n_in(&self) -> usize {
        match self {
            TaskSpec::Adding { .. } => 2,
            TaskSpec::Copy { .. } => COPY_ALPHABET,
            _ => 1,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            TaskSpec::Adding { t, .. } => *t,
            TaskSpec::Copy { t } => t + 20,
            _ => 784,
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            TaskSpec::Adding { .. } => 1,
            TaskSpec::Copy { .. } => COPY_ALPHABET,
            _ => 10,
        }
    }

    pub fn loss(&self) -> LossKind {
        match self {
            TaskSpec::Adding { .. } => LossKind::Mse,
            _ => LossKind::CrossEntropy,
        }
    }

    pub fn default_head(&self) -> HeadMode {
        match self {
            TaskSpec::Copy { .. } => HeadMode::PerStep,
            _ => HeadMode::FinalStep,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam {
        #[serde(default = "adam_lr")]
        lr: f64,
        #[serde(default = "adam_beta1")]
        beta1: f64,
        #[serde(default = "adam_beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
}

fn adam_lr() -> f64 {
    AdamConfig::default().lr
}
fn adam_beta1() -> f64 {
    AdamConfig::default().beta1
}
fn adam_beta2() -> f64 {
    AdamConfig::default().beta2
}
fn adam_eps() -> f64 {
    AdamConfig::default().eps
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        OptimizerConfig::Adam {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }
    }
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Adam { lr, .. } | OptimizerConfig::Sgd { lr, .. } => lr,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instrument {
    /// Per-layer gradient norms on every step.
    #[serde(default)]
    pub layer_grad_norms: bool,
    /// Weight norms and mean hidden state on every step.
    #[serde(default)]
    pub weight_state: bool,
}

fn default_epochs() -> usize {
    1
}
fn default_batch() -> usize {
    100
}
fn default_init() -> InitMode {
    InitMode::Training
}

/// A training job. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: TaskSpec,
    /// Layers bottom to top; input width and horizon follow from the task.
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Batches per epoch for synthetic tasks; MNIST epochs cover the training set.
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    /// Hard cap on optimizer steps.
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Samples per forward/backward chunk; defaults to the batch size.
    #[serde(default)]
    pub micro_batch: Option<usize>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    /// Global gradient-norm clipping threshold; off when absent.
    #[serde(default)]
    pub clip: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_init")]
    pub init: InitMode,
    #[serde(default)]
    pub head: Option<HeadMode>,
    /// Evaluate every this many steps, besides at each epoch end.
    #[serde(default)]
    pub eval_every: Option<usize>,
    /// Held-out sequences for synthetic tasks.
    #[serde(default)]
    pub eval_size: Option<usize>,
    /// Stop once the evaluation loss falls below this value.
    #[serde(default)]
    pub stop_below: Option<f64>,
    #[serde(default)]
    pub instrument: Instrument,
}

impl TrainConfig {
    pub fn new(task: TaskSpec, layers: Vec<LayerSpec>) -> Self {
        serde_json::from_value(serde_json::json!({
            "task": task,
            "layers": layers,
        }))
        .expect("defaults deserialize")
    }

    pub fn stack(&self) -> StackSpec {
        StackSpec {
            layers: self.layers.clone(),
            n_in: self.task.n_in(),
            t_max: self.task.steps().max(2),
        }
    }

    pub fn head_mode(&self) -> HeadMode {
        self.head.unwrap_or_else(|| self.task.default_head())
    }

    pub fn micro(&self) -> usize {
        self.micro_batch.unwrap_or(self.batch_size).min(self.batch_size)
    }

    pub fn eval_size(&self) -> usize {
        self.eval_size.unwrap_or(500)
    }

    pub fn steps_per_epoch(&self) -> usize {
        match &self.task {
            TaskSpec::Mnist { train_size, .. } | TaskSpec::Pmnist { train_size, .. } => {
                train_size.div_ceil(self.batch_size)
            }
            _ => self.steps_per_epoch.unwrap_or(1000),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.stack().validate()?;
        let pos = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("micro_batch", self.micro_batch.unwrap_or(1)),
            ("steps_per_epoch", self.steps_per_epoch.unwrap_or(1)),
            ("max_steps", self.max_steps.unwrap_or(1)),
            ("eval_every", self.eval_every.unwrap_or(1)),
            ("eval_size", self.eval_size.unwrap_or(1)),
        ];
        for (name, v) in pos {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        match &self.task {
            TaskSpec::Adding { t, .. } if *t < 2 => return bad("adding task needs t >= 2".into()),
            TaskSpec::Copy { t } if *t < 1 => return bad("copy task needs t >= 1".into()),
            TaskSpec::Mnist { train_size, test_size } | TaskSpec::Pmnist { train_size, test_size, .. }
                if *train_size == 0 || *test_size == 0 =>
            {
                return bad("MNIST train_size and test_size must be positive".into())
            }
            _ => {}
        }
        let lr = self.optimizer.lr();
        if !(lr >= 0.0 && lr.is_finite()) {
            return bad(format!("learning rate must be finite and non-negative, got {lr}"));
        }
        match self.optimizer {
            OptimizerConfig::Adam { beta1, beta2, eps, .. } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                    return bad("Adam needs beta1, beta2 in [0, 1) and eps > 0".into());
                }
            }
            OptimizerConfig::Sgd { momentum, .. } => {
                if !(0.0..1.0).contains(&momentum) {
                    return bad("SGD momentum must lie in [0, 1)".into());
                }
            }
        }
        if let LrSchedule::Polynomial { power, end_lr, .. } = self.lr_schedule {
            if power <= 0.0 || end_lr < 0.0 {
                return bad("polynomial schedule needs power > 0 and end_lr >= 0".into());
            }
        }
        if let Some(c) = self.clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("clip threshold must be positive, got {c}"));
            }
        }
        let mode = self.head_mode();
        let ok = match self.task {
            TaskSpec::Copy { .. } => mode == HeadMode::PerStep,
            _ => mode != HeadMode::PerStep,
        };
        if !ok {
            return bad(format!("head {mode:?} does not fit task {}", self.task.name()));
        }
        Ok(())
    }
}
