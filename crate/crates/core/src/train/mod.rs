//! Optimizers, output heads, losses, initialization and training loops.

mod checkpoint;
mod chrono;
mod config;
mod gradcheck;
mod head;
mod model;
mod optim;
mod run;

pub use checkpoint::{checkpoint_paths, load_checkpoint, save_checkpoint};
pub use chrono::chrono_bias_init;
pub use config::{Instrument, OptimizerConfig, TaskSpec, TrainConfig};
pub use gradcheck::{central_diff, grad_check, grad_check_with_fault, rel_err, GradCheckReport};
pub use head::{cross_entropy, softmax_rows, Head, HeadLoss, HeadMode};
pub use model::{Eval, Model, ModelGrads, StepResult};
pub use optim::{
    adam_step, clip_global_norm, global_norm, sgd_step, AdamConfig, AdamState, LrSchedule, Optimizer, SgdState,
};
pub use run::{first_batch, init_model, layer_grad_norms, train_run, MnistData, Record, TrainOutcome};
