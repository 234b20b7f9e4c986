use serde::{Deserialize, Serialize};

use super::config::{OptimizerConfig, TaskSpec, TrainConfig};
use super::model::{Eval, Model};
use super::optim::{clip_global_norm, AdamConfig, AdamState, Optimizer, SgdState};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::tasks::{gen_adding_with, gen_copy, permute_pixels, Batch, MnistSet};

/// Fixed stream ids under the run seed.
const STREAM_PARAMS: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_ORDER: u64 = 3;

/// One line of the metrics stream.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub step: u64,
    pub epoch: usize,
    /// Mean training loss of this step; absent on pure evaluation records.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_grad_norms: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_norms: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_h: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<Eval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged: Option<String>,
}

/// Loaded MNIST splits.
#[derive(Clone, Debug)]
pub struct MnistData {
    pub train: MnistSet,
    pub test: MnistSet,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub steps: u64,
    pub losses: Vec<f64>,
    pub final_eval: Option<Eval>,
    pub diverged: Option<String>,
    pub stopped_early: bool,
    /// Pixel permutation used for pMNIST.
    pub permutation: Option<Vec<usize>>,
}

enum Source {
    Synthetic,
    Mnist { train: MnistSet, test: MnistSet },
}

fn prepare(cfg: &TrainConfig, data: Option<&MnistData>) -> Result<Source> {
    match &cfg.task {
        TaskSpec::Adding { .. } | TaskSpec::Copy { .. } => Ok(Source::Synthetic),
        TaskSpec::Mnist { train_size, test_size } | TaskSpec::Pmnist { train_size, test_size, .. } => {
            let d = data.ok_or_else(|| Error::InvalidConfig("MNIST task needs a loaded dataset".into()))?;
            if d.train.len() < *train_size || d.test.len() < *test_size {
                return Err(Error::InvalidConfig(format!(
                    "dataset has {} train and {} test images, config asks for {train_size} and {test_size}",
                    d.train.len(),
                    d.test.len()
                )));
            }
            let (mut train, mut test) = (d.train.take(*train_size), d.test.take(*test_size));
            if let TaskSpec::Pmnist { permutation_seed, .. } = cfg.task {
                train = permute_pixels(&train, permutation_seed);
                test = permute_pixels(&test, permutation_seed);
            }
            Ok(Source::Mnist { train, test })
        }
    }
}

fn synthetic_batch(task: &TaskSpec, rng: &mut Rng, size: usize) -> Batch {
    match *task {
        TaskSpec::Adding { t, markers } => gen_adding_with(rng, size, t, markers),
        TaskSpec::Copy { t } => gen_copy(rng, size, t),
        _ => unreachable!("synthetic task"),
    }
}

fn optimizer(cfg: &TrainConfig, sizes: &[usize]) -> Optimizer {
    match cfg.optimizer {
        OptimizerConfig::Adam { lr, beta1, beta2, eps } => Optimizer::Adam(AdamState::new(AdamConfig { lr, beta1, beta2, eps }, sizes)),
        OptimizerConfig::Sgd { momentum, .. } => Optimizer::Sgd(SgdState::new(momentum, sizes)),
    }
}

/// Builds the initial model of a run.
pub fn init_model(cfg: &TrainConfig) -> Result<Model> {
    let mut rng = Rng::new(cfg.seed, STREAM_PARAMS);
    Model::new(cfg.stack(), cfg.task.outputs(), cfg.head_mode(), cfg.init, &mut rng)
}

/// The first training batch a run would see.
pub fn first_batch(cfg: &TrainConfig, data: Option<&MnistData>) -> Result<Batch> {
    match prepare(cfg, data)? {
        Source::Synthetic => Ok(synthetic_batch(&cfg.task, &mut Rng::new(cfg.seed, STREAM_TRAIN), cfg.batch_size)),
        Source::Mnist { train, .. } => {
            let order = epoch_order(cfg.seed, 0, train.len());
            let end = cfg.batch_size.min(order.len());
            Ok(train.batch(&order[..end]))
        }
    }
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed, STREAM_ORDER).substream(epoch as u64).shuffle(&mut order);
    order
}

/// Mini-batch training. Each record goes to `sink` in order; a non-finite
/// loss or gradient ends the run with a `diverged` record rather than an
/// error.
pub fn train_run(
    cfg: &TrainConfig,
    data: Option<&MnistData>,
    sink: &mut dyn FnMut(&Record) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let source = prepare(cfg, data)?;
    let mut model = init_model(cfg)?;
    let names = model.param_names();
    let mut opt = optimizer(cfg, &model.param_sizes());
    let micro = cfg.micro();
    let mut train_rng = Rng::new(cfg.seed, STREAM_TRAIN);
    let eval_batch = match &source {
        Source::Synthetic => synthetic_batch(&cfg.task, &mut Rng::new(cfg.seed, STREAM_EVAL), cfg.eval_size()),
        Source::Mnist { test, .. } => test.batch(&(0..test.len()).collect::<Vec<_>>()),
    };
    let permutation = match &source {
        Source::Mnist { train, .. } => train.permutation.clone(),
        Source::Synthetic => None,
    };

    let mut outcome = TrainOutcome {
        model: model.clone(),
        steps: 0,
        losses: Vec::new(),
        final_eval: None,
        diverged: None,
        stopped_early: false,
        permutation,
    };
    let max_steps = cfg.max_steps.map_or(u64::MAX, |m| m as u64);
    let mut step: u64 = 0;

    'epochs: for epoch in 0..cfg.epochs {
        let order = match &source {
            Source::Mnist { train, .. } => epoch_order(cfg.seed, epoch, train.len()),
            Source::Synthetic => Vec::new(),
        };
        for i in 0..cfg.steps_per_epoch() {
            if step >= max_steps {
                break 'epochs;
            }
            let batch = match &source {
                Source::Synthetic => synthetic_batch(&cfg.task, &mut train_rng, cfg.batch_size),
                Source::Mnist { train, .. } => {
                    let s = i * cfg.batch_size;
                    train.batch(&order[s..(s + cfg.batch_size).min(order.len())])
                }
            };
            let want_trace = cfg.instrument.weight_state;
            let mut r = model.loss_and_grad(&batch, micro, want_trace)?;
            step += 1;
            let mut rec = Record {
                step,
                epoch,
                loss: Some(r.loss),
                ..Default::default()
            };
            if cfg.instrument.layer_grad_norms {
                rec.layer_grad_norms = Some(r.grads.layer_norms());
            }
            if let Some(t) = r.trace.take() {
                rec.weight_norms = Some(t.weight_norms);
                rec.mean_h = Some(t.mean_h);
            }
            let mut g = r.grads.slices_mut();
            let norm = match cfg.clip {
                Some(c) => clip_global_norm(&mut g, c),
                None => clip_global_norm(&mut g, f64::INFINITY),
            };
            rec.grad_norm = Some(norm);
            let lr = cfg.lr_schedule.at(cfg.optimizer.lr(), step - 1);
            let update = if r.loss.is_finite() {
                let grads: Vec<&[f64]> = r.grads.slices();
                opt.step(lr, &mut model.param_slices_mut(), &grads, &names)
            } else {
                Err(Error::InvalidConfig(format!("loss became {}", r.loss)))
            };
            if let Err(e) = update {
                let msg = match e {
                    Error::NonFiniteGradient { name } => format!("non-finite gradient in {name}"),
                    Error::InvalidConfig(m) => m,
                    other => return Err(other),
                };
                rec.diverged = Some(msg.clone());
                sink(&rec)?;
                outcome.diverged = Some(msg);
                outcome.steps = step;
                outcome.model = model;
                return Ok(outcome);
            }
            outcome.losses.push(r.loss);
            let last_in_epoch = i + 1 == cfg.steps_per_epoch();
            if cfg.eval_every.is_some_and(|k| step.is_multiple_of(k as u64)) || last_in_epoch {
                let ev = model.evaluate(&eval_batch, micro)?;
                rec.eval = Some(ev);
                outcome.final_eval = Some(ev);
                if cfg.stop_below.is_some_and(|th| ev.loss < th) {
                    sink(&rec)?;
                    outcome.stopped_early = true;
                    break 'epochs;
                }
            }
            sink(&rec)?;
        }
    }
    if outcome.final_eval.is_none() || step == 0 {
        let ev = model.evaluate(&eval_batch, micro)?;
        outcome.final_eval = Some(ev);
        sink(&Record {
            step,
            epoch: cfg.epochs,
            eval: Some(ev),
            ..Default::default()
        })?;
    }
    outcome.steps = step;
    outcome.model = model;
    Ok(outcome)
}

/// Per-layer parameter-gradient norms of `model` on one batch.
pub fn layer_grad_norms(model: &Model, batch: &Batch, micro: usize) -> Result<Vec<f64>> {
    Ok(model.loss_and_grad(batch, micro, false)?.grads.layer_norms())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellKind;
    use crate::lattice::LayerSpec;

    fn small(task: TaskSpec, kind: CellKind) -> TrainConfig {
        let mut cfg = TrainConfig::new(task, vec![LayerSpec::new(kind, 6)]);
        cfg.batch_size = 4;
        cfg.micro_batch = Some(3);
        cfg.steps_per_epoch = Some(5);
        cfg.epochs = 2;
        cfg.eval_size = Some(8);
        cfg
    }

    fn collect(cfg: &TrainConfig, data: Option<&MnistData>) -> (TrainOutcome, Vec<Record>) {
        let mut recs = Vec::new();
        let out = train_run(cfg, data, &mut |r| {
            recs.push(r.clone());
            Ok(())
        })
        .unwrap();
        (out, recs)
    }

    #[test]
    fn identical_configs_give_identical_streams() {
        let cfg = small(TaskSpec::Copy { t: 3 }, CellKind::Gru);
        let (a, ra) = collect(&cfg, None);
        let (b, rb) = collect(&cfg, None);
        assert_eq!(ra, rb);
        assert_eq!(a.model, b.model);
        assert_eq!(ra.len(), 10);
        assert!(ra[4].eval.is_some() && ra[3].eval.is_none());
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(collect(&other, None).1, ra);
    }

    #[test]
    fn zero_learning_rate_keeps_model_and_losses() {
        let mut cfg = small(TaskSpec::Adding { t: 6, markers: Default::default() }, CellKind::Star);
        cfg.optimizer = OptimizerConfig::Adam { lr: 0.0, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let (out, recs) = collect(&cfg, None);
        let init = init_model(&cfg).unwrap();
        assert_eq!(out.model, init);
        let mut rng = Rng::new(cfg.seed, STREAM_TRAIN);
        for r in recs.iter().filter(|r| r.loss.is_some()) {
            let b = synthetic_batch(&cfg.task, &mut rng, cfg.batch_size);
            assert_eq!(r.loss.unwrap(), init.loss_and_grad(&b, cfg.micro(), false).unwrap().loss);
        }
    }

    #[test]
    fn instrumentation_fields_appear_when_enabled() {
        let mut cfg = small(TaskSpec::Adding { t: 4, markers: Default::default() }, CellKind::Lstm);
        cfg.layers.push(LayerSpec::new(CellKind::Lstm, 5));
        cfg.instrument.layer_grad_norms = true;
        cfg.instrument.weight_state = true;
        cfg.epochs = 1;
        cfg.steps_per_epoch = Some(2);
        let (_, recs) = collect(&cfg, None);
        let r = &recs[0];
        assert_eq!(r.layer_grad_norms.as_ref().unwrap().len(), 2);
        assert_eq!(r.weight_norms.as_ref().unwrap().len(), 2);
        assert_eq!(r.mean_h.as_ref().unwrap().len(), 2);
        let line = serde_json::to_string(r).unwrap();
        assert!(line.starts_with(r#"{"step":1,"epoch":0,"loss":"#));
    }

    #[test]
    fn divergence_ends_with_a_record() {
        let mut cfg = small(TaskSpec::Adding { t: 4, markers: Default::default() }, CellKind::Vrnn);
        cfg.optimizer = OptimizerConfig::Sgd { lr: 1e200, momentum: 0.0 };
        let (out, recs) = collect(&cfg, None);
        assert!(out.diverged.is_some());
        assert!(recs.last().unwrap().diverged.is_some());
        assert!(recs.iter().rev().skip(1).all(|r| r.diverged.is_none()));
    }

    #[test]
    fn clipping_bounds_recorded_update() {
        let mut cfg = small(TaskSpec::Copy { t: 2 }, CellKind::Star);
        cfg.clip = Some(1e-3);
        cfg.optimizer = OptimizerConfig::Sgd { lr: 1.0, momentum: 0.0 };
        cfg.epochs = 1;
        cfg.steps_per_epoch = Some(1);
        let init = init_model(&cfg).unwrap();
        let (out, recs) = collect(&cfg, None);
        assert!(recs[0].grad_norm.unwrap() > 1e-3);
        let moved: f64 = init
            .param_slices()
            .iter()
            .zip(out.model.param_slices())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)))
            .sum::<f64>()
            .sqrt();
        assert!(moved <= 1e-3 + 1e-12);
    }

    #[test]
    fn early_stop_and_step_cap() {
        let mut cfg = small(TaskSpec::Copy { t: 2 }, CellKind::Star);
        cfg.eval_every = Some(1);
        cfg.stop_below = Some(f64::INFINITY);
        let (out, recs) = collect(&cfg, None);
        assert!(out.stopped_early);
        assert_eq!(recs.len(), 1);
        cfg.stop_below = None;
        cfg.max_steps = Some(3);
        assert_eq!(collect(&cfg, None).0.steps, 3);
    }

    #[test]
    fn mnist_needs_data_and_permutes() {
        let cfg = small(
            TaskSpec::Pmnist {
                train_size: 4,
                test_size: 2,
                permutation_seed: 5,
            },
            CellKind::Star,
        );
        assert!(train_run(&cfg, None, &mut |_| Ok(())).is_err());
        let mut rng = Rng::new(0, 0);
        let set = MnistSet {
            images: crate::numerics::Mat::from_fn(6, 9, |_, _| rng.uniform()),
            labels: vec![0, 1, 2, 3, 4, 5],
            rows: 3,
            cols: 3,
            permutation: None,
        };
        let data = MnistData { train: set.clone(), test: set };
        // 9-pixel images are shorter than the 784-step horizon, which the
        // lattice accepts
        let mut c = cfg.clone();
        c.epochs = 1;
        let (out, _) = collect(&c, Some(&data));
        assert_eq!(out.permutation.as_ref().unwrap().len(), 9);
        assert_eq!(out.steps, 1);
    }
}
