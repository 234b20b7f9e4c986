use serde::{Deserialize, Serialize};

use super::head::{Head, HeadMode};
use crate::analysis::{weight_state, WeightState};
use crate::cells::CellGrads;
use crate::error::{Error, Result};
use crate::lattice::{BackwardOptions, InitMode, Lattice, StackSpec};
use crate::numerics::{Mat, Rng};
use crate::tasks::{Batch, Targets};

/// A lattice with an output layer on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub lattice: Lattice,
    pub head: Head,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<CellGrads>,
    pub head_w: Mat,
    pub head_b: Vec<f64>,
}

impl ModelGrads {
    pub fn zeros_like(m: &Model) -> Self {
        ModelGrads {
            layers: m.lattice.layers.iter().map(CellGrads::zeros_like).collect(),
            head_w: Mat::zeros(m.head.w.rows(), m.head.w.cols()),
            head_b: vec![0.0; m.head.b.len()],
        }
    }

    /// Same order as [`Model::param_names`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.layers.iter().flat_map(|g| g.tensors.slices()).collect();
        v.push(self.head_w.as_slice());
        v.push(&self.head_b);
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.layers.iter_mut().flat_map(|g| g.tensors.slices_mut()).collect();
        v.push(self.head_w.as_mut_slice());
        v.push(&mut self.head_b);
        v
    }

    /// L2 norm of each layer's total parameter gradient, bottom layer first.
    pub fn layer_norms(&self) -> Vec<f64> {
        self.layers.iter().map(CellGrads::norm).collect()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

/// Loss and gradient of one optimizer step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub loss: f64,
    pub grads: ModelGrads,
    pub correct: usize,
    pub counted: usize,
    pub trace: Option<WeightState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eval {
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

impl Model {
    pub fn new(spec: StackSpec, outputs: usize, mode: HeadMode, init: InitMode, rng: &mut Rng) -> Result<Model> {
        let lattice = Lattice::build(spec, init, rng)?;
        let head = Head::init(lattice.spec.output_width(), outputs, mode, rng);
        Ok(Model { lattice, head })
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .lattice
            .layers
            .iter()
            .enumerate()
            .flat_map(|(l, p)| p.tensor_names().into_iter().map(move |n| format!("layer{}.{n}", l + 1)))
            .collect();
        v.push("head.W".into());
        v.push("head.b".into());
        v
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.lattice.layers.iter().flat_map(|p| p.tensors.slices()).collect();
        v.push(self.head.w.as_slice());
        v.push(&self.head.b);
        v
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self
            .lattice
            .layers
            .iter_mut()
            .flat_map(|p| p.tensors.slices_mut())
            .collect();
        v.push(self.head.w.as_mut_slice());
        v.push(&mut self.head.b);
        v
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.param_slices().iter().map(|s| s.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_sizes().iter().sum()
    }

    fn chunks(batch: &Batch, micro: usize) -> Result<Vec<(usize, usize)>> {
        if micro == 0 {
            return Err(Error::InvalidConfig("micro-batch size must be positive".into()));
        }
        let b = batch.size();
        Ok((0..b).step_by(micro).map(|s| (s, (s + micro).min(b))).collect())
    }

    /// Mean loss over the batch and its gradient, processing `micro` samples
    /// at a time. `trace` also reports weight norms and mean hidden states.
    pub fn loss_and_grad(&self, batch: &Batch, micro: usize, trace: bool) -> Result<StepResult> {
        let total = batch.size();
        let mut grads = ModelGrads::zeros_like(self);
        let (mut loss, mut correct, mut counted) = (0.0, 0, 0);
        let mut state: Option<WeightState> = None;
        for (s, e) in Self::chunks(batch, micro)? {
            let mb = if s == 0 && e == total { batch.clone() } else { batch.slice(s, e) };
            let grid = self.lattice.forward_sequence(&mb.inputs)?;
            let tops: Vec<&Mat> = grid.top().collect();
            let hl = self.head.loss(&tops, &mb.targets, mb.loss, total)?;
            loss += hl.loss;
            correct += hl.correct;
            counted += hl.counted;
            grads.head_w.add_assign(&hl.g_w);
            grads.head_b.iter_mut().zip(&hl.g_b).for_each(|(a, b)| *a += b);
            let out = self.lattice.backward_sequence(
                &grid,
                &hl.seeds,
                BackwardOptions {
                    accumulate: true,
                    ..Default::default()
                },
            )?;
            for (acc, g) in grads.layers.iter_mut().zip(&out.grads) {
                acc.tensors.add_assign(&g.tensors);
            }
            if trace {
                let w = (e - s) as f64 / total as f64;
                let ws = weight_state(&self.lattice, &grid);
                match state.as_mut() {
                    None => {
                        let mut first = ws;
                        first.mean_h.iter_mut().for_each(|m| *m *= w);
                        state = Some(first);
                    }
                    Some(acc) => acc.mean_h.iter_mut().zip(&ws.mean_h).for_each(|(a, m)| *a += w * m),
                }
            }
        }
        Ok(StepResult {
            loss,
            grads,
            correct,
            counted,
            trace: state,
        })
    }

    /// Mean loss (and accuracy for sequence labels) without gradients.
    pub fn evaluate(&self, batch: &Batch, micro: usize) -> Result<Eval> {
        let total = batch.size();
        let (mut loss, mut correct, mut counted) = (0.0, 0, 0);
        for (s, e) in Self::chunks(batch, micro)? {
            let mb = batch.slice(s, e);
            let grid = self.lattice.forward_sequence(&mb.inputs)?;
            let tops: Vec<&Mat> = grid.top().collect();
            let hl = self.head.loss(&tops, &mb.targets, mb.loss, total)?;
            loss += hl.loss;
            correct += hl.correct;
            counted += hl.counted;
        }
        let accuracy = matches!(batch.targets, Targets::Class(_)).then(|| correct as f64 / counted.max(1) as f64);
        Ok(Eval { loss, accuracy })
    }
}
