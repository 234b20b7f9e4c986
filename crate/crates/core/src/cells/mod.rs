//! Recurrent cells: vanilla RNN, LSTM, LSTM with only a forget gate, GRU and STAR.
//!
//! All cells operate on batches stored one sample per row. A cell maps the
//! input `x` (`B x n_in`) and the previous state to a new hidden state `h`
//! (`B x n_hidden`); the LSTM additionally carries a cell state `c`.

mod gru;
mod jacobian;
mod lstm;
mod lstm_wf;
mod ops;
mod params;
mod serialize;
mod star;
mod vrnn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Mat;

pub use params::{param_count, BiasInit, CellGrads, CellParams, ParamTensors};
pub use serialize::{read_tensors, write_tensors, TensorEntry, TensorManifest, TensorRef, TENSOR_FORMAT_VERSION, TENSOR_MAGIC};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Vrnn,
    Lstm,
    #[serde(rename = "lstmwf")]
    LstmWf,
    Gru,
    Star,
}

impl CellKind {
    pub const ALL: [CellKind; 5] = [
        CellKind::Vrnn,
        CellKind::Lstm,
        CellKind::LstmWf,
        CellKind::Gru,
        CellKind::Star,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Vrnn => "vrnn",
            CellKind::Lstm => "lstm",
            CellKind::LstmWf => "lstmwf",
            CellKind::Gru => "gru",
            CellKind::Star => "star",
        }
    }

    /// Only the LSTM carries a separate cell state.
    pub fn has_cell_state(self) -> bool {
        matches!(self, CellKind::Lstm)
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', '/'], "").as_str() {
            "vrnn" | "rnn" => Ok(CellKind::Vrnn),
            "lstm" => Ok(CellKind::Lstm),
            "lstmwf" => Ok(CellKind::LstmWf),
            "gru" => Ok(CellKind::Gru),
            "star" => Ok(CellKind::Star),
            _ => Err(Error::InvalidConfig(format!(
                "unknown cell kind '{s}' (expected vrnn, lstm, lstmwf, gru or star)"
            ))),
        }
    }
}

/// Recurrent state of one cell for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Mat,
    /// Present iff the cell is an LSTM.
    pub c: Option<Mat>,
}

impl CellState {
    pub fn zeros(kind: CellKind, batch: usize, n_hidden: usize) -> Self {
        CellState {
            h: Mat::zeros(batch, n_hidden),
            c: kind.has_cell_state().then(|| Mat::zeros(batch, n_hidden)),
        }
    }
}

/// Gate post-activations kept for the backward pass.
///
/// Layout per kind: vRNN none (the output suffices); LSTM `[i, f, o, z]`;
/// LSTMwF `[f, z]`; GRU `[z, r, candidate]`; STAR `[z, k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gates {
    pub acts: Vec<Mat>,
}

/// Everything needed to run `backward` for one cell application.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub x: Mat,
    pub prev: CellState,
    pub out: CellState,
    pub gates: Gates,
}

impl ForwardCache {
    pub fn h(&self) -> &Mat {
        &self.out.h
    }

    pub fn c(&self) -> Option<&Mat> {
        self.out.c.as_ref()
    }
}

/// Result of a cell's backward pass.
#[derive(Clone, Debug)]
pub struct CellBackward {
    pub g_x: Mat,
    pub g_h_prev: Mat,
    pub g_c_prev: Option<Mat>,
    /// Squared Frobenius norm of this application's parameter gradient,
    /// when requested.
    pub param_norm_sq: Option<f64>,
}

/// Full result of [`CellParams::backward`].
#[derive(Clone, Debug)]
pub struct BackwardResult {
    pub g_x: Mat,
    pub g_h_prev: Mat,
    pub g_c_prev: Option<Mat>,
    pub grads: CellGrads,
}

impl CellParams {
    fn check_inputs(&self, x: &Mat, prev: &CellState) -> Result<()> {
        let b = x.rows();
        if x.cols() != self.n_in {
            return Err(Error::shape("cell input", format!("width {}", self.n_in), x.cols()));
        }
        if prev.h.shape() != (b, self.n_hidden) {
            return Err(Error::shape(
                "cell h_prev",
                format!("{b}x{}", self.n_hidden),
                format!("{:?}", prev.h.shape()),
            ));
        }
        match (&prev.c, self.kind.has_cell_state()) {
            (Some(c), true) if c.shape() == (b, self.n_hidden) => Ok(()),
            (None, false) => Ok(()),
            (Some(c), true) => Err(Error::shape(
                "cell c_prev",
                format!("{b}x{}", self.n_hidden),
                format!("{:?}", c.shape()),
            )),
            (None, true) => Err(Error::shape("cell c_prev", "cell state for LSTM", "none")),
            (Some(_), false) => Err(Error::shape("cell c_prev", "no cell state", "cell state")),
        }
    }

    /// One application of the update rule to a batch.
    pub fn step(&self, x: &Mat, prev: &CellState) -> Result<(CellState, Gates)> {
        self.check_inputs(x, prev)?;
        Ok(match self.kind {
            CellKind::Vrnn => vrnn::forward(self, x, &prev.h),
            CellKind::Lstm => lstm::forward(self, x, &prev.h, prev.c.as_ref().expect("checked")),
            CellKind::LstmWf => lstm_wf::forward(self, x, &prev.h),
            CellKind::Gru => gru::forward(self, x, &prev.h),
            CellKind::Star => star::forward(self, x, &prev.h),
        })
    }

    /// Reverse-mode pass through one application.
    ///
    /// Adds the parameter gradient into `grads` when given and reports the
    /// squared norm of this application's own parameter gradient when
    /// `want_norm` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn backprop(
        &self,
        x: &Mat,
        prev: &CellState,
        out: &CellState,
        gates: &Gates,
        g_h: &Mat,
        g_c: Option<&Mat>,
        grads: Option<&mut CellGrads>,
        want_norm: bool,
    ) -> Result<CellBackward> {
        if g_h.shape() != out.h.shape() {
            return Err(Error::shape(
                "cell backward g_h",
                format!("{:?}", out.h.shape()),
                format!("{:?}", g_h.shape()),
            ));
        }
        if let Some(g) = &grads {
            if g.kind() != self.kind || !g.tensors.same_shape(&self.tensors) {
                return Err(Error::shape("cell backward grads", self.kind, g.kind()));
            }
        }
        let mut sink = ops::GradSink::new(grads.map(|g| &mut g.tensors), want_norm);
        let (g_x, g_h_prev, g_c_prev) = match self.kind {
            CellKind::Vrnn => {
                let (gx, gh) = vrnn::backward(self, x, &prev.h, &out.h, g_h, &mut sink);
                (gx, gh, None)
            }
            CellKind::Lstm => {
                let (gx, gh, gc) = lstm::backward(
                    self,
                    x,
                    &prev.h,
                    prev.c.as_ref().expect("lstm state"),
                    out.c.as_ref().expect("lstm state"),
                    gates,
                    g_h,
                    g_c,
                    &mut sink,
                );
                (gx, gh, Some(gc))
            }
            CellKind::LstmWf => {
                let (gx, gh) = lstm_wf::backward(self, x, &prev.h, &out.h, gates, g_h, &mut sink);
                (gx, gh, None)
            }
            CellKind::Gru => {
                let (gx, gh) = gru::backward(self, x, &prev.h, gates, g_h, &mut sink);
                (gx, gh, None)
            }
            CellKind::Star => {
                let (gx, gh) = star::backward(self, x, &prev.h, &out.h, gates, g_h, &mut sink);
                (gx, gh, None)
            }
        };
        Ok(CellBackward {
            g_x,
            g_h_prev,
            g_c_prev,
            param_norm_sq: sink.norm_sq(),
        })
    }

    /// Forward pass retaining its own inputs for a later [`CellParams::backward`].
    ///
    /// `c_prev` must be present exactly when the cell is an LSTM.
    pub fn forward(&self, x: &Mat, h_prev: &Mat, c_prev: Option<&Mat>) -> Result<ForwardCache> {
        let prev = CellState {
            h: h_prev.clone(),
            c: c_prev.cloned(),
        };
        let (out, gates) = self.step(x, &prev)?;
        Ok(ForwardCache {
            x: x.clone(),
            prev,
            out,
            gates,
        })
    }

    /// Gradients of a loss with respect to inputs, previous state and
    /// parameters, given the loss gradient at the outputs.
    pub fn backward(&self, cache: &ForwardCache, g_h: &Mat, g_c: Option<&Mat>) -> Result<BackwardResult> {
        let mut grads = CellGrads::zeros_like(self);
        let r = self.backprop(
            &cache.x,
            &cache.prev,
            &cache.out,
            &cache.gates,
            g_h,
            g_c,
            Some(&mut grads),
            false,
        )?;
        Ok(BackwardResult {
            g_x: r.g_x,
            g_h_prev: r.g_h_prev,
            g_c_prev: r.g_c_prev,
            grads,
        })
    }

    /// Input Jacobian `J = dh/dx` and state Jacobian `H = dh/dh_prev` at a
    /// single point, from closed-form diagonal-times-weight expressions.
    ///
    /// For the LSTM, `H` holds `c_prev` fixed.
    pub fn jacobians_at(&self, x: &[f64], h_prev: &[f64], c_prev: Option<&[f64]>) -> Result<(Mat, Mat)> {
        let prev = CellState {
            h: Mat::row_vector(h_prev),
            c: c_prev.map(Mat::row_vector),
        };
        let xm = Mat::row_vector(x);
        let (out, gates) = self.step(&xm, &prev)?;
        Ok(jacobian::closed_form(self, &xm, &prev, &out, &gates))
    }
}


#[cfg(test)]
pub(crate) use ops::sigmoid as ops_sigmoid;
