use serde::{Deserialize, Serialize};

use super::CellKind;
use crate::numerics::{orthogonal_matrix, Mat, Rng};
use crate::train::chrono_bias_init;

/// Which side of a weight matrix faces: the layer input or the recurrent state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Fan {
    Input,
    Hidden,
}

pub(crate) struct Layout {
    pub weights: &'static [(&'static str, Fan)],
    pub biases: &'static [&'static str],
}

use Fan::{Hidden, Input};

pub(crate) fn layout(kind: CellKind) -> Layout {
    match kind {
        CellKind::Vrnn => Layout {
            weights: &[("W_x", Input), ("W_h", Hidden)],
            biases: &["b"],
        },
        CellKind::Lstm => Layout {
            weights: &[
                ("W_xi", Input),
                ("W_hi", Hidden),
                ("W_xf", Input),
                ("W_hf", Hidden),
                ("W_xo", Input),
                ("W_ho", Hidden),
                ("W_xz", Input),
                ("W_hz", Hidden),
            ],
            biases: &["b_i", "b_f", "b_o", "b_z"],
        },
        CellKind::LstmWf => Layout {
            weights: &[("W_xf", Input), ("W_hf", Hidden), ("W_xz", Input), ("W_hz", Hidden)],
            biases: &["b_f", "b_z"],
        },
        CellKind::Gru => Layout {
            weights: &[
                ("W_xz", Input),
                ("W_hz", Hidden),
                ("W_xr", Input),
                ("W_hr", Hidden),
                ("W_xh", Input),
                ("W_hh", Hidden),
            ],
            biases: &["b_z", "b_r", "b_h"],
        },
        CellKind::Star => Layout {
            weights: &[("W_z", Input), ("W_x", Input), ("W_h", Hidden)],
            biases: &["b_z", "b_k"],
        },
    }
}

/// Exact number of trainable scalars.
pub fn param_count(kind: CellKind, n_in: usize, n_hidden: usize) -> usize {
    let l = layout(kind);
    let w: usize = l
        .weights
        .iter()
        .map(|(_, fan)| match fan {
            Input => n_hidden * n_in,
            Hidden => n_hidden * n_hidden,
        })
        .sum();
    w + l.biases.len() * n_hidden
}

/// Named weight matrices and bias vectors in a fixed per-kind order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensors {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl ParamTensors {
    pub fn zeros(kind: CellKind, n_in: usize, n_hidden: usize) -> Self {
        let l = layout(kind);
        ParamTensors {
            weights: l
                .weights
                .iter()
                .map(|(_, fan)| match fan {
                    Input => Mat::zeros(n_hidden, n_in),
                    Hidden => Mat::zeros(n_hidden, n_hidden),
                })
                .collect(),
            biases: vec![vec![0.0; n_hidden]; l.biases.len()],
        }
    }

    pub fn same_shape(&self, other: &ParamTensors) -> bool {
        self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.shape() == b.shape())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.len() == b.len())
    }

    /// All tensors as flat slices: weights first, then biases.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.weights
            .iter()
            .map(|w| w.as_slice())
            .chain(self.biases.iter().map(|b| b.as_slice()))
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.weights
            .iter_mut()
            .map(|w| w.as_mut_slice())
            .chain(self.biases.iter_mut().map(|b| b.as_mut_slice()))
    }

    pub fn len(&self) -> usize {
        self.slices().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sum_sq(&self) -> f64 {
        self.slices().flat_map(|s| s.iter()).map(|x| x * x).sum()
    }

    pub fn fill(&mut self, v: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn add_assign(&mut self, other: &ParamTensors) {
        for (a, b) in self.slices_mut().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().flat_map(|s| s.iter().copied()).collect()
    }
}

/// How gate biases are initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasInit {
    /// Every bias zero: the zero-fixed-point analysis setting.
    Zero,
    /// Chrono initialization of the memory gates over horizon `t_max`.
    Chrono,
    /// Chrono, except LSTM forget bias one and input bias zero.
    UnitForget,
}

/// Parameters of one cell (one lattice layer).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub kind: CellKind,
    pub n_in: usize,
    pub n_hidden: usize,
    pub tensors: ParamTensors,
}

impl CellParams {
    pub fn zeros(kind: CellKind, n_in: usize, n_hidden: usize) -> Self {
        CellParams {
            kind,
            n_in,
            n_hidden,
            tensors: ParamTensors::zeros(kind, n_in, n_hidden),
        }
    }

    /// Semi-orthogonal weights; biases per `bias`.
    pub fn init(
        kind: CellKind,
        n_in: usize,
        n_hidden: usize,
        t_max: usize,
        bias: BiasInit,
        rng: &mut Rng,
    ) -> Self {
        assert!(n_in >= 1 && n_hidden >= 1, "cell dimensions must be positive");
        assert!(t_max >= 2, "chrono horizon needs t_max >= 2");
        let mut p = CellParams::zeros(kind, n_in, n_hidden);
        for w in p.tensors.weights.iter_mut() {
            *w = orthogonal_matrix(rng, w.rows(), w.cols());
        }
        if bias == BiasInit::Zero {
            return p;
        }
        let b = &mut p.tensors.biases;
        match kind {
            CellKind::Vrnn => {}
            CellKind::Lstm => {
                if bias == BiasInit::UnitForget {
                    b[1] = vec![1.0; n_hidden];
                } else {
                    // b_f = +ln u, b_i = -b_f
                    let neg = chrono_bias_init(n_hidden, t_max, rng);
                    b[1] = neg.iter().map(|v| -v).collect();
                    b[0] = neg;
                }
            }
            CellKind::LstmWf => {
                // f weights the retained state, so it gets the positive sign
                b[0] = chrono_bias_init(n_hidden, t_max, rng).iter().map(|v| -v).collect();
            }
            CellKind::Gru => {
                // z weights the candidate, like STAR's k
                b[0] = chrono_bias_init(n_hidden, t_max, rng);
            }
            CellKind::Star => {
                b[1] = chrono_bias_init(n_hidden, t_max, rng);
            }
        }
        p
    }

    pub fn weight(&self, name: &str) -> Option<&Mat> {
        let l = layout(self.kind);
        l.weights
            .iter()
            .position(|(n, _)| *n == name)
            .map(|i| &self.tensors.weights[i])
    }

    pub fn bias(&self, name: &str) -> Option<&[f64]> {
        let l = layout(self.kind);
        l.biases
            .iter()
            .position(|n| *n == name)
            .map(|i| self.tensors.biases[i].as_slice())
    }

    pub fn weight_names(&self) -> Vec<&'static str> {
        layout(self.kind).weights.iter().map(|(n, _)| *n).collect()
    }

    pub fn bias_names(&self) -> Vec<&'static str> {
        layout(self.kind).biases.to_vec()
    }

    /// Names of all tensors in [`ParamTensors::slices`] order.
    pub fn tensor_names(&self) -> Vec<&'static str> {
        let mut v = self.weight_names();
        v.extend(self.bias_names());
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors.len()
    }

    #[inline]
    pub(crate) fn w(&self, i: usize) -> &Mat {
        &self.tensors.weights[i]
    }

    #[inline]
    pub(crate) fn b(&self, i: usize) -> &[f64] {
        &self.tensors.biases[i]
    }
}

/// Gradient of a loss with respect to one cell's parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellGrads {
    kind: CellKind,
    pub tensors: ParamTensors,
}

impl CellGrads {
    pub fn zeros_like(p: &CellParams) -> Self {
        CellGrads {
            kind: p.kind,
            tensors: ParamTensors::zeros(p.kind, p.n_in, p.n_hidden),
        }
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn norm(&self) -> f64 {
        self.tensors.sum_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.slices().all(|s| s.iter().all(|x| x.is_finite()))
    }
}
