use serde::{Deserialize, Serialize};

use crate::lattice::{Grid, Lattice};

/// Weight norms and mean hidden activity per layer at one optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightState {
    /// `[layer][weight]` Hilbert-Schmidt norm over `sqrt(min(rows, cols))`,
    /// which is 1 for any matrix with orthonormal rows or columns.
    pub weight_norms: Vec<Vec<f64>>,
    /// Mean of each layer's hidden state over batch, time and units.
    pub mean_h: Vec<f64>,
}

pub fn weight_state(lattice: &Lattice, grid: &Grid) -> WeightState {
    let weight_norms = lattice
        .layers
        .iter()
        .map(|p| {
            p.tensors
                .weights
                .iter()
                .map(|w| w.frobenius_norm() / (w.rows().min(w.cols()) as f64).sqrt())
                .collect()
        })
        .collect();
    let mean_h = (0..lattice.depth())
        .map(|l| {
            let (mut s, mut n) = (0.0, 0usize);
            for t in 0..grid.steps() {
                let h = grid.h(t, l);
                s += h.as_slice().iter().sum::<f64>();
                n += h.as_slice().len();
            }
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        })
        .collect();
    WeightState { weight_norms, mean_h }
}
