//! Fixed-point Jacobian spectra, Monte-Carlo gradient fields and their plots.

mod fixed_point;
mod heatmap;
mod simulate;
mod trace;

pub use fixed_point::{fixed_point_report, FixedPointReport};
pub use heatmap::{heatmap_svg, HeatmapOptions};
pub use simulate::{gen_ar1_sequence, layer_ratio, simulate_gradient_field, simulate_runs, SimConfig, SimInput};
pub use trace::{weight_state, WeightState};
