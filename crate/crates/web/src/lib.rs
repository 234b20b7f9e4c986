//! WebAssembly bindings behind `www/index.html`. Every export returns a JSON
//! string so the page needs nothing beyond the generated glue.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use starlab::analysis::{fixed_point_report, heatmap_svg, layer_ratio, simulate_gradient_field, HeatmapOptions, SimConfig};
use starlab::cells::{BiasInit, CellKind, CellParams};
use starlab::lattice::{LossMode, StackSpec};
use starlab::numerics::{singular_values, Rng};

/// Largest lattice the page will simulate, in cell applications per run.
pub const MAX_CELLS: usize = 24 * 200;
pub const MAX_HIDDEN: usize = 256;

fn kind(name: &str) -> Result<CellKind, String> {
    name.parse().map_err(|e: starlab::Error| e.to_string())
}

fn check_hidden(n: usize) -> Result<(), String> {
    if (2..=MAX_HIDDEN).contains(&n) {
        Ok(())
    } else {
        Err(format!("hidden size must lie in 2..={MAX_HIDDEN}"))
    }
}

pub fn fixed_point_json(cell: &str, hidden: usize, trials: usize, seed: u64) -> Result<String, String> {
    check_hidden(hidden)?;
    let k = kind(cell)?;
    let r = fixed_point_report(k, hidden, trials.clamp(1, 200), &mut Rng::new(seed, k as u64)).map_err(|e| e.to_string())?;
    serde_json::to_string(&r).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct FieldView {
    layers: usize,
    steps: usize,
    runs: u64,
    ratio: f64,
    mean: Vec<Vec<f64>>,
    svg: String,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_field_json(
    cell: &str,
    layers: usize,
    steps: usize,
    hidden: usize,
    runs: usize,
    loss: &str,
    seed: u64,
) -> Result<String, String> {
    check_hidden(hidden)?;
    if layers == 0 || steps < 2 || layers * steps > MAX_CELLS {
        return Err(format!("need layers >= 1, steps >= 2 and layers * steps <= {MAX_CELLS}"));
    }
    let k = kind(cell)?;
    let loss: LossMode = loss.parse().map_err(|e: starlab::Error| e.to_string())?;
    let stack = StackSpec::uniform(k, layers, hidden, hidden, steps);
    let cfg = SimConfig::ar1(stack, runs.clamp(1, 500), loss, seed);
    let field = simulate_gradient_field(&cfg, None).map_err(|e| e.to_string())?;
    let mean = field.mean_gparam_grid();
    let cells: Vec<Vec<Option<f64>>> = mean.iter().map(|r| r.iter().copied().map(Some).collect()).collect();
    let svg = heatmap_svg(
        &cells,
        &HeatmapOptions {
            title: format!("{k}: mean parameter-gradient norm"),
            cell_width: (640.0 / steps as f64).clamp(4.0, 24.0),
            cell_height: 18.0,
        },
    );
    let view = FieldView {
        layers,
        steps,
        runs: field.runs(),
        ratio: layer_ratio(&field),
        mean,
        svg,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Spectrum {
    j: Vec<f64>,
    h: Vec<f64>,
    mean_j: f64,
    mean_h: f64,
}

/// Singular values of the input and state Jacobians of one cell with
/// orthogonal weights. `state_scale = 0` evaluates at the zero fixed point;
/// otherwise input and state are drawn with that standard deviation.
pub fn jacobian_spectrum_json(cell: &str, hidden: usize, state_scale: f64, seed: u64) -> Result<String, String> {
    check_hidden(hidden)?;
    if !(0.0..=10.0).contains(&state_scale) {
        return Err("state scale must lie in [0, 10]".into());
    }
    let k = kind(cell)?;
    let mut rng = Rng::new(seed, k as u64);
    let p = CellParams::init(k, hidden, hidden, 2, BiasInit::Zero, &mut rng);
    let mut draw = |n: usize| (0..n).map(|_| state_scale * rng.normal()).collect::<Vec<f64>>();
    let x = draw(hidden);
    let h = draw(hidden);
    let c = k.has_cell_state().then(|| draw(hidden));
    let (jm, hm) = p.jacobians_at(&x, &h, c.as_deref()).map_err(|e| e.to_string())?;
    let j = singular_values(&jm).map_err(|e| e.to_string())?;
    let h = singular_values(&hm).map_err(|e| e.to_string())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let view = Spectrum {
        mean_j: mean(&j),
        mean_h: mean(&h),
        j,
        h,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn fixed_point(cell: &str, hidden: usize, trials: usize, seed: u64) -> Result<String, JsError> {
    fixed_point_json(cell, hidden, trials, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_field(
    cell: &str,
    layers: usize,
    steps: usize,
    hidden: usize,
    runs: usize,
    loss: &str,
    seed: u64,
) -> Result<String, JsError> {
    simulate_field_json(cell, layers, steps, hidden, runs, loss, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn jacobian_spectrum(cell: &str, hidden: usize, state_scale: f64, seed: u64) -> Result<String, JsError> {
    jacobian_spectrum_json(cell, hidden, state_scale, seed).map_err(|e| JsError::new(&e))
}
