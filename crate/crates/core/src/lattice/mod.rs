//! Stacks of recurrent cells unrolled over time into an `L x T` lattice.
//!
//! Layer 0 is the bottom of the stack and reads the external input; each
//! higher layer reads the hidden state of the layer below at the same step.

mod field;

use serde::{Deserialize, Serialize};

use crate::cells::{BiasInit, CellGrads, CellKind, CellParams, CellState, Gates};
use crate::error::{Error, Result};
use crate::numerics::{Mat, Rng};

pub use field::{FieldSample, GradientField, Welford};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: CellKind,
    pub n_hidden: usize,
    /// Optional declared input width, checked against the layer below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_in: Option<usize>,
}

impl LayerSpec {
    pub fn new(kind: CellKind, n_hidden: usize) -> Self {
        LayerSpec { kind, n_hidden, n_in: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    pub layers: Vec<LayerSpec>,
    pub n_in: usize,
    pub t_max: usize,
}

impl StackSpec {
    /// `depth` identical layers.
    pub fn uniform(kind: CellKind, depth: usize, n_hidden: usize, n_in: usize, t_max: usize) -> Self {
        StackSpec {
            layers: vec![LayerSpec::new(kind, n_hidden); depth],
            n_in,
            t_max,
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Input width of layer `l`.
    pub fn input_width(&self, l: usize) -> usize {
        if l == 0 {
            self.n_in
        } else {
            self.layers[l - 1].n_hidden
        }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_hidden)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("stack needs at least one layer".into()));
        }
        if self.n_in == 0 {
            return Err(Error::InvalidConfig("input width must be positive".into()));
        }
        if self.t_max < 2 {
            return Err(Error::InvalidConfig(format!("t_max must be at least 2, got {}", self.t_max)));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.n_hidden == 0 {
                return Err(Error::InvalidConfig(format!("layer {} has zero width", l + 1)));
            }
            if let Some(w) = layer.n_in {
                if w != self.input_width(l) {
                    return Err(Error::shape(
                        format!("layer {} input", l + 1),
                        self.input_width(l),
                        w,
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .enumerate()
            .map(|(l, s)| crate::cells::param_count(s.kind, self.input_width(l), s.n_hidden))
            .sum()
    }

    /// Short label such as `lstmwf128-star128x7`.
    pub fn label(&self) -> String {
        let mut parts: Vec<(String, usize)> = Vec::new();
        for s in &self.layers {
            let name = format!("{}{}", s.kind, s.n_hidden);
            match parts.last_mut() {
                Some((n, c)) if *n == name => *c += 1,
                _ => parts.push((name, 1)),
            }
        }
        parts
            .into_iter()
            .map(|(n, c)| if c > 1 { format!("{n}x{c}") } else { n })
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// How biases are set when a lattice is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// All biases zero.
    Analysis,
    /// Chrono initialization of gate biases.
    Training,
    /// Chrono, with LSTM forget bias one.
    UnitForget,
}

impl InitMode {
    pub fn bias_init(self) -> BiasInit {
        match self {
            InitMode::Analysis => BiasInit::Zero,
            InitMode::Training => BiasInit::Chrono,
            InitMode::UnitForget => BiasInit::UnitForget,
        }
    }
}

/// Where the loss attaches to the top layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    FinalStep,
    AllSteps,
    MeanPool,
}

impl LossMode {
    /// Top-layer seeds of a loss whose derivative is the unit vector
    /// `(1/sqrt(n)) 1` per attached step and sample. Mean pooling spreads it
    /// over the `t_len` steps.
    pub fn unit_seeds(self, t_len: usize, batch: usize, n: usize) -> Vec<Option<Mat>> {
        let v = 1.0 / (n as f64).sqrt();
        let seed = |c: f64| Some(Mat::from_fn(batch, n, |_, _| c));
        match self {
            LossMode::FinalStep => (0..t_len)
                .map(|t| if t + 1 == t_len { seed(v) } else { None })
                .collect(),
            LossMode::AllSteps => (0..t_len).map(|_| seed(v)).collect(),
            LossMode::MeanPool => (0..t_len).map(|_| seed(v / t_len as f64)).collect(),
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "finalstep" | "final" => Ok(LossMode::FinalStep),
            "allsteps" | "all" => Ok(LossMode::AllSteps),
            "meanpool" | "mean" => Ok(LossMode::MeanPool),
            _ => Err(Error::InvalidConfig(format!("unknown loss mode '{s}'"))),
        }
    }
}

/// A stack of cells with one parameter set per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub spec: StackSpec,
    pub layers: Vec<CellParams>,
}

/// States and gate activations of every cell from one forward pass.
///
/// `states[t][l]` is the output of layer `l` at step `t`.
#[derive(Clone, Debug)]
pub struct Grid {
    pub inputs: Vec<Mat>,
    pub states: Vec<Vec<CellState>>,
    pub gates: Vec<Vec<Gates>>,
}

impl Grid {
    pub fn steps(&self) -> usize {
        self.states.len()
    }

    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, Mat::rows)
    }

    pub fn h(&self, t: usize, l: usize) -> &Mat {
        &self.states[t][l].h
    }

    /// Top-layer hidden states, one per step.
    pub fn top(&self) -> impl Iterator<Item = &Mat> {
        self.states.iter().map(|s| &s.last().expect("nonempty stack").h)
    }
}

/// What a backward sweep should produce besides input gradients.
#[derive(Clone, Copy, Debug, Default)]
pub struct BackwardOptions {
    /// Record per-cell norms into a [`FieldSample`].
    pub record: bool,
    /// Also record the cosine between the vertical and temporal gradient paths.
    pub path_cosine: bool,
    /// Sum parameter gradients over time per layer.
    pub accumulate: bool,
}

#[derive(Clone, Debug)]
pub struct BackwardOutput {
    pub sample: Option<FieldSample>,
    /// Per-layer parameter gradients summed over time (empty unless accumulated).
    pub grads: Vec<CellGrads>,
    /// Gradient arriving at each external input.
    pub input_grads: Vec<Mat>,
}

fn cosine(a: &Mat, b: &Mat) -> Option<f64> {
    let (na, nb) = (a.frobenius_norm(), b.frobenius_norm());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
    Some(dot / (na * nb))
}

impl Lattice {
    pub fn build(spec: StackSpec, mode: InitMode, rng: &mut Rng) -> Result<Lattice> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(l, s)| {
                CellParams::init(s.kind, spec.input_width(l), s.n_hidden, spec.t_max, mode.bias_init(), rng)
            })
            .collect();
        Ok(Lattice { spec, layers })
    }

    /// Wraps existing per-layer parameters, checking them against `spec`.
    pub fn from_params(spec: StackSpec, layers: Vec<CellParams>) -> Result<Lattice> {
        spec.validate()?;
        if layers.len() != spec.depth() {
            return Err(Error::shape("lattice layers", spec.depth(), layers.len()));
        }
        for (l, (p, s)) in layers.iter().zip(&spec.layers).enumerate() {
            if p.kind != s.kind || p.n_hidden != s.n_hidden || p.n_in != spec.input_width(l) {
                return Err(Error::shape(
                    format!("layer {} params", l + 1),
                    format!("{} {}->{}", s.kind, spec.input_width(l), s.n_hidden),
                    format!("{} {}->{}", p.kind, p.n_in, p.n_hidden),
                ));
            }
        }
        Ok(Lattice { spec, layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(CellParams::param_count).sum()
    }

    fn zero_state(&self, l: usize, batch: usize) -> CellState {
        CellState::zeros(self.layers[l].kind, batch, self.layers[l].n_hidden)
    }

    /// Runs the stacked recurrence from zero initial states.
    pub fn forward_sequence(&self, inputs: &[Mat]) -> Result<Grid> {
        if inputs.is_empty() {
            return Err(Error::InvalidConfig("empty input sequence".into()));
        }
        if inputs.len() > self.spec.t_max {
            return Err(Error::shape("sequence length", format!("<= {}", self.spec.t_max), inputs.len()));
        }
        let batch = inputs[0].rows();
        for x in inputs {
            if x.shape() != (batch, self.spec.n_in) {
                return Err(Error::shape(
                    "lattice input",
                    format!("{batch}x{}", self.spec.n_in),
                    format!("{:?}", x.shape()),
                ));
            }
        }
        let depth = self.depth();
        let mut states: Vec<Vec<CellState>> = Vec::with_capacity(inputs.len());
        let mut gates: Vec<Vec<Gates>> = Vec::with_capacity(inputs.len());
        let zeros: Vec<CellState> = (0..depth).map(|l| self.zero_state(l, batch)).collect();
        for (t, x) in inputs.iter().enumerate() {
            let mut row_s: Vec<CellState> = Vec::with_capacity(depth);
            let mut row_g = Vec::with_capacity(depth);
            for (l, p) in self.layers.iter().enumerate() {
                let input = if l == 0 { x } else { &row_s[l - 1].h };
                let prev = if t == 0 { &zeros[l] } else { &states[t - 1][l] };
                let (s, g) = p.step(input, prev)?;
                row_s.push(s);
                row_g.push(g);
            }
            states.push(row_s);
            gates.push(row_g);
        }
        Ok(Grid {
            inputs: inputs.to_vec(),
            states,
            gates,
        })
    }

    /// Reverse sweep over the lattice, right to left and top to bottom.
    ///
    /// `seeds[t]` is the loss gradient at the top layer's hidden state at
    /// step `t`; at every cell the gradient from above and the gradient
    /// from the next step are summed before passing through the cell.
    pub fn backward_sequence(&self, grid: &Grid, seeds: &[Option<Mat>], opts: BackwardOptions) -> Result<BackwardOutput> {
        let steps = grid.steps();
        let depth = self.depth();
        let batch = grid.batch();
        if seeds.len() != steps {
            return Err(Error::shape("backward seeds", steps, seeds.len()));
        }
        for s in seeds.iter().flatten() {
            if s.shape() != (batch, self.spec.output_width()) {
                return Err(Error::shape(
                    "backward seed",
                    format!("{batch}x{}", self.spec.output_width()),
                    format!("{:?}", s.shape()),
                ));
            }
        }
        if grid.states.first().map_or(0, Vec::len) != depth {
            return Err(Error::shape("grid depth", depth, grid.states.first().map_or(0, Vec::len)));
        }

        let mut sample = opts.record.then(|| FieldSample::zeros(depth, steps));
        let mut grads: Vec<CellGrads> = if opts.accumulate {
            self.layers.iter().map(CellGrads::zeros_like).collect()
        } else {
            Vec::new()
        };
        let mut input_grads = vec![Mat::zeros(0, 0); steps];
        let zeros: Vec<CellState> = (0..depth).map(|l| self.zero_state(l, batch)).collect();
        let mut from_future_h: Vec<Option<Mat>> = vec![None; depth];
        let mut from_future_c: Vec<Option<Mat>> = vec![None; depth];

        for t in (0..steps).rev() {
            let mut from_above: Option<Mat> = seeds[t].clone();
            for l in (0..depth).rev() {
                let p = &self.layers[l];
                let vertical = from_above.take();
                let temporal = from_future_h[l].take();
                let g_c = from_future_c[l].take();
                if let (Some(s), true) = (sample.as_mut(), opts.path_cosine) {
                    if let (Some(v), Some(h)) = (&vertical, &temporal) {
                        s.path_cosine[l][t] = cosine(v, h);
                    }
                }
                let g_h = match (vertical, temporal) {
                    (Some(mut v), Some(h)) => {
                        v.add_assign(&h);
                        Some(v)
                    }
                    (v, h) => v.or(h),
                };
                let x = if l == 0 { &grid.inputs[t] } else { &grid.states[t][l - 1].h };
                let Some(g_h) = g_h.or_else(|| g_c.as_ref().map(|_| Mat::zeros(batch, p.n_hidden))) else {
                    // nothing reaches this cell yet
                    if l == 0 {
                        input_grads[t] = Mat::zeros(batch, self.spec.n_in);
                    }
                    continue;
                };
                let prev = if t == 0 { &zeros[l] } else { &grid.states[t - 1][l] };
                let r = p.backprop(
                    x,
                    prev,
                    &grid.states[t][l],
                    &grid.gates[t][l],
                    &g_h,
                    g_c.as_ref(),
                    grads.get_mut(l),
                    opts.record,
                )?;
                if let Some(s) = sample.as_mut() {
                    s.gh_norm[l][t] = g_h.frobenius_norm();
                    s.gparam_norm[l][t] = r.param_norm_sq.unwrap_or(0.0).sqrt();
                }
                from_future_h[l] = Some(r.g_h_prev);
                from_future_c[l] = r.g_c_prev;
                if l == 0 {
                    input_grads[t] = r.g_x;
                } else {
                    from_above = Some(r.g_x);
                }
            }
        }
        Ok(BackwardOutput {
            sample,
            grads,
            input_grads,
        })
    }

    /// Forward then backward with unit seeds for `loss`, recording the field sample.
    pub fn gradient_sample(&self, inputs: &[Mat], loss: LossMode, path_cosine: bool) -> Result<FieldSample> {
        let grid = self.forward_sequence(inputs)?;
        let seeds = loss.unit_seeds(grid.steps(), grid.batch(), self.spec.output_width());
        let out = self.backward_sequence(
            &grid,
            &seeds,
            BackwardOptions {
                record: true,
                path_cosine,
                accumulate: false,
            },
        )?;
        Ok(out.sample.expect("recorded"))
    }
}
