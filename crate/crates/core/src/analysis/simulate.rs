use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GradientField, InitMode, Lattice, LossMode, StackSpec};
use crate::numerics::{Mat, Rng};
use crate::tasks::MnistSet;

/// AR(1) sequence `x_t = a x_{t-1} + (1 - a) z_t`, `x_0 = z_0`, one `1 x n_in`
/// row per step.
pub fn gen_ar1_sequence(rng: &mut Rng, t: usize, n_in: usize, alpha: f64) -> Vec<Mat> {
    assert!((0.0..1.0).contains(&alpha), "alpha must lie in [0, 1)");
    let mut out = Vec::with_capacity(t);
    let mut prev: Vec<f64> = Vec::new();
    for step in 0..t {
        let x: Vec<f64> = (0..n_in)
            .map(|i| {
                let z = rng.normal();
                if step == 0 {
                    z
                } else {
                    alpha * prev[i] + (1.0 - alpha) * z
                }
            })
            .collect();
        out.push(Mat::row_vector(&x));
        prev = x;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum SimInput {
    Ar1 { alpha: f64 },
    /// Pixel-by-pixel MNIST images drawn uniformly from a loaded set.
    Mnist,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// The sequence length is `stack.t_max`.
    pub stack: StackSpec,
    pub runs: usize,
    pub loss: LossMode,
    pub input: SimInput,
    pub seed: u64,
    /// Bias initialization; defaults to zero biases for AR(1) input and to
    /// chrono with unit LSTM forget bias for MNIST input.
    #[serde(default)]
    pub init: Option<InitMode>,
    #[serde(default)]
    pub path_cosine: bool,
}

impl SimConfig {
    pub fn ar1(stack: StackSpec, runs: usize, loss: LossMode, seed: u64) -> Self {
        SimConfig {
            stack,
            runs,
            loss,
            input: SimInput::Ar1 { alpha: 0.5 },
            seed,
            init: None,
            path_cosine: false,
        }
    }

    pub fn init_mode(&self) -> InitMode {
        self.init.unwrap_or(match self.input {
            SimInput::Ar1 { .. } => InitMode::Analysis,
            SimInput::Mnist => InitMode::UnitForget,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.stack.validate()?;
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if let SimInput::Ar1 { alpha } = self.input {
            if !(0.0..1.0).contains(&alpha) {
                return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1), got {alpha}")));
            }
        }
        Ok(())
    }
}

/// Run `r` draws its parameters and input from stream `r` of `cfg.seed`, so
/// any subset of runs can be computed separately and merged.
pub fn simulate_runs(cfg: &SimConfig, runs: std::ops::Range<usize>, mnist: Option<&MnistSet>) -> Result<GradientField> {
    cfg.validate()?;
    let steps = cfg.stack.t_max;
    if let SimInput::Mnist = cfg.input {
        let set = mnist.ok_or_else(|| Error::InvalidConfig("MNIST input needs a loaded dataset".into()))?;
        if set.is_empty() {
            return Err(Error::InvalidConfig("MNIST dataset is empty".into()));
        }
        if cfg.stack.n_in != 1 || steps > set.pixels() {
            return Err(Error::InvalidConfig(format!(
                "MNIST input needs n_in = 1 and at most {} steps",
                set.pixels()
            )));
        }
    }
    let mut field = GradientField::new(cfg.stack.depth(), steps);
    for r in runs {
        let mut rng = Rng::new(cfg.seed, r as u64);
        let lattice = Lattice::build(cfg.stack.clone(), cfg.init_mode(), &mut rng)?;
        let inputs = match cfg.input {
            SimInput::Ar1 { alpha } => gen_ar1_sequence(&mut rng, steps, cfg.stack.n_in, alpha),
            SimInput::Mnist => {
                let set = mnist.expect("checked");
                let i = rng.below(set.len() as u64) as usize;
                set.image(i)[..steps].iter().map(|&v| Mat::row_vector(&[v])).collect()
            }
        };
        let sample = lattice.gradient_sample(&inputs, cfg.loss, cfg.path_cosine)?;
        field.push(&sample);
    }
    Ok(field)
}

/// Accumulates `cfg.runs` independent runs into one field.
pub fn simulate_gradient_field(cfg: &SimConfig, mnist: Option<&MnistSet>) -> Result<GradientField> {
    simulate_runs(cfg, 0..cfg.runs, mnist)
}

/// Mean parameter-gradient norm at the final step, bottom layer over top layer.
pub fn layer_ratio(field: &GradientField) -> f64 {
    let t = field.steps() - 1;
    field.mean_gparam(0, t) / field.mean_gparam(field.layers() - 1, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellKind;

    #[test]
    fn ar1_autocorrelation() {
        let xs = gen_ar1_sequence(&mut Rng::new(1, 0), 100_000, 1, 0.5);
        let v: Vec<f64> = xs.iter().map(|x| x.get(0, 0)).collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let c0: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
        let c1: f64 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((c1 / c0 - 0.5).abs() < 0.02, "{}", c1 / c0);
    }

    #[test]
    fn ar1_degenerate_and_deterministic() {
        let a = gen_ar1_sequence(&mut Rng::new(2, 0), 5, 3, 0.0);
        let mut r = Rng::new(2, 0);
        for x in &a {
            for &v in x.as_slice() {
                assert_eq!(v, r.normal());
            }
        }
        assert_eq!(a, gen_ar1_sequence(&mut Rng::new(2, 0), 5, 3, 0.0));
        let b = gen_ar1_sequence(&mut Rng::new(2, 0), 5, 3, 0.5);
        assert_eq!(a[0], b[0]);
    }

    #[test]
    fn runs_accumulate_and_split() {
        let stack = StackSpec::uniform(CellKind::Star, 3, 8, 8, 6);
        let cfg = SimConfig::ar1(stack, 4, LossMode::FinalStep, 9);
        let all = simulate_gradient_field(&cfg, None).unwrap();
        assert_eq!(all.runs(), 4);
        let one = simulate_runs(&cfg, 0..1, None).unwrap();
        let two = simulate_runs(&cfg, 1..2, None).unwrap();
        let both = simulate_runs(&cfg, 0..2, None).unwrap();
        let manual = 0.5 * (one.mean_gparam(1, 2) + two.mean_gparam(1, 2));
        assert!((both.mean_gparam(1, 2) - manual).abs() < 1e-15 * manual.max(1.0));
        let mut merged = simulate_runs(&cfg, 2..4, None).unwrap();
        merged.merge(&both);
        for l in 0..3 {
            for t in 0..6 {
                let (a, b) = (merged.gparam(l, t), all.gparam(l, t));
                assert!((a.mean() - b.mean()).abs() <= 1e-12 * b.mean());
                assert!((a.variance() - b.variance()).abs() <= 1e-12 * b.variance().max(1e-300));
            }
        }
        assert_eq!(all, simulate_gradient_field(&cfg, None).unwrap());
    }

    #[test]
    fn config_validation() {
        let stack = StackSpec::uniform(CellKind::Lstm, 2, 4, 4, 5);
        let mut cfg = SimConfig::ar1(stack, 0, LossMode::AllSteps, 1);
        assert!(cfg.validate().is_err());
        cfg.runs = 1;
        cfg.input = SimInput::Ar1 { alpha: 1.0 };
        assert!(cfg.validate().is_err());
        cfg.input = SimInput::Mnist;
        assert!(simulate_gradient_field(&cfg, None).is_err());
        assert_eq!(cfg.init_mode(), InitMode::UnitForget);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SimConfig>(&json).unwrap(), cfg);
    }
}
