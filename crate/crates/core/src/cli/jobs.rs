use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    fixed_point_report, heatmap_svg, layer_ratio, simulate_gradient_field, FixedPointReport, HeatmapOptions, SimConfig,
    SimInput,
};
use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::tasks::{find_mnist, load_mnist_idx, MnistSet};
use crate::train::{grad_check_with_fault, save_checkpoint, train_run, GradCheckReport, MnistData, TrainConfig};

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeJob {
    pub kinds: Vec<CellKind>,
    pub hidden: usize,
    pub trials: usize,
    pub seed: u64,
    pub format: ReportFormat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    pub sim: SimConfig,
    pub heatmap: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckJob {
    pub kinds: Vec<CellKind>,
    pub trials: usize,
    pub eps: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub inject_fault: bool,
}

/// A fully resolved command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "config", rename_all = "lowercase")]
pub enum Job {
    Analyze(AnalyzeJob),
    Simulate(SimulateJob),
    Train(TrainConfig),
    Gradcheck(GradcheckJob),
}

/// What a job produced.
#[derive(Debug, Default)]
pub struct JobOutput {
    pub files: Vec<String>,
    /// Lines for the terminal.
    pub summary: Vec<String>,
    /// Nonzero when the job ran but failed (divergence, failed check).
    pub failure: Option<String>,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Analyze(_) => "analyze",
            Job::Simulate(_) => "simulate",
            Job::Train(_) => "train",
            Job::Gradcheck(_) => "gradcheck",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Job::Analyze(j) => j.seed,
            Job::Simulate(j) => j.sim.seed,
            Job::Train(c) => c.seed,
            Job::Gradcheck(j) => j.seed,
        }
    }

    pub fn needs_data(&self) -> bool {
        match self {
            Job::Simulate(j) => j.sim.input == SimInput::Mnist,
            Job::Train(c) => c.task.is_mnist(),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Job::Analyze(j) => {
                if j.hidden < 2 || j.trials == 0 || j.kinds.is_empty() {
                    return Err(Error::InvalidConfig("analyze needs hidden >= 2, trials >= 1 and a cell kind".into()));
                }
                Ok(())
            }
            Job::Simulate(j) => j.sim.validate(),
            Job::Train(c) => c.validate(),
            Job::Gradcheck(j) => {
                if j.trials == 0 || j.kinds.is_empty() {
                    return Err(Error::InvalidConfig("gradcheck needs trials >= 1 and a cell kind".into()));
                }
                if !(1e-7..=1e-3).contains(&j.eps) {
                    return Err(Error::InvalidConfig(format!("eps {:e} outside [1e-7, 1e-3]", j.eps)));
                }
                Ok(())
            }
        }
    }

    pub fn run(&self, out: &Path, data_dir: Option<&Path>) -> Result<JobOutput> {
        self.validate()?;
        fs::create_dir_all(out)?;
        match self {
            Job::Analyze(j) => analyze(j, out),
            Job::Simulate(j) => simulate(j, out, data_dir),
            Job::Train(c) => train(c, out, data_dir),
            Job::Gradcheck(j) => gradcheck(j, out),
        }
    }
}

fn load_split(dir: &Path, train: bool) -> Result<MnistSet> {
    let (images, labels) = find_mnist(dir, train)?;
    load_mnist_idx(images, labels)
}

fn require_data(dir: Option<&Path>) -> Result<&Path> {
    dir.ok_or_else(|| Error::MissingData(PathBuf::from("<no data directory>")))
}

fn analyze(j: &AnalyzeJob, out: &Path) -> Result<JobOutput> {
    let mut reports: Vec<FixedPointReport> = Vec::new();
    for &kind in &j.kinds {
        let mut rng = Rng::new(j.seed, kind as u64);
        reports.push(fixed_point_report(kind, j.hidden, j.trials, &mut rng)?);
    }
    let mut o = JobOutput::default();
    o.summary.push(format!(
        "{:<7} {:>6} {:>10} {:>10} {:>10} {:>10}",
        "cell", "n", "s_J", "s_H", "f_unc", "f_cor"
    ));
    for r in &reports {
        o.summary.push(format!(
            "{:<7} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            r.kind.to_string(),
            r.n,
            r.mean_sv_j,
            r.mean_sv_h,
            r.factor_uncorrelated,
            r.factor_correlated
        ));
    }
    let name = match j.format {
        ReportFormat::Csv => {
            let mut s = String::from(FixedPointReport::csv_header());
            s.push('\n');
            for r in &reports {
                s.push_str(&r.csv_row());
                s.push('\n');
            }
            fs::write(out.join("fixed_point.csv"), s)?;
            "fixed_point.csv"
        }
        ReportFormat::Json => {
            fs::write(out.join("fixed_point.json"), serde_json::to_string_pretty(&reports)? + "\n")?;
            "fixed_point.json"
        }
    };
    o.files.push(name.into());
    Ok(o)
}

fn simulate(j: &SimulateJob, out: &Path, data_dir: Option<&Path>) -> Result<JobOutput> {
    let mnist = match j.sim.input {
        SimInput::Mnist => Some(load_split(require_data(data_dir)?, true)?),
        SimInput::Ar1 { .. } => None,
    };
    let field = simulate_gradient_field(&j.sim, mnist.as_ref())?;
    let mut o = JobOutput::default();
    fs::write(out.join("field.csv"), field.to_csv())?;
    fs::write(out.join("field_normalized_std.csv"), field.normalized_std_csv())?;
    o.files.push("field.csv".into());
    o.files.push("field_normalized_std.csv".into());
    if j.heatmap {
        let label = j.sim.stack.label();
        let mean: Vec<Vec<Option<f64>>> = field
            .mean_gparam_grid()
            .into_iter()
            .map(|row| row.into_iter().map(Some).collect())
            .collect();
        let svg = heatmap_svg(
            &mean,
            &HeatmapOptions {
                title: format!("{label}: mean parameter-gradient norm"),
                ..Default::default()
            },
        );
        fs::write(out.join("field_mean.svg"), svg)?;
        let svg = heatmap_svg(
            &field.normalized_std_grid(),
            &HeatmapOptions {
                title: format!("{label}: normalized std"),
                ..Default::default()
            },
        );
        fs::write(out.join("field_normalized_std.svg"), svg)?;
        o.files.push("field_mean.svg".into());
        o.files.push("field_normalized_std.svg".into());
    }
    let r = layer_ratio(&field);
    o.summary.push(format!(
        "{} lattice {}x{}, {} runs, {:?} loss",
        j.sim.stack.label(),
        field.layers(),
        field.steps(),
        field.runs(),
        j.sim.loss
    ));
    o.summary.push(format!("layer ratio at t=T (layer 1 / layer {}): {r:e}", field.layers()));
    o.extra.insert("layer_ratio".into(), serde_json::json!(r));
    Ok(o)
}

fn train(cfg: &TrainConfig, out: &Path, data_dir: Option<&Path>) -> Result<JobOutput> {
    let data = if cfg.task.is_mnist() {
        let dir = require_data(data_dir)?;
        Some(MnistData {
            train: load_split(dir, true)?,
            test: load_split(dir, false)?,
        })
    } else {
        None
    };
    let metrics = out.join("metrics.jsonl");
    let mut file = std::io::BufWriter::new(fs::File::create(&metrics)?);
    let outcome = train_run(cfg, data.as_ref(), &mut |rec| {
        let line = serde_json::to_string(rec)?;
        writeln!(file, "{line}")?;
        if let Some(ev) = rec.eval {
            match ev.accuracy {
                Some(a) => eprintln!("step {:>6}  eval loss {:.5}  accuracy {:.4}", rec.step, ev.loss, a),
                None => eprintln!("step {:>6}  eval loss {:.5}", rec.step, ev.loss),
            }
        }
        Ok(())
    })?;
    file.flush()?;
    drop(file);
    save_checkpoint(&outcome.model, outcome.steps, &out.join("checkpoint"))?;
    let mut o = JobOutput {
        files: vec!["metrics.jsonl".into(), "checkpoint.bin".into(), "checkpoint.json".into()],
        ..Default::default()
    };
    if let Some(p) = &outcome.permutation {
        o.extra.insert("pixel_permutation".into(), serde_json::json!(p));
    }
    o.summary.push(format!(
        "{} on {}: {} steps, {} parameters",
        cfg.stack().label(),
        cfg.task.name(),
        outcome.steps,
        outcome.model.param_count()
    ));
    if let Some(ev) = outcome.final_eval {
        o.summary.push(match ev.accuracy {
            Some(a) => format!("final eval loss {:.6}, accuracy {:.4}", ev.loss, a),
            None => format!("final eval loss {:.6}", ev.loss),
        });
        o.extra.insert("final_eval".into(), serde_json::to_value(ev)?);
    }
    if let Some(d) = outcome.diverged {
        o.failure = Some(format!("training diverged at step {}: {d}", outcome.steps));
    }
    Ok(o)
}

fn gradcheck(j: &GradcheckJob, out: &Path) -> Result<JobOutput> {
    let mut o = JobOutput::default();
    let mut reports: Vec<GradCheckReport> = Vec::new();
    for &kind in &j.kinds {
        let r = grad_check_with_fault(kind, j.trials, j.eps, j.seed, j.inject_fault)?;
        o.summary.push(format!(
            "{:<7} {} max rel err {:.3e} ({})",
            kind.to_string(),
            if r.passed(GRADCHECK_TOL) { "pass" } else { "FAIL" },
            r.max_rel_err,
            r.worst
        ));
        reports.push(r);
    }
    fs::write(out.join("gradcheck.json"), serde_json::to_string_pretty(&reports)? + "\n")?;
    o.files.push("gradcheck.json".into());
    if let Some(bad) = reports.iter().find(|r| !r.passed(GRADCHECK_TOL)) {
        o.failure = Some(format!(
            "gradient check failed for {}: {:e} >= {GRADCHECK_TOL:e}",
            bad.kind, bad.max_rel_err
        ));
    }
    Ok(o)
}
