//! The `starlab` command line.

mod jobs;
mod manifest;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{SimConfig, SimInput};
use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::lattice::{InitMode, LossMode, StackSpec};
use crate::train::TrainConfig;

pub use jobs::{AnalyzeJob, GradcheckJob, Job, JobOutput, ReportFormat, SimulateJob, GRADCHECK_TOL};
pub use manifest::{describe_output, sha256_hex, OutputFile, RunManifest, Timings, ARTIFACT_FORMAT_VERSION, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DATA_DIR_ENV: &str = "STARLAB_DATA_DIR";

#[derive(Parser, Debug)]
#[command(name = "starlab", version, about = "Gradient propagation in deep recurrent lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Jacobian singular values at the zero fixed point.
    Analyze(AnalyzeArgs),
    /// Monte-Carlo gradient field over an L x T lattice.
    Simulate(SimulateArgs),
    /// Train a stacked network on a sequence task.
    Train(TrainArgs),
    /// Compare analytic cell gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Re-run a command from its manifest and compare outputs byte for byte.
    Replay(ReplayArgs),
}

/// A cell kind or `all`.
#[derive(Clone, Debug)]
pub struct KindSet(pub Vec<CellKind>);

fn parse_kinds(s: &str) -> std::result::Result<KindSet, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(KindSet(CellKind::ALL.to_vec()));
    }
    s.split(',')
        .map(|k| k.trim().parse::<CellKind>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(KindSet)
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Cell kind, a comma-separated list, or `all`.
    #[arg(long, value_parser = parse_kinds)]
    pub cell: KindSet,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    #[arg(long)]
    pub csv: bool,
    #[arg(long, default_value = "out/analyze")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LossArg {
    Final,
    All,
    Mean,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InputArg {
    Ar1,
    Mnist,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum InitArg {
    Analysis,
    Training,
    UnitForget,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, conflicts_with = "stack", required_unless_present = "stack")]
    pub cell: Option<CellKind>,
    /// JSON stack description (layers, n_in, t_max).
    #[arg(long)]
    pub stack: Option<PathBuf>,
    #[arg(long, default_value_t = 12)]
    pub layers: usize,
    /// Sequence length; overrides a stack file's t_max when given.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    /// Input width; defaults to the hidden size (1 for MNIST input).
    #[arg(long)]
    pub n_in: Option<usize>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: u64,
    #[arg(long, value_enum, default_value = "final")]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value = "ar1")]
    pub input: InputArg,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also record the cosine between the vertical and temporal gradient paths.
    #[arg(long)]
    pub path_cosine: bool,
    /// Write SVG heatmaps next to the CSV files.
    #[arg(long)]
    pub heatmap: bool,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value = "out/simulate")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Adding,
    Copy,
    Mnist,
    Pmnist,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, default_value = "out/train")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, value_parser = parse_kinds)]
    pub cell: KindSet,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupt one analytic gradient entry to exercise the failure path.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
    #[arg(long, default_value = "out/gradcheck")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Defaults to `replay/` beside the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

fn resolve_data_dir(flag: Option<&Path>) -> Option<PathBuf> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist-subset"));
    Some(dir.canonicalize().unwrap_or(dir))
}

fn simulate_job(a: &SimulateArgs) -> Result<SimulateJob> {
    let mnist = matches!(a.input, InputArg::Mnist);
    let mut stack = match (&a.stack, a.cell) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str::<StackSpec>(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
        }
        (None, Some(kind)) => {
            let n_in = a.n_in.unwrap_or(if mnist { 1 } else { a.hidden });
            StackSpec::uniform(kind, a.layers, a.hidden, n_in, a.steps.unwrap_or(50))
        }
        (None, None) => return Err(Error::InvalidConfig("either --cell or --stack is required".into())),
    };
    if let Some(t) = a.steps {
        stack.t_max = t;
    }
    if a.stack.is_some() {
        if let Some(n) = a.n_in {
            stack.n_in = n;
        }
    }
    let sim = SimConfig {
        stack,
        runs: a.runs as usize,
        loss: match a.loss {
            LossArg::Final => LossMode::FinalStep,
            LossArg::All => LossMode::AllSteps,
            LossArg::Mean => LossMode::MeanPool,
        },
        input: if mnist { SimInput::Mnist } else { SimInput::Ar1 { alpha: a.alpha } },
        seed: a.seed,
        init: a.init.map(|i| match i {
            InitArg::Analysis => InitMode::Analysis,
            InitArg::Training => InitMode::Training,
            InitArg::UnitForget => InitMode::UnitForget,
        }),
        path_cosine: a.path_cosine,
    };
    Ok(SimulateJob { sim, heatmap: a.heatmap })
}

fn train_job(a: &TrainArgs) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(&a.config)?;
    let mut cfg = TrainConfig::from_json(&text)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let want = match a.task {
        TaskArg::Adding => "adding",
        TaskArg::Copy => "copy",
        TaskArg::Mnist => "mnist",
        TaskArg::Pmnist => "pmnist",
    };
    if cfg.task.name() != want {
        return Err(Error::InvalidConfig(format!(
            "--task {want} but {} describes the {} task",
            a.config.display(),
            cfg.task.name()
        )));
    }
    Ok(cfg)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::ShapeMismatch { .. } | Error::MissingData(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Runs `job`, writes its manifest beside the outputs and prints a summary.
pub fn execute(job: &Job, out: &Path, data_dir: Option<PathBuf>) -> Result<(RunManifest, Option<String>)> {
    let data_dir = if job.needs_data() { data_dir } else { None };
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let output = job.run(out, data_dir.as_deref())?;
    let wall = clock.elapsed().as_secs_f64();
    let outputs = output
        .files
        .iter()
        .map(|f| describe_output(out, f))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        format_version: ARTIFACT_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: job.name().to_string(),
        seed: job.seed(),
        job: job.clone(),
        data_dir,
        out_dir: out.to_path_buf(),
        outputs,
        extra: output.extra,
        timings: Timings {
            started_unix: started,
            wall_seconds: wall,
        },
    };
    let path = manifest.write(out)?;
    for line in &output.summary {
        println!("{line}");
    }
    for f in &manifest.outputs {
        println!("wrote {}", out.join(&f.path).display());
    }
    println!("wrote {}", path.display());
    Ok((manifest, output.failure))
}

fn replay(a: &ReplayArgs) -> Result<i32> {
    let original = RunManifest::read(&a.manifest)?;
    let out = a.out.clone().unwrap_or_else(|| {
        a.manifest
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("replay")
    });
    let data_dir = a.data_dir.clone().or_else(|| original.data_dir.clone());
    let (fresh, failure) = execute(&original.job, &out, data_dir)?;
    let mut identical = true;
    for f in &original.outputs {
        let status = match fresh.outputs.iter().find(|g| g.path == f.path) {
            Some(g) if g.sha256 == f.sha256 => "identical",
            Some(_) => "DIFFERS",
            None => "MISSING",
        };
        identical &= status == "identical";
        println!("{status:<9} {}", f.path);
    }
    if let Some(msg) = failure {
        eprintln!("note: {msg}");
    }
    if identical {
        println!("replay reproduced all {} outputs", original.outputs.len());
        Ok(EXIT_OK)
    } else {
        eprintln!("error: replay outputs differ from the manifest");
        Ok(EXIT_FAILURE)
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let (job, out, data_dir) = match cli.command {
        Command::Replay(a) => return replay(&a),
        Command::Analyze(a) => (
            Job::Analyze(AnalyzeJob {
                kinds: a.cell.0,
                hidden: a.hidden,
                trials: a.trials as usize,
                seed: a.seed,
                format: if a.json { ReportFormat::Json } else { ReportFormat::Csv },
            }),
            a.out,
            None,
        ),
        Command::Simulate(a) => (Job::Simulate(simulate_job(&a)?), a.out.clone(), resolve_data_dir(a.data_dir.as_deref())),
        Command::Train(a) => (Job::Train(train_job(&a)?), a.out.clone(), resolve_data_dir(a.data_dir.as_deref())),
        Command::Gradcheck(a) => (
            Job::Gradcheck(GradcheckJob {
                kinds: a.cell.0,
                trials: a.trials as usize,
                eps: a.eps,
                seed: a.seed,
                inject_fault: a.inject_fault,
            }),
            a.out,
            None,
        ),
    };
    job.validate()?;
    let (_, failure) = execute(&job, &out, data_dir)?;
    Ok(match failure {
        Some(msg) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
        None => EXIT_OK,
    })
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
