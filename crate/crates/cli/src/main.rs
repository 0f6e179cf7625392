use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use glrl::data::{self, write_entries, FileFormat};
use glrl::experiment::{
    self, labeled_path, prepare_runs, spot_rows, DatasetSpec, Evaluation, ExperimentConfig,
    Outputs, SolverKind, SolverSpec, TRACE_CHECK_TOL,
};
use glrl::model_io;
use glrl::nonsmooth::{NonsmoothConfig, StepMode};
use glrl::power::PowerConfig;
use glrl::qn::QnConfig;
use glrl::smooth::SolverConfig;
use glrl::{Error, LossKind, LossSpec};

/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "glrl", version, about = "Greedy low-rank matrix learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model, optionally evaluating on a held-out split or folds.
    Train(TrainArgs),
    /// Evaluate a saved model on a data file.
    Eval(EvalArgs),
    /// Write train/test files.
    Split(SplitArgs),
    /// Recompute trace objectives from a saved model.
    TraceCheck(TraceCheckArgs),
    /// Run the built-in consistency checks.
    Selftest,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// ml-tab, ml-colon or signed
    #[arg(long, default_value = "ml-tab")]
    format: FileFormat,
    /// Signed files use 0/1 instead of -1/+1.
    #[arg(long)]
    zero_one: bool,
}

#[derive(Args)]
struct EvalSplitArgs {
    /// Train on this fraction, test on the rest.
    #[arg(long, conflicts_with = "folds")]
    train_frac: Option<f64>,
    /// k-fold cross-validation.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EvalSplitArgs {
    fn evaluation(&self) -> Evaluation {
        match (self.train_frac, self.folds) {
            (Some(train_fraction), _) => Evaluation::Split { train_fraction },
            (None, Some(k)) => Evaluation::Folds { k },
            (None, None) => Evaluation::None,
        }
    }
}

#[derive(Args)]
struct LossArgs {
    /// square, logistic or l1
    #[arg(long, default_value = "square")]
    loss: LossKind,
    /// Adds MU/2 times the sum of squared observed predictions.
    #[arg(long, default_value_t = 0.0, value_name = "MU")]
    ridge: f64,
}

impl LossArgs {
    fn spec(&self) -> LossSpec {
        LossSpec::new(self.loss).with_ridge(self.ridge)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: EvalSplitArgs,
    #[command(flatten)]
    loss: LossArgs,
    /// glrl, eglrl, glrl-norefine or nonsmooth
    #[arg(long, default_value = "glrl")]
    solver: SolverKind,
    /// Target rank (smooth solvers) or rank budget (nonsmooth).
    #[arg(long)]
    rank: Option<usize>,
    /// Outer iterations of the nonsmooth solver.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0.99)]
    nu: f64,
    /// Strongly convex step constant (default 1/mu).
    #[arg(long)]
    c1: Option<f64>,
    /// General convex step constant.
    #[arg(long, default_value_t = 0.05)]
    c2: f64,
    /// Force the nonsmooth step rule: strongly_convex or general_convex.
    #[arg(long)]
    step_mode: Option<StepMode>,
    /// Rank-one deflations allowed per nonsmooth iteration.
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Stop the nonsmooth solver once the relative objective change drops below this.
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long, default_value_t = 30)]
    power_iters: usize,
    /// Quasi-Newton iterations per refinement.
    #[arg(long, default_value_t = 5)]
    qn_iters: usize,
    /// Replaces the loss's smoothness constant.
    #[arg(long)]
    lipschitz: Option<f64>,
    #[arg(long)]
    out_model: Option<PathBuf>,
    #[arg(long)]
    out_trace: Option<PathBuf>,
    #[arg(long)]
    out_metrics: Option<PathBuf>,
    /// Write zero for elapsed times so repeated runs produce identical files.
    #[arg(long)]
    no_timing: bool,
}

impl TrainArgs {
    fn config(&self) -> ExperimentConfig {
        let power = PowerConfig {
            iterations: self.power_iters,
            ..PowerConfig::default()
        };
        let solver = match self.solver.refine() {
            Some(refine) => SolverSpec::Smooth(SolverConfig {
                target_rank: self.rank.unwrap_or(10),
                refine,
                qn: QnConfig {
                    max_iters: self.qn_iters,
                    ..QnConfig::default()
                },
                power,
                l_override: self.lipschitz,
                seed: self.split.seed,
            }),
            None => SolverSpec::Nonsmooth(NonsmoothConfig {
                iterations: self.iters,
                mode: self.step_mode,
                c1: self.c1,
                c2: self.c2,
                nu: self.nu,
                k_max: self.k_max,
                power,
                seed: self.split.seed,
                rank_budget: self.rank,
                rel_tol: self.rel_tol,
            }),
        };
        ExperimentConfig {
            dataset: DatasetSpec {
                path: self.data.data.clone(),
                format: self.data.format,
                zero_one: self.data.zero_one,
            },
            evaluation: self.split.evaluation(),
            loss: self.loss.spec(),
            solver,
            seed: self.split.seed,
            outputs: Outputs {
                model: self.out_model.clone(),
                trace: self.out_trace.clone(),
                metrics: self.out_metrics.clone(),
            },
            timing: !self.no_timing,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out_metrics: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: EvalSplitArgs,
    /// Output prefix: writes PREFIX.train / PREFIX.test (with a .foldN infix for folds).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TraceCheckArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: EvalSplitArgs,
    /// Which fold the trace belongs to.
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[command(flatten)]
    loss: LossArgs,
    /// Check every row instead of the first, middle and last.
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = TRACE_CHECK_TOL)]
    tol: f64,
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
    out!("{text}");
    if let Some(path) = path {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{text}")?;
        w.flush()?;
    }
    Ok(())
}

fn train(args: &TrainArgs) -> Result<(), Error> {
    let result = experiment::run_experiment(&args.config())?;
    let text = serde_json::to_string_pretty(&result.metrics).map_err(std::io::Error::from)?;
    out!("{text}");
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), Error> {
    let saved = model_io::load(&args.model)?;
    let dataset = data::load(&args.data.data, args.data.format, args.data.zero_one)?;
    let m = experiment::evaluate(&saved, &dataset)?;
    let value = json!({
        "model": args.model.display().to_string(),
        "data": dataset.provenance,
        "entries": m.entries,
        "mabs": m.mabs,
        "rmse": m.rmse,
        "sign_accuracy": m.sign_accuracy,
    });
    write_json(args.out_metrics.as_deref(), &value)
}

fn split(args: &SplitArgs) -> Result<(), Error> {
    let evaluation = args.split.evaluation();
    if evaluation == Evaluation::None {
        return Err(Error::Config("split needs --train-frac or --folds".into()));
    }
    let dataset = data::load(&args.data.data, args.data.format, args.data.zero_one)?;
    for run in prepare_runs(&dataset, evaluation, args.split.seed)? {
        let label = run.label.as_deref();
        for (part, m) in [("train", Some(&run.train)), ("test", run.test.as_ref())] {
            let Some(m) = m else { continue };
            let mut name = args.out.clone().into_os_string();
            name.push(format!(".{part}"));
            let path = labeled_path(Path::new(&name), label);
            let mut w = BufWriter::new(File::create(&path)?);
            write_entries(&mut w, &dataset, m, args.data.format)?;
            eprintln!("wrote {} ({} entries)", path.display(), m.nnz());
        }
    }
    Ok(())
}

fn trace_check(args: &TraceCheckArgs) -> Result<bool, Error> {
    let saved = model_io::load(&args.model)?;
    let dataset = data::load(&args.data.data, args.data.format, args.data.zero_one)?;
    let runs = prepare_runs(&dataset, args.split.evaluation(), args.split.seed)?;
    let run = runs
        .get(args.fold)
        .ok_or_else(|| Error::Config(format!("fold {} of {}", args.fold, runs.len())))?;
    let train = match &saved.ids {
        Some((rows, cols)) => dataset
            .with_observed(run.train.clone(), "train")
            .remap(rows, cols)?,
        None => run.train.clone(),
    };
    let loss = args.loss.spec();
    let which = if args.all {
        Vec::new()
    } else {
        let n = glrl::trace::read_trace(
            std::io::BufReader::new(File::open(&args.trace)?),
            &args.trace.display().to_string(),
        )?
        .len();
        spot_rows(n)
    };
    let rows = experiment::trace_check(&args.trace, &saved, &train, &loss, &which)?;
    let mut ok = true;
    for r in &rows {
        let pass = r.rel_error <= args.tol;
        ok &= pass;
        out!(
            "t={:<6} recorded={:<24e} recomputed={:<24e} rel_err={:.3e} {}",
            r.iteration,
            r.recorded,
            r.recomputed,
            r.rel_error,
            if pass { "ok" } else { "MISMATCH" }
        );
    }
    Ok(ok)
}

fn selftest() -> bool {
    let mut ok = true;
    for c in glrl::selftest::run() {
        match &c.outcome {
            Ok(()) => out!("pass  {}", c.name),
            Err(msg) => {
                ok = false;
                out!("FAIL  {}: {msg}", c.name);
            }
        }
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Split(a) => split(a).map(|_| true),
        Command::TraceCheck(a) => trace_check(a),
        Command::Selftest => Ok(selftest()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
