//! End-to-end runs: load, split, fit, evaluate, write trace/model/metrics.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::data::{self, DataKind, Dataset, FileFormat};
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossSpec};
use crate::metrics::{mabs, mean_std, rmse, sign_accuracy};
use crate::model_io::{self, SavedModel};
use crate::nonsmooth::{fit_nonsmooth_with, NonsmoothConfig};
use crate::rng::{derive_seed, Stream};
use crate::smooth::{fit_smooth_with, Refine, SolverConfig};
use crate::sparse::{observed_values, LowRankModel, ObservedMatrix};
use crate::trace::{read_trace, Stopwatch, TraceRecord, TraceWriter};

/// Named solver variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Smooth solver, full refinement.
    Glrl,
    /// Smooth solver, economic refinement.
    Eglrl,
    /// Smooth solver, no refinement.
    GlrlNoRefine,
    Nonsmooth,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glrl" => Ok(SolverKind::Glrl),
            "eglrl" => Ok(SolverKind::Eglrl),
            "glrl-norefine" => Ok(SolverKind::GlrlNoRefine),
            "nonsmooth" => Ok(SolverKind::Nonsmooth),
            other => Err(Error::Config(format!("unknown solver {other:?}"))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Glrl => "glrl",
            SolverKind::Eglrl => "eglrl",
            SolverKind::GlrlNoRefine => "glrl-norefine",
            SolverKind::Nonsmooth => "nonsmooth",
        })
    }
}

impl SolverKind {
    pub fn refine(self) -> Option<Refine> {
        match self {
            SolverKind::Glrl => Some(Refine::Full),
            SolverKind::Eglrl => Some(Refine::Economic),
            SolverKind::GlrlNoRefine => Some(Refine::None),
            SolverKind::Nonsmooth => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverSpec {
    Smooth(SolverConfig),
    Nonsmooth(NonsmoothConfig),
}

impl SolverSpec {
    fn with_seed(self, seed: u64) -> Self {
        match self {
            SolverSpec::Smooth(c) => SolverSpec::Smooth(SolverConfig { seed, ..c }),
            SolverSpec::Nonsmooth(c) => SolverSpec::Nonsmooth(NonsmoothConfig { seed, ..c }),
        }
    }

    fn keeps_history(&self) -> bool {
        matches!(self, SolverSpec::Smooth(c) if c.refine != Refine::None)
    }
}

/// How the data are divided for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    /// Fit on everything, no held-out metrics.
    None,
    Split {
        train_fraction: f64,
    },
    Folds {
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: FileFormat,
    /// Signed files encode signs as 0/1.
    pub zero_one: bool,
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        data::load(&self.path, self.format, self.zero_one)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub model: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub evaluation: Evaluation,
    pub loss: LossSpec,
    pub solver: SolverSpec,
    pub seed: u64,
    pub outputs: Outputs,
    /// Record wall time in traces and metrics. Off makes every output a
    /// pure function of the configuration.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        match &self.solver {
            SolverSpec::Smooth(c) => {
                c.validate()?;
                if !self.loss.is_smooth() && c.l_override.is_none() {
                    return Err(Error::Config(format!(
                        "the {} loss is nonsmooth; use the nonsmooth solver",
                        self.loss.kind
                    )));
                }
            }
            SolverSpec::Nonsmooth(c) => {
                c.schedule(&self.loss)?;
            }
        }
        match self.evaluation {
            Evaluation::Split { train_fraction }
                if !(train_fraction > 0.0 && train_fraction < 1.0) =>
            {
                Err(Error::Config(format!(
                    "train fraction must lie in (0, 1), got {train_fraction}"
                )))
            }
            Evaluation::Folds { k } if k < 2 => {
                Err(Error::Config(format!("need at least 2 folds, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

/// One fit: the training part, the optional test part and the per-run seed.
#[derive(Debug, Clone)]
pub struct Run {
    pub label: Option<String>,
    pub train: ObservedMatrix,
    pub test: Option<ObservedMatrix>,
    pub seed: u64,
}

/// Divides `dataset` as `cfg` asks.
pub fn prepare_runs(dataset: &Dataset, evaluation: Evaluation, seed: u64) -> Result<Vec<Run>> {
    match evaluation {
        Evaluation::None => Ok(vec![Run {
            label: None,
            train: dataset.observed.clone(),
            test: None,
            seed,
        }]),
        Evaluation::Split { train_fraction } => {
            let (train, test) = data::split(&dataset.observed, train_fraction, seed)?;
            Ok(vec![Run {
                label: None,
                train,
                test: Some(test),
                seed,
            }])
        }
        Evaluation::Folds { k } => Ok(data::kfold(&dataset.observed, k, seed)?
            .into_iter()
            .enumerate()
            .map(|(f, (train, test))| Run {
                label: Some(format!("fold{f}")),
                train,
                test: Some(test),
                seed: derive_seed(seed, Stream::Folds, f as u64 + 1),
            })
            .collect()),
    }
}

/// `dir/name.ext` → `dir/name.<label>.ext`.
pub fn labeled_path(path: &Path, label: Option<&str>) -> PathBuf {
    let Some(label) = label else {
        return path.to_path_buf();
    };
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{label}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{label}"),
    };
    path.with_file_name(name)
}

/// Outcome of one fit.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub label: Option<String>,
    pub saved: SavedModel,
    pub trace: Vec<TraceRecord>,
    pub initial_objective: f64,
    pub train_objective: f64,
    /// `Σ_Ω (X − O)²` on the training entries.
    pub train_square_sum: f64,
    pub test: Option<TestMetrics>,
    pub elapsed_s: f64,
    /// Lowest training objective over the iterates (nonsmooth solver).
    pub best_objective: Option<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestMetrics {
    pub entries: usize,
    pub mabs: f64,
    pub rmse: f64,
    pub sign_accuracy: Option<f64>,
}

pub fn test_metrics(
    model: &LowRankModel,
    test: &ObservedMatrix,
    kind: DataKind,
) -> Result<TestMetrics> {
    Ok(TestMetrics {
        entries: test.nnz(),
        mabs: mabs(model, test)?,
        rmse: rmse(model, test)?,
        sign_accuracy: match kind {
            DataKind::Signed => Some(sign_accuracy(model, test)?),
            DataKind::Ratings => None,
        },
    })
}

fn square_sum(model: &LowRankModel, data: &ObservedMatrix) -> Result<f64> {
    let pred = observed_values(model, data)?;
    Ok(pred
        .iter()
        .zip(data.values())
        .map(|(p, o)| (p - o) * (p - o))
        .sum())
}

/// Fits one run, streaming trace rows into `trace_out` as they are produced.
pub fn fit_run<W: Write>(
    run: &Run,
    loss: &LossSpec,
    solver: SolverSpec,
    kind: DataKind,
    trace_out: Option<&mut TraceWriter<W>>,
) -> Result<RunOutcome> {
    let clock = Stopwatch::start();
    let initial_objective = loss.value(&vec![0.0; run.train.nnz()], run.train.values())?;
    let mut sink_err = None;
    let mut writer = trace_out;
    if let Some(w) = writer.as_deref_mut() {
        w.write(&TraceRecord::initial(initial_objective))?;
    }
    let mut observe = |rec: &TraceRecord| {
        if let (Some(w), None) = (writer.as_deref_mut(), &sink_err) {
            if let Err(e) = w.write(rec) {
                sink_err = Some(e);
            }
        }
    };
    let solver = solver.with_seed(run.seed);
    let (saved, trace, train_objective, best) = match solver {
        SolverSpec::Smooth(cfg) => {
            let fit = fit_smooth_with(&run.train, loss, &cfg, &mut observe)?;
            let obj = fit
                .trace
                .last()
                .map_or(fit.initial_objective, |r| r.objective);
            let mut saved = SavedModel::new(fit.model);
            if solver.keeps_history() {
                saved.history = Some(fit.history);
            }
            (saved, fit.trace, obj, None)
        }
        SolverSpec::Nonsmooth(cfg) => {
            let fit = fit_nonsmooth_with(&run.train, loss, &cfg, &mut observe)?;
            let obj = fit
                .trace
                .last()
                .map_or(fit.initial_objective, |r| r.objective);
            let best = Some((fit.best_iteration, fit.best_objective));
            (SavedModel::new(fit.model), fit.trace, obj, best)
        }
    };
    if let Some(e) = sink_err {
        return Err(e.into());
    }
    let test = run
        .test
        .as_ref()
        .map(|t| test_metrics(&saved.model, t, kind))
        .transpose()?;
    Ok(RunOutcome {
        label: run.label.clone(),
        train_square_sum: square_sum(&saved.model, &run.train)?,
        saved,
        trace,
        initial_objective,
        train_objective,
        test,
        elapsed_s: clock.elapsed_s(),
        best_objective: best,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<RunOutcome>,
    pub metrics: Value,
}

fn solver_json(solver: &SolverSpec) -> Map<String, Value> {
    let mut m = Map::new();
    match solver {
        SolverSpec::Smooth(c) => {
            m.insert("solver".into(), json!("smooth"));
            m.insert("refine".into(), json!(c.refine.to_string()));
            m.insert("rank".into(), json!(c.target_rank));
            m.insert("power_iters".into(), json!(c.power.iterations));
            m.insert("qn_max_iters".into(), json!(c.qn.max_iters));
        }
        SolverSpec::Nonsmooth(c) => {
            m.insert("solver".into(), json!("nonsmooth"));
            m.insert("max_iterations".into(), json!(c.iterations));
            m.insert("rank_budget".into(), json!(c.rank_budget));
            m.insert("nu".into(), json!(c.nu));
            m.insert("c1".into(), json!(c.c1));
            m.insert("c2".into(), json!(c.c2));
            m.insert("k_max".into(), json!(c.k_max));
            m.insert("rel_tol".into(), json!(c.rel_tol));
            m.insert("power_iters".into(), json!(c.power.iterations));
        }
    }
    m
}

fn summarize(key: &str, xs: &[f64], out: &mut Map<String, Value>) {
    let (mean, std) = mean_std(xs);
    out.insert(format!("{key}_mean"), json!(mean));
    out.insert(format!("{key}_std"), json!(std));
    out.insert(format!("{key}_runs"), json!(xs));
}

/// Flat JSON summary of a set of runs.
pub fn metrics_json(cfg: &ExperimentConfig, dataset: &Dataset, runs: &[RunOutcome]) -> Value {
    let mut m = Map::new();
    m.insert("data".into(), json!(dataset.provenance));
    m.insert("rows".into(), json!(dataset.observed.rows()));
    m.insert("cols".into(), json!(dataset.observed.cols()));
    m.insert("entries".into(), json!(dataset.observed.nnz()));
    m.insert("loss".into(), json!(cfg.loss.kind.to_string()));
    m.insert("ridge".into(), json!(cfg.loss.ridge));
    m.extend(solver_json(&cfg.solver));
    m.insert("seed".into(), json!(cfg.seed));
    m.insert("runs".into(), json!(runs.len()));
    let col = |f: &dyn Fn(&RunOutcome) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    summarize("train_objective", &col(&|r| r.train_objective), &mut m);
    if cfg.loss.kind == LossKind::Square {
        summarize("train_square_sum", &col(&|r| r.train_square_sum), &mut m);
    }
    summarize("final_rank", &col(&|r| r.saved.model.len() as f64), &mut m);
    summarize("iterations", &col(&|r| r.trace.len() as f64), &mut m);
    if runs.iter().all(|r| r.best_objective.is_some()) {
        summarize(
            "best_train_objective",
            &col(&|r| r.best_objective.unwrap().1),
            &mut m,
        );
    }
    let tests: Vec<TestMetrics> = runs.iter().filter_map(|r| r.test).collect();
    if !tests.is_empty() && tests.len() == runs.len() {
        summarize(
            "test_mabs",
            &tests.iter().map(|t| t.mabs).collect::<Vec<_>>(),
            &mut m,
        );
        summarize(
            "test_rmse",
            &tests.iter().map(|t| t.rmse).collect::<Vec<_>>(),
            &mut m,
        );
        let acc: Vec<f64> = tests.iter().filter_map(|t| t.sign_accuracy).collect();
        if acc.len() == tests.len() {
            summarize("test_sign_accuracy", &acc, &mut m);
        }
    }
    if cfg.timing {
        summarize("elapsed_s", &col(&|r| r.elapsed_s), &mut m);
    }
    Value::Object(m)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Loads the data, runs every fit, and writes the requested outputs. With
/// several folds, per-fold traces and models get a `.foldN` infix.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let dataset = cfg.dataset.load()?;
    run_on_dataset(cfg, &dataset)
}

pub fn run_on_dataset(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for run in prepare_runs(dataset, cfg.evaluation, cfg.seed)? {
        let label = run.label.as_deref();
        let outcome = match &cfg.outputs.trace {
            Some(path) => {
                let mut w = TraceWriter::new(create(&labeled_path(path, label))?, cfg.timing)?;
                fit_run(&run, &cfg.loss, cfg.solver, dataset.kind, Some(&mut w))?
            }
            None => fit_run::<std::io::Sink>(&run, &cfg.loss, cfg.solver, dataset.kind, None)?,
        };
        if let Some(path) = &cfg.outputs.model {
            let mut saved = outcome.saved.clone();
            saved.ids = Some((dataset.row_ids.clone(), dataset.col_ids.clone()));
            model_io::save(&labeled_path(path, label), &saved)?;
        }
        runs.push(outcome);
    }
    let metrics = metrics_json(cfg, dataset, &runs);
    if let Some(path) = &cfg.outputs.metrics {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &metrics).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(ExperimentResult { runs, metrics })
}

/// Held-out metrics of a saved model on a dataset, mapped through the
/// model's id tables when it has them.
pub fn evaluate(saved: &SavedModel, dataset: &Dataset) -> Result<TestMetrics> {
    let test = match &saved.ids {
        Some((rows, cols)) => dataset.remap(rows, cols)?,
        None => dataset.observed.clone(),
    };
    if (test.rows(), test.cols()) != (saved.model.rows(), saved.model.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{}, data are {}x{}",
            saved.model.rows(),
            saved.model.cols(),
            test.rows(),
            test.cols()
        )));
    }
    test_metrics(&saved.model, &test, dataset.kind)
}

/// One recomputed trace row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckedRow {
    pub iteration: usize,
    pub recorded: f64,
    pub recomputed: f64,
    pub rel_error: f64,
}

/// Default relative tolerance of [`trace_check`].
pub const TRACE_CHECK_TOL: f64 = 1e-8;

/// The iterate recorded by trace row `t`: coefficients from the history
/// when present, otherwise the first `rank` terms as stored.
pub fn iterate_at(saved: &SavedModel, iteration: usize, rank: usize) -> Result<LowRankModel> {
    let model = &saved.model;
    if iteration == 0 {
        return Ok(LowRankModel::zeros(model.rows(), model.cols()));
    }
    let theta: Vec<f64> = match &saved.history {
        Some(h) => h
            .get(iteration - 1)
            .ok_or_else(|| Error::ModelFormat(format!("no history for iteration {iteration}")))?
            .clone(),
        None => {
            if rank > model.len() {
                return Err(Error::ModelFormat(format!(
                    "trace rank {rank} exceeds the {} stored terms",
                    model.len()
                )));
            }
            model.thetas()[..rank].to_vec()
        }
    };
    if theta.len() != rank {
        return Err(Error::ModelFormat(format!(
            "iteration {iteration}: {} coefficients for rank {rank}",
            theta.len()
        )));
    }
    model.prefix_with(&theta)
}

/// Recomputes the objective of the trace rows `which` (all rows if empty)
/// from the saved model and the training data.
pub fn trace_check(
    trace_path: &Path,
    saved: &SavedModel,
    train: &ObservedMatrix,
    loss: &LossSpec,
    which: &[usize],
) -> Result<Vec<CheckedRow>> {
    let rows = read_trace(
        BufReader::new(File::open(trace_path)?),
        &trace_path.display().to_string(),
    )?;
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "{}: empty trace",
            trace_path.display()
        )));
    }
    let picked: Vec<usize> = if which.is_empty() {
        (0..rows.len()).collect()
    } else {
        which.iter().copied().filter(|&k| k < rows.len()).collect()
    };
    picked
        .into_iter()
        .map(|k| {
            let row = &rows[k];
            let x = iterate_at(saved, row.iteration, row.rank)?;
            let recomputed = loss.value(&observed_values(&x, train)?, train.values())?;
            let rel_error =
                (recomputed - row.objective).abs() / row.objective.abs().max(f64::MIN_POSITIVE);
            Ok(CheckedRow {
                iteration: row.iteration,
                recorded: row.objective,
                recomputed,
                rel_error,
            })
        })
        .collect()
}

/// First, middle and last row indices of a trace with `n` rows.
pub fn spot_rows(n: usize) -> Vec<usize> {
    let mut v = vec![0, n / 2, n.saturating_sub(1)];
    v.dedup();
    v
}
