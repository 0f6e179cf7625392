//! Greedy low-rank learning for nonsmooth convex objectives.
//!
//! Iteration `t` takes a subgradient `g_t` on Ω, approximates it by a rank-k
//! matrix `h_t` (grown by deflation until `‖g_t − h_t‖² ≤ ν‖g_{t−1} − h_{t−1}‖²`)
//! and steps `X_t = X_{t−1} − η_t h_t` with `η_t = c₁/t` (strongly convex) or
//! `c₂/√t` (general convex). Coefficients are never refit, so the iterate is
//! exactly the list of appended terms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::power::{greedy_rank_k, PowerConfig};
use crate::rng::{derive_seed, Stream};
use crate::sparse::{LowRankModel, ObservedMatrix};
use crate::trace::{Stopwatch, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    StronglyConvex,
    GeneralConvex,
}

impl FromStr for StepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strongly_convex" | "strong" => Ok(StepMode::StronglyConvex),
            "general_convex" | "general" => Ok(StepMode::GeneralConvex),
            other => Err(Error::Config(format!("unknown step mode {other:?}"))),
        }
    }
}

impl fmt::Display for StepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepMode::StronglyConvex => "strongly_convex",
            StepMode::GeneralConvex => "general_convex",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonsmoothConfig {
    /// Outer iterations `T`.
    pub iterations: usize,
    /// `None` picks strongly convex iff the loss reports `μ > 0`.
    pub mode: Option<StepMode>,
    /// `None` means `1/μ`.
    pub c1: Option<f64>,
    pub c2: f64,
    pub nu: f64,
    /// Cap on deflations per outer iteration.
    pub k_max: usize,
    pub power: PowerConfig,
    pub seed: u64,
    /// Stop before an update would push the term count past this.
    pub rank_budget: Option<usize>,
    /// Stop once `|f_{t−1} − f_t| / |f_{t−1}|` drops below this.
    pub rel_tol: Option<f64>,
}

impl Default for NonsmoothConfig {
    fn default() -> Self {
        NonsmoothConfig {
            iterations: 100,
            mode: None,
            c1: None,
            c2: 0.05,
            nu: 0.99,
            k_max: 10,
            power: PowerConfig::default(),
            seed: 0,
            rank_budget: None,
            rel_tol: None,
        }
    }
}

/// Resolved step-size rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub mode: StepMode,
    pub c1: f64,
    pub c2: f64,
}

impl StepSchedule {
    /// `η_t`
    pub fn step(&self, t: usize) -> f64 {
        stepsize(t, self)
    }
}

/// `c₁/t` or `c₂/√t`, for `t ≥ 1`.
pub fn stepsize(t: usize, schedule: &StepSchedule) -> f64 {
    assert!(t >= 1, "step sizes are defined for t >= 1");
    match schedule.mode {
        StepMode::StronglyConvex => schedule.c1 / t as f64,
        StepMode::GeneralConvex => schedule.c2 / (t as f64).sqrt(),
    }
}

impl NonsmoothConfig {
    /// Validates the configuration against `loss` and fixes the step rule.
    pub fn schedule(&self, loss: &LossSpec) -> Result<StepSchedule> {
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::Config(format!(
                "nu must lie in (0, 1), got {}",
                self.nu
            )));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if !(self.c2 > 0.0 && self.c2.is_finite()) {
            return Err(Error::Config(format!(
                "c2 must be positive, got {}",
                self.c2
            )));
        }
        if let Some(tol) = self.rel_tol {
            if !(tol >= 0.0) {
                return Err(Error::Config(format!(
                    "relative tolerance must be non-negative, got {tol}"
                )));
            }
        }
        self.power.validate()?;
        let mu = loss.curvature().strong_convexity;
        let mode = self.mode.unwrap_or(if mu > 0.0 {
            StepMode::StronglyConvex
        } else {
            StepMode::GeneralConvex
        });
        let c1 = match mode {
            StepMode::GeneralConvex => self.c1.unwrap_or(0.0),
            StepMode::StronglyConvex => {
                if !(mu > 0.0) {
                    return Err(Error::Config(
                        "strongly convex steps need a loss with μ > 0 (add a ridge)".into(),
                    ));
                }
                let c1 = self.c1.unwrap_or(1.0 / mu);
                if !(c1 * mu >= 1.0 - 1e-12) || !c1.is_finite() {
                    return Err(Error::Config(format!(
                        "c1 = {c1} violates c1 >= 1/mu = {}",
                        1.0 / mu
                    )));
                }
                c1
            }
        };
        Ok(StepSchedule {
            mode,
            c1,
            c2: self.c2,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Iterations,
    /// The subgradient vanished: `X_t` is optimal.
    ZeroSubgradient,
    RankBudget,
    RelativeChange,
}

#[derive(Debug, Clone)]
pub struct NonsmoothFit {
    /// `X_T`
    pub model: LowRankModel,
    pub trace: Vec<TraceRecord>,
    /// Lowest-objective iterate among `X_0, …, X_T`.
    pub best_model: LowRankModel,
    pub best_objective: f64,
    pub best_iteration: usize,
    pub initial_objective: f64,
    pub schedule: StepSchedule,
    pub stop: StopReason,
}

impl NonsmoothFit {
    /// `min_{s ≤ t} f(X_s)` for `t = 0..=T`.
    pub fn running_min(&self) -> Vec<f64> {
        let mut best = self.initial_objective;
        std::iter::once(best)
            .chain(self.trace.iter().map(|r| {
                best = best.min(r.objective);
                best
            }))
            .collect()
    }
}

pub fn fit_nonsmooth(
    data: &ObservedMatrix,
    loss: &LossSpec,
    cfg: &NonsmoothConfig,
) -> Result<NonsmoothFit> {
    fit_nonsmooth_with(data, loss, cfg, |_| {})
}

/// [`fit_nonsmooth`] with an observer called after every iteration.
pub fn fit_nonsmooth_with<F>(
    data: &ObservedMatrix,
    loss: &LossSpec,
    cfg: &NonsmoothConfig,
    mut observer: F,
) -> Result<NonsmoothFit>
where
    F: FnMut(&TraceRecord),
{
    loss.validate()?;
    let schedule = cfg.schedule(loss)?;
    if data.nnz() == 0 {
        return Err(Error::Data("no observed entries".into()));
    }
    let clock = Stopwatch::start();
    let obs = data.values();
    let mut model = LowRankModel::zeros(data.rows(), data.cols());
    let mut pred = vec![0.0; data.nnz()];
    let mut grad = vec![0.0; data.nnz()];
    let initial_objective = loss.value(&pred, obs)?;
    if !initial_objective.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut best_model = model.clone();
    let mut best_objective = initial_objective;
    let mut best_iteration = 0;
    let mut prev_objective = initial_objective;
    let mut prev_residual_sq = f64::INFINITY;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut stop = StopReason::Iterations;

    for t in 1..=cfg.iterations {
        let eta = schedule.step(t);
        loss.gradient_into(&pred, obs, &mut grad)?;
        let g = data.with_values(grad.clone())?;
        let grad_norm_sq = g.frobenius_sq();
        let power = cfg
            .power
            .with_seed(derive_seed(cfg.seed, Stream::Power, t as u64));
        let approx = greedy_rank_k(&g, prev_residual_sq, cfg.nu, &power, cfg.k_max)?;
        if approx.h.is_empty() {
            stop = StopReason::ZeroSubgradient;
            break;
        }
        if let Some(budget) = cfg.rank_budget {
            if model.len() + approx.rank() > budget {
                stop = StopReason::RankBudget;
                break;
            }
        }
        let s = approx.h.terms()[0].theta;
        let k = approx.rank();
        for term in approx.h.terms() {
            let coef = -eta * term.theta;
            let (ri, ci) = (data.row_indices(), data.col_indices());
            for (e, p) in pred.iter_mut().enumerate() {
                *p += coef * term.u[ri[e] as usize] * term.v[ci[e] as usize];
            }
            model.push(coef, term.u.clone(), term.v.clone())?;
        }
        let objective = loss.value(&pred, obs)?;
        if !objective.is_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        let rec = TraceRecord {
            iteration: t,
            objective,
            s,
            gamma: s / grad_norm_sq.sqrt(),
            rank: model.len(),
            inner_iters: k,
            elapsed_s: clock.elapsed_s(),
            grad_norm_sq,
            residual_sq: Some(approx.residual_sq),
            truncated: approx.truncated,
            refine_fallback: false,
        };
        observer(&rec);
        trace.push(rec);
        prev_residual_sq = approx.residual_sq;

        if objective < best_objective {
            best_objective = objective;
            best_iteration = t;
            best_model = model.clone();
        }
        if let Some(tol) = cfg.rel_tol {
            let change =
                (prev_objective - objective).abs() / prev_objective.abs().max(f64::MIN_POSITIVE);
            if change < tol {
                stop = StopReason::RelativeChange;
                break;
            }
        }
        prev_objective = objective;
    }

    Ok(NonsmoothFit {
        model,
        trace,
        best_model,
        best_objective,
        best_iteration,
        initial_objective,
        schedule,
        stop,
    })
}
