//! Greedy low-rank learning for smooth convex objectives.
//!
//! Each iteration takes the leading singular pair `(u_t, s_t, v_t)` of the
//! sparse gradient, appends `−(s_t/L) u_t v_tᵀ` and then optionally refits
//! the coefficients:
//!
//! * [`Refine::Full`] re-optimizes every `θ_i` over the current basis;
//! * [`Refine::Economic`] fits one global scale on the old terms and one
//!   coefficient on the new term;
//! * [`Refine::None`] keeps the plain gradient step.
//!
//! Refinements are warm-started at the gradient step and rejected if they do
//! not improve on it, so every variant enjoys the same per-iteration decrease
//! `f(X_t) ≤ f(X_{t−1}) − s_t²/(2L)`. With the square loss and full
//! refinement the iterates are those of rank-one matrix pursuit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::loss::{LossKind, LossSpec};
use crate::power::{rank1_svd, PowerConfig};
use crate::qn::{qn_minimize, QnConfig};
use crate::rng::{derive_seed, Stream};
use crate::sparse::{dot, LowRankModel, ObservedMatrix};
use crate::trace::{Stopwatch, TraceRecord};

/// Relative size of `s_t / s_1` below which the gradient counts as zero.
const STALL_RATIO: f64 = 1e-12;
/// Reduced gradients below this leave the warm start untouched.
const STATIONARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Refine {
    Full,
    Economic,
    None,
}

impl fmt::Display for Refine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Refine::Full => "full",
            Refine::Economic => "economic",
            Refine::None => "none",
        })
    }
}

impl FromStr for Refine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Refine::Full),
            "economic" => Ok(Refine::Economic),
            "none" => Ok(Refine::None),
            other => Err(Error::Config(format!("unknown refinement {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Target rank `r`; the solver runs at most `r` iterations.
    pub target_rank: usize,
    pub refine: Refine,
    pub qn: QnConfig,
    pub power: PowerConfig,
    /// Replaces the loss's smoothness constant in the step `−s_t/L`.
    pub l_override: Option<f64>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            target_rank: 10,
            refine: Refine::Full,
            qn: QnConfig::default(),
            power: PowerConfig::default(),
            l_override: None,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_rank == 0 {
            return Err(Error::Config("target rank must be at least 1".into()));
        }
        if self.qn.max_iters == 0 {
            return Err(Error::Config(
                "quasi-Newton iterations must be at least 1".into(),
            ));
        }
        if let Some(l) = self.l_override {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!(
                    "L override must be positive, got {l}"
                )));
            }
        }
        self.power.validate()
    }
}

/// Output of [`fit_smooth`].
#[derive(Debug, Clone)]
pub struct SmoothFit {
    pub model: LowRankModel,
    /// One record per completed iteration (`t ≥ 1`).
    pub trace: Vec<TraceRecord>,
    /// `f(X_0) = f(0)`
    pub initial_objective: f64,
    /// Coefficients of `X_t` after iteration `t`; `X_t` uses the first
    /// `history[t−1].len()` terms of `model`.
    pub history: Vec<Vec<f64>>,
    /// Stopped before `target_rank` iterations because the gradient vanished.
    pub converged: bool,
}

/// Outcome of a coefficient refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub inner_iters: usize,
    /// The candidate was worse than (or not finite relative to) the warm
    /// start and was discarded.
    pub fallback: bool,
}

/// Outcome of the economic two-coefficient refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomicRefinement {
    /// Multiplier on the existing coefficients.
    pub scale: f64,
    /// Coefficient of the new term.
    pub rho: f64,
    pub objective: f64,
    pub inner_iters: usize,
    pub fallback: bool,
}

/// Minimizes `c ↦ f(Σ_k c_k col_k)` over the coefficient vector, where each
/// column is a vector of observed-entry values. `normal` optionally supplies
/// `(Gram, colsᵀ O)` for the square loss.
fn refine_columns(
    columns: &[&[f64]],
    x0: &[f64],
    data: &ObservedMatrix,
    loss: &LossSpec,
    qn: &QnConfig,
    normal: Option<(&[f64], &[f64])>,
) -> Result<Refinement> {
    let obs = data.values();
    let nnz = obs.len();
    let mut pred = vec![0.0; nnz];
    let mut grad = vec![0.0; nnz];

    let mut eval = |c: &[f64], out: &mut [f64]| -> f64 {
        pred.iter_mut().for_each(|p| *p = 0.0);
        for (ck, col) in c.iter().zip(columns) {
            pred.iter_mut()
                .zip(col.iter())
                .for_each(|(p, b)| *p += ck * b);
        }
        let Ok(f) = loss.value(&pred, obs) else {
            return f64::NAN;
        };
        if loss.gradient_into(&pred, obs, &mut grad).is_err() {
            return f64::NAN;
        }
        for (o, col) in out.iter_mut().zip(columns) {
            *o = dot(&grad, col);
        }
        f
    };

    let mut g0 = vec![0.0; x0.len()];
    let f0 = eval(x0, &mut g0);
    let stationary = g0.iter().all(|g| g.abs() < STATIONARY_TOL);
    if !f0.is_finite() || stationary {
        return Ok(Refinement {
            theta: x0.to_vec(),
            objective: f0,
            inner_iters: 0,
            fallback: !f0.is_finite(),
        });
    }

    let d = x0.len();
    let closed_form = if loss.kind == LossKind::Square {
        let built;
        let (gram, rhs) = match normal {
            Some(n) => n,
            None => {
                let mut gram = vec![0.0; d * d];
                let mut rhs = vec![0.0; d];
                for a in 0..d {
                    rhs[a] = dot(columns[a], obs);
                    for b in 0..=a {
                        let g = dot(columns[a], columns[b]);
                        gram[a * d + b] = g;
                        gram[b * d + a] = g;
                    }
                }
                built = (gram, rhs);
                (built.0.as_slice(), built.1.as_slice())
            }
        };
        // ½‖p − o‖² + (ridge/2)‖p‖²  ⇒  (1 + ridge) G c = colsᵀ o
        let scaled: Vec<f64> = gram.iter().map(|g| g * (1.0 + loss.ridge)).collect();
        solve_spd(&scaled, rhs)
    } else {
        None
    };

    let (candidate, inner_iters) = match closed_form {
        Some(c) => (c, 1),
        None => {
            let res = qn_minimize(&mut eval, x0, qn);
            (res.x, res.iterations)
        }
    };
    let mut scratch = vec![0.0; d];
    let f1 = eval(&candidate, &mut scratch);
    if f1.is_finite() && f1 <= f0 {
        Ok(Refinement {
            theta: candidate,
            objective: f1,
            inner_iters,
            fallback: false,
        })
    } else {
        Ok(Refinement {
            theta: x0.to_vec(),
            objective: f0,
            inner_iters,
            fallback: true,
        })
    }
}

fn check_shapes(model: &LowRankModel, data: &ObservedMatrix) -> Result<()> {
    if model.rows() != data.rows() || model.cols() != data.cols() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{}, data is {}x{}",
            model.rows(),
            model.cols(),
            data.rows(),
            data.cols()
        )));
    }
    Ok(())
}

/// Re-optimizes all coefficients over the basis `{u_i v_iᵀ}` of `basis`
/// (its own coefficients are ignored), starting from `theta0`.
///
/// The square loss is solved in closed form through the normal equations;
/// other losses use [`qn_minimize`]. The result is never worse than `theta0`.
pub fn refine_full(
    basis: &LowRankModel,
    theta0: &[f64],
    data: &ObservedMatrix,
    loss: &LossSpec,
    qn: &QnConfig,
) -> Result<Refinement> {
    check_shapes(basis, data)?;
    if basis.is_empty() {
        return Err(Error::Config("refinement needs a non-empty basis".into()));
    }
    if theta0.len() != basis.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} basis terms",
            theta0.len(),
            basis.len()
        )));
    }
    let proj: Vec<Vec<f64>> = basis
        .terms()
        .iter()
        .map(|t| data.project_rank_one(&t.u, &t.v))
        .collect();
    let cols: Vec<&[f64]> = proj.iter().map(Vec::as_slice).collect();
    refine_columns(&cols, theta0, data, loss, qn, None)
}

/// Fits `X = scale · model + rho · u vᵀ`, warm-started at `(1, rho0)`.
///
/// With an empty `model` this is [`refine_full`] on the single new term and
/// `scale` is reported as 1.
pub fn refine_economic(
    model: &LowRankModel,
    new_term: (&[f64], &[f64], f64),
    data: &ObservedMatrix,
    loss: &LossSpec,
    qn: &QnConfig,
) -> Result<EconomicRefinement> {
    check_shapes(model, data)?;
    let (u, v, rho0) = new_term;
    if u.len() != data.rows() || v.len() != data.cols() {
        return Err(Error::DimensionMismatch(
            "new term does not match the data shape".into(),
        ));
    }
    let new_col = data.project_rank_one(u, v);
    let old = crate::sparse::observed_values(model, data)?;
    economic_columns(model.is_empty(), &old, &new_col, rho0, data, loss, qn)
}

fn economic_columns(
    empty: bool,
    old: &[f64],
    new_col: &[f64],
    rho0: f64,
    data: &ObservedMatrix,
    loss: &LossSpec,
    qn: &QnConfig,
) -> Result<EconomicRefinement> {
    if empty {
        let r = refine_columns(&[new_col], &[rho0], data, loss, qn, None)?;
        return Ok(EconomicRefinement {
            scale: 1.0,
            rho: r.theta[0],
            objective: r.objective,
            inner_iters: r.inner_iters,
            fallback: r.fallback,
        });
    }
    let r = refine_columns(&[old, new_col], &[1.0, rho0], data, loss, qn, None)?;
    Ok(EconomicRefinement {
        scale: r.theta[0],
        rho: r.theta[1],
        objective: r.objective,
        inner_iters: r.inner_iters,
        fallback: r.fallback,
    })
}

/// Normal equations of the square loss over the growing basis.
#[derive(Default)]
struct NormalCache {
    gram: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl NormalCache {
    fn push(&mut self, proj: &[Vec<f64>], obs: &[f64]) {
        let new = proj.last().expect("basis is non-empty");
        let row: Vec<f64> = proj.iter().map(|b| dot(b, new)).collect();
        for (k, g) in self.gram.iter_mut().enumerate() {
            g.push(row[k]);
        }
        self.gram.push(row);
        self.rhs.push(dot(new, obs));
    }

    fn flat(&self) -> Vec<f64> {
        self.gram.iter().flatten().copied().collect()
    }
}

/// Runs the smooth solver from `X_0 = 0`.
pub fn fit_smooth(data: &ObservedMatrix, loss: &LossSpec, cfg: &SolverConfig) -> Result<SmoothFit> {
    fit_smooth_with(data, loss, cfg, |_| {})
}

/// [`fit_smooth`] with an observer called after every iteration.
pub fn fit_smooth_with<F>(
    data: &ObservedMatrix,
    loss: &LossSpec,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<SmoothFit>
where
    F: FnMut(&TraceRecord),
{
    cfg.validate()?;
    loss.validate()?;
    if data.nnz() == 0 {
        return Err(Error::Data("no observed entries".into()));
    }
    let lipschitz = match (cfg.l_override, loss.curvature().smoothness) {
        (Some(l), _) => l,
        (None, Some(l)) => l,
        (None, None) => {
            return Err(Error::Config(format!(
                "the {} loss is nonsmooth; use the nonsmooth solver",
                loss.kind
            )))
        }
    };

    let clock = Stopwatch::start();
    let obs = data.values();
    let nnz = data.nnz();
    let mut model = LowRankModel::zeros(data.rows(), data.cols());
    let mut pred = vec![0.0; nnz];
    let initial_objective = loss.value(&pred, obs)?;
    if !initial_objective.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }

    let keep_basis = cfg.refine == Refine::Full;
    let mut proj: Vec<Vec<f64>> = Vec::new();
    let mut normal = NormalCache::default();
    let mut grad = vec![0.0; nnz];
    let mut trace = Vec::with_capacity(cfg.target_rank);
    let mut history = Vec::with_capacity(cfg.target_rank);
    let mut first_s = None;
    let mut converged = false;

    for t in 1..=cfg.target_rank {
        loss.gradient_into(&pred, obs, &mut grad)?;
        let g = data.with_values(std::mem::take(&mut grad))?;
        let grad_norm_sq = g.frobenius_sq();
        let power = cfg
            .power
            .with_seed(derive_seed(cfg.seed, Stream::Power, t as u64));
        let triple = match rank1_svd(&g, &power) {
            Ok(tr) => tr,
            Err(Error::ZeroOperator) => {
                converged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        grad = g.values().to_vec();
        let s = triple.s;
        let s1 = *first_s.get_or_insert(s);
        if s < STALL_RATIO * s1 {
            converged = true;
            break;
        }
        let gamma = s / grad_norm_sq.sqrt();
        let step = -s / lipschitz;
        let col = data.project_rank_one(&triple.u, &triple.v);
        model.push(step, triple.u, triple.v)?;

        let (objective, inner_iters, fallback) = match cfg.refine {
            Refine::None => {
                pred.iter_mut().zip(&col).for_each(|(p, b)| *p += step * b);
                (loss.value(&pred, obs)?, 0, false)
            }
            Refine::Economic => {
                let r = economic_columns(t == 1, &pred, &col, step, data, loss, &cfg.qn)?;
                let mut theta = model.thetas();
                let last = theta.len() - 1;
                theta[..last].iter_mut().for_each(|x| *x *= r.scale);
                theta[last] = r.rho;
                model.set_thetas(&theta)?;
                pred.iter_mut()
                    .zip(&col)
                    .for_each(|(p, b)| *p = r.scale * *p + r.rho * b);
                (loss.value(&pred, obs)?, r.inner_iters, r.fallback)
            }
            Refine::Full => {
                proj.push(col);
                let cols: Vec<&[f64]> = proj.iter().map(Vec::as_slice).collect();
                let flat;
                let normal_eq = if loss.kind == LossKind::Square {
                    normal.push(&proj, obs);
                    flat = normal.flat();
                    Some((flat.as_slice(), normal.rhs.as_slice()))
                } else {
                    None
                };
                let r = refine_columns(&cols, &model.thetas(), data, loss, &cfg.qn, normal_eq)?;
                model.set_thetas(&r.theta)?;
                pred.iter_mut().for_each(|p| *p = 0.0);
                for (c, b) in r.theta.iter().zip(&proj) {
                    pred.iter_mut().zip(b).for_each(|(p, bi)| *p += c * bi);
                }
                (loss.value(&pred, obs)?, r.inner_iters, r.fallback)
            }
        };
        if !objective.is_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        if !keep_basis {
            proj.clear();
        }

        let rec = TraceRecord {
            iteration: t,
            objective,
            s,
            gamma,
            rank: model.len(),
            inner_iters,
            elapsed_s: clock.elapsed_s(),
            grad_norm_sq,
            residual_sq: None,
            truncated: false,
            refine_fallback: fallback,
        };
        observer(&rec);
        trace.push(rec);
        history.push(model.thetas());
    }

    Ok(SmoothFit {
        model,
        trace,
        initial_objective,
        history,
        converged,
    })
}
