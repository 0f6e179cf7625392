//! A quick battery of internal consistency checks, runnable from a release
//! binary.

use crate::loss::LossSpec;
use crate::model_io::{read_model, write_model, SavedModel};
use crate::nonsmooth::{fit_nonsmooth, NonsmoothConfig};
use crate::power::{rank1_svd, PowerConfig};
use crate::rng::{stream_rng, Stream};
use crate::smooth::{fit_smooth, Refine, SolverConfig};
use crate::sparse::{dot, LinearOperator, LowRankModel, ObservedMatrix, SparsePlusLowRankOp};
use crate::synthetic;

use rand::Rng;

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_model(rows: usize, cols: usize, terms: usize, seed: u64) -> LowRankModel {
    let mut rng = stream_rng(seed, Stream::Synthetic, 100);
    let mut m = LowRankModel::zeros(rows, cols);
    for _ in 0..terms {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut v: Vec<f64> = (0..cols).map(|_| rng.random::<f64>() - 0.5).collect();
        let (nu, nv) = (dot(&u, &u).sqrt(), dot(&v, &v).sqrt());
        u.iter_mut().for_each(|x| *x /= nu);
        v.iter_mut().for_each(|x| *x /= nv);
        m.push(rng.random::<f64>() * 4.0 - 2.0, u, v)
            .expect("unit vectors");
    }
    m
}

fn adjoint() -> Result<(), String> {
    for seed in 0..5 {
        let s = synthetic::random_observed(9, 7, 0.4, seed).map_err(|e| e.to_string())?;
        let h = random_model(9, 7, 3, seed);
        let op = SparsePlusLowRankOp::new(9, 7, Some(&s), Some(&h)).map_err(|e| e.to_string())?;
        let mut rng = stream_rng(seed, Stream::Synthetic, 101);
        let x: Vec<f64> = (0..7).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..9).map(|_| rng.random::<f64>() - 0.5).collect();
        let (mut ax, mut aty) = (vec![0.0; 9], vec![0.0; 7]);
        op.matvec(&x, &mut ax);
        op.rmatvec(&y, &mut aty);
        let (l, r) = (dot(&y, &ax), dot(&aty, &x));
        ensure((l - r).abs() <= 1e-10 * l.abs().max(1.0), || {
            format!("seed {seed}: {l} vs {r}")
        })?;
    }
    Ok(())
}

fn power_diagonal() -> Result<(), String> {
    let d = ObservedMatrix::new(2, 2, vec![(0, 0, 3.0), (1, 1, 1.0)]).map_err(|e| e.to_string())?;
    let t = rank1_svd(&d, &PowerConfig::default()).map_err(|e| e.to_string())?;
    ensure(
        (t.s - 3.0).abs() < 1e-8 && (t.u[0] - 1.0).abs() < 1e-8,
        || format!("{t:?}"),
    )
}

fn smooth_descent() -> Result<(), String> {
    for seed in 0..6 {
        let data = synthetic::random_observed(12, 10, 0.5, seed).map_err(|e| e.to_string())?;
        for refine in [Refine::Full, Refine::Economic, Refine::None] {
            let loss = if seed % 2 == 0 {
                LossSpec::square()
            } else {
                LossSpec::logistic()
            };
            let data = if seed % 2 == 0 {
                data.clone()
            } else {
                synthetic::signs(&data).map_err(|e| e.to_string())?
            };
            let l = loss.curvature().smoothness.unwrap_or(1.0);
            let cfg = SolverConfig {
                target_rank: 5,
                refine,
                seed,
                ..SolverConfig::default()
            };
            let fit = fit_smooth(&data, &loss, &cfg).map_err(|e| e.to_string())?;
            let mut prev = fit.initial_objective;
            for r in &fit.trace {
                let bound = prev - r.gamma * r.gamma * r.grad_norm_sq / (2.0 * l) + 1e-9;
                ensure(r.objective <= bound, || {
                    format!(
                        "seed {seed} {refine} t={}: {} > {bound}",
                        r.iteration, r.objective
                    )
                })?;
                prev = r.objective;
            }
        }
    }
    Ok(())
}

fn residual_contraction() -> Result<(), String> {
    for seed in 0..4 {
        let data = synthetic::random_observed(10, 8, 0.6, seed).map_err(|e| e.to_string())?;
        let cfg = NonsmoothConfig {
            iterations: 20,
            seed,
            ..NonsmoothConfig::default()
        };
        let fit = fit_nonsmooth(&data, &LossSpec::l1(), &cfg).map_err(|e| e.to_string())?;
        let mut prev = f64::INFINITY;
        for r in &fit.trace {
            let res = r.residual_sq.unwrap_or(f64::NAN);
            ensure(r.truncated || res <= cfg.nu * prev + 1e-9, || {
                format!("seed {seed} t={}: {res} > {} * {prev}", r.iteration, cfg.nu)
            })?;
            prev = res;
        }
    }
    Ok(())
}

fn gradient_fd() -> Result<(), String> {
    let mut rng = stream_rng(7, Stream::Synthetic, 102);
    let obs: Vec<f64> = (0..8)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let x: Vec<f64> = (0..8).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    for loss in [LossSpec::logistic(), LossSpec::square().with_ridge(0.3)] {
        let mut g = vec![0.0; 8];
        loss.gradient_into(&x, &obs, &mut g)
            .map_err(|e| e.to_string())?;
        for k in 0..8 {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += 1e-5;
            xm[k] -= 1e-5;
            let f = |p: &[f64]| loss.value(p, &obs).unwrap_or(f64::NAN);
            let fd = (f(&xp) - f(&xm)) / 2e-5;
            ensure((fd - g[k]).abs() <= 1e-6, || {
                format!("{loss} entry {k}: {fd} vs {}", g[k])
            })?;
        }
    }
    Ok(())
}

fn model_round_trip() -> Result<(), String> {
    let saved = SavedModel::new(random_model(5, 4, 3, 11));
    let mut buf = Vec::new();
    write_model(&mut buf, &saved).map_err(|e| e.to_string())?;
    let back = read_model(buf.as_slice()).map_err(|e| e.to_string())?;
    ensure(back.model == saved.model, || {
        "model changed in round trip".into()
    })
}

type CheckFn = fn() -> Result<(), String>;

/// Runs every check.
pub fn run() -> Vec<Check> {
    let checks: [(&'static str, CheckFn); 6] = [
        ("operator adjoint consistency", adjoint),
        ("power method on diag(3, 1)", power_diagonal),
        ("smooth solver per-step decrease", smooth_descent),
        ("nonsmooth residual contraction", residual_contraction),
        ("gradients vs finite differences", gradient_fd),
        ("model file round trip", model_round_trip),
    ];
    checks
        .into_iter()
        .map(|(name, f)| Check { name, outcome: f() })
        .collect()
}
