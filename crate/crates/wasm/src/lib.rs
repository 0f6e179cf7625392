//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string, so the page needs no generated typings.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use glrl::metrics::{mabs, rmse};
use glrl::nonsmooth::{fit_nonsmooth, NonsmoothConfig};
use glrl::sparse::ObservedMatrix;
use glrl::synthetic::{self, Dense};
use glrl::{fit_smooth, Error, LossSpec, Refine, SolverConfig};

const MAX_SIDE: usize = 400;

fn check_shape(rows: usize, cols: usize) -> Result<(), Error> {
    if rows == 0 || cols == 0 || rows > MAX_SIDE || cols > MAX_SIDE {
        return Err(Error::Config(format!(
            "matrix sides must lie in 1..={MAX_SIDE}"
        )));
    }
    Ok(())
}

/// Planted matrix split into a training pattern of the given density and
/// the complementary test entries.
fn instance(
    rows: usize,
    cols: usize,
    rank: usize,
    density: f64,
    noise: f64,
    seed: u64,
) -> Result<(Dense, ObservedMatrix, ObservedMatrix), Error> {
    check_shape(rows, cols)?;
    let truth = synthetic::planted(rows, cols, rank.max(1), seed);
    let train_mask = synthetic::mask(rows, cols, density, seed);
    let mut observed = vec![false; rows * cols];
    for &(i, j) in &train_mask {
        observed[i * cols + j] = true;
    }
    let test_mask: Vec<(usize, usize)> = synthetic::full_mask(rows, cols)
        .into_iter()
        .filter(|&(i, j)| !observed[i * cols + j])
        .collect();
    let train = synthetic::observe(&truth, &train_mask, noise, seed)?;
    let test = synthetic::observe(&truth, &test_mask, 0.0, seed)?;
    Ok((truth, train, test))
}

/// Square-loss completion with each refinement mode.
pub fn compare_refinements(
    rows: usize,
    cols: usize,
    true_rank: usize,
    density: f64,
    noise: f64,
    fit_rank: usize,
    seed: u64,
) -> Result<Value, Error> {
    let (_, train, test) = instance(rows, cols, true_rank, density, noise, seed)?;
    let loss = LossSpec::square();
    let mut runs = Vec::new();
    for refine in [Refine::Full, Refine::Economic, Refine::None] {
        let cfg = SolverConfig {
            target_rank: fit_rank,
            refine,
            seed,
            ..SolverConfig::default()
        };
        let fit = fit_smooth(&train, &loss, &cfg)?;
        let objective: Vec<f64> = std::iter::once(fit.initial_objective)
            .chain(fit.trace.iter().map(|r| r.objective))
            .collect();
        runs.push(json!({
            "refine": refine.to_string(),
            "objective": objective,
            "gamma": fit.trace.iter().map(|r| r.gamma).collect::<Vec<_>>(),
            "test_rmse": if test.nnz() > 0 { Some(rmse(&fit.model, &test)?) } else { None },
        }));
    }
    Ok(json!({ "train_entries": train.nnz(), "test_entries": test.nnz(), "runs": runs }))
}

/// ℓ1 nonsmooth fit against the square-loss fit on data with gross outliers.
#[allow(clippy::too_many_arguments)]
pub fn robust_fit(
    rows: usize,
    cols: usize,
    true_rank: usize,
    density: f64,
    outliers: f64,
    iterations: usize,
    c2: f64,
    seed: u64,
) -> Result<Value, Error> {
    let (_, clean, test) = instance(rows, cols, true_rank, density, 0.0, seed)?;
    let train = synthetic::corrupt(&clean, outliers, 10.0, seed)?;
    let cfg = NonsmoothConfig {
        iterations,
        c2,
        seed,
        ..NonsmoothConfig::default()
    };
    let l1 = fit_nonsmooth(&train, &LossSpec::l1(), &cfg)?;
    let sq = fit_smooth(
        &train,
        &LossSpec::square(),
        &SolverConfig {
            target_rank: true_rank.max(1),
            seed,
            ..SolverConfig::default()
        },
    )?;
    let eval = |m| -> Result<Option<f64>, Error> {
        if test.nnz() > 0 {
            Ok(Some(mabs(m, &test)?))
        } else {
            Ok(None)
        }
    };
    Ok(json!({
        "objective": l1.trace.iter().map(|r| r.objective).collect::<Vec<_>>(),
        "best_so_far": l1.running_min(),
        "inner_iters": l1.trace.iter().map(|r| r.inner_iters).collect::<Vec<_>>(),
        "rank": l1.model.len(),
        "l1_test_mabs": eval(&l1.best_model)?,
        "square_test_mabs": eval(&sq.model)?,
    }))
}

/// Truth, observation mask and reconstruction as row-major grids.
pub fn reconstruct(
    rows: usize,
    cols: usize,
    true_rank: usize,
    density: f64,
    fit_rank: usize,
    seed: u64,
) -> Result<Value, Error> {
    let (truth, train, _) = instance(rows, cols, true_rank, density, 0.0, seed)?;
    let cfg = SolverConfig {
        target_rank: fit_rank,
        seed,
        ..SolverConfig::default()
    };
    let fit = fit_smooth(&train, &LossSpec::square(), &cfg)?;
    let mut mask = vec![0u8; rows * cols];
    for (i, j, _) in train.iter() {
        mask[i * cols + j] = 1;
    }
    let recon: Vec<f64> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| fit.model.entry(i, j))
        .collect();
    let err = recon
        .iter()
        .zip(&truth.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    Ok(json!({
        "rows": rows,
        "cols": cols,
        "truth": truth.data,
        "mask": mask,
        "reconstruction": recon,
        "relative_error": (err / truth.frobenius_sq()).sqrt(),
    }))
}

fn to_js(r: Result<Value, Error>) -> Result<String, JsValue> {
    r.map(|v| v.to_string())
        .map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = compareRefinements)]
pub fn compare_refinements_js(
    rows: usize,
    cols: usize,
    true_rank: usize,
    density: f64,
    noise: f64,
    fit_rank: usize,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(compare_refinements(
        rows,
        cols,
        true_rank,
        density,
        noise,
        fit_rank,
        seed as u64,
    ))
}

#[wasm_bindgen(js_name = robustFit)]
#[allow(clippy::too_many_arguments)]
pub fn robust_fit_js(
    rows: usize,
    cols: usize,
    true_rank: usize,
    density: f64,
    outliers: f64,
    iterations: usize,
    c2: f64,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(robust_fit(
        rows,
        cols,
        true_rank,
        density,
        outliers,
        iterations,
        c2,
        seed as u64,
    ))
}

#[wasm_bindgen(js_name = reconstruct)]
pub fn reconstruct_js(
    rows: usize,
    cols: usize,
    true_rank: usize,
    density: f64,
    fit_rank: usize,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(reconstruct(
        rows,
        cols,
        true_rank,
        density,
        fit_rank,
        seed as u64,
    ))
}
