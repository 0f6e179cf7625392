//! Limited-memory BFGS with a weak Wolfe line search, used for the
//! low-dimensional coefficient refinements.

use std::collections::VecDeque;

use crate::sparse::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnConfig {
    pub max_iters: usize,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Stop once `‖∇‖∞` falls below this.
    pub grad_tol: f64,
}

impl Default for QnConfig {
    fn default() -> Self {
        QnConfig {
            max_iters: 5,
            memory: 5,
            grad_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QnResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// The returned point is strictly better than `x0`.
    pub improved: bool,
}

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MAX_LINE_SEARCH: usize = 60;

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `eval`, which returns `f(x)` and writes `∇f(x)` into its second
/// argument. Returns the best point seen; `x0` itself if nothing finite
/// improves on it.
pub fn qn_minimize<F>(mut eval: F, x0: &[f64], cfg: &QnConfig) -> QnResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; d];
    let f0 = eval(&x, &mut g);
    let mut f = f0;
    let mut iterations = 0;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return QnResult {
            x,
            value: f0,
            iterations,
            improved: false,
        };
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut dir = vec![0.0; d];
    let mut x_new = vec![0.0; d];
    let mut g_new = vec![0.0; d];
    let mut alpha = vec![0.0; cfg.memory.max(1)];

    while iterations < cfg.max_iters && inf_norm(&g) >= cfg.grad_tol {
        // two-loop recursion: dir = −H ∇f
        dir.iter_mut().zip(&g).for_each(|(q, gi)| *q = *gi);
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &dir);
            dir.iter_mut()
                .zip(y)
                .for_each(|(q, yi)| *q -= alpha[k] * yi);
        }
        if let Some((s, y, _)) = pairs.back() {
            let h0 = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|q| *q *= h0);
        }
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            dir.iter_mut()
                .zip(s)
                .for_each(|(q, si)| *q += (alpha[k] - beta) * si);
        }
        dir.iter_mut().for_each(|q| *q = -*q);

        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            pairs.clear();
            dir.iter_mut().zip(&g).for_each(|(q, gi)| *q = -gi);
            slope = -dot(&g, &g);
        }

        // weak Wolfe: bisect on Armijo failures, expand on curvature failures
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut step = 1.0;
        let mut accepted: Option<(f64, f64)> = None;
        for _ in 0..MAX_LINE_SEARCH {
            x_new
                .iter_mut()
                .zip(&x)
                .zip(&dir)
                .for_each(|((xn, xi), di)| *xn = xi + step * di);
            let fv = eval(&x_new, &mut g_new);
            let finite = fv.is_finite() && g_new.iter().all(|v| v.is_finite());
            if !finite || fv > f + ARMIJO * step * slope {
                hi = step;
                step = 0.5 * (lo + hi);
            } else if dot(&g_new, &dir) < CURVATURE * slope {
                accepted = Some((step, fv));
                lo = step;
                step = if hi.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    2.0 * step
                };
            } else {
                accepted = Some((step, fv));
                break;
            }
        }
        iterations += 1;
        let Some((step, fv)) = accepted else { break };
        x_new
            .iter_mut()
            .zip(&x)
            .zip(&dir)
            .for_each(|((xn, xi), di)| *xn = xi + step * di);
        if eval(&x_new, &mut g_new) != fv {
            break;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && cfg.memory > 0 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = fv;
    }

    if f < f0 {
        QnResult {
            x,
            value: f,
            iterations,
            improved: true,
        }
    } else {
        QnResult {
            x: x0.to_vec(),
            value: f0,
            iterations,
            improved: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_isotropic_quadratic() {
        let a = [1.5, -2.0, 0.25, 4.0];
        let res = qn_minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..4 {
                    g[i] = x[i] - a[i];
                    f += 0.5 * g[i] * g[i];
                }
                f
            },
            &[0.0; 4],
            &QnConfig::default(),
        );
        for i in 0..4 {
            assert!((res.x[i] - a[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn minimizer_is_a_fixed_point() {
        let x0 = [3.0, -1.0];
        let res = qn_minimize(
            |x, g| {
                g[0] = x[0] - 3.0;
                g[1] = 2.0 * (x[1] + 1.0);
                0.5 * g[0] * g[0] + 0.25 * g[1] * g[1]
            },
            &x0,
            &QnConfig::default(),
        );
        assert_eq!(res.x, x0.to_vec());
        assert_eq!(res.iterations, 0);
        assert!(!res.improved);
    }

    #[test]
    fn non_finite_start_returns_start() {
        let res = qn_minimize(
            |_, g| {
                g[0] = 1.0;
                f64::NAN
            },
            &[1.0],
            &QnConfig::default(),
        );
        assert_eq!(res.x, vec![1.0]);
        assert!(!res.improved);
    }

    #[test]
    fn shrinks_past_non_finite_region() {
        // f = -log(1 - x), finite only for x < 1
        let res = qn_minimize(
            |x, g| {
                if x[0] >= 1.0 {
                    g[0] = f64::NAN;
                    return f64::INFINITY;
                }
                g[0] = 1.0 / (1.0 - x[0]) - 1.0;
                -(1.0 - x[0]).ln() - x[0] + 0.5 * x[0] * x[0]
            },
            &[-3.0],
            &QnConfig {
                max_iters: 50,
                ..QnConfig::default()
            },
        );
        assert!(res.improved);
        assert!(res.x[0] < 1.0);
    }

    #[test]
    fn rosenbrock_makes_progress() {
        let rosen = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let res = qn_minimize(
            rosen,
            &[-1.2, 1.0],
            &QnConfig {
                max_iters: 200,
                ..QnConfig::default()
            },
        );
        assert!(
            (res.x[0] - 1.0).abs() < 1e-5 && (res.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            res.x
        );
    }
}
