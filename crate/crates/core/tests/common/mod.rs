//! Dense reference implementations used as test oracles. Written without
//! reference to the library's sparse kernels.

#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use glrl::{LowRankModel, ObservedMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub m: usize,
    pub n: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(m: usize, n: usize) -> Self {
        Mat {
            m,
            n,
            a: vec![0.0; m * n],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.a[i * self.n + j] = x;
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.n, self.m);
        for i in 0..self.m {
            for j in 0..self.n {
                t.set(j, i, self.at(i, j));
            }
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| (0..self.n).map(|j| self.at(i, j) * x[j]).sum())
            .collect()
    }

    pub fn frob_sq(&self) -> f64 {
        self.a.iter().map(|x| x * x).sum()
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        Mat {
            m: self.m,
            n: self.n,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn uniform(m: usize, n: usize, r: &mut impl Rng) -> Mat {
        Mat {
            m,
            n,
            a: (0..m * n).map(|_| r.random::<f64>()).collect(),
        }
    }

    pub fn centered(m: usize, n: usize, r: &mut impl Rng) -> Mat {
        Mat {
            m,
            n,
            a: (0..m * n).map(|_| 2.0 * r.random::<f64>() - 1.0).collect(),
        }
    }
}

/// Dense copy of a sparse matrix, zero off the pattern.
pub fn densify(s: &ObservedMatrix) -> Mat {
    let mut d = Mat::zeros(s.rows(), s.cols());
    for (i, j, x) in s.iter() {
        d.set(i, j, x);
    }
    d
}

/// Dense `Σ θ_k u_k v_kᵀ`.
pub fn materialize(model: &LowRankModel) -> Mat {
    let mut d = Mat::zeros(model.rows(), model.cols());
    for t in model.terms() {
        for i in 0..model.rows() {
            for j in 0..model.cols() {
                d.a[i * model.cols() + j] += t.theta * t.u[i] * t.v[j];
            }
        }
    }
    d
}

/// Fully observed sparse view of a dense matrix.
pub fn observe_all(d: &Mat) -> ObservedMatrix {
    let mut e = Vec::with_capacity(d.m * d.n);
    for i in 0..d.m {
        for j in 0..d.n {
            e.push((i, j, d.at(i, j)));
        }
    }
    ObservedMatrix::new(d.m, d.n, e).unwrap()
}

/// Random pattern with each entry kept with probability `p` (never empty),
/// values drawn by `val`.
pub fn random_sparse(
    m: usize,
    n: usize,
    p: f64,
    r: &mut impl Rng,
    mut val: impl FnMut(&mut dyn rand::RngCore) -> f64,
) -> ObservedMatrix {
    let mut e = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if r.random::<f64>() < p {
                e.push((i, j, val(r)));
            }
        }
    }
    if e.is_empty() {
        e.push((0, 0, val(r)));
    }
    ObservedMatrix::new(m, n, e).unwrap()
}

pub fn unit(len: usize, r: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| r.random::<f64>() - 0.5).collect();
    let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    v
}

pub fn random_model(m: usize, n: usize, k: usize, r: &mut impl Rng) -> LowRankModel {
    let mut model = LowRankModel::zeros(m, n);
    for _ in 0..k {
        let u = unit(m, r);
        let v = unit(n, r);
        model.push(4.0 * r.random::<f64>() - 2.0, u, v).unwrap();
    }
    model
}

/// Thin SVD by one-sided Jacobi rotations. Returns singular values in
/// decreasing order with matching left/right singular vectors (as columns
/// stored in `Vec`s).
pub struct Svd {
    pub s: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

pub fn jacobi_svd(a: &Mat) -> Svd {
    if a.m < a.n {
        let t = jacobi_svd(&a.transpose());
        return Svd {
            s: t.s,
            u: t.v,
            v: t.u,
        };
    }
    let (m, n) = (a.m, a.n);
    // columns of W = A V, orthogonalized pairwise
    let mut w: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| a.at(i, j)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..m {
                    let (x, y) = (w[p][k], w[q][k]);
                    w[p][k] = c * x - s * y;
                    w[q][k] = s * x + c * y;
                }
                for k in 0..n {
                    let (x, y) = (v[p][k], v[q][k]);
                    v[p][k] = c * x - s * y;
                    v[q][k] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = w
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    idx.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let s: Vec<f64> = idx.iter().map(|&k| norms[k]).collect();
    let u = idx
        .iter()
        .map(|&k| {
            w[k].iter()
                .map(|x| if norms[k] > 0.0 { x / norms[k] } else { 0.0 })
                .collect()
        })
        .collect();
    let v = idx.iter().map(|&k| v[k].clone()).collect();
    Svd { s, u, v }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Least-squares coefficients of `cols` against `target` (normal equations).
pub fn least_squares(cols: &[Vec<f64>], target: &[f64]) -> Vec<f64> {
    let k = cols.len();
    let gram = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum())
                .collect()
        })
        .collect();
    let rhs = (0..k)
        .map(|a| cols[a].iter().zip(target).map(|(x, y)| x * y).sum())
        .collect();
    gauss_solve(gram, rhs)
}

/// Rank-one matrix pursuit on a partially observed matrix: every step adds
/// the top singular pair of the observed residual and refits all weights by
/// least squares on Ω. Returns the dense iterate after each step.
pub fn r1mp(obs: &ObservedMatrix, steps: usize) -> Vec<Mat> {
    let (m, n) = (obs.rows(), obs.cols());
    let omega: Vec<(usize, usize, f64)> = obs.iter().collect();
    let target: Vec<f64> = omega.iter().map(|e| e.2).collect();
    let mut bases: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut x = Mat::zeros(m, n);
    let mut out = Vec::new();
    for _ in 0..steps {
        let mut r = Mat::zeros(m, n);
        for &(i, j, o) in &omega {
            r.set(i, j, o - x.at(i, j));
        }
        let svd = jacobi_svd(&r);
        bases.push((svd.u[0].clone(), svd.v[0].clone()));
        let cols: Vec<Vec<f64>> = bases
            .iter()
            .map(|(u, v)| omega.iter().map(|&(i, j, _)| u[i] * v[j]).collect())
            .collect();
        let theta = least_squares(&cols, &target);
        x = Mat::zeros(m, n);
        for (t, (u, v)) in theta.iter().zip(&bases) {
            for i in 0..m {
                for j in 0..n {
                    x.a[i * n + j] += t * u[i] * v[j];
                }
            }
        }
        out.push(x.clone());
    }
    out
}

/// Minimum of `Σ |x − o| + (μ/2) Σ x²` over dense `x` by proximal gradient
/// on the quadratic part, iterated until the step changes nothing above
/// `tol`.
pub fn prox_l1_ridge(o: &[f64], mu: f64, tol: f64) -> (Vec<f64>, f64) {
    let tau = 0.5 / mu;
    let mut x = vec![0.0; o.len()];
    for _ in 0..100_000 {
        let mut change = 0.0f64;
        for (xi, &oi) in x.iter_mut().zip(o) {
            let y = *xi - tau * mu * *xi;
            // prox of τ|· − o|
            let d = y - oi;
            let shrunk = d.signum() * (d.abs() - tau).max(0.0);
            let next = oi + shrunk;
            change = change.max((next - *xi).abs());
            *xi = next;
        }
        if change < tol {
            break;
        }
    }
    let f = x
        .iter()
        .zip(o)
        .map(|(x, o)| (x - o).abs() + 0.5 * mu * x * x)
        .sum();
    (x, f)
}

/// Minimum of `½ Σ (x − o)² + (μ/2) Σ x²` by gradient descent.
pub fn gd_square_ridge(o: &[f64], mu: f64, tol: f64) -> f64 {
    let step = 1.0 / (1.0 + mu);
    let mut x = vec![0.0; o.len()];
    loop {
        let mut change = 0.0f64;
        for (xi, &oi) in x.iter_mut().zip(o) {
            let g = (*xi - oi) + mu * *xi;
            *xi -= step * g;
            change = change.max((step * g).abs());
        }
        if change < tol {
            break;
        }
    }
    x.iter()
        .zip(o)
        .map(|(x, o)| 0.5 * (x - o) * (x - o) + 0.5 * mu * x * x)
        .sum()
}

/// Central difference of `f` at `x` along coordinate `k`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[k] += h;
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}
