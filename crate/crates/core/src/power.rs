//! Leading singular triple by power iteration, and the greedy rank-k
//! approximation of a sparse subgradient built from repeated deflation.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::sparse::{norm, residual_op, LinearOperator, LowRankModel, ObservedMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    /// Number of `v ← AᵀA v` sweeps.
    pub iterations: usize,
    pub seed: u64,
    /// Early exit once `‖v_new − v‖₂` drops below this; 0 runs every sweep.
    pub tolerance: f64,
    /// Matvec norms below this mark the operator as numerically zero.
    pub zero_tol: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            iterations: 30,
            seed: 0,
            tolerance: 0.0,
            zero_tol: 1e-14,
        }
    }
}

impl PowerConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        PowerConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("power iterations must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) || !(self.zero_tol >= 0.0) {
            return Err(Error::Config(
                "power tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// `(u, s, v)` with `s = uᵀ A v ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple {
    pub u: Vec<f64>,
    pub s: f64,
    pub v: Vec<f64>,
    pub sweeps: usize,
}

fn scale(x: &mut [f64], c: f64) {
    x.iter_mut().for_each(|a| *a *= c);
}

/// Leading singular triple of `op`.
///
/// The start vector is a seeded standard normal draw. Signs are fixed so that
/// the largest-magnitude entry of `u` (first one on ties) is positive.
/// Returns [`Error::ZeroOperator`] when a matvec comes back below
/// `cfg.zero_tol`.
pub fn rank1_svd<A: LinearOperator + ?Sized>(op: &A, cfg: &PowerConfig) -> Result<SingularTriple> {
    cfg.validate()?;
    let (m, n) = (op.rows(), op.cols());
    if m == 0 || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "operator has empty shape {m}x{n}"
        )));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Power, 0);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm(&v);
    scale(&mut v, 1.0 / nv);

    let mut u = vec![0.0; m];
    let mut z = vec![0.0; n];
    let mut sweeps = 0;
    for _ in 0..cfg.iterations {
        op.matvec(&v, &mut u);
        let nu = norm(&u);
        if !(nu > cfg.zero_tol) {
            return Err(Error::ZeroOperator);
        }
        scale(&mut u, 1.0 / nu);
        op.rmatvec(&u, &mut z);
        let nz = norm(&z);
        if !(nz > cfg.zero_tol) {
            return Err(Error::ZeroOperator);
        }
        scale(&mut z, 1.0 / nz);
        sweeps += 1;
        let moved = if cfg.tolerance > 0.0 {
            z.iter()
                .zip(&v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        } else {
            f64::INFINITY
        };
        std::mem::swap(&mut v, &mut z);
        if moved < cfg.tolerance {
            break;
        }
    }

    op.matvec(&v, &mut u);
    let s = norm(&u);
    if !(s > cfg.zero_tol) {
        return Err(Error::ZeroOperator);
    }
    scale(&mut u, 1.0 / s);

    let mut lead = 0;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[lead].abs() {
            lead = i;
        }
    }
    if u[lead] < 0.0 {
        scale(&mut u, -1.0);
        scale(&mut v, -1.0);
    }
    Ok(SingularTriple { u, s, v, sweeps })
}

/// Result of [`greedy_rank_k`].
#[derive(Debug, Clone)]
pub struct GreedyApprox {
    /// `h = Σ s_i u_i v_iᵀ`; the coefficients are the singular values.
    pub h: LowRankModel,
    /// `‖g − h‖²_F`
    pub residual_sq: f64,
    /// The ν-test was never met within `k_max` deflations.
    pub truncated: bool,
}

impl GreedyApprox {
    pub fn rank(&self) -> usize {
        self.h.len()
    }
}

/// Grows `h` one deflation at a time until `‖g − h‖²_F ≤ ν · prev_residual_sq`.
///
/// Pass `f64::INFINITY` as `prev_residual_sq` on the first outer iteration; the
/// test then holds after one term. A zero residual operator ends the loop with
/// `residual_sq = 0`.
pub fn greedy_rank_k(
    g: &ObservedMatrix,
    prev_residual_sq: f64,
    nu: f64,
    cfg: &PowerConfig,
    k_max: usize,
) -> Result<GreedyApprox> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Config(format!("nu must lie in (0, 1), got {nu}")));
    }
    if k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    if prev_residual_sq.is_nan() || prev_residual_sq < 0.0 {
        return Err(Error::Config(format!(
            "previous residual must be non-negative, got {prev_residual_sq}"
        )));
    }
    let g_sq = g.frobenius_sq();
    // Deflation leaves round-off of order ε‖g‖; treat that as zero.
    let inner = PowerConfig {
        zero_tol: cfg.zero_tol.max(1e-13 * g_sq.sqrt()),
        ..*cfg
    };
    let threshold = nu * prev_residual_sq;
    let mut h = LowRankModel::zeros(g.rows(), g.cols());
    let mut residual_sq = g_sq;
    for i in 0..k_max {
        let op = residual_op(g, &h)?;
        let triple = match rank1_svd(
            &op,
            &inner.with_seed(derive_seed(cfg.seed, Stream::Power, i as u64)),
        ) {
            Ok(t) => t,
            Err(Error::ZeroOperator) => {
                return Ok(GreedyApprox {
                    h,
                    residual_sq: 0.0,
                    truncated: false,
                })
            }
            Err(e) => return Err(e),
        };
        h.push(triple.s, triple.u, triple.v)?;
        residual_sq = residual_op(g, &h)?.frobenius_sq();
        if residual_sq <= threshold {
            return Ok(GreedyApprox {
                h,
                residual_sq,
                truncated: false,
            });
        }
    }
    Ok(GreedyApprox {
        h,
        residual_sq,
        truncated: true,
    })
}
