//! Objectives defined on the observed entries.
//!
//! Every loss is a sum of per-entry terms `ℓ(X_ij, O_ij)` over Ω, optionally
//! plus a ridge term `ridge/2 · Σ_Ω X_ij²`. The ridge makes the objective
//! `ridge`-strongly convex in the observed coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::ObservedMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `½ (X − O)²`
    Square,
    /// `log(1 + exp(−X·O))` for `O ∈ {−1, +1}`
    Logistic,
    /// `|X − O|`
    L1,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Square => "square",
            LossKind::Logistic => "logistic",
            LossKind::L1 => "l1",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(LossKind::Square),
            "logistic" => Ok(LossKind::Logistic),
            "l1" => Ok(LossKind::L1),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

/// Lipschitz-smoothness and strong-convexity constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    /// `L`; `None` for nonsmooth losses.
    pub smoothness: Option<f64>,
    /// `μ`
    pub strong_convexity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub ridge: f64,
}

/// `log(1 + exp(−z))` without overflow.
#[inline]
fn log1p_exp_neg(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(z))` without overflow.
#[inline]
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        LossSpec { kind, ridge: 0.0 }
    }

    pub fn square() -> Self {
        Self::new(LossKind::Square)
    }

    pub fn logistic() -> Self {
        Self::new(LossKind::Logistic)
    }

    pub fn l1() -> Self {
        Self::new(LossKind::L1)
    }

    pub fn with_ridge(self, ridge: f64) -> Self {
        LossSpec { ridge, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::Config(format!(
                "ridge must be finite and non-negative, got {}",
                self.ridge
            )));
        }
        Ok(())
    }

    pub fn is_smooth(&self) -> bool {
        self.kind != LossKind::L1
    }

    /// `(L, μ)`: square → (1, 0), logistic → (1/4, 0), l1 → (none, 0), with
    /// the ridge weight added to both.
    pub fn curvature(&self) -> Curvature {
        let base = match self.kind {
            LossKind::Square => Some(1.0),
            LossKind::Logistic => Some(0.25),
            LossKind::L1 => None,
        };
        Curvature {
            smoothness: base.map(|l| l + self.ridge),
            strong_convexity: self.ridge,
        }
    }

    #[inline]
    fn entry_value(&self, x: f64, o: f64) -> f64 {
        let base = match self.kind {
            LossKind::Square => 0.5 * (x - o) * (x - o),
            LossKind::Logistic => log1p_exp_neg(x * o),
            LossKind::L1 => (x - o).abs(),
        };
        base + 0.5 * self.ridge * x * x
    }

    #[inline]
    fn entry_grad(&self, x: f64, o: f64) -> f64 {
        let base = match self.kind {
            LossKind::Square => x - o,
            LossKind::Logistic => -o * sigmoid_neg(x * o),
            LossKind::L1 => {
                let d = x - o;
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        };
        base + self.ridge * x
    }

    /// `f(X)` from `P_Ω(X)` (`predicted`) and the observations.
    pub fn value(&self, predicted: &[f64], observed: &[f64]) -> Result<f64> {
        check_len(predicted, observed)?;
        Ok(predicted
            .iter()
            .zip(observed)
            .map(|(&x, &o)| self.entry_value(x, o))
            .sum())
    }

    /// Gradient (subgradient for l1, 0 at ties) into `out`.
    pub fn gradient_into(
        &self,
        predicted: &[f64],
        observed: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        check_len(predicted, observed)?;
        check_len(predicted, out)?;
        for ((g, &x), &o) in out.iter_mut().zip(predicted).zip(observed) {
            *g = self.entry_grad(x, o);
        }
        Ok(())
    }

    /// Sparse (sub)gradient on Ω, sharing `omega`'s pattern.
    pub fn subgradient(&self, omega: &ObservedMatrix, predicted: &[f64]) -> Result<ObservedMatrix> {
        let mut g = vec![0.0; omega.nnz()];
        self.gradient_into(predicted, omega.values(), &mut g)?;
        omega.with_values(g)
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "sequences of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ridge > 0.0 {
            write!(f, "{}+ridge({})", self.kind, self.ridge)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_has_zero_square_loss() {
        let o = [1.0, -2.0, 3.5];
        assert_eq!(LossSpec::square().value(&o, &o).unwrap(), 0.0);
    }

    #[test]
    fn logistic_at_zero_is_log_two() {
        let obs = [1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0, 1.0];
        let f = LossSpec::logistic().value(&[0.0; 10], &obs).unwrap();
        assert!((f - 10.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn l1_value() {
        assert_eq!(
            LossSpec::l1().value(&[1.0, -1.0], &[3.0, 0.0]).unwrap(),
            3.0
        );
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(LossSpec::l1().value(&[1.0], &[3.0, 0.0]).is_err());
    }

    #[test]
    fn gradients_at_zero() {
        let omega =
            ObservedMatrix::new(2, 2, vec![(0, 0, 2.0), (1, 1, -1.0), (0, 1, 1.0)]).unwrap();
        let zero = vec![0.0; 3];
        let sq = LossSpec::square().subgradient(&omega, &zero).unwrap();
        assert_eq!(
            sq.values(),
            omega
                .values()
                .iter()
                .map(|o| -o)
                .collect::<Vec<_>>()
                .as_slice()
        );
        let lg = LossSpec::logistic().subgradient(&omega, &zero).unwrap();
        for (g, o) in lg.values().iter().zip(omega.values()) {
            assert!((g + o / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn l1_subgradient_is_zero_at_ties() {
        let mut g = [9.0; 3];
        LossSpec::l1()
            .gradient_into(&[1.0, 2.0, 3.0], &[1.0, 1.0, 4.0], &mut g)
            .unwrap();
        assert_eq!(g, [0.0, 1.0, -1.0]);
    }

    #[test]
    fn logistic_is_stable_for_large_margins() {
        let f = LossSpec::logistic()
            .value(&[800.0, -800.0], &[-1.0, -1.0])
            .unwrap();
        assert!((f - 800.0).abs() < 1e-9);
        let mut g = [0.0; 2];
        LossSpec::logistic()
            .gradient_into(&[800.0, -800.0], &[-1.0, -1.0], &mut g)
            .unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-300);
    }

    #[test]
    fn curvature_constants() {
        assert_eq!(
            LossSpec::square().curvature(),
            Curvature {
                smoothness: Some(1.0),
                strong_convexity: 0.0
            }
        );
        assert_eq!(
            LossSpec::l1().curvature(),
            Curvature {
                smoothness: None,
                strong_convexity: 0.0
            }
        );
        let c = LossSpec::logistic().with_ridge(0.1).curvature();
        assert!((c.smoothness.unwrap() - 0.35).abs() < 1e-15);
        assert_eq!(c.strong_convexity, 0.1);
    }

    #[test]
    fn parse_names() {
        assert_eq!("l1".parse::<LossKind>().unwrap(), LossKind::L1);
        assert!("huber".parse::<LossKind>().is_err());
        assert!(LossSpec::square().with_ridge(-1.0).validate().is_err());
    }
}
