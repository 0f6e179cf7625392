//! Seeded random problem instances: planted low-rank matrices, random
//! observation patterns, noise and gross outliers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::rng::{stream_rng, Stream};
use crate::sparse::ObservedMatrix;

const PLANT: u64 = 0;
const MASK: u64 = 1;
const NOISE: u64 = 2;
const CORRUPT: u64 = 3;

/// Dense row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// `A Bᵀ` with standard normal `A` (`rows × rank`) and `B` (`cols × rank`),
/// scaled by `1/√rank`.
pub fn planted(rows: usize, cols: usize, rank: usize, seed: u64) -> Dense {
    let mut rng = stream_rng(seed, Stream::Synthetic, PLANT);
    let a: Vec<f64> = (0..rows * rank)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let b: Vec<f64> = (0..cols * rank)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let scale = 1.0 / (rank.max(1) as f64).sqrt();
    let mut data = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let mut x = 0.0;
            for k in 0..rank {
                x += a[i * rank + k] * b[j * rank + k];
            }
            data[i * cols + j] = scale * x;
        }
    }
    Dense { rows, cols, data }
}

/// Each entry independently with probability `density`; never empty.
pub fn mask(rows: usize, cols: usize, density: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = stream_rng(seed, Stream::Synthetic, MASK);
    let mut out: Vec<(usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .filter(|_| rng.random::<f64>() < density)
        .collect();
    if out.is_empty() {
        out.push((rng.random_range(0..rows), rng.random_range(0..cols)));
    }
    out
}

/// Every entry.
pub fn full_mask(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .collect()
}

/// `truth` on `omega`, plus Gaussian noise of standard deviation `noise`.
pub fn observe(
    truth: &Dense,
    omega: &[(usize, usize)],
    noise: f64,
    seed: u64,
) -> Result<ObservedMatrix> {
    let mut rng = stream_rng(seed, Stream::Synthetic, NOISE);
    let entries = omega
        .iter()
        .map(|&(i, j)| {
            let e: f64 = if noise > 0.0 {
                rng.sample(StandardNormal)
            } else {
                0.0
            };
            (i, j, truth.get(i, j) + noise * e)
        })
        .collect();
    ObservedMatrix::new(truth.rows, truth.cols, entries)
}

/// Replaces a `fraction` of the values by draws uniform in
/// `[−magnitude, magnitude]`.
pub fn corrupt(
    obs: &ObservedMatrix,
    fraction: f64,
    magnitude: f64,
    seed: u64,
) -> Result<ObservedMatrix> {
    let mut rng = stream_rng(seed, Stream::Synthetic, CORRUPT);
    let values = obs
        .values()
        .iter()
        .map(|&x| {
            if rng.random::<f64>() < fraction {
                magnitude * (2.0 * rng.random::<f64>() - 1.0)
            } else {
                x
            }
        })
        .collect();
    obs.with_values(values)
}

/// `±1` labels from the signs of the values (zero maps to `+1`).
pub fn signs(obs: &ObservedMatrix) -> Result<ObservedMatrix> {
    obs.with_values(
        obs.values()
            .iter()
            .map(|&x| if x >= 0.0 { 1.0 } else { -1.0 })
            .collect(),
    )
}

/// Standard normal values on a random pattern.
pub fn random_observed(
    rows: usize,
    cols: usize,
    density: f64,
    seed: u64,
) -> Result<ObservedMatrix> {
    let omega = mask(rows, cols, density, seed);
    let mut rng = stream_rng(seed, Stream::Synthetic, NOISE);
    let entries = omega
        .into_iter()
        .map(|(i, j)| (i, j, rng.sample(StandardNormal)))
        .collect();
    ObservedMatrix::new(rows, cols, entries)
}
