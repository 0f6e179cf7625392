//! Observed-entry storage, low-rank iterates and the linear-operator views the
//! power method runs on.

use std::ops::Range;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

/// Tolerance on `‖u‖₂ = ‖v‖₂ = 1` accepted when a term is added to a model.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// A matrix that can be applied to vectors in both directions.
///
/// Implementations assume the slice lengths are right; the checked entry
/// points are [`SparsePlusLowRankOp::apply`] and friends.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A x`
    fn matvec(&self, x: &[f64], out: &mut [f64]);
    /// `out = Aᵀ y`
    fn rmatvec(&self, y: &[f64], out: &mut [f64]);
}

#[derive(Debug)]
struct ColumnIndex {
    ptr: Vec<usize>,
    order: Vec<usize>,
}

/// Sparsity pattern Ω, shared between the data matrix and every gradient
/// computed on it.
#[derive(Debug)]
struct Pattern {
    rows: usize,
    cols: usize,
    row_ind: Vec<u32>,
    col_ind: Vec<u32>,
    row_ptr: Vec<usize>,
    by_col: OnceLock<ColumnIndex>,
}

impl Pattern {
    fn column_index(&self) -> &ColumnIndex {
        self.by_col.get_or_init(|| {
            let mut ptr = vec![0usize; self.cols + 1];
            for &c in &self.col_ind {
                ptr[c as usize + 1] += 1;
            }
            for j in 0..self.cols {
                ptr[j + 1] += ptr[j];
            }
            let mut next = ptr.clone();
            let mut order = vec![0usize; self.col_ind.len()];
            for (e, &c) in self.col_ind.iter().enumerate() {
                order[next[c as usize]] = e;
                next[c as usize] += 1;
            }
            ColumnIndex { ptr, order }
        })
    }
}

/// A partially observed `rows × cols` matrix: the index set Ω together with a
/// value per observed entry.
///
/// Entries are stored in row-major order, which is also the order of every
/// value vector aligned with this matrix (predictions, gradients).
#[derive(Debug, Clone)]
pub struct ObservedMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl ObservedMatrix {
    /// Builds the matrix from `(row, col, value)` triples in any order.
    ///
    /// Duplicate coordinates are rejected rather than merged.
    pub fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if rows > u32::MAX as usize || cols > u32::MAX as usize {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} is too large"
            )));
        }
        for &(row, col, _) in &entries {
            if row >= rows || col >= cols {
                return Err(Error::IndexOutOfBounds {
                    row,
                    col,
                    rows,
                    cols,
                });
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateEntry {
                    row: w[0].0,
                    col: w[0].1,
                });
            }
        }
        let mut row_ptr = vec![0usize; rows + 1];
        let mut row_ind = Vec::with_capacity(entries.len());
        let mut col_ind = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (i, j, x) in entries {
            row_ptr[i + 1] += 1;
            row_ind.push(i as u32);
            col_ind.push(j as u32);
            values.push(x);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(ObservedMatrix {
            pattern: Arc::new(Pattern {
                rows,
                cols,
                row_ind,
                col_ind,
                row_ptr,
                by_col: OnceLock::new(),
            }),
            values,
        })
    }

    /// Same Ω, new values. The pattern is shared, not copied.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} observed entries",
                values.len(),
                self.nnz()
            )));
        }
        Ok(ObservedMatrix {
            pattern: Arc::clone(&self.pattern),
            values,
        })
    }

    /// The entries at the given positions (in storage order), as a new matrix
    /// with the same dimensions.
    pub fn select(&self, positions: &[usize]) -> Result<Self> {
        let entries = positions
            .iter()
            .map(|&e| (self.row_of(e), self.col_of(e), self.values[e]))
            .collect();
        ObservedMatrix::new(self.rows(), self.cols(), entries)
    }

    pub fn rows(&self) -> usize {
        self.pattern.rows
    }

    pub fn cols(&self) -> usize {
        self.pattern.cols
    }

    /// Number of observed entries, ‖Ω‖₁.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_indices(&self) -> &[u32] {
        &self.pattern.row_ind
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.pattern.col_ind
    }

    #[inline]
    pub fn row_of(&self, e: usize) -> usize {
        self.pattern.row_ind[e] as usize
    }

    #[inline]
    pub fn col_of(&self, e: usize) -> usize {
        self.pattern.col_ind[e] as usize
    }

    /// Storage positions of the entries in row `i`.
    pub fn row_range(&self, i: usize) -> Range<usize> {
        self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nnz()).map(move |e| (self.row_of(e), self.col_of(e), self.values[e]))
    }

    /// True when both matrices index exactly the same Ω in the same order.
    pub fn same_pattern(&self, other: &ObservedMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern)
            || (self.rows() == other.rows()
                && self.cols() == other.cols()
                && self.pattern.row_ind == other.pattern.row_ind
                && self.pattern.col_ind == other.pattern.col_ind)
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }

    /// `u[row] · v[col]` at every observed entry.
    pub fn project_rank_one(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        p.row_ind
            .iter()
            .zip(&p.col_ind)
            .map(|(&i, &j)| u[i as usize] * v[j as usize])
            .collect()
    }

    /// `Σ_Ω S_ij u_i v_j`
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let p = &self.pattern;
        let mut acc = 0.0;
        for i in 0..p.rows {
            let r = p.row_ptr[i]..p.row_ptr[i + 1];
            let mut row = 0.0;
            for e in r {
                row += self.values[e] * v[p.col_ind[e] as usize];
            }
            acc += u[i] * row;
        }
        acc
    }
}

impl LinearOperator for ObservedMatrix {
    fn rows(&self) -> usize {
        self.pattern.rows
    }

    fn cols(&self) -> usize {
        self.pattern.cols
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols());
        assert_eq!(out.len(), self.rows());
        let p = &self.pattern;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for e in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[e] * x[p.col_ind[e] as usize];
            }
            *o = acc;
        }
    }

    fn rmatvec(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows());
        assert_eq!(out.len(), self.cols());
        let p = &self.pattern;
        let idx = p.column_index();
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &e in &idx.order[idx.ptr[j]..idx.ptr[j + 1]] {
                acc += self.values[e] * y[p.row_ind[e] as usize];
            }
            *o = acc;
        }
    }
}

/// One `θ u vᵀ` component.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneTerm {
    pub theta: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// `X = Σ θ_i u_i v_iᵀ` with unit-norm `u_i`, `v_i`, kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankModel {
    rows: usize,
    cols: usize,
    terms: Vec<RankOneTerm>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl LowRankModel {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LowRankModel {
            rows,
            cols,
            terms: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of rank-one terms; an upper bound on the rank.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[RankOneTerm] {
        &self.terms
    }

    /// Appends `θ u vᵀ`. `u` and `v` must already be unit vectors.
    pub fn push(&mut self, theta: f64, u: Vec<f64>, v: Vec<f64>) -> Result<()> {
        if u.len() != self.rows || v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "term of shape {}x{} for a {}x{} model",
                u.len(),
                v.len(),
                self.rows,
                self.cols
            )));
        }
        let (nu, nv) = (norm(&u), norm(&v));
        if (nu - 1.0).abs() > UNIT_NORM_TOL || (nv - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Data(format!(
                "rank-one factors must have unit norm (got {nu}, {nv})"
            )));
        }
        self.terms.push(RankOneTerm { theta, u, v });
        Ok(())
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.theta).collect()
    }

    pub fn set_thetas(&mut self, thetas: &[f64]) -> Result<()> {
        if thetas.len() != self.terms.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} terms",
                thetas.len(),
                self.terms.len()
            )));
        }
        for (t, &x) in self.terms.iter_mut().zip(thetas) {
            t.theta = x;
        }
        Ok(())
    }

    /// The first `k` terms with the given coefficients.
    pub fn prefix_with(&self, thetas: &[f64]) -> Result<Self> {
        if thetas.len() > self.terms.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} terms",
                thetas.len(),
                self.terms.len()
            )));
        }
        let mut out = LowRankModel::zeros(self.rows, self.cols);
        out.terms = self.terms[..thetas.len()].to_vec();
        out.set_thetas(thetas)?;
        Ok(out)
    }

    /// `X_ij`, summed in term order.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.theta * t.u[i] * t.v[j];
        }
        acc
    }

    fn check_dims(&self, omega: &ObservedMatrix) -> Result<()> {
        if self.rows != omega.rows() || self.cols != omega.cols() {
            return Err(Error::DimensionMismatch(format!(
                "model is {}x{}, observations are {}x{}",
                self.rows,
                self.cols,
                omega.rows(),
                omega.cols()
            )));
        }
        Ok(())
    }
}

/// `P_Ω(X)`: the model evaluated at every observed entry, in storage order.
pub fn observed_values(model: &LowRankModel, omega: &ObservedMatrix) -> Result<Vec<f64>> {
    model.check_dims(omega)?;
    let mut out = vec![0.0; omega.nnz()];
    let (ri, ci) = (omega.row_indices(), omega.col_indices());
    for t in &model.terms {
        for (e, o) in out.iter_mut().enumerate() {
            *o += t.theta * t.u[ri[e] as usize] * t.v[ci[e] as usize];
        }
    }
    Ok(out)
}

/// `S + sign · Σ θ_i u_i v_iᵀ`, applied without forming the dense matrix.
#[derive(Debug, Clone, Copy)]
pub struct SparsePlusLowRankOp<'a> {
    rows: usize,
    cols: usize,
    sparse: Option<&'a ObservedMatrix>,
    low_rank: Option<&'a LowRankModel>,
    sign: f64,
}

impl<'a> SparsePlusLowRankOp<'a> {
    pub fn new(
        rows: usize,
        cols: usize,
        sparse: Option<&'a ObservedMatrix>,
        low_rank: Option<&'a LowRankModel>,
    ) -> Result<Self> {
        if let Some(s) = sparse {
            if s.rows() != rows || s.cols() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "sparse part is {}x{}, operator is {rows}x{cols}",
                    s.rows(),
                    s.cols()
                )));
            }
        }
        if let Some(l) = low_rank {
            if l.rows() != rows || l.cols() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "low-rank part is {}x{}, operator is {rows}x{cols}",
                    l.rows(),
                    l.cols()
                )));
            }
        }
        Ok(SparsePlusLowRankOp {
            rows,
            cols,
            sparse,
            low_rank,
            sign: 1.0,
        })
    }

    /// Effective coefficients of the low-rank part (sign applied).
    fn coefficients(&self) -> impl Iterator<Item = (f64, &'a RankOneTerm)> + 'a {
        let sign = self.sign;
        self.low_rank
            .into_iter()
            .flat_map(|l| l.terms.iter())
            .map(move |t| (sign * t.theta, t))
    }

    /// Checked `A x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for an operator with {} columns",
                x.len(),
                self.cols
            )));
        }
        let mut out = vec![0.0; self.rows];
        self.matvec(x, &mut out);
        Ok(out)
    }

    /// Checked `Aᵀ y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for an operator with {} rows",
                y.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; self.cols];
        self.rmatvec(y, &mut out);
        Ok(out)
    }

    /// `‖A‖²_F` from `‖S‖²`, the restricted cross terms and the Gram products
    /// of the factors: O(‖Ω‖₁·t + t²(m + n)).
    pub fn frobenius_sq(&self) -> f64 {
        let sparse_sq = self.sparse.map_or(0.0, ObservedMatrix::frobenius_sq);
        let terms: Vec<(f64, &RankOneTerm)> = self.coefficients().collect();
        let mut cross = 0.0;
        if let Some(s) = self.sparse {
            for (c, t) in &terms {
                cross += c * s.bilinear(&t.u, &t.v);
            }
        }
        let mut gram = 0.0;
        for (a, (ca, ta)) in terms.iter().enumerate() {
            gram += ca * ca * dot(&ta.u, &ta.u) * dot(&ta.v, &ta.v);
            for (cb, tb) in &terms[..a] {
                gram += 2.0 * ca * cb * dot(&ta.u, &tb.u) * dot(&ta.v, &tb.v);
            }
        }
        (sparse_sq + 2.0 * cross + gram).max(0.0)
    }
}

impl LinearOperator for SparsePlusLowRankOp<'_> {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn matvec(&self, x: &[f64], out: &mut [f64]) {
        match self.sparse {
            Some(s) => s.matvec(x, out),
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
        for (c, t) in self.coefficients() {
            let w = c * dot(&t.v, x);
            for (o, ui) in out.iter_mut().zip(&t.u) {
                *o += w * ui;
            }
        }
    }

    fn rmatvec(&self, y: &[f64], out: &mut [f64]) {
        match self.sparse {
            Some(s) => s.rmatvec(y, out),
            None => out.iter_mut().for_each(|o| *o = 0.0),
        }
        for (c, t) in self.coefficients() {
            let w = c * dot(&t.u, y);
            for (o, vj) in out.iter_mut().zip(&t.v) {
                *o += w * vj;
            }
        }
    }
}

/// Operator for `g − h`: sparse part `g`, low-rank part `h` negated.
pub fn residual_op<'a>(
    g: &'a ObservedMatrix,
    h: &'a LowRankModel,
) -> Result<SparsePlusLowRankOp<'a>> {
    let mut op = SparsePlusLowRankOp::new(g.rows(), g.cols(), Some(g), Some(h))?;
    op.sign = -1.0;
    Ok(op)
}
