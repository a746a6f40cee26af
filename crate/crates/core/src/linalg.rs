//! Small dense linear algebra and calculus primitives.
//!
//! Everything here works on dimensions fixed at call time and capped at
//! [`MAX_DIM`]. The SVD is a one-sided (Hestenes) Jacobi iteration, which is
//! accurate for the tiny Jacobians this crate deals with and needs no
//! external solver.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest matrix dimension accepted by [`svd`].
pub const MAX_DIM: usize = 16;

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from its rows. All rows must have the same length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: nrows,
            cols: ncols,
            data,
        }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(cols: &[C]) -> Self {
        let ncols = cols.len();
        let nrows = cols.first().map_or(0, |c| c.as_ref().len());
        let mut m = Matrix::zeros(nrows, ncols);
        for (j, c) in cols.iter().enumerate() {
            let c = c.as_ref();
            assert_eq!(c.len(), nrows, "ragged columns");
            for (i, v) in c.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// `a + s * b`
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Flips `v` so that its first component with magnitude above `1e-14`
/// is positive. Returns whether a flip happened.
pub(crate) fn canonical_sign(v: &mut [f64]) -> bool {
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let lead = v.iter().find(|x| x.abs() > 1e-12 * scale.max(1e-300));
    if matches!(lead, Some(x) if *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

/// Singular value decomposition `A = U diag(σ) Vᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdResult {
    /// The `min(n, m)` singular values, descending.
    pub singular_values: Vec<f64>,
    /// `n × min(n, m)` matrix with orthonormal columns.
    pub left_frame: Matrix,
    /// Complete `m × m` orthogonal matrix. The first `min(n, m)` columns
    /// pair with `singular_values`; any remaining columns span `ker A`.
    pub right_frame: Matrix,
}

impl SvdResult {
    pub fn rank(&self, rel_tol: f64) -> usize {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        if s1 == 0.0 {
            return 0;
        }
        self.singular_values
            .iter()
            .filter(|s| **s > rel_tol * s1)
            .count()
    }

    /// `U diag(σ) V_kᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.left_frame.rows();
        let m = self.right_frame.rows();
        let k = self.singular_values.len();
        let mut a = Matrix::zeros(n, m);
        for (r, s) in self.singular_values.iter().enumerate().take(k) {
            for i in 0..n {
                let us = self.left_frame[(i, r)] * s;
                for j in 0..m {
                    a[(i, j)] += us * self.right_frame[(j, r)];
                }
            }
        }
        a
    }

    /// Column `j` of the right frame.
    pub fn right_vector(&self, j: usize) -> Vec<f64> {
        self.right_frame.column(j)
    }
}

/// One-sided Jacobi SVD of an `n × m` matrix with `n, m ≤ 16`.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    let (n, m) = (a.rows(), a.cols());
    if n == 0 || m == 0 || n > MAX_DIM || m > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "svd supports 1..={MAX_DIM} rows and columns, got {n}x{m}"
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }

    // Work on the columns of A; V accumulates the rotations so A V = W.
    let mut w: Vec<Vec<f64>> = (0..m).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();

    const EPS: f64 = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    let norms: Vec<f64> = w.iter().map(|c| norm(c)).collect();
    // Stable sort keeps kernel columns in a deterministic order.
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let k = n.min(m);
    let sigma_max = norms[order[0]];
    let mut singular_values = Vec::with_capacity(k);
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut right: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut pending_left = 0usize;

    for (r, &j) in order.iter().enumerate() {
        let mut vj = v[j].clone();
        let flipped = canonical_sign(&mut vj);
        if r < k {
            let s = norms[j];
            singular_values.push(s);
            if s > 1e-14 * sigma_max && s > 0.0 {
                let mut u = scaled(&w[j], 1.0 / s);
                if flipped {
                    u.iter_mut().for_each(|x| *x = -*x);
                }
                left.push(u);
            } else {
                pending_left += 1;
            }
        }
        right.push(vj);
    }

    // Zero singular values: complete U with any orthonormal directions.
    if pending_left > 0 {
        let extra = complete_basis(&left, n, pending_left);
        left.extend(extra);
    }

    Ok(SvdResult {
        singular_values,
        left_frame: Matrix::from_columns(&left),
        right_frame: Matrix::from_columns(&right),
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Modified Gram-Schmidt of `v` against an orthonormal `basis`, applied twice.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    }
}

/// Extends an orthonormal set in ℝ^dim by `count` more orthonormal vectors,
/// greedily taking the coordinate axis with the largest residual.
fn complete_basis(basis: &[Vec<f64>], dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut all: Vec<Vec<f64>> = basis.to_vec();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for i in 0..dim {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            orthogonalize(&mut e, &all);
            let nrm = norm(&e);
            if best.as_ref().is_none_or(|(bn, _)| nrm > *bn + 1e-12) {
                best = Some((nrm, e));
            }
        }
        let (nrm, mut e) = best.expect("dim > 0");
        e.iter_mut().for_each(|x| *x /= nrm);
        canonical_sign(&mut e);
        all.push(e.clone());
        out.push(e);
    }
    out
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(a: &Matrix) -> f64 {
    assert_eq!(a.rows(), a.cols(), "determinant of non-square matrix");
    let n = a.rows();
    let mut m = a.clone();
    let mut det = 1.0;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs()))
            .unwrap();
        if m[(piv, c)] == 0.0 {
            return 0.0;
        }
        if piv != c {
            for j in 0..n {
                let t = m[(c, j)];
                m[(c, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            det = -det;
        }
        det *= m[(c, c)];
        for i in (c + 1)..n {
            let f = m[(i, c)] / m[(c, c)];
            for j in c..n {
                m[(i, j)] -= f * m[(c, j)];
            }
        }
    }
    det
}

/// Gram matrix `G[i][j] = ⟨v_i, v_j⟩`.
pub fn gram(vectors: &[Vec<f64>]) -> Matrix {
    let k = vectors.len();
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            g[(i, j)] = dot(&vectors[i], &vectors[j]);
        }
    }
    g
}

/// Orthonormal basis of the orthogonal complement of `span(vectors)` in ℝ^dim.
///
/// The inputs must be linearly independent (Gram determinant above `1e-12`).
/// Output vectors follow the sign convention of [`svd`] frames.
pub fn orthonormal_complement(vectors: &[Vec<f64>], dim: usize) -> Result<Vec<Vec<f64>>> {
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionError(format!(
            "complement in R^{dim} given vectors of other lengths"
        )));
    }
    if vectors.len() > dim {
        return Err(Error::DegenerateFrame(format!(
            "{} vectors in R^{dim} cannot be independent",
            vectors.len()
        )));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite vector entry".into()));
    }
    if !vectors.is_empty() && determinant(&gram(vectors)) <= 1e-12 {
        return Err(Error::DegenerateFrame(
            "input vectors are (nearly) linearly dependent".into(),
        ));
    }
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut u = v.clone();
        orthogonalize(&mut u, &q);
        let nrm = norm(&u);
        u.iter_mut().for_each(|x| *x /= nrm);
        q.push(u);
    }
    Ok(complete_basis(&q, dim, dim - vectors.len()))
}

/// Default central-difference step `ε^{1/3} · max(1, ‖x‖)`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    f64::EPSILON.cbrt() * norm(x).max(1.0)
}

/// Central-difference Jacobian of `f` at `x`.
///
/// `h = None` selects [`default_fd_step`]. Evaluation failures (for example
/// a probe leaving the domain) are propagated.
pub fn fd_jacobian<F>(f: F, x: &[f64], h: Option<f64>) -> Result<Matrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let h = h.unwrap_or_else(|| default_fd_step(x));
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("finite-difference step {h}")));
    }
    let m = x.len();
    let mut cols = Vec::with_capacity(m);
    let mut probe = x.to_vec();
    for i in 0..m {
        probe[i] = x[i] + h;
        let fp = f(&probe)?;
        probe[i] = x[i] - h;
        let fm = f(&probe)?;
        probe[i] = x[i];
        cols.push(
            fp.iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    let j = Matrix::from_columns(&cols);
    if !j.is_finite() {
        return Err(Error::InvalidInput("non-finite finite-difference Jacobian".into()));
    }
    Ok(j)
}

/// One classical fourth-order Runge-Kutta step of `x' = f(t, x)`.
pub fn rk4_step<F>(mut f: F, t: f64, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * dt, &axpy(x, 0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &axpy(x, 0.5 * dt, &k2))?;
    let k4 = f(t + dt, &axpy(x, dt, &k3))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Solves the square system `a x = b` by partial-pivot elimination.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::DimensionError("solve needs a square system".into()));
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale = m.frobenius_norm().max(1e-300);
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| m[(i, c)].abs().total_cmp(&m[(j, c)].abs()))
            .unwrap();
        if m[(piv, c)].abs() <= 1e-14 * scale {
            return Err(Error::DegenerateFrame("singular linear system".into()));
        }
        if piv != c {
            for j in 0..n {
                let t = m[(c, j)];
                m[(c, j)] = m[(piv, j)];
                m[(piv, j)] = t;
            }
            rhs.swap(c, piv);
        }
        for i in (c + 1)..n {
            let f = m[(i, c)] / m[(c, c)];
            for j in c..n {
                m[(i, j)] -= f * m[(c, j)];
            }
            rhs[i] -= f * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (rhs[i] - s) / m[(i, i)];
    }
    Ok(x)
}
