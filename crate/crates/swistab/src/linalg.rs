//! Dense kernels for small matrices (n <= ~10): products, LU and Cholesky
//! factorizations, the scaling-and-squaring matrix exponential, a
//! Lyapunov-equation stability test, and a cyclic Jacobi symmetric
//! eigensolver. Row-major storage throughout; no attempt at large-scale
//! performance.

use crate::config;
use crate::{Error, Result};
use std::ops::{Index, IndexMut};

/// Dense row-major matrix of f64 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data; `data.len()` must equal
    /// `n_rows * n_cols` and every entry must be finite.
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if n_rows == 0 || n_cols == 0 || data.len() != n_rows * n_cols {
            return Err(Error::Dimension(format!(
                "matrix shape {}x{} does not match {} entries",
                n_rows,
                n_cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix entry {bad}")));
        }
        Ok(Matrix { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Matrix::new(n_rows, n_cols, rows.concat())
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Matrix {
        Matrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(entries.len(), entries.len());
        for (i, v) in entries.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|i| self.data[i * self.n_cols..(i + 1) * self.n_cols].to_vec())
            .collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols), "shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { n_rows: self.n_rows, n_cols: self.n_cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols), "shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { n_rows: self.n_rows, n_cols: self.n_cols, data }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let data = self.data.iter().map(|a| c * a).collect();
        Matrix { n_rows: self.n_rows, n_cols: self.n_cols, data }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n_cols, other.n_rows, "inner dimension mismatch");
        let mut out = Matrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.n_cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n_cols, x.len(), "vector length mismatch");
        (0..self.n_rows)
            .map(|i| (0..self.n_cols).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.n_cols)
            .map(|j| (0..self.n_rows).map(|i| self[(i, j)].abs()).sum())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Symmetric matrix; construction averages `(X + X')/2` so the stored entries
/// are symmetric by definition.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<SymMatrix> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.n_rows, m.n_cols
            )));
        }
        let half_sum = m.add(&m.transpose()).scale(0.5);
        Ok(SymMatrix(half_sum))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<SymMatrix> {
        SymMatrix::new(Matrix::from_rows(rows)?)
    }

    pub fn identity(n: usize) -> SymMatrix {
        SymMatrix(Matrix::identity(n))
    }

    pub fn diag(entries: &[f64]) -> SymMatrix {
        SymMatrix(Matrix::diag(entries))
    }

    pub fn n(&self) -> usize {
        self.0.n_rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.add(&other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix(self.0.sub(&other.0))
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(self.0.scale(c))
    }

    /// Adds `c` to every diagonal entry.
    pub fn shift_diag(&self, c: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.n_rows() {
            m[(i, i)] += c;
        }
        SymMatrix(m)
    }

    /// The quadratic form x'Px. Fused accumulation in the same order as
    /// `dot(x, matvec(x))` but without the intermediate vector; this is the
    /// innermost kernel of every pointwise-minimum evaluation.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(self.n(), x.len(), "vector length mismatch");
        let m = &self.0;
        let mut acc = 0.0;
        for i in 0..x.len() {
            let mut row = 0.0;
            for j in 0..x.len() {
                row += m[(i, j)] * x[j];
            }
            acc += x[i] * row;
        }
        acc
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "vector length mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Three-valued outcome of the Lyapunov-equation stability test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    /// All eigenvalues certified in the open left half plane.
    Hurwitz,
    /// Certificate exists but is not positive definite.
    NotHurwitz,
    /// The Lyapunov operator is singular (some eigenvalue sum is zero);
    /// neither stability nor instability is certified.
    Marginal,
}

impl Stability {
    pub fn is_hurwitz(self) -> bool {
        self == Stability::Hurwitz
    }
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stability::Hurwitz => write!(f, "hurwitz"),
            Stability::NotHurwitz => write!(f, "not-hurwitz"),
            Stability::Marginal => write!(f, "marginal"),
        }
    }
}

/// Solves `A X = B` by LU factorization with partial pivoting. A pivot of
/// magnitude at or below `pivot_rel * max|A|` fails as singular.
fn solve_with_tol(a: &Matrix, b: &Matrix, pivot_rel: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension("solve requires a square matrix".into()));
    }
    if a.n_rows() != b.n_rows() {
        return Err(Error::Dimension("right-hand side has wrong row count".into()));
    }
    let n = a.n_rows();
    let m = b.n_cols();
    let mut lu = a.clone();
    let mut rhs = b.clone();
    let floor = pivot_rel * a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| lu[(r, col)].abs().total_cmp(&lu[(s, col)].abs()))
            .expect("non-empty pivot range");
        if lu[(pivot_row, col)].abs() <= floor {
            return Err(Error::Singular(format!("pivot {} in column {col}", lu[(pivot_row, col)])));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = lu[(col, j)];
                lu[(col, j)] = lu[(pivot_row, j)];
                lu[(pivot_row, j)] = tmp;
            }
            for j in 0..m {
                let tmp = rhs[(col, j)];
                rhs[(col, j)] = rhs[(pivot_row, j)];
                rhs[(pivot_row, j)] = tmp;
            }
        }
        for row in col + 1..n {
            let factor = lu[(row, col)] / lu[(col, col)];
            if factor == 0.0 {
                continue;
            }
            lu[(row, col)] = 0.0;
            for j in col + 1..n {
                lu[(row, j)] -= factor * lu[(col, j)];
            }
            for j in 0..m {
                rhs[(row, j)] -= factor * rhs[(col, j)];
            }
        }
    }
    let mut x = Matrix::zeros(n, m);
    for j in 0..m {
        for row in (0..n).rev() {
            let mut acc = rhs[(row, j)];
            for k in row + 1..n {
                acc -= lu[(row, k)] * x[(k, j)];
            }
            x[(row, j)] = acc / lu[(row, row)];
        }
    }
    Ok(x)
}

/// Solves `A X = B` with the default singularity threshold.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    solve_with_tol(a, b, config::SOLVE_PIVOT_REL)
}

/// Cholesky factor of a symmetric matrix, or `None` when it is not positive
/// definite (pivot at or below the relative floor).
pub fn cholesky(p: &SymMatrix) -> Option<Matrix> {
    let n = p.n();
    let a = p.as_matrix();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let floor = config::CHOL_PIVOT_REL * scale;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if acc <= floor {
                    return None;
                }
                l[(i, i)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Some(l)
}

pub fn is_positive_definite(p: &SymMatrix) -> bool {
    cholesky(p).is_some()
}

fn pade_coefficients(order: usize) -> Vec<f64> {
    // c_k = (2m-k)! m! / ((2m)! k! (m-k)!), computed by the recurrence
    // c_0 = 1, c_k = c_{k-1} * (m - k + 1) / ((2m - k + 1) k).
    let m = order as f64;
    let mut c = vec![1.0];
    for k in 1..=order {
        let kf = k as f64;
        let prev = c[k - 1];
        c.push(prev * (m - kf + 1.0) / ((2.0 * m - kf + 1.0) * kf));
    }
    c
}

/// Matrix exponential `e^{At}` by scaling and squaring with a diagonal Pade
/// approximant: the scaled argument satisfies `|At/2^s|_1 <= 0.5`, the
/// approximant is applied, and the result is squared `s` times. Exact for
/// `t = 0`.
pub fn mat_exp(a: &Matrix, t: f64) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "matrix exponential requires a square matrix, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite(format!("exponential horizon t = {t}")));
    }
    let n = a.n_rows();
    let b = a.scale(t);
    let norm1 = b.one_norm();
    let s = if norm1 <= config::PADE_SCALE_LIMIT {
        0
    } else {
        (norm1 / config::PADE_SCALE_LIMIT).log2().ceil() as u32
    };
    let scaled = b.scale(0.5f64.powi(s as i32));
    let c = pade_coefficients(config::PADE_ORDER);
    // Split the Pade polynomial into even and odd parts so the denominator
    // is even - odd and the numerator even + odd.
    let mut even = Matrix::identity(n).scale(c[0]);
    let mut odd = Matrix::zeros(n, n);
    let mut power = Matrix::identity(n);
    for (k, ck) in c.iter().enumerate().skip(1) {
        power = power.mul(&scaled);
        let term = power.scale(*ck);
        if k % 2 == 0 {
            even = even.add(&term);
        } else {
            odd = odd.add(&term);
        }
    }
    let numer = even.add(&odd);
    let denom = even.sub(&odd);
    let mut result = solve(&denom, &numer)?;
    for _ in 0..s {
        result = result.mul(&result);
    }
    Ok(result)
}

/// Solves `A'P + PA = -I` for symmetric P as a linear system in the
/// n(n+1)/2 free entries and classifies A: positive definite P certifies
/// Hurwitz, an indefinite P certifies not Hurwitz, and a singular operator
/// (some eigenvalue sum equal to zero) returns [`Stability::Marginal`].
pub fn is_hurwitz(a: &Matrix) -> Result<Stability> {
    if !a.is_square() {
        return Err(Error::Dimension("stability test requires a square matrix".into()));
    }
    let n = a.n_rows();
    let unknowns = n * (n + 1) / 2;
    let idx = |i: usize, j: usize| -> usize {
        // Index of the unknown p_{ij} with i <= j in packed upper order.
        debug_assert!(i <= j);
        i * n - i * (i + 1) / 2 + j
    };
    let mut op = Matrix::zeros(unknowns, unknowns);
    let mut rhs = Matrix::zeros(unknowns, 1);
    for i in 0..n {
        for j in i..n {
            let row = idx(i, j);
            // (A'P)_{ij} = sum_k A_{ki} P_{kj}; (PA)_{ij} = sum_k P_{ik} A_{kj}.
            for k in 0..n {
                let u = if k <= j { idx(k, j) } else { idx(j, k) };
                op[(row, u)] += a[(k, i)];
                let u = if i <= k { idx(i, k) } else { idx(k, i) };
                op[(row, u)] += a[(k, j)];
            }
            rhs[(row, 0)] = if i == j { -1.0 } else { 0.0 };
        }
    }
    let packed = match solve_with_tol(&op, &rhs, config::LYAP_SINGULAR_REL) {
        Ok(x) => x,
        Err(Error::Singular(_)) => return Ok(Stability::Marginal),
        Err(e) => return Err(e),
    };
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = packed[(idx(i, j), 0)];
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    let p = SymMatrix::new(p)?;
    if is_positive_definite(&p) {
        Ok(Stability::Hurwitz)
    } else {
        Ok(Stability::NotHurwitz)
    }
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations: returns
/// eigenvalues in ascending order with matching orthonormal eigenvector
/// columns. Sweeps stop when the off-diagonal Frobenius norm is at or below
/// the configured threshold.
pub fn sym_eig(p: &SymMatrix) -> Result<(Vec<f64>, Matrix)> {
    let n = p.n();
    let mut a = p.as_matrix().clone();
    let mut v = Matrix::identity(n);
    let off = |a: &Matrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };
    // Relative threshold: rotations preserve the Frobenius norm, so the
    // initial scale is the right yardstick at any matrix magnitude.
    let tol = config::JACOBI_OFF_TOL * p.as_matrix().max_abs().max(1.0);
    let mut converged = off(&a) <= tol;
    for _ in 0..config::JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        for p_idx in 0..n {
            for q_idx in p_idx + 1..n {
                let apq = a[(p_idx, q_idx)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p_idx, p_idx)];
                let aqq = a[(q_idx, q_idx)];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p_idx)];
                    let akq = a[(k, q_idx)];
                    a[(k, p_idx)] = c * akp - s * akq;
                    a[(k, q_idx)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p_idx, k)];
                    let aqk = a[(q_idx, k)];
                    a[(p_idx, k)] = c * apk - s * aqk;
                    a[(q_idx, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p_idx)];
                    let vkq = v[(k, q_idx)];
                    v[(k, p_idx)] = c * vkp - s * vkq;
                    v[(k, q_idx)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off(&a) <= tol;
    }
    if !converged {
        return Err(Error::Convergence(format!(
            "Jacobi off-diagonal norm {} above {tol} after {} sweeps",
            off(&a),
            config::JACOBI_MAX_SWEEPS
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigvals: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vecs[(row, col)] = v[(row, src)];
        }
    }
    Ok((eigvals, vecs))
}

/// Extreme eigenvalues `(lambda_min, lambda_max)` of a symmetric matrix.
pub fn sym_eig_extremes(p: &SymMatrix) -> Result<(f64, f64)> {
    let (vals, _) = sym_eig(p)?;
    Ok((vals[0], vals[vals.len() - 1]))
}

/// Spectral norm of a symmetric matrix: max |eigenvalue|.
pub fn sym_spectral_norm(p: &SymMatrix) -> Result<f64> {
    let (lo, hi) = sym_eig_extremes(p)?;
    Ok(lo.abs().max(hi.abs()))
}

/// Spectral norm of a general matrix via the symmetric eigenvalues of A'A.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    let gram = SymMatrix::new(a.transpose().mul(a))?;
    let (_, hi) = sym_eig_extremes(&gram)?;
    Ok(hi.max(0.0).sqrt())
}
