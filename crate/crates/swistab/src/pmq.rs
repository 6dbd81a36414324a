//! Pointwise minima of quadratic forms: `V(x) = min_j x' P_j x`. These are
//! the candidate Lyapunov functions of the crate — piecewise smooth,
//! homogeneous of degree two, with well-defined directional derivatives
//! obtained by minimizing the active pieces' gradients.

use crate::config;
use crate::grid::random_units;
use crate::linalg::{sym_eig, sym_eig_extremes, sym_spectral_norm, SymMatrix};
use crate::{Error, Result};

/// A pointwise minimum of quadratic forms, `V(x) = min_j x' P_j x`. Piece
/// indices are zero-based throughout the API; file formats and logs print
/// them one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PmPqf {
    matrices: Vec<SymMatrix>,
    n: usize,
}

impl PmPqf {
    pub fn new(matrices: Vec<SymMatrix>) -> Result<PmPqf> {
        if matrices.is_empty() {
            return Err(Error::Dimension("need at least one quadratic piece".into()));
        }
        let n = matrices[0].n();
        for (j, p) in matrices.iter().enumerate() {
            if p.n() != n {
                return Err(Error::Dimension(format!(
                    "piece {} has dimension {} but piece 1 has {n}",
                    j + 1,
                    p.n()
                )));
            }
        }
        Ok(PmPqf { matrices, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of quadratic pieces.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn matrices(&self) -> &[SymMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, j: usize) -> &SymMatrix {
        &self.matrices[j]
    }
}

/// Pieces attaining the minimum at a point, within the relative activity
/// tolerance. Always nonempty and sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    indices: Vec<usize>,
}

impl ActiveSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn check_dim(v: &PmPqf, x: &[f64]) -> Result<()> {
    if x.len() != v.n() {
        return Err(Error::Dimension(format!(
            "point has dimension {}, function expects {}",
            x.len(),
            v.n()
        )));
    }
    Ok(())
}

/// `min_j x' P_j x`.
pub fn eval(v: &PmPqf, x: &[f64]) -> Result<f64> {
    check_dim(v, x)?;
    let mut best = f64::INFINITY;
    for p in v.matrices() {
        best = best.min(p.quad_form(x));
    }
    Ok(best)
}

/// Pieces within `tol_active * max(V(x), |x|^2)` of the minimum. The `|x|^2`
/// fallback keeps the threshold meaningful when the minimum itself is tiny;
/// at `x = 0` every piece is active.
pub fn active_set(v: &PmPqf, x: &[f64], tol_active: f64) -> Result<ActiveSet> {
    check_dim(v, x)?;
    let vals: Vec<f64> = v.matrices().iter().map(|p| p.quad_form(x)).collect();
    let vmin = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let x_sq: f64 = x.iter().map(|a| a * a).sum();
    let threshold = vmin + tol_active * vmin.max(x_sq);
    let indices: Vec<usize> =
        (0..vals.len()).filter(|j| vals[*j] <= threshold).collect();
    debug_assert!(!indices.is_empty());
    Ok(ActiveSet { indices })
}

fn bilinear(p: &SymMatrix, x: &[f64], y: &[f64]) -> f64 {
    let m = p.as_matrix();
    let n = p.n();
    let mut acc = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * y[j];
        }
        acc += x[i] * row;
    }
    acc
}

/// One-sided derivative of `V` at `x` along `eta`: the minimum over active
/// pieces of the piece gradient `2 x' P_j` dotted with `eta`. For a single
/// piece with `eta = A x` this reduces to `x' (A' P + P A) x`.
pub fn directional_derivative(v: &PmPqf, x: &[f64], eta: &[f64], tol_active: f64) -> Result<f64> {
    check_dim(v, x)?;
    let active = active_set(v, x, tol_active)?;
    directional_derivative_on(v, &active, x, eta)
}

/// [`directional_derivative`] with the active set resolved by the caller, so
/// several directions at the same point share one active-set computation.
pub fn directional_derivative_on(
    v: &PmPqf,
    active: &ActiveSet,
    x: &[f64],
    eta: &[f64],
) -> Result<f64> {
    check_dim(v, eta)?;
    let mut best = f64::INFINITY;
    for &j in active.indices() {
        best = best.min(2.0 * bilinear(v.matrix(j), x, eta));
    }
    Ok(best)
}

/// Witness search for strict minimality of piece `j` somewhere on the unit
/// sphere: tries `n_samples` seeded random directions plus, for every other
/// piece `k`, the most favorable eigendirection of `P_j - P_k`. Returns true
/// on the first point where piece `j` beats every other piece by more than
/// the witness margin. A false return means no witness was found, not a proof
/// that the region is empty.
pub fn region_nonempty(v: &PmPqf, j: usize, n_samples: usize, seed: u64) -> Result<bool> {
    if j >= v.len() {
        return Err(Error::Dimension(format!(
            "piece index {} out of range for {} pieces",
            j + 1,
            v.len()
        )));
    }
    if v.len() == 1 {
        return Ok(true);
    }
    let mut candidates = random_units(v.n(), n_samples, seed);
    for k in 0..v.len() {
        if k == j {
            continue;
        }
        let diff = v.matrix(j).sub(v.matrix(k));
        let (_, vecs) = sym_eig(&diff)?;
        // Column 0 carries the smallest eigenvalue: the direction where
        // piece j gains the most over piece k.
        let dir: Vec<f64> = (0..v.n()).map(|r| vecs[(r, 0)]).collect();
        candidates.push(dir);
    }
    'candidate: for x in &candidates {
        let own = v.matrix(j).quad_form(x);
        for k in 0..v.len() {
            if k == j {
                continue;
            }
            if v.matrix(k).quad_form(x) - own <= config::WITNESS_MARGIN {
                continue 'candidate;
            }
        }
        return Ok(true);
    }
    Ok(false)
}

/// Tight norm equivalence constants: `cv_minus * |x|^2 <= V(x) <= cv_plus *
/// |x|^2` with `cv_minus = min_j lambda_min(P_j)` and `cv_plus = min_j
/// lambda_max(P_j)` (the min over pieces is valid above because `V` is a
/// pointwise minimum). Every piece must be positive definite.
pub fn cv_bounds(v: &PmPqf) -> Result<(f64, f64)> {
    let mut cv_minus = f64::INFINITY;
    let mut cv_plus = f64::INFINITY;
    for (j, p) in v.matrices().iter().enumerate() {
        let (lo, hi) = sym_eig_extremes(p)?;
        if lo <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "piece {} has smallest eigenvalue {lo}",
                j + 1
            )));
        }
        cv_minus = cv_minus.min(lo);
        cv_plus = cv_plus.min(hi);
    }
    Ok((cv_minus, cv_plus))
}

/// Largest piece spectral norm, used to scale derivative tolerances.
pub fn max_piece_norm(v: &PmPqf) -> Result<f64> {
    let mut best = 0.0f64;
    for p in v.matrices() {
        best = best.max(sym_spectral_norm(p)?);
    }
    Ok(best)
}
