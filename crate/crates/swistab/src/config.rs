//! Central numeric configuration: every tolerance, cap, and default used by
//! the crate lives here so the whole pipeline can be audited in one place.
//! Functions take the values below as their defaults; the [`Tolerances`]
//! record is embedded verbatim in every output artifact for reproducibility.

use serde::{Deserialize, Serialize};

/// Relative slack for deciding which quadratic pieces are active at a point.
/// A piece j is active at x when x'P_j x is within `TOL_ACTIVE * scale` of
/// the minimum, with `scale = max(V(x), |x|^2)`. Large enough to catch exact
/// ties degraded by rounding, small enough not to merge distinct pieces at
/// desk scale.
pub const TOL_ACTIVE: f64 = 1e-9;

/// Cyclic Jacobi sweeps stop once the off-diagonal Frobenius norm drops to
/// this fraction of the input's largest entry (floored at the absolute value
/// for small matrices), keeping the stopping rule meaningful for the large
/// iterates value iteration can produce.
pub const JACOBI_OFF_TOL: f64 = 1e-12;

/// Hard sweep cap for the Jacobi eigensolver. Convergence is quadratic, so
/// hitting this indicates non-finite input rather than a hard matrix.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Diagonal Pade order for the matrix exponential.
pub const PADE_ORDER: usize = 6;

/// The argument is rescaled by powers of two until its one-norm is at or
/// below this bound before the Pade approximant is applied; standard
/// accuracy/cost balance for matrices up to about 10x10.
pub const PADE_SCALE_LIMIT: f64 = 0.5;

/// A pivot whose magnitude falls at or below `rel * max_abs_entry` fails the
/// generic LU solve as singular.
pub const SOLVE_PIVOT_REL: f64 = 1e-13;

/// Singularity threshold for the vectorized Lyapunov operator inside the
/// stability test. Looser than the generic solve threshold so that nearly
/// marginal spectra (eigenvalue sums close to zero) report "marginal" instead
/// of returning a meaninglessly huge certificate.
pub const LYAP_SINGULAR_REL: f64 = 1e-9;

/// Cholesky pivot floor, relative to the largest diagonal entry: a pivot at
/// or below `rel * scale` makes the factorization report "not positive
/// definite".
pub const CHOL_PIVOT_REL: f64 = 1e-14;

/// Shift added to `P - P'` before the Cholesky positive-semidefiniteness
/// probe in dominance pruning, absorbing rounding in the difference.
pub const PSD_SHIFT: f64 = 1e-12;

/// Strict-minimality margin for sampling witnesses: a piece counts as
/// strictly minimal at a sample only when it beats every other piece by more
/// than this.
pub const WITNESS_MARGIN: f64 = 1e-10;

/// Cap on the candidate-matrix set during value iteration; growing past it
/// aborts with an explicit resource error rather than truncating silently.
pub const SET_CAP: usize = 10_000;

/// Cap on exhaustive mode-sequence enumeration in the brute-force value
/// oracle.
pub const ENUM_CAP: u128 = 1_000_000;

/// Default spacing of recorded trajectory samples (time units): dense enough
/// for decay fitting without bloating output files.
pub const DT_RECORD: f64 = 0.01;

/// Decay fitting drops this leading fraction of samples to reduce the bias
/// the transient prefactor puts on the fitted rate.
pub const FIT_DROP_FRACTION: f64 = 0.05;

/// Accumulated slot endpoints inside one chattering subinterval must
/// reproduce the subinterval length to within this tolerance.
pub const SLOT_MEASURE_TOL: f64 = 1e-12;

/// Convex-weight vectors must be nonnegative and sum to one within this
/// tolerance.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Relative slack when checking that the Lyapunov value is nonincreasing
/// across closed-loop sampling steps.
pub const V_MONOTONE_REL: f64 = 1e-6;

/// Default seed for deterministic sampling (grids in dimension >= 4, region
/// witnesses, sample pruning) when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 0;

/// Witness points used by the optional sample-based pruning pass when it is
/// requested on the command line.
pub const SAMPLE_PRUNE_POINTS: usize = 512;

/// Unit-grid sizes per state dimension: equally spaced angles for n = 2, a
/// Fibonacci sphere for n = 3, seeded normalized Gaussian directions above.
pub const GRID_SIZE_N2: usize = 4096;
pub const GRID_SIZE_N3: usize = 4096;
pub const GRID_SIZE_HIGH: usize = 8192;

/// The tolerance/cap record embedded in every artifact the CLI writes.
/// Defaults mirror the constants above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_active: f64,
    pub jacobi_off_tol: f64,
    pub pade_scale_limit: f64,
    pub solve_pivot_rel: f64,
    pub lyap_singular_rel: f64,
    pub chol_pivot_rel: f64,
    pub psd_shift: f64,
    pub witness_margin: f64,
    pub simplex_tol: f64,
    pub slot_measure_tol: f64,
    pub v_monotone_rel: f64,
    pub fit_drop_fraction: f64,
    pub set_cap: usize,
    pub enum_cap: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_active: TOL_ACTIVE,
            jacobi_off_tol: JACOBI_OFF_TOL,
            pade_scale_limit: PADE_SCALE_LIMIT,
            solve_pivot_rel: SOLVE_PIVOT_REL,
            lyap_singular_rel: LYAP_SINGULAR_REL,
            chol_pivot_rel: CHOL_PIVOT_REL,
            psd_shift: PSD_SHIFT,
            witness_margin: WITNESS_MARGIN,
            simplex_tol: SIMPLEX_TOL,
            slot_measure_tol: SLOT_MEASURE_TOL,
            v_monotone_rel: V_MONOTONE_REL,
            fit_drop_fraction: FIT_DROP_FRACTION,
            set_cap: SET_CAP,
            enum_cap: ENUM_CAP as u64,
        }
    }
}

/// Default grid size for the given state dimension.
pub fn default_grid_size(n: usize) -> usize {
    match n {
        0 | 1 => 2,
        2 => GRID_SIZE_N2,
        3 => GRID_SIZE_N3,
        _ => GRID_SIZE_HIGH,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_are_positive_and_ordered() {
        let t = Tolerances::default();
        assert!(t.tol_active > 0.0);
        assert!(t.jacobi_off_tol > 0.0);
        assert!(t.psd_shift > 0.0);
        assert!(t.witness_margin > t.psd_shift);
        assert!(t.solve_pivot_rel < t.lyap_singular_rel);
        assert!(t.tol_active < t.simplex_tol + 1.0);
        assert!(t.set_cap >= 1000);
        assert!(t.fit_drop_fraction > 0.0 && t.fit_drop_fraction < 0.5);
    }

    #[test]
    fn grid_sizes_match_dimension_rules() {
        assert_eq!(default_grid_size(2), 4096);
        assert_eq!(default_grid_size(3), 4096);
        assert_eq!(default_grid_size(4), 8192);
        assert_eq!(default_grid_size(7), 8192);
    }
}
