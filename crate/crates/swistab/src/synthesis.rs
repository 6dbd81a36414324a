//! Value iteration for sampled switched systems. The finite-horizon cost
//! `min over mode sequences of sum |x_k|^2` is represented exactly as a
//! pointwise minimum of quadratic forms; iterating the dynamic-programming
//! recursion grows the matrix set, pruning keeps it small, and grid checks
//! certify the discrete and continuous decrease rates of the resulting
//! candidate Lyapunov function.

use crate::config;
use crate::grid::{default_unit_grid, random_units, unit_grid};
use crate::linalg::{cholesky, is_hurwitz, mat_exp, sym_spectral_norm, Matrix, SymMatrix};
use crate::model::SwitchedLinearSystem;
use crate::pmq::{self, PmPqf};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Discrete-time maps `E_i = exp(A_i h)` obtained by sampling a switched
/// system at period `h`. Test fixtures may construct arbitrary maps
/// directly; sampled maps are always nonsingular.
#[derive(Debug, Clone, PartialEq)]
pub struct Dtsls {
    h: f64,
    maps: Vec<Matrix>,
}

impl Dtsls {
    /// Wraps explicit step maps (used by fixtures and oracles).
    pub fn from_maps(h: f64, maps: Vec<Matrix>) -> Result<Dtsls> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sampling period must be positive, got {h}"
            )));
        }
        if maps.is_empty() {
            return Err(Error::Dimension("need at least one step map".into()));
        }
        let n = maps[0].n_rows();
        for (i, e) in maps.iter().enumerate() {
            if !e.is_square() || e.n_rows() != n {
                return Err(Error::Dimension(format!(
                    "step map {} is {}x{}, expected {n}x{n}",
                    i + 1,
                    e.n_rows(),
                    e.n_cols()
                )));
            }
        }
        Ok(Dtsls { h, maps })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.maps[0].n_rows()
    }

    pub fn mode_count(&self) -> usize {
        self.maps.len()
    }

    pub fn maps(&self) -> &[Matrix] {
        &self.maps
    }

    pub fn map(&self, i: usize) -> &Matrix {
        &self.maps[i]
    }
}

/// Samples the continuous system: one matrix exponential per mode.
pub fn sample_dtsls(sys: &SwitchedLinearSystem, h: f64) -> Result<Dtsls> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("sampling period must be positive, got {h}")));
    }
    let maps = sys
        .modes()
        .iter()
        .map(|a| mat_exp(a, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dtsls { h, maps })
}

/// Optional sample-based pruning pass (heuristic, off by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrune {
    pub n_samples: usize,
    pub seed: u64,
}

/// Pruning configuration for one value-iteration run. Exact duplicates are
/// always removed; dominance pruning is sound (never changes the minimum);
/// sample pruning may change it and is logged with a held-out deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneCfg {
    pub dominance: bool,
    pub sample: Option<SamplePrune>,
}

impl Default for PruneCfg {
    fn default() -> PruneCfg {
        PruneCfg { dominance: true, sample: None }
    }
}

/// Set sizes before and after each pruning stage of one iteration step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub generated: usize,
    pub after_dedup: usize,
    pub after_dominance: usize,
    pub after_sample: usize,
    /// Largest increase of the represented minimum on a held-out sample set
    /// caused by sample pruning this step (0 when sample pruning is off).
    pub sample_deviation: f64,
}

/// Outcome of value iteration: the canonical (sorted) matrix set whose
/// pointwise minimum is the horizon-`N` cost, plus per-step prune logs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIterState {
    n_horizon: usize,
    set: Vec<SymMatrix>,
    prune_log: Vec<StepLog>,
}

impl ValueIterState {
    pub fn n_horizon(&self) -> usize {
        self.n_horizon
    }

    pub fn set(&self) -> &[SymMatrix] {
        &self.set
    }

    pub fn prune_log(&self) -> &[StepLog] {
        &self.prune_log
    }

    /// `min_P z' P z` over the current set.
    pub fn value(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.set[0].n());
        self.set.iter().map(|p| p.quad_form(z)).fold(f64::INFINITY, f64::min)
    }

    pub fn to_pmq(&self) -> PmPqf {
        PmPqf::new(self.set.clone()).expect("iteration set is nonempty")
    }
}

fn canonical_sort(set: &mut [SymMatrix]) {
    set.sort_by(|a, b| {
        for (x, y) in a.as_matrix().data().iter().zip(b.as_matrix().data()) {
            let ord = x.total_cmp(y);
            if ord != std::cmp::Ordering::Equal {
                return ord;
            }
        }
        std::cmp::Ordering::Equal
    });
}

fn dedup_exact(set: &mut Vec<SymMatrix>) {
    set.dedup_by(|a, b| a.as_matrix().data() == b.as_matrix().data());
}

fn psd_within_shift(d: &SymMatrix) -> bool {
    cholesky(&d.shift_diag(config::PSD_SHIFT)).is_some()
}

/// Drops every matrix whose form is pointwise at least some other member's
/// (so it can never be the strict minimum). Mutually dominating pairs are
/// nearly identical up to the PSD shift; the earlier matrix in canonical
/// order survives. Input must be canonically sorted and deduplicated.
pub fn prune_dominance(set: &[SymMatrix]) -> Vec<SymMatrix> {
    let m = set.len();
    let mut dropped = vec![false; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            if psd_within_shift(&set[i].sub(&set[j]))
                && (j < i || !psd_within_shift(&set[j].sub(&set[i])))
            {
                dropped[i] = true;
                break;
            }
        }
    }
    set.iter()
        .zip(&dropped)
        .filter(|(_, d)| !**d)
        .map(|(p, _)| p.clone())
        .collect()
}

/// Keeps only matrices witnessed strictly minimal on a seeded unit-sphere
/// sample. Heuristic: discarding an unwitnessed matrix can raise the
/// represented minimum off the samples. Returns the input unchanged when no
/// witness is found at all.
pub fn prune_sample(set: &[SymMatrix], n_samples: usize, seed: u64) -> Vec<SymMatrix> {
    if set.len() <= 1 {
        return set.to_vec();
    }
    let n = set[0].n();
    let samples = random_units(n, n_samples, seed);
    let mut witnessed = vec![false; set.len()];
    for x in &samples {
        let vals: Vec<f64> = set.iter().map(|p| p.quad_form(x)).collect();
        let mut best = 0usize;
        for (j, v) in vals.iter().enumerate() {
            if *v < vals[best] {
                best = j;
            }
        }
        let mut second = f64::INFINITY;
        for (j, v) in vals.iter().enumerate() {
            if j != best {
                second = second.min(*v);
            }
        }
        if second - vals[best] > config::WITNESS_MARGIN {
            witnessed[best] = true;
        }
    }
    if witnessed.iter().all(|w| !w) {
        return set.to_vec();
    }
    set.iter()
        .zip(&witnessed)
        .filter(|(_, w)| **w)
        .map(|(p, _)| p.clone())
        .collect()
}

fn min_form(set: &[SymMatrix], x: &[f64]) -> f64 {
    set.iter().map(|p| p.quad_form(x)).fold(f64::INFINITY, f64::min)
}

/// Dynamic-programming recursion for the horizon-`N` cost: starting from
/// `{I}`, each step maps the set to `{I + E_i' P E_i}` and prunes. Errors if
/// the pruned set ever exceeds the configured cap.
pub fn value_iteration(dt: &Dtsls, n_horizon: usize, cfg: &PruneCfg) -> Result<ValueIterState> {
    let n = dt.n();
    let mut set = vec![SymMatrix::identity(n)];
    let mut prune_log = Vec::with_capacity(n_horizon);
    for step in 1..=n_horizon {
        let mut generated = Vec::with_capacity(set.len() * dt.mode_count());
        for e in dt.maps() {
            let et = e.transpose();
            for p in &set {
                let epe = et.mul(&p.as_matrix().mul(e));
                generated.push(SymMatrix::new(epe)?.shift_diag(1.0));
            }
        }
        let generated_count = generated.len();
        canonical_sort(&mut generated);
        dedup_exact(&mut generated);
        let after_dedup = generated.len();
        if cfg.dominance {
            generated = prune_dominance(&generated);
        }
        let after_dominance = generated.len();
        let mut sample_deviation = 0.0f64;
        if let Some(sp) = &cfg.sample {
            let before = generated.clone();
            generated = prune_sample(&generated, sp.n_samples, sp.seed);
            let held_out = random_units(n, sp.n_samples, sp.seed.wrapping_add(1));
            for x in &held_out {
                sample_deviation =
                    sample_deviation.max(min_form(&generated, x) - min_form(&before, x));
            }
        }
        if generated.len() > config::SET_CAP {
            return Err(Error::SetCapExceeded { cap: config::SET_CAP });
        }
        prune_log.push(StepLog {
            step,
            generated: generated_count,
            after_dedup,
            after_dominance,
            after_sample: generated.len(),
            sample_deviation,
        });
        set = generated;
    }
    Ok(ValueIterState { n_horizon, set, prune_log })
}

/// Exact horizon-`N` cost by enumerating every mode sequence. The
/// definitional oracle for [`value_iteration`]; refuses horizons with more
/// than the capped number of sequences.
pub fn brute_force_value(dt: &Dtsls, n_horizon: usize, z: &[f64]) -> Result<f64> {
    let m = dt.mode_count() as u128;
    let count = m
        .checked_pow(n_horizon.min(u32::MAX as usize) as u32)
        .ok_or(Error::EnumerationCapExceeded { count: u128::MAX, cap: config::ENUM_CAP })?;
    if count > config::ENUM_CAP {
        return Err(Error::EnumerationCapExceeded { count, cap: config::ENUM_CAP });
    }
    if z.len() != dt.n() {
        return Err(Error::Dimension(format!(
            "state has dimension {}, maps expect {}",
            z.len(),
            dt.n()
        )));
    }
    fn recurse(dt: &Dtsls, remaining: usize, x: &[f64]) -> f64 {
        let cost: f64 = x.iter().map(|v| v * v).sum();
        if remaining == 0 {
            return cost;
        }
        let mut best = f64::INFINITY;
        for e in dt.maps() {
            best = best.min(recurse(dt, remaining - 1, &e.matvec(x)));
        }
        cost + best
    }
    Ok(recurse(dt, n_horizon, z))
}

fn check_grid(n: usize, grid: &[Vec<f64>]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("verification grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|z| z.len() != n) {
        return Err(Error::Dimension(format!(
            "grid point has dimension {}, expected {n}",
            bad.len()
        )));
    }
    Ok(())
}

/// Largest worst-case value over an indexed slice, ties resolved to the
/// lowest index so parallel evaluation stays deterministic.
fn max_with_index(vals: &[f64]) -> (usize, f64) {
    let mut idx = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v > vals[idx] {
            idx = i;
        }
    }
    (idx, vals[idx])
}

/// One-step decrease margin of the sampled system on a unit grid. Returns
/// `kappa_dt` — the largest rate with `min_i [V(E_i z) - V(z)] <= -kappa_dt`
/// everywhere on the grid — and the grid point attaining the worst margin.
/// The condition holds iff `kappa_dt > 0`. Degree-2 homogeneity makes the
/// unit sphere sufficient.
pub fn verify_dt_decrease(
    dt: &Dtsls,
    v: &PmPqf,
    grid: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if v.n() != dt.n() {
        return Err(Error::Dimension(format!(
            "function dimension {} does not match maps dimension {}",
            v.n(),
            dt.n()
        )));
    }
    check_grid(dt.n(), grid)?;
    let margins = grid
        .par_iter()
        .map(|z| -> Result<f64> {
            let vz = pmq::eval(v, z)?;
            let mut best = f64::INFINITY;
            for e in dt.maps() {
                best = best.min(pmq::eval(v, &e.matvec(z))? - vz);
            }
            Ok(best)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (idx, worst) = max_with_index(&margins);
    Ok((-worst, grid[idx].clone()))
}

/// Continuous decrease rate of `V` along the best mode, normalized by `V`
/// itself: `kappa_ct` is the largest rate with `min_i DV(z; A_i z) <=
/// -kappa_ct V(z)` on the unit grid. Requires `V` positive definite; passes
/// iff `kappa_ct > 0`.
pub fn verify_ct_decrease(
    sys: &SwitchedLinearSystem,
    v: &PmPqf,
    grid: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if v.n() != sys.n() {
        return Err(Error::Dimension(format!(
            "function dimension {} does not match system dimension {}",
            v.n(),
            sys.n()
        )));
    }
    pmq::cv_bounds(v)?;
    check_grid(sys.n(), grid)?;
    let ratios = grid
        .par_iter()
        .map(|z| -> Result<f64> {
            let vz = pmq::eval(v, z)?;
            let mut dv_min = f64::INFINITY;
            for a in sys.modes() {
                let eta = a.matvec(z);
                dv_min =
                    dv_min.min(pmq::directional_derivative(v, z, &eta, config::TOL_ACTIVE)?);
            }
            Ok(dv_min / vz)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (idx, worst) = max_with_index(&ratios);
    Ok((-worst, grid[idx].clone()))
}

/// Uniform sampling-period bound under which the greedy derivative feedback
/// inherits the continuous decrease: `kappa * cv_minus / max_{i,k} |A_i' S +
/// S A_i|` with `S = A_i' P_k + P_k A_i`. Infinite for identically zero
/// dynamics.
pub fn compute_h0(sys: &SwitchedLinearSystem, v: &PmPqf, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {kappa}")));
    }
    let (cv_minus, _) = pmq::cv_bounds(v)?;
    let mut den = 0.0f64;
    for a in sys.modes() {
        let at = a.transpose();
        for p in v.matrices() {
            let s = at.mul(p.as_matrix()).add(&p.as_matrix().mul(a));
            let inner = at.mul(&s).add(&s.mul(a));
            den = den.max(sym_spectral_norm(&SymMatrix::new(inner)?)?);
        }
    }
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(kappa * cv_minus / den)
}

/// One row of the asymptotic-order sweep: the largest matrix norm in the
/// synthesized set and the largest argmin-matrix jump across one sampled
/// step, at a given sampling period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub h: f64,
    pub p_norm_max: f64,
    pub dp_norm_max: f64,
    pub set_size: usize,
}

fn argmin_form(set: &[SymMatrix], x: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_val = set[0].quad_form(x);
    for (j, p) in set.iter().enumerate().skip(1) {
        let v = p.quad_form(x);
        if v < best_val {
            best = j;
            best_val = v;
        }
    }
    best
}

/// Empirical growth diagnostics over a sampling-period sweep. For each `h`:
/// the maximal `|P|` over the synthesized set (expected to grow like `1/h`)
/// and the maximal `|P' - P|` between the argmin matrices at `z` and at
/// `E_i z` over a unit grid, worst mode (expected to stay bounded — provided
/// the pruning witness budget resolves the optimal-switch family; a budget
/// too small for the period merges adjacent pieces and inflates the jump).
pub fn order_diagnostics(
    sys: &SwitchedLinearSystem,
    n_horizon: usize,
    h_list: &[f64],
    cfg: &PruneCfg,
) -> Result<Vec<OrderRow>> {
    let mut rows = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let dt = sample_dtsls(sys, h)?;
        let state = value_iteration(&dt, n_horizon, cfg)?;
        let set = state.set();
        let mut p_norm_max = 0.0f64;
        for p in set {
            p_norm_max = p_norm_max.max(sym_spectral_norm(p)?);
        }
        let grid = default_unit_grid(sys.n(), config::DEFAULT_SEED);
        let jumps = grid
            .par_iter()
            .map(|z| -> Result<f64> {
                let j = argmin_form(set, z);
                let mut worst = 0.0f64;
                for e in dt.maps() {
                    let j2 = argmin_form(set, &e.matvec(z));
                    if j2 != j {
                        worst = worst.max(sym_spectral_norm(&set[j2].sub(&set[j]))?);
                    }
                }
                Ok(worst)
            })
            .collect::<Result<Vec<f64>>>()?;
        let dp_norm_max = jumps.iter().cloned().fold(0.0f64, f64::max);
        log::info!(
            "order sweep: h={h:.6} log(1/h)={:.4} log|P|={:.4} |dP|={dp_norm_max:.6} set={}",
            (1.0 / h).ln(),
            p_norm_max.ln(),
            set.len()
        );
        rows.push(OrderRow { h, p_norm_max, dp_norm_max, set_size: set.len() });
    }
    Ok(rows)
}

/// A generated test system together with the generator's honesty flag: when
/// the redraw budget could not make every individual mode non-Hurwitz, the
/// system is stabilizable by a constant signal and flagged as such.
#[derive(Debug, Clone)]
pub struct GeneratedSystem {
    pub system: SwitchedLinearSystem,
    pub trivially_stabilizable: bool,
}

/// Draws a switched system whose equal-weights mode average is Hurwitz with
/// the given margin (so the relaxed dynamics admit a contracting direction)
/// while each individual mode is, whenever the redraw budget allows,
/// unstable on its own. Deterministic in the seed.
pub fn gen_stabilizable(seed: u64, n: usize, m: usize, margin: f64) -> Result<GeneratedSystem> {
    if n < 2 || m < 2 {
        return Err(Error::InvalidArgument(format!(
            "generator needs n >= 2 and at least two modes, got n = {n}, M = {m}"
        )));
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::InvalidArgument(format!("margin must be nonnegative, got {margin}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_matrix = |rng: &mut ChaCha8Rng| {
        Matrix::new(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .expect("finite entries")
    };

    let raw = random_matrix(&mut rng);
    let eye = Matrix::identity(n);
    let mut shift = 0.0f64;
    let a_bar = loop {
        let cand = raw.sub(&eye.scale(shift));
        if is_hurwitz(&cand.add(&eye.scale(margin)))?.is_hurwitz() {
            break cand;
        }
        shift += 0.25;
    };

    let mut last_modes: Option<Vec<Matrix>> = None;
    for _ in 0..100 {
        let mut parts: Vec<Matrix> = (0..m - 1).map(|_| random_matrix(&mut rng)).collect();
        let mut neg_sum = Matrix::zeros(n, n);
        for b in &parts {
            neg_sum = neg_sum.sub(b);
        }
        parts.push(neg_sum);
        for c in [1.0, 2.0, 4.0, 8.0] {
            let modes: Vec<Matrix> =
                parts.iter().map(|b| a_bar.add(&b.scale(c))).collect();
            let mut all_unstable = true;
            for a in &modes {
                if is_hurwitz(a)?.is_hurwitz() {
                    all_unstable = false;
                    break;
                }
            }
            if all_unstable {
                return Ok(GeneratedSystem {
                    system: SwitchedLinearSystem::new(modes)?,
                    trivially_stabilizable: false,
                });
            }
            last_modes = Some(modes);
        }
    }
    Ok(GeneratedSystem {
        system: SwitchedLinearSystem::new(last_modes.expect("at least one attempt"))?,
        trivially_stabilizable: true,
    })
}

/// Certification summary serialized by the CLI. `h0` is 0 when the
/// continuous decrease check fails (no valid bound exists); `worst_point` is
/// the unit vector with the worst continuous decrease margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kappa_dt: f64,
    pub kappa_ct: f64,
    pub h0: f64,
    pub cv_minus: f64,
    pub cv_plus: f64,
    pub grid: usize,
    pub worst_point: Vec<f64>,
    pub h: f64,
    #[serde(rename = "N")]
    pub n_horizon: usize,
    pub set_size: usize,
}

impl VerificationReport {
    pub fn dt_passed(&self) -> bool {
        self.kappa_dt > 0.0
    }

    pub fn ct_passed(&self) -> bool {
        self.kappa_ct > 0.0
    }
}

/// Full pipeline: sample at `h`, iterate to horizon `n_horizon`, then check
/// both decrease conditions on a seeded unit grid of `grid_size` points.
pub fn certify(
    sys: &SwitchedLinearSystem,
    h: f64,
    n_horizon: usize,
    cfg: &PruneCfg,
    grid_size: usize,
    grid_seed: u64,
) -> Result<(ValueIterState, VerificationReport)> {
    let dt = sample_dtsls(sys, h)?;
    let state = value_iteration(&dt, n_horizon, cfg)?;
    let v = state.to_pmq();
    let grid = unit_grid(sys.n(), grid_size, grid_seed);
    let (kappa_dt, _) = verify_dt_decrease(&dt, &v, &grid)?;
    let (kappa_ct, worst_point) = verify_ct_decrease(sys, &v, &grid)?;
    let (cv_minus, cv_plus) = pmq::cv_bounds(&v)?;
    let h0 = if kappa_ct > 0.0 { compute_h0(sys, &v, kappa_ct / 3.0)? } else { 0.0 };
    let report = VerificationReport {
        kappa_dt,
        kappa_ct,
        h0,
        cv_minus,
        cv_plus,
        grid: grid.len(),
        worst_point,
        h,
        n_horizon,
        set_size: state.set().len(),
    };
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig_extremes;
    use crate::model::sys_a;
    use approx::assert_relative_eq;

    #[test]
    fn sampling_diagonal_modes_is_exact() {
        let dt = sample_dtsls(&sys_a(), 1.0).unwrap();
        assert_relative_eq!(dt.map(0)[(0, 0)], (-1.0f64).exp(), epsilon = 1e-13);
        assert_relative_eq!(dt.map(0)[(1, 1)], 0.5f64.exp(), epsilon = 1e-13);
        assert_relative_eq!(dt.map(1)[(0, 0)], 0.5f64.exp(), epsilon = 1e-13);
        assert_relative_eq!(dt.map(1)[(1, 1)], (-1.0f64).exp(), epsilon = 1e-13);
        assert_eq!(dt.map(0)[(0, 1)], 0.0);
    }

    #[test]
    fn sampling_matches_first_order_taylor() {
        let sys = sys_a();
        let h = 1e-3;
        let dt = sample_dtsls(&sys, h).unwrap();
        for (e, a) in dt.maps().iter().zip(sys.modes()) {
            let lin = Matrix::identity(2).add(&a.scale(h));
            assert!(e.max_abs_diff(&lin) <= h * h, "second-order residual too large");
        }
    }

    #[test]
    fn sampling_zero_matrix_gives_identity() {
        let sys = SwitchedLinearSystem::new(vec![Matrix::zeros(2, 2)]).unwrap();
        let dt = sample_dtsls(&sys, 0.7).unwrap();
        assert_eq!(dt.map(0).data(), Matrix::identity(2).data());
    }

    #[test]
    fn sampling_rejects_nonpositive_period() {
        assert!(sample_dtsls(&sys_a(), 0.0).is_err());
        assert!(sample_dtsls(&sys_a(), -1.0).is_err());
    }

    #[test]
    fn iteration_with_nilpotent_map_stays_identity() {
        let dt = Dtsls::from_maps(1.0, vec![Matrix::zeros(2, 2)]).unwrap();
        let state = value_iteration(&dt, 3, &PruneCfg::default()).unwrap();
        assert_eq!(state.set().len(), 1);
        assert_eq!(state.set()[0].as_matrix().data(), Matrix::identity(2).data());
        assert_eq!(state.value(&[3.0, -4.0]), 25.0);
    }

    #[test]
    fn iteration_with_identity_map_counts_steps() {
        let dt = Dtsls::from_maps(1.0, vec![Matrix::identity(2)]).unwrap();
        let state = value_iteration(&dt, 4, &PruneCfg::default()).unwrap();
        assert_eq!(state.set().len(), 1);
        assert_eq!(state.set()[0].as_matrix().data(), &[5.0, 0.0, 0.0, 5.0]);
        assert_eq!(state.value(&[1.0, 0.0]), 5.0);
    }

    #[test]
    fn iteration_one_step_two_modes() {
        let dt = Dtsls::from_maps(
            1.0,
            vec![Matrix::diag(&[0.5, 2.0]), Matrix::diag(&[2.0, 0.5])],
        )
        .unwrap();
        let state = value_iteration(&dt, 1, &PruneCfg::default()).unwrap();
        assert_eq!(state.set().len(), 2);
        assert_eq!(state.set()[0].as_matrix().data(), &[1.25, 0.0, 0.0, 5.0]);
        assert_eq!(state.set()[1].as_matrix().data(), &[5.0, 0.0, 0.0, 1.25]);
        assert_eq!(state.value(&[1.0, 0.0]), 1.25);
    }

    #[test]
    fn iteration_horizon_zero_is_the_identity_set() {
        let dt = sample_dtsls(&sys_a(), 0.3).unwrap();
        let state = value_iteration(&dt, 0, &PruneCfg::default()).unwrap();
        assert_eq!(state.set().len(), 1);
        assert_eq!(state.value(&[0.6, 0.8]), 1.0);
    }

    #[test]
    fn brute_force_horizon_zero_is_the_squared_norm() {
        let dt = sample_dtsls(&sys_a(), 0.5).unwrap();
        assert_eq!(brute_force_value(&dt, 0, &[3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn brute_force_matches_iteration_on_closed_form_cases() {
        let cases = vec![
            Dtsls::from_maps(1.0, vec![Matrix::zeros(2, 2)]).unwrap(),
            Dtsls::from_maps(1.0, vec![Matrix::identity(2)]).unwrap(),
            Dtsls::from_maps(
                1.0,
                vec![Matrix::diag(&[0.5, 2.0]), Matrix::diag(&[2.0, 0.5])],
            )
            .unwrap(),
        ];
        for dt in &cases {
            for n_horizon in [1usize, 3] {
                let state = value_iteration(dt, n_horizon, &PruneCfg::default()).unwrap();
                for z in [[1.0, 0.0], [0.3, -0.9], [2.0, 2.0]] {
                    let oracle = brute_force_value(dt, n_horizon, &z).unwrap();
                    assert_relative_eq!(state.value(&z), oracle, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn brute_force_refuses_huge_enumerations() {
        let dt = sample_dtsls(&sys_a(), 0.5).unwrap();
        assert!(matches!(
            brute_force_value(&dt, 21, &[1.0, 0.0]),
            Err(Error::EnumerationCapExceeded { .. })
        ));
    }

    /// The pruned set must represent the exact enumerated cost. A failure
    /// here means pruning discarded a matrix that was strictly minimal
    /// somewhere, or the recursion itself is wrong.
    #[test]
    fn oracle_equivalence_on_seeded_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for seed in 0..3u64 {
            let sys = gen_stabilizable(seed, 2, 2, 0.1).unwrap().system;
            for h in [0.1, 0.5] {
                let dt = sample_dtsls(&sys, h).unwrap();
                let state = value_iteration(&dt, 6, &PruneCfg::default()).unwrap();
                for _ in 0..100 {
                    let z = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                    let oracle = brute_force_value(&dt, 6, &z).unwrap();
                    assert!(
                        (state.value(&z) - oracle).abs() <= 1e-9,
                        "value {} vs oracle {oracle} (seed {seed}, h {h})",
                        state.value(&z)
                    );
                }
            }
        }
    }

    #[test]
    fn value_grows_with_horizon() {
        let dt = sample_dtsls(&sys_a(), 0.1).unwrap();
        let grid = unit_grid(2, 64, 0);
        let mut prev: Option<ValueIterState> = None;
        for n_horizon in 0..=8 {
            let state = value_iteration(&dt, n_horizon, &PruneCfg::default()).unwrap();
            if let Some(p) = &prev {
                for z in &grid {
                    assert!(
                        state.value(z) >= p.value(z) - 1e-12,
                        "horizon {n_horizon} shrank the value at {z:?}"
                    );
                }
            }
            prev = Some(state);
        }
    }

    #[test]
    fn dominance_prune_examples() {
        let mut set = vec![SymMatrix::identity(2), SymMatrix::identity(2).scale(2.0)];
        canonical_sort(&mut set);
        let pruned = prune_dominance(&set);
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned[0].as_matrix().data(), SymMatrix::identity(2).as_matrix().data());

        let mut incomparable = vec![SymMatrix::diag(&[1.0, 2.0]), SymMatrix::diag(&[2.0, 1.0])];
        canonical_sort(&mut incomparable);
        assert_eq!(prune_dominance(&incomparable).len(), 2);

        let mut dupes = vec![SymMatrix::diag(&[1.0, 2.0]), SymMatrix::diag(&[1.0, 2.0])];
        canonical_sort(&mut dupes);
        dedup_exact(&mut dupes);
        assert_eq!(dupes.len(), 1);
    }

    #[test]
    fn dominance_prune_never_changes_the_minimum() {
        let dt = sample_dtsls(&sys_a(), 0.5).unwrap();
        let raw = value_iteration(&dt, 6, &PruneCfg { dominance: false, sample: None }).unwrap();
        let mut pruned_set = raw.set().to_vec();
        canonical_sort(&mut pruned_set);
        let pruned = prune_dominance(&pruned_set);
        assert!(pruned.len() <= raw.set().len());
        let grid = unit_grid(2, 1000, 1);
        for z in &grid {
            let before = min_form(raw.set(), z);
            let after = min_form(&pruned, z);
            assert!(
                (before - after).abs() <= 1e-12,
                "prune changed the minimum: {before} vs {after}"
            );
        }
    }

    #[test]
    fn sample_prune_examples() {
        let mut set = vec![SymMatrix::identity(2), SymMatrix::identity(2).scale(2.0)];
        canonical_sort(&mut set);
        let pruned = prune_sample(&set, 64, 5);
        assert_eq!(pruned.len(), 1);

        let mut incomparable = vec![SymMatrix::diag(&[1.0, 2.0]), SymMatrix::diag(&[2.0, 1.0])];
        canonical_sort(&mut incomparable);
        assert_eq!(prune_sample(&incomparable, 256, 5).len(), 2);
    }

    #[test]
    fn sample_prune_is_at_most_as_large_as_dominance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let mut set: Vec<SymMatrix> = (0..6)
                .map(|_| {
                    let g = Matrix::new(
                        2,
                        2,
                        (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    )
                    .unwrap();
                    SymMatrix::new(g.transpose().mul(&g)).unwrap().shift_diag(0.2)
                })
                .collect();
            canonical_sort(&mut set);
            dedup_exact(&mut set);
            let by_dom = prune_dominance(&set);
            let by_sample = prune_sample(&set, 512, 9);
            assert!(
                by_sample.len() <= by_dom.len(),
                "sample prune kept {} but dominance kept {}",
                by_sample.len(),
                by_dom.len()
            );
        }
    }

    #[test]
    fn every_iterate_dominates_the_identity() {
        let dt = sample_dtsls(&sys_a(), 0.2).unwrap();
        let cfg = PruneCfg {
            dominance: true,
            sample: Some(SamplePrune { n_samples: 256, seed: 3 }),
        };
        let state = value_iteration(&dt, 10, &cfg).unwrap();
        for p in state.set() {
            let (lo, _) = sym_eig_extremes(p).unwrap();
            assert!(lo >= 1.0 - 1e-9, "iterate with smallest eigenvalue {lo}");
        }
    }

    #[test]
    fn iteration_reports_cap_overflow() {
        // Two generic expanding maps, no dominance: the set doubles per step.
        let dt = Dtsls::from_maps(
            1.0,
            vec![
                Matrix::from_rows(&[vec![1.1, 0.3], vec![0.0, 1.2]]).unwrap(),
                Matrix::from_rows(&[vec![1.3, 0.0], vec![0.2, 1.1]]).unwrap(),
            ],
        )
        .unwrap();
        let result = value_iteration(&dt, 16, &PruneCfg { dominance: false, sample: None });
        assert!(matches!(result, Err(Error::SetCapExceeded { cap: 10_000 })));
    }

    #[test]
    fn discrete_decrease_detects_contraction_and_expansion() {
        let contracting = Dtsls::from_maps(0.1, vec![Matrix::identity(2).scale(0.5)]).unwrap();
        let state = value_iteration(&contracting, 8, &PruneCfg::default()).unwrap();
        let grid = unit_grid(2, 256, 0);
        let (kappa, _) = verify_dt_decrease(&contracting, &state.to_pmq(), &grid).unwrap();
        assert!(kappa > 0.0, "contraction not certified, kappa_dt = {kappa}");

        let expanding = Dtsls::from_maps(
            0.1,
            vec![Matrix::identity(2).scale(2.0), Matrix::identity(2).scale(2.0)],
        )
        .unwrap();
        let state = value_iteration(&expanding, 3, &PruneCfg::default()).unwrap();
        let (kappa, _) = verify_dt_decrease(&expanding, &state.to_pmq(), &grid).unwrap();
        assert!(kappa < 0.0, "expansion wrongly certified, kappa_dt = {kappa}");
    }

    /// Long horizons need the witness-based pruning stage: the dominance
    /// order leaves these diagonal iterates an exponentially large
    /// antichain, and the set cap trips near N = 20 without it.
    #[test]
    fn discrete_decrease_certifies_the_reference_system() {
        let sys = sys_a();
        let dt = sample_dtsls(&sys, 0.1).unwrap();
        let cfg = PruneCfg {
            dominance: true,
            sample: Some(SamplePrune { n_samples: 512, seed: 0 }),
        };
        let state = value_iteration(&dt, 30, &cfg).unwrap();
        assert!(state.set().len() <= 64, "pruned set still has {}", state.set().len());
        let grid = default_unit_grid(2, 0);
        let (kappa, _) = verify_dt_decrease(&dt, &state.to_pmq(), &grid).unwrap();
        assert!(kappa > 0.0, "kappa_dt = {kappa}");
    }

    #[test]
    fn continuous_decrease_analytic_cases() {
        let grid = default_unit_grid(2, 0);
        let eye = PmPqf::new(vec![SymMatrix::identity(2)]).unwrap();

        let (kappa, worst) = verify_ct_decrease(&sys_a(), &eye, &grid).unwrap();
        assert_relative_eq!(kappa, 0.5, epsilon = 1e-9);
        // The worst direction balances the stable and unstable coordinates.
        assert_relative_eq!(worst[0] * worst[0], 0.5, epsilon = 1e-3);

        let stable = SwitchedLinearSystem::new(vec![Matrix::identity(2).scale(-1.0)]).unwrap();
        let (kappa, _) = verify_ct_decrease(&stable, &eye, &grid).unwrap();
        assert_relative_eq!(kappa, 2.0, epsilon = 1e-12);

        let antistable = SwitchedLinearSystem::new(vec![
            Matrix::identity(2),
            Matrix::identity(2),
        ])
        .unwrap();
        let (kappa, _) = verify_ct_decrease(&antistable, &eye, &grid).unwrap();
        assert_relative_eq!(kappa, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn continuous_decrease_requires_positive_definite_pieces() {
        let v = PmPqf::new(vec![SymMatrix::diag(&[1.0, -1.0])]).unwrap();
        let grid = unit_grid(2, 16, 0);
        assert!(verify_ct_decrease(&sys_a(), &v, &grid).is_err());
    }

    #[test]
    fn sampling_bound_closed_form() {
        let eye = PmPqf::new(vec![SymMatrix::identity(2)]).unwrap();
        let h0 = compute_h0(&sys_a(), &eye, 1.0 / 6.0).unwrap();
        assert_eq!(h0, 1.0 / 24.0);
    }

    #[test]
    fn sampling_bound_scales_with_the_dynamics() {
        let eye = PmPqf::new(vec![SymMatrix::identity(2)]).unwrap();
        let sys = sys_a();
        let doubled = SwitchedLinearSystem::new(
            sys.modes().iter().map(|a| a.scale(2.0)).collect(),
        )
        .unwrap();
        let kappa = 0.12;
        let base = compute_h0(&sys, &eye, kappa).unwrap();
        let fast = compute_h0(&doubled, &eye, 2.0 * kappa).unwrap();
        assert_relative_eq!(fast, base / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sampling_bound_ignores_uniform_function_scaling() {
        let sys = sys_a();
        let kappa = 0.12;
        let base =
            compute_h0(&sys, &PmPqf::new(vec![SymMatrix::identity(2)]).unwrap(), kappa).unwrap();
        let scaled = compute_h0(
            &sys,
            &PmPqf::new(vec![SymMatrix::identity(2).scale(3.0)]).unwrap(),
            kappa,
        )
        .unwrap();
        assert_relative_eq!(scaled, base, epsilon = 1e-12);
    }

    #[test]
    fn sampling_bound_rejects_nonpositive_rate() {
        let eye = PmPqf::new(vec![SymMatrix::identity(2)]).unwrap();
        assert!(compute_h0(&sys_a(), &eye, 0.0).is_err());
        assert!(compute_h0(&sys_a(), &eye, -0.1).is_err());
    }

    #[test]
    fn order_diagnostics_single_mode_geometric_series() {
        let sys = SwitchedLinearSystem::new(vec![Matrix::identity(2).scale(-1.0)]).unwrap();
        let n_horizon = 200;
        let rows =
            order_diagnostics(&sys, n_horizon, &[0.2, 0.05], &PruneCfg::default()).unwrap();
        for row in &rows {
            let q = (-2.0 * row.h).exp();
            let closed = (1.0 - q.powi(n_horizon as i32 + 1)) / (1.0 - q);
            assert_relative_eq!(row.p_norm_max, closed, max_relative = 1e-6);
            assert_eq!(row.dp_norm_max, 0.0);
            assert_eq!(row.set_size, 1);
        }
    }

    #[test]
    fn generated_systems_average_to_a_stable_matrix() {
        for seed in 0..5u64 {
            let generated = gen_stabilizable(seed, 2, 2, 0.1).unwrap();
            let sys = &generated.system;
            let mut mean = Matrix::zeros(2, 2);
            for a in sys.modes() {
                mean = mean.add(a);
            }
            mean = mean.scale(1.0 / sys.mode_count() as f64);
            assert!(is_hurwitz(&mean).unwrap().is_hurwitz(), "seed {seed} mean not stable");
        }
    }

    #[test]
    fn generator_is_deterministic_in_the_seed() {
        let a = gen_stabilizable(42, 3, 3, 0.2).unwrap();
        let b = gen_stabilizable(42, 3, 3, 0.2).unwrap();
        for (x, y) in a.system.modes().iter().zip(b.system.modes()) {
            assert_eq!(x.data(), y.data());
        }
        assert_eq!(a.trivially_stabilizable, b.trivially_stabilizable);
    }

    #[test]
    fn generator_mostly_avoids_trivially_stabilizable_draws() {
        let mut hard = 0;
        for seed in 0..20u64 {
            let generated = gen_stabilizable(seed, 2, 2, 0.1).unwrap();
            let all_unstable = generated
                .system
                .modes()
                .iter()
                .all(|a| !is_hurwitz(a).unwrap().is_hurwitz());
            assert_eq!(all_unstable, !generated.trivially_stabilizable);
            if all_unstable {
                hard += 1;
            }
        }
        assert!(hard >= 15, "only {hard}/20 seeds produced fully unstable mode sets");
    }

    #[test]
    fn generator_rejects_degenerate_requests() {
        assert!(gen_stabilizable(0, 1, 2, 0.1).is_err());
        assert!(gen_stabilizable(0, 2, 1, 0.1).is_err());
        assert!(gen_stabilizable(0, 2, 2, -1.0).is_err());
    }

    /// Discrete certification at a period must transfer to the continuous
    /// condition once the period is small: the second-order sampling error
    /// shrinks out of the first-order decrease margin.
    #[test]
    fn discrete_certificates_become_continuous_for_small_periods() {
        let mut transferred = 0;
        let cfg = PruneCfg {
            dominance: true,
            sample: Some(SamplePrune { n_samples: 512, seed: 0 }),
        };
        for seed in 0..3u64 {
            let sys = gen_stabilizable(seed, 2, 2, 0.3).unwrap().system;
            let grid = unit_grid(2, 512, 0);
            let mut smallest_passing = None;
            for h in [0.4, 0.2, 0.1, 0.05] {
                let dt = sample_dtsls(&sys, h).unwrap();
                let n_horizon = (3.0 / h).ceil() as usize;
                let state = match value_iteration(&dt, n_horizon, &cfg) {
                    Ok(s) => s,
                    Err(Error::SetCapExceeded { .. }) => continue,
                    Err(e) => panic!("unexpected error: {e}"),
                };
                let v = state.to_pmq();
                let (kappa_dt, _) = verify_dt_decrease(&dt, &v, &grid).unwrap();
                if kappa_dt <= 0.0 {
                    continue;
                }
                let (kappa_ct, _) = verify_ct_decrease(&sys, &v, &grid).unwrap();
                if kappa_ct > 0.0 {
                    smallest_passing = Some(h);
                }
            }
            if smallest_passing.is_some() {
                transferred += 1;
            }
        }
        assert!(transferred >= 2, "only {transferred}/3 seeds transferred to continuous time");
    }
}
