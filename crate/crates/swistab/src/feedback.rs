//! Greedy derivative feedback and closed-loop simulation. The law picks, at
//! each sampling instant, the mode that descends the candidate Lyapunov
//! function fastest, and holds it until the next instant. Between instants
//! the flow is propagated exactly, so closed-loop runs are reproducible to
//! the bit.

use std::collections::HashMap;

use crate::config;
use crate::grid::default_unit_grid;
use crate::linalg::Matrix;
use crate::model::{fit_decay, propagate_pure, PureSignal, SwitchedLinearSystem, Trajectory};
use crate::pmq::{self, PmPqf};
use crate::synthesis::{compute_h0, verify_ct_decrease};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// When the feedback law is re-evaluated: every `h` time units, or at an
/// explicit strictly increasing list of instants starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplingSchedule {
    Uniform { h: f64 },
    Explicit { times: Vec<f64> },
}

impl SamplingSchedule {
    pub fn uniform(h: f64) -> Result<SamplingSchedule> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sampling period must be positive, got {h}"
            )));
        }
        Ok(SamplingSchedule::Uniform { h })
    }

    pub fn explicit(times: Vec<f64>) -> Result<SamplingSchedule> {
        if times.is_empty() || times[0] != 0.0 {
            return Err(Error::InvalidArgument("sampling instants must start at 0".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "sampling instants must increase strictly: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(SamplingSchedule::Explicit { times })
    }

    /// Largest gap between consecutive instants (the schedule diameter).
    pub fn diameter(&self) -> f64 {
        match self {
            SamplingSchedule::Uniform { h } => *h,
            SamplingSchedule::Explicit { times } => times
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(0.0, f64::max),
        }
    }

    /// Decision instants strictly inside `[0, t_max)`. For explicit
    /// schedules whose last instant falls short of `t_max`, the final
    /// decision simply holds until `t_max`.
    fn decision_times(&self, t_max: f64) -> Vec<f64> {
        match self {
            SamplingSchedule::Uniform { h } => {
                let mut ts = vec![0.0];
                let mut k = 1u64;
                loop {
                    let t = k as f64 * h;
                    if t >= t_max {
                        break;
                    }
                    ts.push(t);
                    k += 1;
                }
                ts
            }
            SamplingSchedule::Explicit { times } => {
                times.iter().cloned().filter(|t| *t < t_max).collect()
            }
        }
    }
}

/// The greedy derivative switching law: state feedback through a candidate
/// Lyapunov function over a switched system.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    system: SwitchedLinearSystem,
    clf: PmPqf,
    tol_active: f64,
}

impl FeedbackLaw {
    pub fn new(system: SwitchedLinearSystem, clf: PmPqf, tol_active: f64) -> Result<FeedbackLaw> {
        if system.n() != clf.n() {
            return Err(Error::Dimension(format!(
                "function dimension {} does not match system dimension {}",
                clf.n(),
                system.n()
            )));
        }
        if !(tol_active >= 0.0) || !tol_active.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "activity tolerance must be nonnegative, got {tol_active}"
            )));
        }
        Ok(FeedbackLaw { system, clf, tol_active })
    }

    pub fn system(&self) -> &SwitchedLinearSystem {
        &self.system
    }

    pub fn clf(&self) -> &PmPqf {
        &self.clf
    }

    pub fn tol_active(&self) -> f64 {
        self.tol_active
    }
}

/// Mode (zero-based) minimizing the directional derivative of the candidate
/// function along the mode flows at `z`. Ties break to the lowest index; the
/// origin — an equilibrium of every mode — returns mode 0 by convention.
pub fn min_dv_law(law: &FeedbackLaw, z: &[f64]) -> Result<usize> {
    if z.len() != law.system.n() {
        return Err(Error::Dimension(format!(
            "state has dimension {}, system has {}",
            z.len(),
            law.system.n()
        )));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("state entry {bad}")));
    }
    if z.iter().all(|v| *v == 0.0) {
        return Ok(0);
    }
    let active = pmq::active_set(&law.clf, z, law.tol_active)?;
    let mut best = 0usize;
    let mut best_dv = f64::INFINITY;
    for (i, a) in law.system.modes().iter().enumerate() {
        let dv = pmq::directional_derivative_on(&law.clf, &active, z, &a.matvec(z))?;
        if dv < best_dv {
            best = i;
            best_dv = dv;
        }
    }
    Ok(best)
}

/// Runs the decision recursion and returns the realized switching signal:
/// the law is evaluated only at the schedule instants, each decision held
/// until the next.
pub fn closed_loop_signal(
    law: &FeedbackLaw,
    schedule: &SamplingSchedule,
    z: &[f64],
    t_max: f64,
) -> Result<PureSignal> {
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be nonnegative, got {t_max}")));
    }
    if t_max == 0.0 {
        return Ok(PureSignal::constant(min_dv_law(law, z)?));
    }
    let decisions = schedule.decision_times(t_max);
    let mut breakpoints = Vec::with_capacity(decisions.len() + 1);
    let mut modes = Vec::with_capacity(decisions.len());
    let mut x = z.to_vec();
    // Uniform schedules revisit the same few holding times, so exponentials
    // are cached by exact (mode, gap) bits; cached or not, each step applies
    // the identical matrix.
    let mut exp_cache: HashMap<(usize, u64), Matrix> = HashMap::new();
    for (k, &t_k) in decisions.iter().enumerate() {
        let mode = min_dv_law(law, &x)?;
        let t_next = decisions.get(k + 1).copied().unwrap_or(t_max);
        breakpoints.push(t_k);
        modes.push(mode);
        let gap = t_next - t_k;
        let key = (mode, gap.to_bits());
        if !exp_cache.contains_key(&key) {
            exp_cache.insert(key, crate::linalg::mat_exp(law.system.mode(mode), gap)?);
        }
        x = exp_cache[&key].matvec(&x);
    }
    breakpoints.push(t_max);
    PureSignal::new(breakpoints, modes)
}

/// Sample-and-hold closed-loop simulation: decide at the schedule instants,
/// hold between them, propagate exactly.
pub fn simulate_sh(
    law: &FeedbackLaw,
    schedule: &SamplingSchedule,
    z: &[f64],
    t_max: f64,
    dt_record: f64,
) -> Result<Trajectory> {
    let signal = closed_loop_signal(law, schedule, z, t_max)?;
    propagate_pure(&law.system, &signal, z, t_max, dt_record)
}

/// Uniform-interval closed-loop simulation. Identical recursion to
/// [`simulate_sh`] with a uniform schedule, hence bit-identical output.
pub fn simulate_discrete_law(
    law: &FeedbackLaw,
    h: f64,
    z: &[f64],
    t_max: f64,
    dt_record: f64,
) -> Result<Trajectory> {
    simulate_sh(law, &SamplingSchedule::uniform(h)?, z, t_max, dt_record)
}

/// Open-loop uniform-interval simulation from an explicit mode sequence
/// (zero-based): mode `sequence[k]` is active on `[k h, (k+1) h)`. The
/// sequence must cover the horizon.
pub fn simulate_discrete_sequence(
    sys: &SwitchedLinearSystem,
    sequence: &[usize],
    h: f64,
    z: &[f64],
    t_max: f64,
    dt_record: f64,
) -> Result<Trajectory> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("interval length must be positive, got {h}")));
    }
    if sequence.is_empty() {
        return Err(Error::InvalidArgument("mode sequence is empty".into()));
    }
    let mut breakpoints = vec![0.0];
    for k in 1..=sequence.len() {
        breakpoints.push(k as f64 * h);
    }
    let signal = PureSignal::new(breakpoints, sequence.to_vec())?;
    propagate_pure(sys, &signal, z, t_max, dt_record)
}

/// One closed-loop run in a stability report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub z: Vec<f64>,
    pub h: f64,
    pub gamma_hat: f64,
    #[serde(rename = "C_hat")]
    pub c_hat: f64,
    #[serde(rename = "V_monotone")]
    pub v_monotone: bool,
}

/// Closed-loop decay evidence across initial states and sampling periods.
/// `h0` is the certified period bound (0 when the continuous decrease check
/// fails); runs at periods above `h0` carry no guarantee but are still
/// reported so failures are visible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub h0: f64,
    pub runs: Vec<StabilityRun>,
}

impl StabilityReport {
    /// Smallest fitted decay rate over all runs.
    pub fn min_gamma(&self) -> Option<f64> {
        self.runs.iter().map(|r| r.gamma_hat).min_by(f64::total_cmp)
    }

    /// True when every run within the certified period bound decays with a
    /// monotone Lyapunov sequence.
    pub fn passed(&self) -> bool {
        self.h0 > 0.0
            && self
                .runs
                .iter()
                .filter(|r| r.h <= self.h0)
                .all(|r| r.gamma_hat > 0.0 && r.v_monotone)
    }
}

/// Runs the closed loop for every `(h, z)` pair, fits exponential decay, and
/// checks that the candidate function decreases along the sampled states
/// (within the relative monotonicity tolerance).
pub fn stability_report(
    law: &FeedbackLaw,
    z_set: &[Vec<f64>],
    h_list: &[f64],
    t_max: f64,
) -> Result<StabilityReport> {
    if z_set.is_empty() || h_list.is_empty() {
        return Err(Error::InvalidArgument(
            "stability report needs at least one initial state and one period".into(),
        ));
    }
    let grid = default_unit_grid(law.system.n(), config::DEFAULT_SEED);
    let (kappa_ct, _) = verify_ct_decrease(&law.system, &law.clf, &grid)?;
    let h0 = if kappa_ct > 0.0 {
        compute_h0(&law.system, &law.clf, kappa_ct / 3.0)?
    } else {
        0.0
    };
    let pairs: Vec<(f64, Vec<f64>)> = h_list
        .iter()
        .flat_map(|h| z_set.iter().map(move |z| (*h, z.clone())))
        .collect();
    let runs = pairs
        .par_iter()
        .map(|(h, z)| -> Result<StabilityRun> {
            let traj = simulate_discrete_law(law, *h, z, t_max, config::DT_RECORD)?;
            let (c_hat, gamma_hat) = fit_decay(&traj)?;
            let mut v_monotone = true;
            let mut prev: Option<f64> = None;
            for s in traj.samples() {
                // Sampled instants are exact multiples of h recorded exactly.
                let steps = (s.t / h).round();
                if s.t != steps * h {
                    continue;
                }
                let v = pmq::eval(&law.clf, &s.state)?;
                if let Some(p) = prev {
                    if v > p * (1.0 + config::V_MONOTONE_REL) {
                        v_monotone = false;
                    }
                }
                prev = Some(v);
            }
            Ok(StabilityRun { z: z.clone(), h: *h, gamma_hat, c_hat, v_monotone })
        })
        .collect::<Result<Vec<_>>>()?;
    for h in h_list {
        if *h > h0 {
            log::warn!("sampling period {h} exceeds the certified bound {h0}");
        }
    }
    Ok(StabilityReport { h0, runs })
}
