//! Approximation of relaxed (convex-combination) trajectories by fast pure
//! switching. The horizon splits into subintervals of length `h`; within each
//! subinterval the modes run sequentially, each for exactly the time its
//! relaxed weight integrates to. Shrinking `h` drives the state error to zero
//! at rate O(h), with an explicit sufficient bound on `h` for any target
//! error.

use crate::config;
use crate::linalg::norm;
use crate::model::{
    propagate_pure_at, propagate_relaxed_at, PureSignal, RelaxedSignal, SwitchedLinearSystem,
};
use crate::{Error, Result};

/// Slot schedule for one horizon: subinterval `k` spans
/// `[boundaries[k], boundaries[k+1]]` and runs mode `i` (zero-based) on
/// `[slot_times[k][i], slot_times[k][i+1])`. Slot lengths within a
/// subinterval sum to the subinterval length exactly (up to accumulated
/// rounding), and each equals the integral of the corresponding relaxed
/// weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatterPlan {
    h: f64,
    horizon: f64,
    boundaries: Vec<f64>,
    slot_times: Vec<Vec<f64>>,
}

impl ChatterPlan {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn subintervals(&self) -> usize {
        self.slot_times.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Per subinterval, the `M + 1` ascending slot edges.
    pub fn slot_times(&self) -> &[Vec<f64>] {
        &self.slot_times
    }

    /// The pure switching signal realizing the plan. Zero-length slots are
    /// dropped and adjacent equal-mode slots merge, so the result is a valid
    /// strictly-increasing piecewise-constant signal covering the horizon.
    pub fn to_signal(&self) -> PureSignal {
        let mut breakpoints = vec![0.0];
        let mut modes: Vec<usize> = Vec::new();
        for slots in &self.slot_times {
            for i in 1..slots.len() {
                if slots[i] > slots[i - 1] {
                    let mode = i - 1;
                    if modes.last() == Some(&mode) {
                        *breakpoints.last_mut().unwrap() = slots[i];
                    } else {
                        modes.push(mode);
                        breakpoints.push(slots[i]);
                    }
                }
            }
        }
        PureSignal::new(breakpoints, modes).expect("slot edges are strictly increasing")
    }
}

fn check_horizon(h: f64, t_horizon: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("subinterval length must be positive, got {h}")));
    }
    if !(t_horizon > 0.0) || !t_horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {t_horizon}")));
    }
    Ok(())
}

/// Computes the slot schedule for `signal` over `[0, t_horizon]` with
/// subintervals of length `h` (the last may be shorter).
pub fn build_plan(signal: &RelaxedSignal, h: f64, t_horizon: f64) -> Result<ChatterPlan> {
    check_horizon(h, t_horizon)?;
    if signal.end() < t_horizon {
        return Err(Error::SignalTooShort { covered: signal.end(), needed: t_horizon });
    }
    let mut boundaries = vec![0.0];
    let mut k = 1u64;
    loop {
        let t = k as f64 * h;
        if t >= t_horizon {
            break;
        }
        boundaries.push(t);
        k += 1;
    }
    boundaries.push(t_horizon);

    let m = signal.weight_dim();
    let mut slot_times = Vec::with_capacity(boundaries.len() - 1);
    for w in boundaries.windows(2) {
        let (a, b) = (w[0], w[1]);
        let occupation = signal.integrate_weights(a, b);
        let mut slots = Vec::with_capacity(m + 1);
        slots.push(a);
        let mut t = a;
        for occ in &occupation {
            t = (t + occ).min(b);
            slots.push(t);
        }
        // Absorb accumulated rounding into the final slot so the schedule
        // partitions the subinterval exactly.
        slots[m] = b;
        slot_times.push(slots);
    }
    Ok(ChatterPlan { h, horizon: t_horizon, boundaries, slot_times })
}

/// Builds the pure signal approximating `signal` on `[0, t_horizon]` with
/// subinterval length `h`; see [`build_plan`].
pub fn build_pure(signal: &RelaxedSignal, h: f64, t_horizon: f64) -> Result<PureSignal> {
    Ok(build_plan(signal, h, t_horizon)?.to_signal())
}

/// Times at which the pure and relaxed flows are compared: the default
/// recording grid plus every discontinuity of either signal.
fn comparison_times(relaxed: &RelaxedSignal, pure: &PureSignal, t_horizon: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    let mut k = 1u64;
    loop {
        let t = k as f64 * config::DT_RECORD;
        if t >= t_horizon {
            break;
        }
        times.push(t);
        k += 1;
    }
    for b in relaxed.breakpoints().iter().chain(pure.breakpoints()) {
        if b.is_finite() && *b > 0.0 && *b < t_horizon {
            times.push(*b);
        }
    }
    times.push(t_horizon);
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Largest recorded gap between the pure approximation's state and the
/// relaxed state, both started at `z` and propagated exactly.
pub fn chatter_error(
    sys: &SwitchedLinearSystem,
    signal: &RelaxedSignal,
    h: f64,
    t_horizon: f64,
    z: &[f64],
) -> Result<f64> {
    let pure = build_pure(signal, h, t_horizon)?;
    let times = comparison_times(signal, &pure, t_horizon);
    let pure_traj = propagate_pure_at(sys, &pure, z, &times)?;
    let relaxed_traj = propagate_relaxed_at(sys, signal, z, &times)?;
    let mut sup = 0.0f64;
    for (p, r) in pure_traj.samples().iter().zip(relaxed_traj.samples()) {
        let diff: Vec<f64> = p.state.iter().zip(&r.state).map(|(a, b)| a - b).collect();
        sup = sup.max(norm(&diff));
    }
    Ok(sup)
}

fn check_bound_args(t_horizon: f64, c: f64, epsilon: f64) -> Result<()> {
    for (name, v) in [("horizon", t_horizon), ("trajectory bound", c), ("target error", epsilon)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// Sufficient subinterval length: any `h` below the returned value guarantees
/// a state error at most `epsilon * |z|` on `[0, t_horizon]`, provided the
/// relaxed trajectory stays within `c * |z|` there. Infinite when the system
/// has identically zero dynamics.
pub fn required_h(
    sys: &SwitchedLinearSystem,
    t_horizon: f64,
    c: f64,
    epsilon: f64,
) -> Result<f64> {
    check_bound_args(t_horizon, c, epsilon)?;
    let l1 = sys.l1();
    let kappa = t_horizon * sys.mode_count() as f64 * l1 * l1 * c;
    if kappa == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(epsilon / kappa * (-l1 * t_horizon).exp())
}

/// Inverse form of [`required_h`]: the error level (per unit `|z|`)
/// guaranteed when the subinterval length is `h`.
pub fn error_bound(sys: &SwitchedLinearSystem, t_horizon: f64, c: f64, h: f64) -> Result<f64> {
    check_bound_args(t_horizon, c, h)?;
    let l1 = sys.l1();
    let kappa = t_horizon * sys.mode_count() as f64 * l1 * l1 * c;
    Ok(kappa * h * (l1 * t_horizon).exp())
}
