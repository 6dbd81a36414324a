//! System and signal data model plus exact trajectory propagation. Flows are
//! never integrated numerically: within each constant-generator interval the
//! state advances by a matrix exponential, so recorded states are exact to
//! rounding.

use std::collections::HashMap;

use crate::config;
use crate::linalg::{mat_exp, norm, spectral_norm, Matrix};
use crate::{Error, Result};

/// A switched linear system `x' = A_{sigma} x` with modes `A_1..A_M` (stored
/// zero-based). The Lipschitz-style constants `l1 = max_i |A_i|` and
/// `l2 = max_{i,j} |A_i - A_j|` (spectral norms) are computed on
/// construction; they drive the chattering error budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedLinearSystem {
    n: usize,
    modes: Vec<Matrix>,
    l1: f64,
    l2: f64,
}

impl SwitchedLinearSystem {
    pub fn new(modes: Vec<Matrix>) -> Result<SwitchedLinearSystem> {
        if modes.is_empty() {
            return Err(Error::Dimension("a system needs at least one mode".into()));
        }
        let n = modes[0].n_rows();
        for (i, a) in modes.iter().enumerate() {
            if !a.is_square() {
                return Err(Error::Dimension(format!(
                    "mode {} is {}x{}, not square",
                    i + 1,
                    a.n_rows(),
                    a.n_cols()
                )));
            }
            if a.n_rows() != n {
                return Err(Error::Dimension(format!(
                    "mode {} is {}x{} but mode 1 is {n}x{n}",
                    i + 1,
                    a.n_rows(),
                    a.n_cols()
                )));
            }
        }
        let mut l1 = 0.0f64;
        for a in &modes {
            l1 = l1.max(spectral_norm(a)?);
        }
        let mut l2 = 0.0f64;
        for i in 0..modes.len() {
            for j in i + 1..modes.len() {
                l2 = l2.max(spectral_norm(&modes[i].sub(&modes[j]))?);
            }
        }
        Ok(SwitchedLinearSystem { n, modes, l1, l2 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, i: usize) -> &Matrix {
        &self.modes[i]
    }

    pub fn modes(&self) -> &[Matrix] {
        &self.modes
    }

    /// Largest spectral norm over the modes.
    pub fn l1(&self) -> f64 {
        self.l1
    }

    /// Largest spectral norm over pairwise mode differences.
    pub fn l2(&self) -> f64 {
        self.l2
    }
}

fn validate_breakpoints(breakpoints: &[f64], pieces: usize) -> Result<()> {
    if breakpoints.len() != pieces + 1 {
        return Err(Error::Dimension(format!(
            "{} breakpoints do not delimit {} pieces",
            breakpoints.len(),
            pieces
        )));
    }
    if breakpoints[0] != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "signals start at time 0, got {}",
            breakpoints[0]
        )));
    }
    for w in breakpoints.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(format!(
                "breakpoints must increase strictly: {} then {}",
                w[0], w[1]
            )));
        }
    }
    for (k, b) in breakpoints.iter().enumerate() {
        let last = k + 1 == breakpoints.len();
        if b.is_nan() || (b.is_infinite() && !(last && *b > 0.0)) {
            return Err(Error::NonFinite(format!("breakpoint {b}")));
        }
    }
    Ok(())
}

/// Piecewise-constant mode signal: mode `modes[k]` (zero-based) is active on
/// `[breakpoints[k], breakpoints[k+1])`. The final breakpoint may be
/// `f64::INFINITY` for signals defined on all of `[0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureSignal {
    breakpoints: Vec<f64>,
    modes: Vec<usize>,
}

impl PureSignal {
    pub fn new(breakpoints: Vec<f64>, modes: Vec<usize>) -> Result<PureSignal> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument("signal needs at least one piece".into()));
        }
        validate_breakpoints(&breakpoints, modes.len())?;
        Ok(PureSignal { breakpoints, modes })
    }

    /// The signal holding one mode forever.
    pub fn constant(mode: usize) -> PureSignal {
        PureSignal { breakpoints: vec![0.0, f64::INFINITY], modes: vec![mode] }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// End of the covered horizon (possibly infinite).
    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Mode active at time `t`, or `None` outside the covered horizon.
    /// Right-continuous: at a breakpoint the new piece is already active.
    pub fn mode_at(&self, t: f64) -> Option<usize> {
        if t < 0.0 {
            return None;
        }
        let k = self.breakpoints.partition_point(|b| *b <= t);
        if k == 0 || k > self.modes.len() {
            return None;
        }
        Some(self.modes[k - 1])
    }
}

/// Piecewise-constant convex-weight signal: weight vector `weights[k]` is
/// active on `[breakpoints[k], breakpoints[k+1])`. Every weight vector must
/// lie on the probability simplex within the configured tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedSignal {
    breakpoints: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl RelaxedSignal {
    pub fn new(breakpoints: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<RelaxedSignal> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("signal needs at least one piece".into()));
        }
        validate_breakpoints(&breakpoints, weights.len())?;
        let m = weights[0].len();
        if m == 0 {
            return Err(Error::Dimension("weight vectors must be nonempty".into()));
        }
        for (k, row) in weights.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "weight vector {k} has length {} but the first has {m}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for w in row {
                if !w.is_finite() {
                    return Err(Error::NonFinite(format!("weight {w}")));
                }
                if *w < -config::SIMPLEX_TOL {
                    return Err(Error::InvalidArgument(format!("negative weight {w}")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > config::SIMPLEX_TOL {
                return Err(Error::InvalidArgument(format!(
                    "weights in piece {k} sum to {sum}, expected 1"
                )));
            }
        }
        Ok(RelaxedSignal { breakpoints, weights })
    }

    /// The signal holding one weight vector forever.
    pub fn constant(weights: Vec<f64>) -> Result<RelaxedSignal> {
        RelaxedSignal::new(vec![0.0, f64::INFINITY], vec![weights])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weight_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Integral of each weight component over `[a, b]`, exact for the
    /// piecewise-constant representation (sums of piece overlaps).
    pub fn integrate_weights(&self, a: f64, b: f64) -> Vec<f64> {
        let m = self.weight_dim();
        let mut acc = vec![0.0; m];
        for (k, row) in self.weights.iter().enumerate() {
            let lo = self.breakpoints[k].max(a);
            let hi = self.breakpoints[k + 1].min(b);
            if hi > lo {
                let len = hi - lo;
                for i in 0..m {
                    acc[i] += row[i] * len;
                }
            }
        }
        acc
    }
}

/// Input active at a recorded sample: a pure mode (zero-based) or a relaxed
/// weight vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ActiveInput {
    Mode(usize),
    Weights(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: Vec<f64>,
    pub input: ActiveInput,
}

/// Time-stamped exact states along one run; the first sample is always
/// `(0, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<Sample>,
}

impl Trajectory {
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.samples[0].state
    }

    pub fn final_state(&self) -> &[f64] {
        &self.samples[self.samples.len() - 1].state
    }

    pub fn final_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// True when every recorded input is a pure mode.
    pub fn is_pure(&self) -> bool {
        self.samples.iter().all(|s| matches!(s.input, ActiveInput::Mode(_)))
    }
}

struct Segment {
    start: f64,
    end: f64,
    generator: Matrix,
    input: ActiveInput,
}

/// Default recording times: 0, the `dt_record` grid, interior breakpoints,
/// and `t_max` itself.
fn default_record_times(t_max: f64, dt_record: f64, breakpoints: &[f64]) -> Result<Vec<f64>> {
    if !(dt_record > 0.0) || !dt_record.is_finite() {
        return Err(Error::InvalidArgument(format!("dt_record must be positive, got {dt_record}")));
    }
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("t_max must be nonnegative, got {t_max}")));
    }
    let mut times = vec![0.0];
    let mut k = 1u64;
    loop {
        let t = k as f64 * dt_record;
        if t >= t_max {
            break;
        }
        times.push(t);
        k += 1;
    }
    for b in breakpoints {
        if *b > 0.0 && *b < t_max {
            times.push(*b);
        }
    }
    times.push(t_max);
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

/// Walks the segments, recording `mat_exp(generator, t - seg_start) * x_seg`
/// at every requested time and advancing the segment state by one exact
/// exponential per segment. Signals built from a handful of modes reuse the
/// same generators and holding times over and over, so exponentials are
/// cached by exact (generator, duration) bits; the applied matrices are
/// identical either way.
fn propagate_segments(segments: &[Segment], z: &[f64], times: &[f64]) -> Result<Trajectory> {
    debug_assert!(!segments.is_empty());
    let mut reps: Vec<&Matrix> = Vec::new();
    let mut gen_ids = Vec::with_capacity(segments.len());
    for seg in segments {
        let bits_equal = |r: &&Matrix| {
            r.data()
                .iter()
                .zip(seg.generator.data())
                .all(|(a, b)| a.to_bits() == b.to_bits())
        };
        let id = match reps.iter().position(bits_equal) {
            Some(id) => id,
            None => {
                reps.push(&seg.generator);
                reps.len() - 1
            }
        };
        gen_ids.push(id);
    }
    let mut exp_cache: HashMap<(usize, u64), Matrix> = HashMap::new();
    let mut samples = Vec::with_capacity(times.len());
    let mut x = z.to_vec();
    let mut ptr = 0;
    let last_idx = segments.len() - 1;
    for (si, seg) in segments.iter().enumerate() {
        while ptr < times.len() {
            let t = times[ptr];
            let inside = if si == last_idx { t <= seg.end } else { t < seg.end };
            if t < seg.start || !inside {
                break;
            }
            let dt = t - seg.start;
            let key = (gen_ids[si], dt.to_bits());
            if !exp_cache.contains_key(&key) {
                exp_cache.insert(key, mat_exp(reps[gen_ids[si]], dt)?);
            }
            let state = exp_cache[&key].matvec(&x);
            samples.push(Sample { t, state, input: seg.input.clone() });
            ptr += 1;
        }
        if si != last_idx {
            let dt = seg.end - seg.start;
            let key = (gen_ids[si], dt.to_bits());
            if !exp_cache.contains_key(&key) {
                exp_cache.insert(key, mat_exp(reps[gen_ids[si]], dt)?);
            }
            x = exp_cache[&key].matvec(&x);
        }
    }
    if ptr != times.len() {
        return Err(Error::InvalidArgument(format!(
            "recording time {} falls outside the propagated horizon",
            times[ptr]
        )));
    }
    Ok(Trajectory { samples })
}

fn check_state(sys: &SwitchedLinearSystem, z: &[f64]) -> Result<()> {
    if z.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "initial state has dimension {}, system has {}",
            z.len(),
            sys.n()
        )));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("state entry {bad}")));
    }
    Ok(())
}

fn check_times(times: &[f64], t_max: f64) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::InvalidArgument("recording times must start at 0".into()));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument("recording times must increase strictly".into()));
        }
    }
    if *times.last().unwrap() > t_max {
        return Err(Error::InvalidArgument("recording times exceed the horizon".into()));
    }
    Ok(())
}

fn pure_segments(
    sys: &SwitchedLinearSystem,
    signal: &PureSignal,
    t_max: f64,
) -> Result<Vec<Segment>> {
    if signal.end() < t_max {
        return Err(Error::SignalTooShort { covered: signal.end(), needed: t_max });
    }
    let mut segs = Vec::new();
    for (k, &mode) in signal.modes().iter().enumerate() {
        if mode >= sys.mode_count() {
            return Err(Error::Dimension(format!(
                "signal uses mode {} but the system has {} modes",
                mode + 1,
                sys.mode_count()
            )));
        }
        let start = signal.breakpoints()[k];
        if start >= t_max {
            break;
        }
        let end = signal.breakpoints()[k + 1].min(t_max);
        segs.push(Segment {
            start,
            end,
            generator: sys.mode(mode).clone(),
            input: ActiveInput::Mode(mode),
        });
    }
    if segs.is_empty() {
        // Zero horizon: a single degenerate segment carries the initial mode.
        segs.push(Segment {
            start: 0.0,
            end: 0.0,
            generator: sys.mode(signal.modes()[0]).clone(),
            input: ActiveInput::Mode(signal.modes()[0]),
        });
    }
    Ok(segs)
}

fn relaxed_segments(
    sys: &SwitchedLinearSystem,
    signal: &RelaxedSignal,
    t_max: f64,
) -> Result<Vec<Segment>> {
    if signal.end() < t_max {
        return Err(Error::SignalTooShort { covered: signal.end(), needed: t_max });
    }
    if signal.weight_dim() != sys.mode_count() {
        return Err(Error::Dimension(format!(
            "weight vectors have length {} but the system has {} modes",
            signal.weight_dim(),
            sys.mode_count()
        )));
    }
    let combine = |row: &[f64]| -> Matrix {
        // Skipping zero weights keeps vertex signals bit-identical to the
        // corresponding pure mode.
        let mut acc: Option<Matrix> = None;
        for (i, w) in row.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let term = sys.mode(i).scale(*w);
            acc = Some(match acc {
                None => term,
                Some(m) => m.add(&term),
            });
        }
        acc.unwrap_or_else(|| Matrix::zeros(sys.n(), sys.n()))
    };
    let mut segs = Vec::new();
    for (k, row) in signal.weights().iter().enumerate() {
        let start = signal.breakpoints()[k];
        if start >= t_max {
            break;
        }
        let end = signal.breakpoints()[k + 1].min(t_max);
        segs.push(Segment {
            start,
            end,
            generator: combine(row),
            input: ActiveInput::Weights(row.clone()),
        });
    }
    if segs.is_empty() {
        segs.push(Segment {
            start: 0.0,
            end: 0.0,
            generator: combine(&signal.weights()[0]),
            input: ActiveInput::Weights(signal.weights()[0].clone()),
        });
    }
    Ok(segs)
}

/// Exact propagation under a pure switching signal, recording at breakpoints
/// and on the `dt_record` grid.
pub fn propagate_pure(
    sys: &SwitchedLinearSystem,
    signal: &PureSignal,
    z: &[f64],
    t_max: f64,
    dt_record: f64,
) -> Result<Trajectory> {
    check_state(sys, z)?;
    let times = default_record_times(t_max, dt_record, signal.breakpoints())?;
    let segs = pure_segments(sys, signal, t_max)?;
    propagate_segments(&segs, z, &times)
}

/// As [`propagate_pure`] but recording exactly at the given times (strictly
/// increasing, starting at 0).
pub fn propagate_pure_at(
    sys: &SwitchedLinearSystem,
    signal: &PureSignal,
    z: &[f64],
    times: &[f64],
) -> Result<Trajectory> {
    check_state(sys, z)?;
    let t_max = *times.last().unwrap_or(&0.0);
    check_times(times, t_max)?;
    let segs = pure_segments(sys, signal, t_max)?;
    propagate_segments(&segs, z, times)
}

/// Exact propagation under a relaxed (convex-combination) signal: each piece
/// flows by the exponential of its averaged generator.
pub fn propagate_relaxed(
    sys: &SwitchedLinearSystem,
    signal: &RelaxedSignal,
    z: &[f64],
    t_max: f64,
    dt_record: f64,
) -> Result<Trajectory> {
    check_state(sys, z)?;
    let times = default_record_times(t_max, dt_record, signal.breakpoints())?;
    let segs = relaxed_segments(sys, signal, t_max)?;
    propagate_segments(&segs, z, &times)
}

/// As [`propagate_relaxed`] with explicit recording times.
pub fn propagate_relaxed_at(
    sys: &SwitchedLinearSystem,
    signal: &RelaxedSignal,
    z: &[f64],
    times: &[f64],
) -> Result<Trajectory> {
    check_state(sys, z)?;
    let t_max = *times.last().unwrap_or(&0.0);
    check_times(times, t_max)?;
    let segs = relaxed_segments(sys, signal, t_max)?;
    propagate_segments(&segs, z, times)
}

/// Uniform resampling: the output holds `signal(k h)` on each grid interval
/// `[k h, (k+1) h)` up to the first multiple of `h` at or past `t_max`.
/// Consecutive equal values merge, so resampling is idempotent on signals
/// already constant on the grid.
pub fn resample_uniform(signal: &PureSignal, h: f64, t_max: f64) -> Result<PureSignal> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("sampling period must be positive, got {h}")));
    }
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {t_max}")));
    }
    let steps = (t_max / h).ceil().max(1.0) as u64;
    let mut breakpoints = vec![0.0];
    let mut modes = Vec::new();
    for k in 0..steps {
        let t = k as f64 * h;
        let mode = signal.mode_at(t).ok_or(Error::SignalTooShort {
            covered: signal.end(),
            needed: t,
        })?;
        if modes.last() == Some(&mode) {
            *breakpoints.last_mut().unwrap() = (k + 1) as f64 * h;
        } else {
            modes.push(mode);
            breakpoints.push((k + 1) as f64 * h);
        }
    }
    PureSignal::new(breakpoints, modes)
}

/// Ordinary least squares line `y = intercept + slope * x`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    assert_eq!(xs.len(), ys.len(), "sample length mismatch");
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Err(Error::DegenerateFit("need at least two samples".into()));
    }
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all abscissae equal".into()));
    }
    let slope = sxy / sxx;
    Ok((y_mean - slope * x_mean, slope))
}

/// Fits `|x(t)| ~ C e^{-gamma t} |z|` by least squares on `log |x(t)|`,
/// dropping the leading fraction of samples to reduce transient bias.
/// Returns `(C_hat, gamma_hat)`.
pub fn fit_decay(traj: &Trajectory) -> Result<(f64, f64)> {
    if traj.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 10 samples, got {}",
            traj.len()
        )));
    }
    let norms: Vec<f64> = traj.samples().iter().map(|s| norm(&s.state)).collect();
    if norms.iter().any(|r| *r == 0.0) {
        return Err(Error::DegenerateFit("trajectory passes through the origin".into()));
    }
    let drop = (traj.len() as f64 * config::FIT_DROP_FRACTION).floor() as usize;
    let xs: Vec<f64> = traj.samples()[drop..].iter().map(|s| s.t).collect();
    let ys: Vec<f64> = norms[drop..].iter().map(|r| r.ln()).collect();
    let (intercept, slope) = fit_line(&xs, &ys)?;
    let z_norm = norm(traj.initial_state());
    Ok((intercept.exp() / z_norm, -slope))
}

/// Two diagonal modes that are unstable alone but share a stable switching
/// strategy; reused across the crate's tests.
#[cfg(test)]
pub(crate) fn sys_a() -> SwitchedLinearSystem {
    SwitchedLinearSystem::new(vec![Matrix::diag(&[-1.0, 0.5]), Matrix::diag(&[0.5, -1.0])])
        .unwrap()
}
