//! End-to-end acceptance suite: seven numbered criteria, each printing one
//! PASS/FAIL line (visible with --nocapture) and failing its own test on any
//! violation. Tolerances and budgets are pinned as constants below.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use swistab::config;
use swistab::feedback::{
    simulate_discrete_law, simulate_sh, stability_report, FeedbackLaw, SamplingSchedule,
};
use swistab::grid::unit_grid;
use swistab::io::{read_json, ClfFile, SystemFile};
use swistab::linalg::{norm, Matrix, SymMatrix};
use swistab::model::{fit_line, propagate_relaxed, RelaxedSignal, SwitchedLinearSystem};
use swistab::pmq::PmPqf;
use swistab::synthesis::{
    brute_force_value, gen_stabilizable, order_diagnostics, sample_dtsls, value_iteration,
    verify_ct_decrease, compute_h0, PruneCfg, SamplePrune, VerificationReport,
};
use swistab::{chatter, pmq};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criterion 1: value on 100 points per system must match brute force to this.
const ORACLE_TOL: f64 = 1e-9;
/// Criterion 3: grid resolution tolerance on the analytic decrease rate.
const KAPPA_TOL: f64 = 0.01;
/// Criterion 4: minimal acceptable fitted decay rate (analytic rate is 0.25).
const GAMMA_MIN: f64 = 0.2;
/// Criterion 6: admissible band for the growth slope of log max|P|.
const SLOPE_BAND: (f64, f64) = (0.7, 1.3);
/// Criterion 6: max/min ratio allowed for the argmin-jump norm over the sweep.
const DP_FACTOR_MAX: f64 = 3.0;

fn sys_a() -> SwitchedLinearSystem {
    SwitchedLinearSystem::new(vec![
        Matrix::diag(&[-1.0, 0.5]),
        Matrix::diag(&[0.5, -1.0]),
    ])
    .unwrap()
}

fn criterion(number: usize, name: &str, budget: Duration, body: impl FnOnce() + UnwindSafe) {
    let start = Instant::now();
    let outcome = catch_unwind(body);
    let elapsed = start.elapsed();
    match outcome {
        Ok(()) if elapsed <= budget => {
            println!("ACCEPTANCE {number} ({name}): PASS [{elapsed:.2?} <= {budget:.0?}]");
        }
        Ok(()) => {
            println!("ACCEPTANCE {number} ({name}): FAIL [over budget: {elapsed:.2?} > {budget:.0?}]");
            panic!("criterion {number} exceeded its runtime budget");
        }
        Err(e) => {
            println!("ACCEPTANCE {number} ({name}): FAIL [{elapsed:.2?}]");
            resume_unwind(e);
        }
    }
}

#[test]
fn acceptance_1_value_iteration_oracle() {
    criterion(1, "value-iteration oracle equivalence", Duration::from_secs(10), || {
        let mut worst = 0.0f64;
        for seed in 0..10u64 {
            let sys = gen_stabilizable(seed, 2, 2, 0.5).unwrap().system;
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            for h in [0.1, 0.5] {
                let dt = sample_dtsls(&sys, h).unwrap();
                let state = value_iteration(&dt, 6, &PruneCfg::default()).unwrap();
                for _ in 0..100 {
                    let z = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                    let direct = state.value(&z);
                    let oracle = brute_force_value(&dt, 6, &z).unwrap();
                    worst = worst.max((direct - oracle).abs());
                }
            }
        }
        assert!(worst <= ORACLE_TOL, "worst oracle deviation {worst}");
    });
}

#[test]
fn acceptance_2_chattering_guarantee() {
    criterion(2, "chattering guarantee and order", Duration::from_secs(30), || {
        let t = 1.0;
        let z = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
        // SYS-A plus 20 generated systems, each rescaled in time so that
        // L1 = 2; the guarantee is scale-covariant and the rescaling keeps
        // required_h (hence the runtime) bounded below.
        let mut systems = vec![sys_a()];
        for seed in 0..20u64 {
            let raw = gen_stabilizable(seed, 2, 2, 0.5).unwrap().system;
            let s = 2.0 / raw.l1();
            let modes: Vec<Matrix> = raw.modes().iter().map(|a| a.scale(s)).collect();
            systems.push(SwitchedLinearSystem::new(modes).unwrap());
        }
        for (idx, sys) in systems.iter().enumerate() {
            let m = sys.mode_count();
            let sig = RelaxedSignal::constant(vec![1.0 / m as f64; m]).unwrap();
            // Establish the trajectory bound hypothesis empirically, padded.
            let traj = propagate_relaxed(sys, &sig, &z, t, 0.002).unwrap();
            let c_meas = traj
                .samples()
                .iter()
                .map(|s| norm(&s.state) / norm(&z))
                .fold(0.0f64, f64::max);
            let c = (c_meas * 1.05).max(1.0);
            for eps in [0.5, 0.1] {
                let h = chatter::required_h(sys, t, c, eps).unwrap() / 2.0;
                let err = chatter_error_unit(sys, &sig, h, t, &z);
                assert!(
                    err <= eps,
                    "system {idx}: error {err} exceeds {eps} at h = {h}"
                );
            }
        }
        // Empirical order on the reference system: slope of log error vs
        // log h over a 4-point sweep must be at least 0.8.
        let sys = sys_a();
        let sig = RelaxedSignal::constant(vec![0.5, 0.5]).unwrap();
        let (mut lx, mut ly) = (Vec::new(), Vec::new());
        for h in [0.2, 0.1, 0.05, 0.025] {
            let err = chatter::chatter_error(&sys, &sig, h, t, &[1.0, 1.0]).unwrap();
            lx.push(h.ln());
            ly.push(err.ln());
        }
        let (_, slope) = fit_line(&lx, &ly).unwrap();
        assert!(slope >= 0.8, "error order slope {slope} < 0.8");
    });
}

fn chatter_error_unit(
    sys: &SwitchedLinearSystem,
    sig: &RelaxedSignal,
    h: f64,
    t: f64,
    z: &[f64],
) -> f64 {
    chatter::chatter_error(sys, sig, h, t, z).unwrap() / norm(z)
}

#[test]
fn acceptance_3_analytic_rate_and_period() {
    criterion(3, "analytic decrease rate and exact period bound", Duration::from_secs(1), || {
        let sys = sys_a();
        let clf = PmPqf::new(vec![SymMatrix::identity(2)]).unwrap();
        let grid = unit_grid(2, config::default_grid_size(2), 0);
        let (kappa_ct, worst) = verify_ct_decrease(&sys, &clf, &grid).unwrap();
        assert!(
            (kappa_ct - 0.5).abs() <= KAPPA_TOL,
            "kappa_ct {kappa_ct} not within {KAPPA_TOL} of 0.5"
        );
        // The analytic optimum sits at z1^2 = z2^2 = 1/2.
        assert!((worst[0] * worst[0] - 0.5).abs() <= 0.01);
        let h0 = compute_h0(&sys, &clf, 1.0 / 6.0).unwrap();
        assert_eq!(h0, 1.0 / 24.0, "period bound must be exactly 1/24");
    });
}

#[test]
fn acceptance_4_closed_loop_decay() {
    criterion(4, "closed-loop exponential decay", Duration::from_secs(5), || {
        let law = FeedbackLaw::new(
            sys_a(),
            PmPqf::new(vec![SymMatrix::identity(2)]).unwrap(),
            config::TOL_ACTIVE,
        )
        .unwrap();
        let z_set = unit_grid(2, 16, 0);
        let report = stability_report(&law, &z_set, &[1.0 / 48.0], 3.0).unwrap();
        assert!((report.h0 - 1.0 / 24.0).abs() <= 1e-9);
        assert_eq!(report.runs.len(), 16);
        for run in &report.runs {
            assert!(run.v_monotone, "V not monotone from z = {:?}", run.z);
            assert!(
                run.gamma_hat >= GAMMA_MIN,
                "rate {} below {GAMMA_MIN} from z = {:?}",
                run.gamma_hat,
                run.z
            );
        }
        assert!(report.passed());
    });
}

#[test]
fn acceptance_5_certified_pipeline() {
    criterion(5, "synthesize-certify-simulate pipeline", Duration::from_secs(60), || {
        let bin = env!("CARGO_BIN_EXE_swistab");
        let dir = tempfile::tempdir().unwrap();
        let mut certified = 0usize;
        for seed in 0..10u64 {
            let gdir = dir.path().join(format!("gen{seed}"));
            let sdir = dir.path().join(format!("syn{seed}"));
            let status = Command::new(bin)
                .args([
                    "generate",
                    "--seed",
                    &seed.to_string(),
                    "--margin",
                    "1.5",
                    "--out",
                    gdir.to_str().unwrap(),
                ])
                .status()
                .unwrap();
            assert!(status.success(), "generate failed for seed {seed}");
            let status = Command::new(bin)
                .args([
                    "synthesize",
                    "--system",
                    gdir.join("system.json").to_str().unwrap(),
                    "--h",
                    "0.05",
                    "--horizon",
                    "60",
                    "--prune",
                    "dominance,sample",
                    // Seed 0 pins the verification grid to the library
                    // default so the period bounds below compare bitwise.
                    "--seed",
                    "0",
                    "--out",
                    sdir.to_str().unwrap(),
                ])
                .status()
                .unwrap();
            assert_eq!(status.code(), Some(0), "seed {seed} did not certify");
            let report: VerificationReport = read_json(&sdir.join("report.json")).unwrap();
            assert!(report.kappa_ct > 0.0 && report.h0 > 0.0);
            let sys = read_json::<SystemFile>(&gdir.join("system.json"))
                .unwrap()
                .to_system()
                .unwrap();
            let clf = read_json::<ClfFile>(&sdir.join("clf.json")).unwrap().to_pmq().unwrap();
            let law = FeedbackLaw::new(sys, clf, config::TOL_ACTIVE).unwrap();

            // Three-point sampling-period sweep strictly below the certified
            // bound; every run must decay with a monotone Lyapunov sequence.
            let h_list = [report.h0 / 2.0, report.h0 / 4.0, report.h0 / 8.0];
            let z_set = unit_grid(2, 4, 1);
            let sr = stability_report(&law, &z_set, &h_list, 0.12).unwrap();
            assert_eq!(
                sr.h0, report.h0,
                "library and artifact period bounds disagree for seed {seed}"
            );
            for run in &sr.runs {
                assert!(run.gamma_hat > 0.0, "seed {seed}: no decay at h {}", run.h);
                assert!(run.v_monotone, "seed {seed}: V not monotone at h {}", run.h);
            }
            assert!(sr.passed());

            // The uniform-interval law simulation must coincide bitwise with
            // sample-and-hold at the same period.
            let h = report.h0 / 2.0;
            let a = simulate_discrete_law(&law, h, &z_set[0], 0.12, 0.03).unwrap();
            let b = simulate_sh(
                &law,
                &SamplingSchedule::uniform(h).unwrap(),
                &z_set[0],
                0.12,
                0.03,
            )
            .unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.samples().iter().zip(b.samples()) {
                assert_eq!(x.t.to_bits(), y.t.to_bits());
                for (p, q) in x.state.iter().zip(&y.state) {
                    assert_eq!(p.to_bits(), q.to_bits());
                }
            }
            certified += 1;
        }
        assert_eq!(certified, 10, "only {certified}/10 seeds completed the pipeline");
    });
}

#[test]
fn acceptance_6_order_diagnostics() {
    criterion(6, "growth-order diagnostics", Duration::from_secs(60), || {
        let sys = sys_a();
        // Fixed total time N*h = 2 across the sweep, with a pruning witness
        // budget large enough to resolve the optimal-switch family at the
        // finest period.
        let cfg = PruneCfg {
            dominance: true,
            sample: Some(SamplePrune { n_samples: 4096, seed: 0 }),
        };
        let mut rows = Vec::new();
        for (h, n) in [(0.2, 10usize), (0.1, 20), (0.05, 40), (0.025, 80)] {
            rows.extend(order_diagnostics(&sys, n, &[h], &cfg).unwrap());
        }
        let lx: Vec<f64> = rows.iter().map(|r| (1.0 / r.h).ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.p_norm_max.ln()).collect();
        let (_, slope) = fit_line(&lx, &ly).unwrap();
        assert!(
            slope >= SLOPE_BAND.0 && slope <= SLOPE_BAND.1,
            "growth slope {slope} outside [{}, {}]",
            SLOPE_BAND.0,
            SLOPE_BAND.1
        );
        let dp_max = rows.iter().map(|r| r.dp_norm_max).fold(f64::MIN, f64::max);
        let dp_min = rows.iter().map(|r| r.dp_norm_max).fold(f64::MAX, f64::min);
        assert!(dp_min > 0.0);
        assert!(
            dp_max / dp_min < DP_FACTOR_MAX,
            "argmin-jump norm varies by {} over the sweep",
            dp_max / dp_min
        );
    });
}

#[test]
fn acceptance_7_invariant_suites() {
    criterion(7, "cross-module invariant spot checks", Duration::from_secs(300), || {
        // The full per-module invariant suites run as unit tests in this same
        // cargo invocation; here a representative invariant from each module
        // is re-run so this criterion fails loudly if any of them regresses.
        let sys = sys_a();

        // Matrix kernels: quadratic form sandwiched by eigenvalue extremes.
        let p = SymMatrix::from_rows(&[vec![2.0, 0.4], vec![0.4, 1.0]]).unwrap();
        let (lo, hi) = swistab::linalg::sym_eig_extremes(&p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let z = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let q = p.quad_form(&z);
            let n2 = z[0] * z[0] + z[1] * z[1];
            assert!(q >= lo * n2 - 1e-12 && q <= hi * n2 + 1e-12);
        }

        // Flows: semigroup property of pure propagation.
        let sig = swistab::model::PureSignal::constant(0);
        let full = swistab::model::propagate_pure(&sys, &sig, &[1.0, -1.0], 2.0, 0.5).unwrap();
        let half = swistab::model::propagate_pure(&sys, &sig, &[1.0, -1.0], 1.0, 0.5).unwrap();
        let rest =
            swistab::model::propagate_pure(&sys, &sig, half.final_state(), 1.0, 0.5).unwrap();
        for (a, b) in full.final_state().iter().zip(rest.final_state()) {
            assert!((a - b).abs() <= 1e-12);
        }

        // Chattering: occupation times preserve the weight measure.
        let sig = RelaxedSignal::constant(vec![0.3, 0.7]).unwrap();
        let plan = chatter::build_plan(&sig, 0.25, 1.0).unwrap();
        for (k, slots) in plan.slot_times().iter().enumerate() {
            let (a, b) = (plan.boundaries()[k], plan.boundaries()[k + 1]);
            let occupation: f64 = slots.windows(2).map(|w| w[1] - w[0]).sum();
            assert!((occupation - (b - a)).abs() <= config::SLOT_MEASURE_TOL);
        }

        // Pointwise minima: positive homogeneity of degree two.
        let f = PmPqf::new(vec![SymMatrix::diag(&[1.0, 2.0]), SymMatrix::diag(&[2.0, 1.0])])
            .unwrap();
        for _ in 0..100 {
            let z = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let a: f64 = rng.gen_range(0.1..3.0);
            let lhs = pmq::eval(&f, &[a * z[0], a * z[1]]).unwrap();
            let rhs = a * a * pmq::eval(&f, &z).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }

        // Synthesis: the horizon value is monotone nondecreasing in N.
        let dt = sample_dtsls(&sys, 0.5).unwrap();
        let mut previous = 0.0f64;
        for n in 0..6 {
            let state = value_iteration(&dt, n, &PruneCfg::default()).unwrap();
            let v = state.value(&[0.6, 0.8]);
            assert!(v >= previous - 1e-12, "value dropped at N = {n}");
            previous = v;
        }

        // Feedback: reruns are bit-identical and law modes cover both modes.
        let law = FeedbackLaw::new(
            sys,
            PmPqf::new(vec![SymMatrix::identity(2)]).unwrap(),
            config::TOL_ACTIVE,
        )
        .unwrap();
        let s1 = simulate_discrete_law(&law, 0.05, &[0.6, 0.8], 1.0, 0.1).unwrap();
        let s2 = simulate_discrete_law(&law, 0.05, &[0.6, 0.8], 1.0, 0.1).unwrap();
        assert_eq!(s1, s2);
        let modes: BTreeSet<_> = s1
            .samples()
            .iter()
            .filter_map(|s| match &s.input {
                swistab::model::ActiveInput::Mode(i) => Some(*i),
                _ => None,
            })
            .collect();
        assert_eq!(modes.len(), 2, "closed loop never switched");
    });
}
