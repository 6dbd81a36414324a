//! Command-line front end: argument parsing, file plumbing, and exit-code
//! policy for the six subcommands. Every run directory receives a
//! `run_meta.json` recording the effective configuration, seeds, and SHA-256
//! digests of the input files, so artifacts are traceable and reruns are
//! byte-identical.

use crate::config::{self, Tolerances};
use crate::feedback::{simulate_discrete_sequence, simulate_sh, FeedbackLaw, SamplingSchedule};
use crate::io::{self, ClfFile, RelaxedFile, SystemFile};
use crate::linalg::norm;
use crate::model::propagate_relaxed;
use crate::pmq;
use crate::synthesis::{certify, gen_stabilizable, order_diagnostics, PruneCfg, SamplePrune};
use crate::{chatter, Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CAP: i32 = 2;
pub const EXIT_CERT: i32 = 3;

/// Synthesize and check pointwise-minimum quadratic Lyapunov functions for
/// switched linear systems, and simulate the associated switching laws.
#[derive(Debug, Parser)]
#[command(name = "swistab", version, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Cap on internal worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run value iteration on the sampled system and certify the result.
    Synthesize(SynthesizeArgs),
    /// Check an existing candidate function against a system.
    Verify(VerifyArgs),
    /// Simulate the closed loop, an explicit mode sequence, or a relaxed signal.
    Simulate(SimulateArgs),
    /// Sweep the chattering approximation error against its guarantee.
    Chatter(ChatterArgs),
    /// Sweep the sampling period and report growth diagnostics.
    Diagnose(DiagnoseArgs),
    /// Draw a random switched system whose mode average contracts.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// System description (JSON).
    #[arg(long)]
    pub system: PathBuf,
    /// Sampling period for the discretization.
    #[arg(long)]
    pub h: f64,
    /// Value-iteration horizon N.
    #[arg(long)]
    pub horizon: usize,
    /// Pruning passes: "dominance" or "dominance,sample".
    #[arg(long, default_value = "dominance")]
    pub prune: String,
    /// Unit-grid size for the decrease checks (default: dimension-dependent).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Seed for grids and sample pruning.
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// System description (JSON).
    #[arg(long)]
    pub system: PathBuf,
    /// Candidate function (JSON).
    #[arg(long)]
    pub clf: PathBuf,
    /// Unit-grid size for the decrease check (default: dimension-dependent).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Seed for grids and region witnesses.
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// System description (JSON).
    #[arg(long)]
    pub system: PathBuf,
    /// Switching law; the only supported value is "min-dv" (requires --clf).
    #[arg(long)]
    pub law: Option<String>,
    /// Candidate function steering the min-dv law (JSON).
    #[arg(long)]
    pub clf: Option<PathBuf>,
    /// Open-loop mode sequence, one-based, e.g. "1,2,1" (requires --h).
    #[arg(long)]
    pub sequence: Option<String>,
    /// Holding-interval length for --sequence.
    #[arg(long)]
    pub h: Option<f64>,
    /// Relaxed switching signal to propagate (JSON).
    #[arg(long)]
    pub relaxed: Option<PathBuf>,
    /// Initial state, e.g. "1,0".
    #[arg(long)]
    pub z: String,
    /// Simulation horizon.
    #[arg(long)]
    pub tmax: f64,
    /// Sampling schedule for the min-dv law, e.g. "uniform:0.02".
    #[arg(long)]
    pub schedule: Option<String>,
    /// Spacing of recorded samples.
    #[arg(long, default_value_t = config::DT_RECORD)]
    pub dt_record: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChatterArgs {
    /// System description (JSON).
    #[arg(long)]
    pub system: PathBuf,
    /// Relaxed switching signal to approximate (JSON).
    #[arg(long)]
    pub relaxed: PathBuf,
    /// Initial state, e.g. "1,0".
    #[arg(long)]
    pub z: String,
    /// Horizon of the approximation.
    #[arg(long)]
    pub tmax: f64,
    /// Target relative error.
    #[arg(long)]
    pub epsilon: f64,
    /// A-priori bound on |x(t)|/|z| along the relaxed flow
    /// (default: exp(L1 * tmax)).
    #[arg(long)]
    pub c: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// System description (JSON).
    #[arg(long)]
    pub system: PathBuf,
    /// Sampling periods to sweep, e.g. "0.2,0.1,0.05".
    #[arg(long)]
    pub h: String,
    /// Value-iteration horizon N used at every period.
    #[arg(long)]
    pub horizon: usize,
    /// Pruning passes: "dominance" or "dominance,sample".
    #[arg(long, default_value = "dominance,sample")]
    pub prune: String,
    /// Seed for sample pruning and the jump grid.
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Generator seed.
    #[arg(long, default_value_t = config::DEFAULT_SEED)]
    pub seed: u64,
    /// State dimension.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Number of modes.
    #[arg(long, default_value_t = 2)]
    pub modes: usize,
    /// Contraction margin of the mode average.
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Effective run configuration embedded in every run's metadata.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub tolerances: Tolerances,
    pub grid_size: Option<usize>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize)]
struct InputRecord {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunMeta {
    command: String,
    config: RunConfig,
    inputs: BTreeMap<String, InputRecord>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    notes: BTreeMap<String, String>,
}

/// Initializes stderr logging from `SWISTAB_LOG` (error, info, or debug;
/// default error). Timestamps are omitted so logs are reproducible.
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("SWISTAB_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::SetCapExceeded { .. } | Error::EnumerationCapExceeded { .. } => EXIT_CAP,
        _ => EXIT_INPUT,
    }
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return EXIT_INPUT;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            log::debug!("worker pool already initialized: {e}");
        }
    }
    let threads = cli.threads;
    let outcome = match cli.command {
        Command::Synthesize(a) => cmd_synthesize(&a, threads),
        Command::Verify(a) => cmd_verify(&a, threads),
        Command::Simulate(a) => cmd_simulate(&a, threads),
        Command::Chatter(a) => cmd_chatter(&a, threads),
        Command::Diagnose(a) => cmd_diagnose(&a, threads),
        Command::Generate(a) => cmd_generate(&a, threads),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

pub fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("expected a number, got {tok:?}")))
        })
        .collect()
}

/// One-based mode list (as typed by the user) to zero-based indices.
pub fn parse_mode_list(s: &str, mode_count: usize) -> Result<Vec<usize>> {
    s.split(',')
        .map(|tok| {
            let v: usize = tok.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("expected a mode index, got {tok:?}"))
            })?;
            if v == 0 || v > mode_count {
                return Err(Error::InvalidArgument(format!(
                    "mode {v} out of range 1..={mode_count}"
                )));
            }
            Ok(v - 1)
        })
        .collect()
}

pub fn parse_schedule(s: &str) -> Result<SamplingSchedule> {
    match s.split_once(':') {
        Some(("uniform", h)) => {
            let h: f64 = h
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad schedule period {h:?}")))?;
            SamplingSchedule::uniform(h)
        }
        _ => Err(Error::InvalidArgument(format!(
            "unsupported schedule {s:?}; expected uniform:H"
        ))),
    }
}

pub fn parse_prune(s: &str, seed: u64) -> Result<PruneCfg> {
    match s {
        "dominance" => Ok(PruneCfg { dominance: true, sample: None }),
        "dominance,sample" => Ok(PruneCfg {
            dominance: true,
            sample: Some(SamplePrune { n_samples: config::SAMPLE_PRUNE_POINTS, seed }),
        }),
        _ => Err(Error::InvalidArgument(format!(
            "unsupported prune setting {s:?}; expected dominance or dominance,sample"
        ))),
    }
}

fn run_config(grid_size: Option<usize>, seed: u64, threads: Option<usize>, out: &Path) -> RunConfig {
    RunConfig {
        tolerances: Tolerances::default(),
        grid_size,
        seed,
        threads,
        out_dir: out.display().to_string(),
    }
}

fn read_input<T: serde::de::DeserializeOwned>(
    path: &Path,
    key: &str,
    inputs: &mut BTreeMap<String, InputRecord>,
) -> Result<T> {
    let bytes = std::fs::read(path)?;
    inputs.insert(
        key.to_string(),
        InputRecord { path: path.display().to_string(), sha256: io::sha256_hex(&bytes) },
    );
    Ok(serde_json::from_slice(&bytes)?)
}

fn write_meta(
    out: &Path,
    command: &str,
    config: RunConfig,
    inputs: BTreeMap<String, InputRecord>,
    notes: BTreeMap<String, String>,
) -> Result<()> {
    let meta = RunMeta { command: command.to_string(), config, inputs, notes };
    io::write_json(&out.join("run_meta.json"), &meta)
}

fn cmd_synthesize(args: &SynthesizeArgs, threads: Option<usize>) -> Result<i32> {
    std::fs::create_dir_all(&args.out)?;
    let mut inputs = BTreeMap::new();
    let sys = read_input::<SystemFile>(&args.system, "system", &mut inputs)?.to_system()?;
    let cfg = parse_prune(&args.prune, args.seed)?;
    let grid_size = args.grid.unwrap_or_else(|| config::default_grid_size(sys.n()));
    let (state, report) = certify(&sys, args.h, args.horizon, &cfg, grid_size, args.seed)?;
    io::write_json(&args.out.join("clf.json"), &ClfFile::from_pmq(&state.to_pmq()))?;
    io::write_json(&args.out.join("report.json"), &report)?;
    io::write_json(&args.out.join("prune_log.json"), &state.prune_log())?;
    write_meta(
        &args.out,
        "synthesize",
        run_config(Some(grid_size), args.seed, threads, &args.out),
        inputs,
        BTreeMap::new(),
    )?;
    if report.ct_passed() {
        log::info!(
            "certified: kappa_ct={} h0={} set={}",
            report.kappa_ct,
            report.h0,
            report.set_size
        );
        Ok(EXIT_OK)
    } else {
        eprintln!("no decrease certified on grid (kappa_ct = {})", report.kappa_ct);
        Ok(EXIT_CERT)
    }
}

/// Outcome of the standalone candidate check: each named condition with its
/// verdict, plus the measured decrease margin.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub positive_definite: bool,
    pub radially_unbounded: bool,
    pub kappa_ct: f64,
    pub cv_minus: f64,
    pub cv_plus: f64,
    pub regions_nonempty: Vec<bool>,
    pub grid: usize,
    pub worst_point: Vec<f64>,
    pub passed: bool,
}

fn cmd_verify(args: &VerifyArgs, threads: Option<usize>) -> Result<i32> {
    std::fs::create_dir_all(&args.out)?;
    let mut inputs = BTreeMap::new();
    let sys = read_input::<SystemFile>(&args.system, "system", &mut inputs)?.to_system()?;
    let clf = read_input::<ClfFile>(&args.clf, "clf", &mut inputs)?.to_pmq()?;
    if clf.n() != sys.n() {
        return Err(Error::Dimension(format!(
            "candidate dimension {} does not match system dimension {}",
            clf.n(),
            sys.n()
        )));
    }
    let grid_size = args.grid.unwrap_or_else(|| config::default_grid_size(sys.n()));
    let grid = crate::grid::unit_grid(sys.n(), grid_size, args.seed);

    let pd_bounds = pmq::cv_bounds(&clf);
    let positive_definite = pd_bounds.is_ok();
    let (cv_minus, cv_plus) = pd_bounds.unwrap_or((f64::NAN, f64::NAN));
    // A positive-definite quadratic dominates cv_minus |x|^2, so radial
    // unboundedness follows and is reported, not measured.
    let radially_unbounded = positive_definite;
    let (kappa_ct, worst_point) = if positive_definite {
        crate::synthesis::verify_ct_decrease(&sys, &clf, &grid)?
    } else {
        (f64::NAN, Vec::new())
    };
    let mut regions_nonempty = Vec::with_capacity(clf.len());
    for j in 0..clf.len() {
        regions_nonempty.push(pmq::region_nonempty(&clf, j, grid_size, args.seed)?);
    }
    let passed = positive_definite && kappa_ct > 0.0 && regions_nonempty.iter().all(|b| *b);
    let report = VerifyReport {
        positive_definite,
        radially_unbounded,
        kappa_ct,
        cv_minus,
        cv_plus,
        regions_nonempty: regions_nonempty.clone(),
        grid: grid.len(),
        worst_point,
        passed,
    };
    io::write_json(&args.out.join("verify_report.json"), &report)?;
    write_meta(
        &args.out,
        "verify",
        run_config(Some(grid_size), args.seed, threads, &args.out),
        inputs,
        BTreeMap::new(),
    )?;
    if passed {
        return Ok(EXIT_OK);
    }
    let mut failed = Vec::new();
    if !positive_definite {
        failed.push("positive definiteness");
    }
    if !(kappa_ct > 0.0) {
        failed.push("decrease");
    }
    if !regions_nonempty.iter().all(|b| *b) {
        failed.push("region nonemptiness");
    }
    eprintln!("verification failed: {}", failed.join(", "));
    Ok(EXIT_CERT)
}

fn cmd_simulate(args: &SimulateArgs, threads: Option<usize>) -> Result<i32> {
    std::fs::create_dir_all(&args.out)?;
    let mut inputs = BTreeMap::new();
    let sys = read_input::<SystemFile>(&args.system, "system", &mut inputs)?.to_system()?;
    let z = parse_f64_list(&args.z)?;

    let chosen =
        [args.law.is_some(), args.sequence.is_some(), args.relaxed.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
    if chosen != 1 {
        return Err(Error::InvalidArgument(
            "choose exactly one of --law, --sequence, --relaxed".into(),
        ));
    }

    let traj = if let Some(law_name) = &args.law {
        if law_name != "min-dv" {
            return Err(Error::InvalidArgument(format!(
                "unsupported law {law_name:?}; expected min-dv"
            )));
        }
        let clf_path = args.clf.as_ref().ok_or_else(|| {
            Error::InvalidArgument("--law min-dv requires --clf".into())
        })?;
        let clf = read_input::<ClfFile>(clf_path, "clf", &mut inputs)?.to_pmq()?;
        let schedule = parse_schedule(args.schedule.as_deref().ok_or_else(|| {
            Error::InvalidArgument("--law min-dv requires --schedule".into())
        })?)?;
        let law = FeedbackLaw::new(sys, clf, config::TOL_ACTIVE)?;
        simulate_sh(&law, &schedule, &z, args.tmax, args.dt_record)?
    } else if let Some(seq) = &args.sequence {
        let h = args.h.ok_or_else(|| {
            Error::InvalidArgument("--sequence requires --h".into())
        })?;
        let sequence = parse_mode_list(seq, sys.mode_count())?;
        simulate_discrete_sequence(&sys, &sequence, h, &z, args.tmax, args.dt_record)?
    } else {
        let path = args.relaxed.as_ref().expect("relaxed arm chosen");
        let sig = read_input::<RelaxedFile>(path, "relaxed", &mut inputs)?.to_signal()?;
        propagate_relaxed(&sys, &sig, &z, args.tmax, args.dt_record)?
    };

    std::fs::write(args.out.join("trajectory.csv"), io::trajectory_to_csv(&traj))?;
    if let Some(weights) = io::weights_to_csv(&traj) {
        std::fs::write(args.out.join("weights.csv"), weights)?;
    }
    write_meta(
        &args.out,
        "simulate",
        run_config(None, config::DEFAULT_SEED, threads, &args.out),
        inputs,
        BTreeMap::new(),
    )?;
    Ok(EXIT_OK)
}

fn cmd_chatter(args: &ChatterArgs, threads: Option<usize>) -> Result<i32> {
    std::fs::create_dir_all(&args.out)?;
    let mut inputs = BTreeMap::new();
    let sys = read_input::<SystemFile>(&args.system, "system", &mut inputs)?.to_system()?;
    let sig = read_input::<RelaxedFile>(&args.relaxed, "relaxed", &mut inputs)?.to_signal()?;
    let z = parse_f64_list(&args.z)?;
    let z_norm = norm(&z);
    if z_norm == 0.0 {
        return Err(Error::InvalidArgument("initial state must be nonzero".into()));
    }
    let c = args.c.unwrap_or_else(|| (sys.l1() * args.tmax).exp());
    let h_req = chatter::required_h(&sys, args.tmax, c, args.epsilon)?;
    if !h_req.is_finite() {
        return Err(Error::InvalidArgument(
            "system has zero dynamics; any subdivision is exact".into(),
        ));
    }
    let mut csv = String::from("h,sup_error,bound\n");
    for f in [1.0, 0.5, 0.25, 0.125] {
        let h = h_req * f;
        let sup = chatter::chatter_error(&sys, &sig, h, args.tmax, &z)?;
        let bound = chatter::error_bound(&sys, args.tmax, c, h)? * z_norm;
        csv.push_str(&format!(
            "{},{},{}\n",
            io::format_f64(h),
            io::format_f64(sup),
            io::format_f64(bound)
        ));
    }
    std::fs::write(args.out.join("chatter.csv"), csv)?;
    let mut notes = BTreeMap::new();
    notes.insert("required_h".into(), io::format_f64(h_req));
    notes.insert("c".into(), io::format_f64(c));
    write_meta(
        &args.out,
        "chatter",
        run_config(None, config::DEFAULT_SEED, threads, &args.out),
        inputs,
        notes,
    )?;
    Ok(EXIT_OK)
}

fn cmd_diagnose(args: &DiagnoseArgs, threads: Option<usize>) -> Result<i32> {
    std::fs::create_dir_all(&args.out)?;
    let mut inputs = BTreeMap::new();
    let sys = read_input::<SystemFile>(&args.system, "system", &mut inputs)?.to_system()?;
    let h_list = parse_f64_list(&args.h)?;
    let cfg = parse_prune(&args.prune, args.seed)?;
    let rows = order_diagnostics(&sys, args.horizon, &h_list, &cfg)?;
    let mut csv = String::from("h,p_norm_max,dp_norm_max,set_size\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            io::format_f64(r.h),
            io::format_f64(r.p_norm_max),
            io::format_f64(r.dp_norm_max),
            r.set_size
        ));
    }
    std::fs::write(args.out.join("order.csv"), csv)?;
    write_meta(
        &args.out,
        "diagnose",
        run_config(None, args.seed, threads, &args.out),
        inputs,
        BTreeMap::new(),
    )?;
    Ok(EXIT_OK)
}

fn cmd_generate(args: &GenerateArgs, threads: Option<usize>) -> Result<i32> {
    std::fs::create_dir_all(&args.out)?;
    let generated = gen_stabilizable(args.seed, args.n, args.modes, args.margin)?;
    io::write_json(
        &args.out.join("system.json"),
        &SystemFile::from_system(&generated.system),
    )?;
    let mut notes = BTreeMap::new();
    notes.insert(
        "trivially_stabilizable".into(),
        generated.trivially_stabilizable.to_string(),
    );
    notes.insert("margin".into(), io::format_f64(args.margin));
    if generated.trivially_stabilizable {
        log::warn!("a single mode is already stable; the instance is easy");
    }
    write_meta(
        &args.out,
        "generate",
        run_config(None, args.seed, threads, &args.out),
        BTreeMap::new(),
        notes,
    )?;
    Ok(EXIT_OK)
}
