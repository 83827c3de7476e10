//! Command-line front end: `run`, `sweep`, `plotdata` and `validate`.

use crate::channel::load_channels;
use crate::error::Error;
use crate::orchestrator::{run_baseline, run_bcd, sweep, trend_csv, BaselineKind, BcdReport, BcdSettings, BcdStatus, SweepAxis, TrajectoryMode, CONVERGENCE_HEADER, TRAJECTORY_HEADER};
use crate::report::{dump_channels, read_versioned_csv, sha256_hex, write_results, RunManifest, MANIFEST_SCHEMA};
use crate::scenario::{parse_scenario, validate_kinematics, ScenarioConfig, TrajectorySet};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_NO_INPUT: i32 = 66;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Beamforming and learned trajectory.
    Proposed,
    /// Learned trajectory with uniform-power MRT beams.
    Twobf,
    /// Optimized beams on the straight-line trajectory.
    Bfwot,
    /// Optimized straight-line beams flown by a random policy.
    RandomPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Crb,
    Pmax,
}

#[derive(Debug, Parser)]
#[command(name = "uav-isac", version, about = "Joint trajectory and beamforming design for multi-UAV ISAC")]
pub struct Cli {
    /// Scenario JSON file.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Seed for channels and training (defaults to the scenario's seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Tuning {
    /// DDPG training episodes.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// DDPG discount factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Soft target update rate.
    #[arg(long)]
    pub tau_soft: Option<f64>,
    /// Violation penalty (defaults to 10x the initial per-slot sum rate).
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Outer iteration cap.
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Write the conic subproblems of every inner iteration into this directory.
    #[arg(long)]
    pub dump_subproblems: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one scenario.
    Run {
        #[command(flatten)]
        tuning: Tuning,
        /// Save the final channel realization as JSON.
        #[arg(long)]
        dump_channels: Option<PathBuf>,
        /// Use a saved channel realization for the initial straight-line flight.
        #[arg(long)]
        replay_channels: Option<PathBuf>,
    },
    /// Solve one scenario per value of the CRB threshold or the power budget.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated ascending values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Turn a results directory into plot-ready CSVs.
    Plotdata {
        /// Results directory of a prior run (defaults to --out).
        #[arg(long)]
        results: Option<PathBuf>,
    },
    /// Check a scenario file.
    Validate,
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log_level).format_timestamp(None).try_init();
    match &cli.command {
        Command::Run { tuning, dump_channels, replay_channels } => cmd_run(&cli, tuning, dump_channels.as_deref(), replay_channels.as_deref()),
        Command::Sweep { axis, values, tuning } => cmd_sweep(&cli, *axis, values, tuning),
        Command::Plotdata { results } => cmd_plotdata(&cli, results.as_deref()),
        Command::Validate => cmd_validate(&cli),
    }
}

fn usage(message: &str) -> i32 {
    eprintln!("error: {message}\n\n{}", Cli::command().render_usage());
    EXIT_USAGE
}

fn fail(e: &Error) -> i32 {
    eprintln!("error: {e}");
    if e.is_infeasible() {
        EXIT_INFEASIBLE
    } else {
        EXIT_ERROR
    }
}

struct Loaded {
    path: PathBuf,
    bytes: Vec<u8>,
    cfg: ScenarioConfig,
}

fn load(cli: &Cli) -> std::result::Result<Loaded, i32> {
    let Some(path) = cli.scenario.clone() else {
        return Err(usage("--scenario is required"));
    };
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read scenario {}: {e}", path.display());
            return Err(EXIT_NO_INPUT);
        }
    };
    let text = String::from_utf8_lossy(&bytes);
    let mut cfg = parse_scenario(&text).map_err(|e| fail(&e))?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(Loaded { path, bytes, cfg })
}

fn settings(cfg: &ScenarioConfig, mode: TrajectoryMode, tuning: &Tuning) -> BcdSettings {
    let mut s = BcdSettings::new(cfg, mode);
    if let Some(e) = tuning.episodes {
        s.ddpg.episodes = e;
        s.finetune_episodes = s.finetune_episodes.min(e);
    }
    if let Some(g) = tuning.gamma {
        s.ddpg.gamma = g;
    }
    if let Some(t) = tuning.tau_soft {
        s.ddpg.tau_soft = t;
    }
    if tuning.penalty.is_some() {
        s.ddpg.penalty = tuning.penalty;
    }
    if let Some(m) = tuning.max_outer {
        s.max_outer = m;
    }
    if let Some(d) = &tuning.dump_subproblems {
        s.alg1.dump_dir = Some(d.clone());
        s.alg2.dump_dir = Some(d.clone());
    }
    s
}

fn settings_json(s: &BcdSettings) -> serde_json::Value {
    serde_json::json!({
        "max_outer": s.max_outer,
        "epsilon": s.epsilon,
        "mode": s.mode,
        "finetune_episodes": s.finetune_episodes,
        "channel_seed": s.channel_seed,
        "rl_seed": s.rl_seed,
        "alg1": { "max_iters": s.alg1.max_iters, "tolerance": s.alg1.tolerance },
        "alg2": { "max_iters": s.alg2.max_iters, "tolerance": s.alg2.tolerance },
        "solver": {
            "tolerance": s.alg1.solver.tolerance,
            "max_iterations": s.alg1.solver.max_iterations,
            "max_newton_steps": s.alg1.solver.max_newton_steps,
            "mu": s.alg1.solver.mu,
            "block_cap": s.alg1.solver.block_cap,
        },
        "ddpg": s.ddpg,
    })
}

fn tuning_json(cli: &Cli, t: &Tuning) -> serde_json::Value {
    serde_json::json!({
        "mode": cli.mode.map(|m| format!("{m:?}").to_lowercase()),
        "seed": cli.seed,
        "episodes": t.episodes,
        "gamma": t.gamma,
        "tau_soft": t.tau_soft,
        "penalty": t.penalty,
        "max_outer": t.max_outer,
    })
}

fn prepare_out(cli: &Cli, loaded: &Loaded, command: &str, overrides: serde_json::Value, s: &BcdSettings) -> std::result::Result<PathBuf, i32> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let made = std::fs::create_dir_all(&out)
        .and_then(|_| std::fs::write(out.join("scenario.json"), &loaded.bytes))
        .map_err(Error::from)
        .and_then(|_| {
            RunManifest {
                schema: MANIFEST_SCHEMA.into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                scenario_path: loaded.path.display().to_string(),
                scenario_sha256: sha256_hex(&loaded.bytes),
                seed: loaded.cfg.rng_seed,
                overrides,
                settings: settings_json(s),
            }
            .write(&out)
        });
    made.map_err(|e| fail(&e))?;
    Ok(out)
}

fn execute(mode: Mode, cfg: &ScenarioConfig, s: &BcdSettings) -> crate::Result<BcdReport> {
    match mode {
        Mode::Proposed => run_bcd(cfg, s),
        Mode::Twobf => run_baseline(BaselineKind::Twobf, cfg, s),
        Mode::Bfwot => run_baseline(BaselineKind::Bfwot, cfg, s),
        Mode::RandomPolicy => run_baseline(BaselineKind::RandomPolicy, cfg, s),
    }
}

fn write_infeasibility(out: &Path, message: &str) {
    let body = serde_json::json!({ "status": "infeasible", "message": message });
    let _ = std::fs::write(out.join("infeasibility.json"), body.to_string() + "\n");
}

fn cmd_run(cli: &Cli, tuning: &Tuning, dump: Option<&Path>, replay: Option<&Path>) -> i32 {
    let loaded = match load(cli) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let mode = cli.mode.unwrap_or(Mode::Proposed);
    let mut s = settings(&loaded.cfg, TrajectoryMode::Ddpg, tuning);
    if let Some(p) = replay {
        match load_channels(p) {
            Ok(ch) => s.replay_channels = Some(ch),
            Err(Error::Io(e)) => {
                eprintln!("error: cannot read channels {}: {e}", p.display());
                return EXIT_NO_INPUT;
            }
            Err(e) => return fail(&e),
        }
    }
    let out = match prepare_out(cli, &loaded, "run", tuning_json(cli, tuning), &s) {
        Ok(o) => o,
        Err(code) => return code,
    };
    let started = std::time::Instant::now();
    let report = match execute(mode, &loaded.cfg, &s) {
        Ok(r) => r,
        Err(e) => {
            if e.is_infeasible() {
                write_infeasibility(&out, &e.to_string());
            }
            return fail(&e);
        }
    };
    log::info!("run finished in {:.2}s", started.elapsed().as_secs_f64());
    if let Err(e) = write_results(&out, &report, &loaded.cfg) {
        return fail(&e);
    }
    if let Some(p) = dump {
        if let Err(e) = dump_channels(&report.channels, p) {
            return fail(&e);
        }
    }
    println!("{}: sum rate {:.6} bits, max CRB {:.6e} rad^2, residual {:.2e}", report.label, report.sum_rate, report.max_crb, report.residuals.max());
    if let BcdStatus::Infeasible(msg) = &report.status {
        write_infeasibility(&out, msg);
        eprintln!("error: {msg}");
        return EXIT_INFEASIBLE;
    }
    EXIT_OK
}

fn cmd_sweep(cli: &Cli, axis: Axis, values: &[f64], tuning: &Tuning) -> i32 {
    if values.is_empty() {
        return usage("--values needs at least one number");
    }
    let loaded = match load(cli) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let axis = match axis {
        Axis::Crb => SweepAxis::Crb,
        Axis::Pmax => SweepAxis::Pmax,
    };
    let mode = match cli.mode.unwrap_or(Mode::Proposed) {
        Mode::Proposed => TrajectoryMode::Ddpg,
        Mode::Bfwot => TrajectoryMode::Frozen,
        other => return usage(&format!("sweep supports --mode proposed or bfwot, not {other:?}")),
    };
    let s = settings(&loaded.cfg, mode, tuning);
    let mut overrides = tuning_json(cli, tuning);
    overrides["axis"] = serde_json::json!(axis.name());
    overrides["values"] = serde_json::json!(values);
    let out = match prepare_out(cli, &loaded, "sweep", overrides, &s) {
        Ok(o) => o,
        Err(code) => return code,
    };
    let rows = match sweep(&loaded.cfg, axis, values, &s) {
        Ok(r) => r,
        Err(Error::Validation(m)) => return usage(&m),
        Err(e) => return fail(&e),
    };
    if let Err(e) = std::fs::write(out.join("trend.csv"), trend_csv(axis, &rows)) {
        return fail(&e.into());
    }
    for r in &rows {
        println!("{} = {:e}: {} sum rate {:.6}", axis.name(), r.value, r.status, r.sum_rate);
        if !r.message.is_empty() {
            eprintln!("  {}", r.message);
        }
    }
    if rows.iter().any(|r| r.status == "ok") {
        EXIT_OK
    } else {
        EXIT_INFEASIBLE
    }
}

fn cmd_plotdata(cli: &Cli, results: Option<&Path>) -> i32 {
    let dir = results.map(Path::to_path_buf).or_else(|| cli.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let traj_path = dir.join("trajectory.csv");
    let conv_path = dir.join("convergence.csv");
    if !dir.is_dir() || !traj_path.is_file() || !conv_path.is_file() {
        eprintln!("error: {} does not hold the results of a run", dir.display());
        return EXIT_NO_INPUT;
    }
    match RunManifest::read(&dir) {
        Ok(m) => match std::fs::read(dir.join("scenario.json")) {
            Ok(bytes) if sha256_hex(&bytes) != m.scenario_sha256 => {
                eprintln!("warning: scenario hash in the manifest does not match {}", dir.join("scenario.json").display());
            }
            Ok(_) => {}
            Err(_) => eprintln!("warning: no scenario copy found next to the manifest"),
        },
        Err(e) => eprintln!("warning: manifest unreadable: {e}"),
    }
    let traj = match read_versioned_csv(&traj_path, TRAJECTORY_HEADER) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let conv = match read_versioned_csv(&conv_path, CONVERGENCE_HEADER) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let mut rows: Vec<(usize, usize, String)> = Vec::new();
    for r in &traj {
        let (Some(n), Some(u)) = (r.first().and_then(|x| x.parse().ok()), r.get(1).and_then(|x| x.parse().ok())) else {
            return fail(&Error::schema(traj_path.display().to_string(), "malformed row"));
        };
        rows.push((u, n, r[2..].join(",")));
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut t = String::from("# uav-isac plot-trajectories v1\nuav,slot,x,y,h\n");
    for (u, n, rest) in rows {
        let _ = writeln!(t, "{u},{n},{rest}");
    }
    let mut c = String::from("# uav-isac plot-convergence v1\niteration,sum_rate_bits\n");
    for r in &conv {
        let _ = writeln!(c, "{},{}", r[0], r.get(1).cloned().unwrap_or_default());
    }
    let out = match (results, &cli.out) {
        (Some(_), Some(o)) => o.clone(),
        _ => dir.join("plot"),
    };
    let written = std::fs::create_dir_all(&out)
        .and_then(|_| std::fs::write(out.join("trajectories.csv"), t))
        .and_then(|_| std::fs::write(out.join("convergence.csv"), c));
    if let Err(e) = written {
        return fail(&e.into());
    }
    println!("wrote {}", out.display());
    EXIT_OK
}

fn cmd_validate(cli: &Cli) -> i32 {
    let loaded = match load(cli) {
        Ok(l) => l,
        Err(code) => return code,
    };
    let cfg = &loaded.cfg;
    let line = TrajectorySet::straight_line(cfg);
    let kin = match validate_kinematics(&line, cfg) {
        Ok(k) => k,
        Err(e) => return fail(&e),
    };
    println!(
        "{}: {} UAVs, {} users, {} targets, {} slots of {} s, {} antennas",
        loaded.path.display(),
        cfg.uav_count,
        cfg.user_count(),
        cfg.target_count(),
        cfg.slot_count(),
        cfg.slot_length(),
        cfg.antennas()
    );
    println!("sha256 {}", sha256_hex(&loaded.bytes));
    if !kin.feasible() {
        println!("warning: the straight-line flight violates the kinematic limits (residual {:.3e})", kin.max());
    }
    EXIT_OK
}
