//! Outer block-coordinate loop, baselines and parameter sweeps.

use crate::channel::ChannelRealization;
use crate::comm::{run_alg1, Alg1Settings};
use crate::error::{Error, Result};
use crate::linalg::{c, CVec};
use crate::metrics::{budget_residuals, compute_crb, compute_rates, energy_ledger, rank_one_extract, BeamformerSet, BudgetResiduals};
use crate::rl::{random_episode, rollout, Agent, DdpgConfig, EnvSettings, EpisodeRecord, Policy, TrajectoryEnv};
use crate::scenario::{validate_kinematics, KinematicResiduals, ScenarioConfig, TrajectorySet};
use crate::sensing::{initial_sensing, run_alg2, Alg2Settings};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryMode {
    /// Beamforming-only alternation on the straight-line trajectory.
    Frozen,
    /// Trajectory block solved by the actor-critic agent.
    Ddpg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdSettings {
    pub max_outer: usize,
    /// Stop when the relative sum-rate change drops below this.
    pub epsilon: f64,
    pub mode: TrajectoryMode,
    pub alg1: Alg1Settings,
    pub alg2: Alg2Settings,
    pub ddpg: DdpgConfig,
    /// Episodes per outer iteration after the first training.
    pub finetune_episodes: usize,
    pub channel_seed: u64,
    pub rl_seed: u64,
    /// Channels to use on the initial straight-line flight instead of sampling them.
    pub replay_channels: Option<ChannelRealization>,
}

impl BcdSettings {
    pub fn new(cfg: &ScenarioConfig, mode: TrajectoryMode) -> Self {
        BcdSettings {
            max_outer: 10,
            epsilon: 1e-3,
            mode,
            alg1: Alg1Settings::default(),
            alg2: Alg2Settings::default(),
            ddpg: DdpgConfig::default(),
            finetune_episodes: 50,
            channel_seed: cfg.rng_seed,
            rl_seed: cfg.rng_seed,
            replay_channels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub iteration: usize,
    /// Best sum rate so far (bits).
    pub sum_rate: f64,
    /// Sum rate produced by this iteration's blocks.
    pub candidate_rate: f64,
    pub min_crb_margin: f64,
    pub energy_margins: Vec<f64>,
    pub alg1_iterations: usize,
    pub alg2_iterations: usize,
    pub rl_episodes: usize,
    pub trajectory_accepted: bool,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum BcdStatus {
    Converged,
    IterationLimit,
    /// A later subproblem had no feasible point; the report holds the last feasible iterate.
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalResiduals {
    pub kinematics: KinematicResiduals,
    pub budgets: BudgetResiduals,
}

impl FinalResiduals {
    pub fn max(&self) -> f64 {
        self.kinematics.max().max(self.budgets.max())
    }
}

#[derive(Debug, Clone)]
pub struct BcdReport {
    pub label: String,
    pub status: BcdStatus,
    pub records: Vec<OuterRecord>,
    pub trajectory: TrajectorySet,
    pub beams: BeamformerSet,
    pub channels: ChannelRealization,
    pub sum_rate: f64,
    pub min_crb: f64,
    pub max_crb: f64,
    pub min_crb_margin: f64,
    pub energy_margins: Vec<f64>,
    pub residuals: FinalResiduals,
    pub policy: Option<Policy>,
    pub curve: Vec<EpisodeRecord>,
    /// Greedy episode reward of the learned (or random) flight policy, if one was used.
    pub policy_reward: Option<f64>,
}

#[derive(Debug, Clone)]
struct Iterate {
    traj: TrajectorySet,
    chans: ChannelRealization,
    beams: BeamformerSet,
    rate: f64,
}

/// Zero communication beams and least-power sensing beams on the CRB bounds.
pub fn sensing_start(cfg: &ScenarioConfig, chans: &ChannelRealization, traj: &TrajectorySet) -> Result<BeamformerSet> {
    let mut beams = BeamformerSet::zeros(cfg);
    let cov = initial_sensing(&beams, chans, traj, cfg)?;
    for (u, per) in cov.iter().enumerate() {
        for (lk, slots) in per.iter().enumerate() {
            for (n, x) in slots.iter().enumerate() {
                let (v, _) = rank_one_extract(x)?;
                beams.set_sense(u, lk, n, v);
            }
        }
    }
    Ok(beams)
}

fn check_channel_shape(ch: &ChannelRealization, cfg: &ScenarioConfig) -> Result<()> {
    let ok = ch.antennas == cfg.antennas()
        && ch.uav_count() == cfg.uav_count
        && ch.comm.iter().all(|v| v.len() == cfg.user_count())
        && ch.echo.iter().all(|k| k.len() == cfg.target_count())
        && ch.comm.iter().flatten().all(|s| s.len() == cfg.slot_count())
        && ch.echo.iter().flatten().all(|s| s.len() == cfg.slot_count());
    if ok {
        Ok(())
    } else {
        Err(Error::Structural("replayed channels do not match the scenario dimensions".into()))
    }
}

fn feasible(beams: &BeamformerSet, chans: &ChannelRealization, traj: &TrajectorySet, cfg: &ScenarioConfig) -> Result<bool> {
    Ok(validate_kinematics(traj, cfg)?.feasible() && budget_residuals(beams, chans, traj, cfg)?.max() <= 1e-6)
}

/// Alternates the beamforming blocks and (in DDPG mode) the trajectory block from the
/// straight-line flight.
pub fn run_bcd(cfg: &ScenarioConfig, settings: &BcdSettings) -> Result<BcdReport> {
    run_bcd_from(cfg, settings, None)
}

/// As [`run_bcd`], starting from `warm` when it is feasible for `cfg`. The best feasible
/// iterate seen (including the warm start) is returned.
pub fn run_bcd_from(cfg: &ScenarioConfig, settings: &BcdSettings, warm: Option<(&TrajectorySet, &BeamformerSet)>) -> Result<BcdReport> {
    cfg.validate()?;
    let seed = settings.channel_seed;
    let mut best = match warm {
        Some((traj, beams)) => {
            let chans = ChannelRealization::sample(cfg, traj, seed)?;
            if feasible(beams, &chans, traj, cfg)? {
                let rate = compute_rates(beams, &chans, cfg)?.sum_rate;
                Some(Iterate { traj: traj.clone(), chans, beams: beams.clone(), rate })
            } else {
                None
            }
        }
        None => None,
    };
    if best.is_none() {
        let traj = TrajectorySet::straight_line(cfg);
        let chans = match &settings.replay_channels {
            Some(ch) => {
                check_channel_shape(ch, cfg)?;
                ch.clone()
            }
            None => ChannelRealization::sample(cfg, &traj, seed)?,
        };
        let beams = sensing_start(cfg, &chans, &traj)?;
        let rate = compute_rates(&beams, &chans, cfg)?.sum_rate;
        best = Some(Iterate { traj, chans, beams, rate });
    }
    let mut best = best.expect("initialized above");
    let mut agent: Option<Agent> = None;
    let mut records = Vec::new();
    let mut status = BcdStatus::IterationLimit;

    for it in 0..settings.max_outer {
        let t0 = Instant::now();
        let step = (|| -> Result<_> {
            let (b1, s1) = run_alg1(&best.beams, &best.chans, &best.traj, cfg, &settings.alg1)?;
            let (b2, s2) = run_alg2(&b1, &best.chans, &best.traj, cfg, &settings.alg2)?;
            Ok((b2, s1.iteration, s2.iteration))
        })();
        let (beams, n1, n2) = match step {
            Ok(x) => x,
            Err(e) if e.is_infeasible() && !records.is_empty() => {
                status = BcdStatus::Infeasible(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        let rate = compute_rates(&beams, &best.chans, cfg)?.sum_rate;
        let mut candidate = Iterate { traj: best.traj.clone(), chans: best.chans.clone(), beams, rate };
        let mut episodes = 0;
        let mut accepted = false;
        if settings.mode == TrajectoryMode::Ddpg {
            let env_settings = EnvSettings {
                penalty: 0.0,
                terminal_weight: 0.0,
                adapt_sensing: settings.ddpg.adapt_sensing,
                channel_seed: seed,
            };
            let mut env = TrajectoryEnv::new(cfg, &candidate.beams, env_settings)?;
            match agent.as_mut() {
                None => {
                    let mut a = Agent::new(&mut env, &settings.ddpg, settings.rl_seed)?;
                    a.train_episodes(&mut env, settings.ddpg.episodes)?;
                    episodes = settings.ddpg.episodes;
                    agent = Some(a);
                }
                Some(a) => {
                    a.train_episodes(&mut env, settings.finetune_episodes)?;
                    episodes = settings.finetune_episodes;
                }
            }
            let policy = agent.as_ref().expect("trained").policy();
            let roll = rollout(&policy, &mut env)?;
            let (traj, chans, beams) = (roll.trajectory, env.channels().clone(), env.beams().clone());
            if feasible(&beams, &chans, &traj, cfg)? {
                let r = compute_rates(&beams, &chans, cfg)?.sum_rate;
                if r > candidate.rate {
                    candidate = Iterate { traj, chans, beams, rate: r };
                    accepted = true;
                }
            }
        }
        let previous = best.rate;
        let change = (candidate.rate - previous).abs() / candidate.rate.abs().max(previous.abs()).max(1e-12);
        let improved = candidate.rate >= previous;
        let candidate_rate = candidate.rate;
        if improved {
            best = candidate;
        }
        let crb = compute_crb(&best.beams, &best.chans, cfg)?;
        let ledger = energy_ledger(&best.beams, &best.traj, cfg);
        let wall = t0.elapsed().as_secs_f64();
        log::info!("outer {it}: sum rate {:.6} (candidate {candidate_rate:.6}) in {wall:.2}s", best.rate);
        records.push(OuterRecord {
            iteration: it,
            sum_rate: best.rate,
            candidate_rate,
            min_crb_margin: crb.min_margin(),
            energy_margins: ledger.margins,
            alg1_iterations: n1,
            alg2_iterations: n2,
            rl_episodes: episodes,
            trajectory_accepted: accepted,
            wall_seconds: wall,
        });
        if !improved || change < settings.epsilon {
            status = BcdStatus::Converged;
            break;
        }
    }
    let policy = agent.as_ref().map(Agent::policy);
    let policy_reward = match &policy {
        Some(p) => {
            let env_settings = EnvSettings { penalty: p.penalty, terminal_weight: p.terminal_weight, adapt_sensing: p.config.adapt_sensing, channel_seed: seed };
            let mut env = TrajectoryEnv::new(cfg, &best.beams, env_settings)?;
            Some(rollout(p, &mut env)?.total_reward)
        }
        None => None,
    };
    let label = match settings.mode {
        TrajectoryMode::Frozen => "bcd-frozen",
        TrajectoryMode::Ddpg => "proposed",
    };
    let mut report = finish(cfg, label, status, records, best)?;
    report.curve = agent.map(|a| a.curve).unwrap_or_default();
    report.policy = policy;
    report.policy_reward = policy_reward;
    Ok(report)
}

fn finish(cfg: &ScenarioConfig, label: &str, status: BcdStatus, records: Vec<OuterRecord>, it: Iterate) -> Result<BcdReport> {
    let crb = compute_crb(&it.beams, &it.chans, cfg)?;
    let values: Vec<f64> = crb.entries.iter().flatten().flatten().map(|e| e.value).collect();
    let ledger = energy_ledger(&it.beams, &it.traj, cfg);
    let residuals = FinalResiduals {
        kinematics: validate_kinematics(&it.traj, cfg)?,
        budgets: budget_residuals(&it.beams, &it.chans, &it.traj, cfg)?,
    };
    Ok(BcdReport {
        label: label.to_string(),
        status,
        records,
        sum_rate: it.rate,
        min_crb: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_crb: crb.max_crb(),
        min_crb_margin: crb.min_margin(),
        energy_margins: ledger.margins,
        residuals,
        trajectory: it.traj,
        beams: it.beams,
        channels: it.chans,
        policy: None,
        curve: Vec::new(),
        policy_reward: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Learned trajectory with uniform-power MRT and uniform sensing beams.
    Twobf,
    /// Optimized beams on the straight-line trajectory.
    Bfwot,
    /// Optimized straight-line beams flown along a uniformly random policy.
    RandomPolicy,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            BaselineKind::Twobf => "twobf",
            BaselineKind::Bfwot => "bfwot",
            BaselineKind::RandomPolicy => "random_policy",
        }
    }
}

/// MRT toward every user and the strongest sensing direction toward every target, with the
/// power budget split evenly over all streams of a UAV.
pub fn uniform_beams(cfg: &ScenarioConfig, chans: &ChannelRealization) -> BeamformerSet {
    let mut beams = BeamformerSet::zeros(cfg);
    for u in 0..cfg.uav_count {
        let streams = cfg.users_of(u).len() + cfg.targets_of(u).len();
        if streams == 0 {
            continue;
        }
        let amp = (cfg.max_power[u] / streams as f64).sqrt();
        for n in 0..cfg.slot_count() {
            for (lv, &v) in cfg.users_of(u).iter().enumerate() {
                let h = &chans.comm[u][v][n];
                let norm = h.norm();
                let g: CVec = if norm > 0.0 { h * c(amp / norm, 0.0) } else { CVec::zeros(cfg.antennas()) };
                beams.set_comm(u, lv, n, g);
            }
            for (lk, &k) in cfg.targets_of(u).iter().enumerate() {
                let d = &chans.echo_deriv[u][k][n];
                let (_, vecs) = crate::linalg::hermitian_eigen(&(d.adjoint() * d));
                let top: CVec = vecs.column(cfg.antennas() - 1).into_owned();
                beams.set_sense(u, lk, n, top * c(amp, 0.0));
            }
        }
    }
    beams
}

pub fn run_baseline(kind: BaselineKind, cfg: &ScenarioConfig, settings: &BcdSettings) -> Result<BcdReport> {
    cfg.validate()?;
    let seed = settings.channel_seed;
    match kind {
        BaselineKind::Bfwot => {
            let mut s = settings.clone();
            s.mode = TrajectoryMode::Frozen;
            let mut r = run_bcd(cfg, &s)?;
            r.label = kind.label().into();
            Ok(r)
        }
        BaselineKind::Twobf => {
            let traj0 = TrajectorySet::straight_line(cfg);
            let chans0 = ChannelRealization::sample(cfg, &traj0, seed)?;
            let beams0 = uniform_beams(cfg, &chans0);
            let env_settings = EnvSettings { penalty: 0.0, terminal_weight: 0.0, adapt_sensing: false, channel_seed: seed };
            let mut env = TrajectoryEnv::new(cfg, &beams0, env_settings)?;
            let mut agent = Agent::new(&mut env, &settings.ddpg, settings.rl_seed)?;
            agent.train_episodes(&mut env, settings.ddpg.episodes)?;
            let policy = agent.policy();
            let roll = rollout(&policy, &mut env)?;
            let mut it = flown(cfg, roll.trajectory, seed, uniform_beams)?;
            if !feasible(&it.beams, &it.chans, &it.traj, cfg)? {
                log::warn!("learned baseline trajectory is infeasible; falling back to the straight line");
                it = flown(cfg, traj0, seed, uniform_beams)?;
            }
            check_feasible(cfg, &it)?;
            let mut r = finish(cfg, kind.label(), BcdStatus::Converged, Vec::new(), it)?;
            r.policy_reward = Some(roll.total_reward);
            r.policy = Some(policy);
            r.curve = agent.curve;
            Ok(r)
        }
        BaselineKind::RandomPolicy => {
            let mut s = settings.clone();
            s.mode = TrajectoryMode::Frozen;
            let fixed = run_bcd(cfg, &s)?;
            let env_settings = EnvSettings { penalty: 0.0, terminal_weight: 0.0, adapt_sensing: settings.ddpg.adapt_sensing, channel_seed: seed };
            let mut env = TrajectoryEnv::new(cfg, &fixed.beams, env_settings)?;
            let probe = Agent::new(&mut env, &settings.ddpg, settings.rl_seed)?;
            env.set_penalty(probe.penalty);
            env.set_terminal_weight(probe.terminal_weight);
            let mut rng = ChaCha8Rng::seed_from_u64(settings.rl_seed);
            let roll = random_episode(&mut env, &mut rng)?;
            let beams = env.beams().clone();
            let chans = env.channels().clone();
            let rate = compute_rates(&beams, &chans, cfg)?.sum_rate;
            let it = Iterate { traj: roll.trajectory, chans, beams, rate };
            let mut r = finish(cfg, kind.label(), BcdStatus::Converged, Vec::new(), it)?;
            r.policy_reward = Some(roll.total_reward);
            Ok(r)
        }
    }
}

fn flown(cfg: &ScenarioConfig, traj: TrajectorySet, seed: u64, design: fn(&ScenarioConfig, &ChannelRealization) -> BeamformerSet) -> Result<Iterate> {
    let chans = ChannelRealization::sample(cfg, &traj, seed)?;
    let beams = design(cfg, &chans);
    let rate = compute_rates(&beams, &chans, cfg)?.sum_rate;
    Ok(Iterate { traj, chans, beams, rate })
}

fn check_feasible(cfg: &ScenarioConfig, it: &Iterate) -> Result<()> {
    let crb = compute_crb(&it.beams, &it.chans, cfg)?;
    if crb.max_violation() > 1e-6 {
        return Err(Error::Infeasible(format!("uniform sensing power misses the CRB threshold (worst CRB {:e})", crb.max_crb())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Crb,
    Pmax,
}

impl SweepAxis {
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut out = cfg.clone();
        match self {
            SweepAxis::Crb => out.crb_threshold = value,
            SweepAxis::Pmax => out.max_power = vec![value; cfg.uav_count],
        }
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Crb => "crb",
            SweepAxis::Pmax => "pmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub sum_rate: f64,
    pub min_crb: f64,
    pub status: String,
    pub message: String,
}

/// One run per value in ascending order. A point whose fresh run falls below the previous
/// feasible point is re-solved from that point's solution, which stays feasible when the
/// constraint loosens.
pub fn sweep(cfg: &ScenarioConfig, axis: SweepAxis, values: &[f64], settings: &BcdSettings) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Validation("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| !(w[0] <= w[1])) || values.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("sweep values must be sorted ascending".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    let mut last: Option<BcdReport> = None;
    for &value in values {
        let point = axis.apply(cfg, value);
        let mut run = run_bcd(&point, settings);
        if let (Some(prev), Ok(fresh)) = (&last, &run) {
            if fresh.sum_rate < prev.sum_rate {
                let warm = run_bcd_from(&point, settings, Some((&prev.trajectory, &prev.beams)))?;
                if warm.sum_rate > fresh.sum_rate {
                    run = Ok(warm);
                }
            }
        }
        match run {
            Ok(r) => {
                rows.push(SweepRow { value, sum_rate: r.sum_rate, min_crb: r.min_crb, status: "ok".into(), message: String::new() });
                last = Some(r);
            }
            Err(e) if e.is_infeasible() => {
                rows.push(SweepRow { value, sum_rate: f64::NAN, min_crb: f64::NAN, status: "infeasible".into(), message: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

pub const TREND_HEADER: &str = "# uav-isac trend v1";
pub const CONVERGENCE_HEADER: &str = "# uav-isac convergence v1";
pub const TRAJECTORY_HEADER: &str = "# uav-isac trajectory v1";

pub fn trend_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = format!("{TREND_HEADER}\naxis_value,sum_rate_bits,min_crb,status\n");
    for r in rows {
        let _ = writeln!(s, "{:e},{:.12e},{:.12e},{}", r.value, r.sum_rate, r.min_crb, r.status);
    }
    let _ = axis;
    s
}

pub fn convergence_csv(report: &BcdReport) -> String {
    let mut s = format!(
        "{CONVERGENCE_HEADER}\niteration,sum_rate_bits,candidate_rate_bits,min_crb_margin,min_energy_margin_j,alg1_iterations,alg2_iterations,rl_episodes,trajectory_accepted\n"
    );
    for r in &report.records {
        let em = r.energy_margins.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            s,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{},{}",
            r.iteration, r.sum_rate, r.candidate_rate, r.min_crb_margin, em, r.alg1_iterations, r.alg2_iterations, r.rl_episodes, r.trajectory_accepted
        );
    }
    s
}

pub fn trajectory_csv(traj: &TrajectorySet) -> String {
    let mut s = format!("{TRAJECTORY_HEADER}\nslot,uav,x,y,h\n");
    for n in 0..traj.slot_count() {
        for (u, path) in traj.positions.iter().enumerate() {
            let p = path[n];
            let _ = writeln!(s, "{n},{u},{:.9},{:.9},{:.9}", p[0], p[1], p[2]);
        }
    }
    s
}
