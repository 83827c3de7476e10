//! Slot-by-slot flight environment with frozen beamformers.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::{c, dyad, norm_sqr, trace_re};
use crate::metrics::{compute_flight_energy, crb_value, link_terms, BeamformerSet};
use crate::scenario::{distance, Point3, ScenarioConfig, TrajectorySet};
use crate::sensing::crb_requirement;
use serde::{Deserialize, Serialize};

/// Physical action of one UAV: horizontal speed (m/s), heading (rad) and next altitude (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavAction {
    pub speed: f64,
    pub heading: f64,
    pub altitude: f64,
}

/// `x += τ a cos θ`, `y += τ a sin θ`, altitude set directly.
pub fn apply_kinematics(position: &Point3, action: &UavAction, tau: f64) -> Point3 {
    [
        position[0] + tau * action.speed * action.heading.cos(),
        position[1] + tau * action.speed * action.heading.sin(),
        action.altitude,
    ]
}

/// Constraint breaches of one environment step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub crb: bool,
    pub energy: bool,
    pub step: bool,
    pub endpoint: bool,
    pub altitude: bool,
    pub separation: bool,
}

impl ViolationReport {
    pub fn any(&self) -> bool {
        self.crb || self.energy || self.step || self.endpoint || self.altitude || self.separation
    }

    pub fn count(&self) -> usize {
        [self.crb, self.energy, self.step, self.endpoint, self.altitude, self.separation].iter().filter(|x| **x).count()
    }

    pub fn labels(&self) -> Vec<&'static str> {
        let names = ["crb", "energy", "step", "endpoint", "altitude", "separation"];
        let flags = [self.crb, self.energy, self.step, self.endpoint, self.altitude, self.separation];
        names.iter().zip(flags).filter(|(_, f)| *f).map(|(n, _)| *n).collect()
    }

    fn merge(&mut self, other: &ViolationReport) {
        self.crb |= other.crb;
        self.energy |= other.energy;
        self.step |= other.step;
        self.endpoint |= other.endpoint;
        self.altitude |= other.altitude;
        self.separation |= other.separation;
    }
}

/// `Σ R − ξ·1[any violation]`
pub fn reward_fn(sum_rate: f64, violations: &ViolationReport, penalty: f64) -> f64 {
    if violations.any() {
        sum_rate - penalty
    } else {
        sum_rate
    }
}

/// Sum rate (bits) of slot `n`.
pub fn slot_sum_rate(beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig, n: usize) -> f64 {
    let tau = cfg.slot_length();
    let mut sum = 0.0;
    for u in 0..cfg.uav_count {
        for lv in 0..cfg.users_of(u).len() {
            let (s, intra, inter) = link_terms(beams, chans, cfg, u, lv, n);
            sum += tau * (1.0 + s / (intra + inter + cfg.noise_power)).log2();
        }
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSettings {
    /// `ξ`
    pub penalty: f64,
    /// Weight of the final distance to the destination, per `a_max τ` of miss.
    pub terminal_weight: f64,
    /// Rescale each frozen sensing beam onto its CRB bound at the visited geometry, shrinking
    /// the communication beams when the power budget requires it.
    pub adapt_sensing: bool,
    pub channel_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    pub sum_rate: f64,
    pub violations: ViolationReport,
    pub done: bool,
}

/// Episode state. The agent moves the UAVs into slots `1..=N-2`; the last step also flies
/// every UAV to the destination (or as close as one slot allows).
#[derive(Debug, Clone)]
pub struct TrajectoryEnv {
    cfg: ScenarioConfig,
    settings: EnvSettings,
    frozen: BeamformerSet,
    beams: BeamformerSet,
    chans: ChannelRealization,
    traj: TrajectorySet,
    slot: usize,
    energy_used: Vec<f64>,
    bearing: f64,
    done: bool,
}

impl TrajectoryEnv {
    pub fn new(cfg: &ScenarioConfig, beams: &BeamformerSet, settings: EnvSettings) -> Result<Self> {
        cfg.validate()?;
        if cfg.slot_count() < 3 {
            return Err(Error::Validation("the flight environment needs at least three slots".into()));
        }
        if !(settings.penalty >= 0.0) || !(settings.terminal_weight >= 0.0) {
            return Err(Error::Validation("penalty weights must be non-negative".into()));
        }
        let traj = TrajectorySet::straight_line(cfg);
        let chans = ChannelRealization::sample(cfg, &traj, settings.channel_seed)?;
        let bearing = (cfg.finish[1] - cfg.start[1]).atan2(cfg.finish[0] - cfg.start[0]);
        let mut env = TrajectoryEnv {
            cfg: cfg.clone(),
            settings,
            frozen: beams.clone(),
            beams: beams.clone(),
            chans,
            traj,
            slot: 0,
            energy_used: vec![0.0; cfg.uav_count],
            bearing,
            done: false,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn settings(&self) -> &EnvSettings {
        &self.settings
    }

    pub fn set_penalty(&mut self, penalty: f64) {
        self.settings.penalty = penalty;
    }

    pub fn set_terminal_weight(&mut self, weight: f64) {
        self.settings.terminal_weight = weight;
    }

    pub fn action_dim(&self) -> usize {
        3 * self.cfg.uav_count
    }

    pub fn state_dim(&self) -> usize {
        self.observe().len()
    }

    /// Number of agent decisions per episode.
    pub fn horizon(&self) -> usize {
        self.cfg.slot_count() - 2
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn trajectory(&self) -> &TrajectorySet {
        &self.traj
    }

    pub fn channels(&self) -> &ChannelRealization {
        &self.chans
    }

    /// Beams in force, after any sensing rescaling.
    pub fn beams(&self) -> &BeamformerSet {
        &self.beams
    }

    pub fn reset(&mut self) -> Result<Vec<f64>> {
        let ns = self.cfg.slot_count();
        self.traj = TrajectorySet::straight_line(&self.cfg);
        for path in &mut self.traj.positions {
            for p in path.iter_mut().take(ns - 1) {
                *p = self.cfg.start;
            }
        }
        self.beams = self.frozen.clone();
        self.slot = 0;
        self.done = false;
        let starts = vec![self.cfg.start; self.cfg.uav_count];
        self.chans.resample_slot(&self.cfg, &starts, 0, self.settings.channel_seed)?;
        self.adapt(0);
        self.energy_used = vec![0.0; self.cfg.uav_count];
        self.account_energy(0);
        Ok(self.observe())
    }

    /// Maps squashed outputs in `[-1, 1]` onto the action boxes. Headings are measured from
    /// the start-to-finish bearing.
    pub fn decode(&self, y: &[f64]) -> Vec<UavAction> {
        let b = &self.cfg.action_bounds;
        let lerp = |r: [f64; 2], t: f64| {
            let t = t.clamp(-1.0, 1.0);
            0.5 * (r[0] + r[1]) + 0.5 * (r[1] - r[0]) * t
        };
        y.chunks(3)
            .map(|a| UavAction {
                speed: lerp(b.speed, a[0]),
                heading: self.bearing + lerp(b.heading, a[1]),
                altitude: lerp([self.cfg.altitude_min, self.cfg.altitude_max], a[2]),
            })
            .collect()
    }

    pub fn step(&mut self, y: &[f64]) -> Result<StepOutcome> {
        if y.len() != self.action_dim() {
            return Err(Error::Structural(format!("action has {} entries, expected {}", y.len(), self.action_dim())));
        }
        let actions = self.decode(y);
        self.step_environment(&actions)
    }

    /// Advances one slot under physical actions.
    pub fn step_environment(&mut self, actions: &[UavAction]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Structural("episode already finished".into()));
        }
        if actions.len() != self.cfg.uav_count {
            return Err(Error::Structural("one action per UAV is required".into()));
        }
        let cfg = &self.cfg;
        let n = self.slot;
        let next = n + 1;
        let tau = cfg.slot_length();
        let reach = cfg.max_speed * tau;
        let current: Vec<Point3> = (0..cfg.uav_count).map(|u| self.traj.positions[u][n]).collect();
        let mut proposed: Vec<Point3> = current.iter().zip(actions).map(|(p, a)| apply_kinematics(p, a, tau)).collect();
        let mut report = ViolationReport::default();
        let mut hold = vec![false; cfg.uav_count];
        for u in 0..cfg.uav_count {
            if distance(&current[u], &proposed[u]) > reach * (1.0 + 1e-12) {
                report.step = true;
                hold[u] = true;
            }
            let h = proposed[u][2];
            if h < cfg.altitude_min - 1e-9 || h > cfg.altitude_max + 1e-9 {
                report.altitude = true;
                hold[u] = true;
            }
        }
        for a in 0..cfg.uav_count {
            for b in a + 1..cfg.uav_count {
                if distance(&proposed[a], &proposed[b]) < cfg.min_separation {
                    report.separation = true;
                    hold[a] = true;
                    hold[b] = true;
                }
            }
        }
        for u in 0..cfg.uav_count {
            if hold[u] {
                proposed[u] = current[u];
            }
        }
        let (rate, slot_report) = self.enter_slot(next, &proposed)?;
        report.merge(&slot_report);
        let mut reward = reward_fn(rate, &report, self.settings.penalty);
        let mut sum_rate = rate;
        self.slot = next;

        if next == self.cfg.slot_count() - 2 {
            let (r, landing, miss) = self.land()?;
            reward += r;
            sum_rate += landing.1;
            report.merge(&landing.0);
            reward -= self.settings.terminal_weight * miss;
            self.done = true;
        }
        Ok(StepOutcome { state: self.observe(), reward, sum_rate, violations: report, done: self.done })
    }

    /// Flies to the destination; returns (reward, (violations, sum rate), normalized miss).
    fn land(&mut self) -> Result<(f64, (ViolationReport, f64), f64)> {
        let cfg = &self.cfg;
        let last = cfg.slot_count() - 1;
        let reach = cfg.max_speed * cfg.slot_length();
        let mut report = ViolationReport::default();
        let mut miss = 0.0;
        let finals: Vec<Point3> = (0..cfg.uav_count)
            .map(|u| {
                let p = self.traj.positions[u][last - 1];
                let d = distance(&p, &cfg.finish);
                if d <= reach * (1.0 + 1e-12) {
                    cfg.finish
                } else {
                    report.endpoint = true;
                    miss += (d - reach) / reach;
                    let f = reach / d;
                    [p[0] + f * (cfg.finish[0] - p[0]), p[1] + f * (cfg.finish[1] - p[1]), p[2] + f * (cfg.finish[2] - p[2])]
                }
            })
            .collect();
        let (rate, slot_report) = self.enter_slot(last, &finals)?;
        report.merge(&slot_report);
        self.slot = last;
        Ok((reward_fn(rate, &report, self.settings.penalty), (report, rate), miss))
    }

    /// Places the UAVs in slot `n`, redraws its channels and returns its sum rate with the
    /// budget violations it causes.
    fn enter_slot(&mut self, n: usize, positions: &[Point3]) -> Result<(f64, ViolationReport)> {
        for (u, p) in positions.iter().enumerate() {
            self.traj.positions[u][n] = *p;
        }
        self.chans.resample_slot(&self.cfg, positions, n, self.settings.channel_seed)?;
        let mut report = ViolationReport::default();
        report.crb = !self.adapt(n);
        for u in 0..self.cfg.uav_count {
            for (lk, &k) in self.cfg.targets_of(u).iter().enumerate() {
                let (crb, _) = crb_value(
                    self.cfg.noise_power,
                    self.chans.echo_gain[u][k][n],
                    &self.chans.echo_deriv[u][k][n],
                    &self.beams.sense_cov[u][lk][n],
                )?;
                if crb > self.cfg.crb_threshold_for(u, k, n) * (1.0 + 1e-6) {
                    report.crb = true;
                }
            }
        }
        report.energy = self.account_energy(n);
        Ok((slot_sum_rate(&self.beams, &self.chans, &self.cfg, n), report))
    }

    /// Rescales the sensing beams of slot `n` onto their CRB bounds and shrinks the
    /// communication beams into the power left over. Returns false when the sensing beams
    /// alone cannot meet every bound within the budget.
    fn adapt(&mut self, n: usize) -> bool {
        if !self.settings.adapt_sensing {
            return true;
        }
        let mut ok = true;
        for u in 0..self.cfg.uav_count {
            let mut scaled = Vec::new();
            let mut need = 0.0;
            for (lk, &k) in self.cfg.targets_of(u).iter().enumerate() {
                let i0 = &self.frozen.sense[u][lk][n];
                let d = &self.chans.echo_deriv[u][k][n];
                let t0 = trace_re(&(d.adjoint() * d), &dyad(i0));
                let req = crb_requirement(self.cfg.noise_power, self.chans.echo_gain[u][k][n], self.cfg.crb_threshold_for(u, k, n));
                let f = if req <= 0.0 {
                    0.0
                } else if t0 > 0.0 && req.is_finite() {
                    req / t0 * (1.0 + 1e-9)
                } else {
                    ok = false;
                    1.0
                };
                need += f * norm_sqr(i0);
                scaled.push(f);
            }
            let pm = self.cfg.max_power[u];
            let shrink = if need > pm {
                ok = false;
                if need > 0.0 { pm / need } else { 0.0 }
            } else {
                1.0
            };
            for (lk, f) in scaled.into_iter().enumerate() {
                let i = &self.frozen.sense[u][lk][n] * c((f * shrink).sqrt(), 0.0);
                self.beams.set_sense(u, lk, n, i);
            }
            let comm = self.frozen.comm_power(u, n);
            let room = (pm - need * shrink).max(0.0);
            let g_scale = if comm > room && comm > 0.0 { room / comm } else { 1.0 };
            for lv in 0..self.cfg.users_of(u).len() {
                let g = &self.frozen.comm[u][lv][n] * c(g_scale.sqrt(), 0.0);
                self.beams.set_comm(u, lv, n, g);
            }
        }
        ok
    }

    /// Adds slot `n` to the running energy totals; true if any budget is exceeded.
    fn account_energy(&mut self, n: usize) -> bool {
        let tau = self.cfg.slot_length();
        let mut over = false;
        for u in 0..self.cfg.uav_count {
            let state = self.traj.state(u, n);
            self.energy_used[u] += tau * self.beams.slot_power(u, n) + compute_flight_energy(&state, &self.cfg.flight, tau);
            if self.energy_used[u] > self.cfg.energy_budget[u] * (1.0 + 1e-9) {
                over = true;
            }
        }
        over
    }

    /// Features in `[-1, 1]`: UAV positions and normalized offsets to the destination, the
    /// per-link powers of the upcoming slot, node positions and the slot index.
    pub fn observe(&self) -> Vec<f64> {
        let cfg = &self.cfg;
        let ns = cfg.slot_count();
        let n = self.slot;
        let upcoming = (n + 1).min(ns - 1);
        let area = cfg.area_size.max(1e-9);
        let xy = |v: f64| (2.0 * v / area - 1.0).clamp(-1.0, 1.0);
        let band = (cfg.altitude_max - cfg.altitude_min).max(1e-9);
        let reach = cfg.max_speed * cfg.slot_length();
        let left = (ns - 1 - n).max(1) as f64 * reach;
        let mut out = Vec::new();
        for u in 0..cfg.uav_count {
            let p = self.traj.positions[u][n];
            out.push(xy(p[0]));
            out.push(xy(p[1]));
            out.push((2.0 * (p[2] - cfg.altitude_min) / band - 1.0).clamp(-1.0, 1.0));
            out.push(((cfg.finish[0] - p[0]) / left).clamp(-1.0, 1.0));
            out.push(((cfg.finish[1] - p[1]) / left).clamp(-1.0, 1.0));
            let pm = cfg.max_power[u];
            let share = |x: f64| if pm > 0.0 { (2.0 * x / pm - 1.0).clamp(-1.0, 1.0) } else { -1.0 };
            for g in &self.frozen.comm_cov[u] {
                out.push(share(g[upcoming].trace().re));
            }
            for i in &self.frozen.sense_cov[u] {
                out.push(share(i[upcoming].trace().re));
            }
        }
        for v in 0..cfg.user_count() {
            let q = cfg.user_position(v, upcoming);
            out.push(xy(q[0]));
            out.push(xy(q[1]));
        }
        for k in 0..cfg.target_count() {
            let q = cfg.target_position(k, upcoming);
            out.push(xy(q[0]));
            out.push(xy(q[1]));
        }
        out.push(2.0 * n as f64 / (ns - 1) as f64 - 1.0);
        out
    }
}
