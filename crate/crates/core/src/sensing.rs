//! Sensing beamforming by successive convex approximation.
//!
//! With the communication covariances fixed, the rate of each link is lower-bounded by
//! `τ log2(1 + ι)` under `ι Θ(I) ≤ S`. The bilinear left side is replaced by the convex upper
//! bound `Θ²/(2Ω) + ι²Ω/2`, tight at `Ω = Θ/ι`, and the resulting convex problem is solved
//! together with the CRB constraints written as `Tr(ĀᴴĀ I) ≥ σ² / (2Γ|β|²)`.

use crate::channel::ChannelRealization;
use crate::conic::{self, ConicProblem, LinearExpr, ObjectiveTerm, Sense, SolveStatus, SolverSettings, VarId};
use crate::error::{Error, Result};
use crate::linalg::{c, dyad, hermitian_eigen, trace_re, CMat, CVec};
use crate::metrics::{compute_crb, compute_rates, link_terms, rank_one_extract, BeamformerSet};
use crate::scenario::{ScenarioConfig, TrajectorySet};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::path::PathBuf;

/// Lower bound used for `ι` when forming `Ω = Θ/ι`.
pub const IOTA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Alg2Settings {
    pub max_iters: usize,
    pub tolerance: f64,
    pub solver: SolverSettings,
    pub dump_dir: Option<PathBuf>,
    pub dump_tag: String,
}

impl Default for Alg2Settings {
    fn default() -> Self {
        Alg2Settings { max_iters: 100, tolerance: 1e-4, solver: SolverSettings::default(), dump_dir: None, dump_tag: String::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alg2LogRow {
    pub iter: usize,
    pub objective: f64,
    pub min_crb_margin: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    /// `[u][local user][n]`
    pub iota: Vec<Vec<Vec<f64>>>,
    pub omega: Vec<Vec<Vec<f64>>>,
    pub iteration: usize,
    /// `Σ τ log2(1 + ι)` after every solve, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub log: Vec<Alg2LogRow>,
    pub relaxed_objective: f64,
    pub extracted_objective: f64,
    pub extraction_quality: f64,
    pub converged: bool,
}

impl ScaState {
    fn new(cfg: &ScenarioConfig) -> Self {
        let shape = |u: usize| vec![vec![0.0; cfg.slot_count()]; cfg.users_of(u).len()];
        ScaState {
            iota: (0..cfg.uav_count).map(shape).collect(),
            omega: (0..cfg.uav_count).map(shape).collect(),
            iteration: 0,
            objective_trace: Vec::new(),
            log: Vec::new(),
            relaxed_objective: 0.0,
            extracted_objective: 0.0,
            extraction_quality: 1.0,
            converged: false,
        }
    }

    pub fn objective(&self, cfg: &ScenarioConfig) -> f64 {
        let tau = cfg.slot_length();
        self.iota.iter().flatten().flatten().map(|i| tau * (1.0 + i).log2()).sum()
    }
}

/// `Ω = Θ / max(ι, floor)`
pub fn omega_star(theta: f64, iota: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Degenerate(format!("interference-plus-noise power {theta:e} is not positive")));
    }
    Ok(theta / iota.max(IOTA_FLOOR))
}

/// `Θ²/(2Ω) + ι²Ω/2`, an upper bound on `ιΘ` for every `Ω > 0`.
pub fn surrogate(theta: f64, iota: f64, omega: f64) -> f64 {
    theta * theta / (2.0 * omega) + iota * iota * omega / 2.0
}

/// Minimum of `Tr(ĀᴴĀ I)` that meets the CRB threshold: `σ² / (2Γ|β|²)`.
pub fn crb_requirement(noise_power: f64, gain: f64, threshold: f64) -> f64 {
    if !threshold.is_finite() {
        return 0.0;
    }
    if gain == 0.0 {
        return f64::INFINITY;
    }
    noise_power / (2.0 * threshold * gain * gain)
}

/// Least-power covariance meeting `Tr(A I) ≥ req`: `(req/λ_max) v vᴴ` on the top eigenvector.
pub fn minimal_sensing_covariance(ata: &CMat, req: f64) -> CMat {
    let (vals, vecs) = hermitian_eigen(ata);
    let m = vals.len();
    let top = vals[m - 1];
    if req <= 0.0 || top <= 0.0 {
        return CMat::zeros(m, m);
    }
    let v: CVec = vecs.column(m - 1).into_owned();
    dyad(&v) * c(req / top, 0.0)
}

fn ata(chans: &ChannelRealization, u: usize, k: usize, n: usize) -> CMat {
    let d = &chans.echo_deriv[u][k][n];
    let a = d.adjoint() * d;
    (&a + a.adjoint()) * c(0.5, 0.0)
}

fn requirement(chans: &ChannelRealization, cfg: &ScenarioConfig, u: usize, k: usize, n: usize) -> f64 {
    crb_requirement(cfg.noise_power, chans.echo_gain[u][k][n], cfg.crb_threshold_for(u, k, n))
}

/// Noise-normalized `(S, Θ)` of every link.
fn link_powers(beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig) -> Vec<Vec<Vec<(f64, f64)>>> {
    let s2 = cfg.noise_power;
    (0..cfg.uav_count)
        .map(|u| {
            (0..cfg.users_of(u).len())
                .map(|lv| {
                    (0..cfg.slot_count())
                        .map(|n| {
                            let (s, intra, inter) = link_terms(beams, chans, cfg, u, lv, n);
                            (s / s2, (intra + inter) / s2 + 1.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Noise-normalized useful power below which a link is treated as silent (its `ι` is fixed to zero).
const SILENT: f64 = 1e-12;

/// Relative power slack above the least-power sensing beams below which a slot is solved on
/// the top eigenspaces of its CRB matrices.
const FIXED_SLACK: f64 = 1e-2;

/// Makes the surrogate tight at the current `(I, ι)`.
pub fn update_omega(state: &mut ScaState, beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig) -> Result<()> {
    for (u, per_user) in link_powers(beams, chans, cfg).iter().enumerate() {
        for (lv, slots) in per_user.iter().enumerate() {
            for (n, &(_, theta)) in slots.iter().enumerate() {
                state.omega[u][lv][n] = omega_star(theta, state.iota[u][lv][n])?;
            }
        }
    }
    Ok(())
}

fn power_floor(cfg: &ScenarioConfig, u: usize) -> f64 {
    1e-12 * cfg.max_power[u].abs().max(1e-300)
}

fn available_power(beams: &BeamformerSet, cfg: &ScenarioConfig) -> Vec<Vec<f64>> {
    (0..cfg.uav_count)
        .map(|u| (0..cfg.slot_count()).map(|n| cfg.max_power[u] - beams.comm_power(u, n)).collect())
        .collect()
}

fn energy_allowance(beams: &BeamformerSet, traj: &TrajectorySet, cfg: &ScenarioConfig) -> Vec<f64> {
    let tau = cfg.slot_length();
    let flight = crate::metrics::flight_energy_table(traj, cfg);
    (0..cfg.uav_count)
        .map(|u| {
            let comm: f64 = (0..cfg.slot_count()).map(|n| beams.comm_power(u, n)).sum();
            (cfg.energy_budget[u] - flight[u].iter().sum::<f64>()) / tau - comm
        })
        .collect()
}

/// Relaxed solution of one SCA step: sensing covariances `[u][local k][n]`, new `ι`, and the
/// largest constraint residual.
pub type SensingStep = (Vec<Vec<Vec<CMat>>>, Vec<Vec<Vec<f64>>>, f64);

/// Solves the convexified problem at fixed `Ω` and communication covariances.
pub fn solve_i_iota(
    state: &ScaState,
    beams: &BeamformerSet,
    chans: &ChannelRealization,
    traj: &TrajectorySet,
    cfg: &ScenarioConfig,
    settings: &Alg2Settings,
) -> Result<SensingStep> {
    let m = cfg.antennas();
    let nslots = cfg.slot_count();
    let s2 = cfg.noise_power;
    let tau = cfg.slot_length();
    let avail = available_power(beams, cfg);
    let allowance = energy_allowance(beams, traj, cfg);
    let mut p = ConicProblem::new();

    // In slots whose budget only fits the least-power sensing beams, every covariance is
    // confined to the top eigenspace of its CRB matrix, I = V X Vᴴ. That face is the whole
    // feasible set there (it is two-dimensional for the ULA echo model), the budget is widened
    // by FIXED_SLACK so the barrier has an interior, and extraction puts each beam back on
    // its bound at exactly the least power.
    let mut cap = avail.clone();
    let mut basis: Vec<Vec<Vec<Option<CMat>>>> = (0..cfg.uav_count).map(|u| vec![vec![None; nslots]; cfg.targets_of(u).len()]).collect();
    for u in 0..cfg.uav_count {
        for n in 0..nslots {
            let mut least = 0.0;
            let mut tops = Vec::new();
            for &k in cfg.targets_of(u) {
                let req = requirement(chans, cfg, u, k, n);
                if !req.is_finite() {
                    return Err(Error::Infeasible(format!("crb(u={u},k={k},n={n}): target has no echo gain")));
                }
                let (vals, vecs) = hermitian_eigen(&ata(chans, u, k, n));
                let top = vals.last().copied().unwrap_or(0.0);
                if req > 0.0 {
                    least += if top > 0.0 { req / top } else { f64::INFINITY };
                }
                tops.push((req, vals, vecs));
            }
            if avail[u][n] - least > FIXED_SLACK * least.max(1e-6 * cfg.max_power[u]) {
                continue;
            }
            cap[u][n] = avail[u][n].max(least * (1.0 + FIXED_SLACK));
            for (lk, (req, vals, vecs)) in tops.into_iter().enumerate() {
                if req > 0.0 {
                    let top = vals[m - 1];
                    let d = vals.iter().filter(|&&v| v >= top * (1.0 - 1e-8)).count();
                    basis[u][lk][n] = Some(vecs.columns(m - d, d).into_owned());
                }
            }
        }
    }
    let proj = |b: &Option<CMat>, x: CMat| -> CMat {
        match b {
            Some(v) => v.adjoint() * x * v,
            None => x,
        }
    };

    let mut ivars: Vec<Vec<Vec<VarId>>> = Vec::with_capacity(cfg.uav_count);
    for u in 0..cfg.uav_count {
        let mut per_target = Vec::new();
        for (lk, &k) in cfg.targets_of(u).iter().enumerate() {
            let mut slots = Vec::with_capacity(nslots);
            for n in 0..nslots {
                let b = &basis[u][lk][n];
                let id = p.add_var(b.as_ref().map_or(m, |v| v.ncols()));
                let req = requirement(chans, cfg, u, k, n);
                if req > 0.0 {
                    let a = proj(b, ata(chans, u, k, n) * c(1.0 / req, 0.0));
                    p.add_linear(format!("crb(u={u},k={k},n={n})"), LinearExpr::new().with_term(id, a), Sense::Ge, 1.0);
                }
                slots.push(id);
            }
            per_target.push(slots);
        }
        ivars.push(per_target);
    }

    // ι variables and surrogate constraints
    let mut iota_vars: Vec<Vec<Vec<Option<VarId>>>> = Vec::with_capacity(cfg.uav_count);
    let tau_ln = tau / LN_2;
    for u in 0..cfg.uav_count {
        let mut per_user = Vec::new();
        for (lv, &v) in cfg.users_of(u).iter().enumerate() {
            let mut slots = Vec::with_capacity(nslots);
            for n in 0..nslots {
                let (signal, _, _) = link_terms(beams, chans, cfg, u, lv, n);
                let s = signal / s2;
                if s <= SILENT || state.iota[u][lv][n] <= 0.0 {
                    slots.push(None);
                    continue;
                }
                let iv = p.add_scalar();
                p.maximize(ObjectiveTerm::Log { weight: tau_ln, expr: LinearExpr::new().with_scalar(iv, 1.0).plus(1.0) });
                // Θ(I) = 1 + comm interference + Σ sensing leakage
                let mut theta = LinearExpr::constant(1.0);
                for w in 0..cfg.uav_count {
                    let hh = dyad(&chans.comm[w][v][n]) * c(1.0 / s2, 0.0);
                    for (j, g) in beams.comm_cov[w].iter().enumerate() {
                        if !(w == u && j == lv) {
                            theta.constant += trace_re(&hh, &g[n]);
                        }
                    }
                    for (lk, per_target) in ivars[w].iter().enumerate() {
                        theta.add_term(per_target[n], proj(&basis[w][lk][n], hh.clone()));
                    }
                }
                let omega = state.omega[u][lv][n];
                // divided through by S so weak links are not lost below the residual scale
                p.add_quadratic(
                    format!("sinr(u={u},v={v},n={n})"),
                    vec![(1.0 / (2.0 * omega * s), theta), (omega / (2.0 * s), LinearExpr::new().with_scalar(iv, 1.0))],
                    LinearExpr::constant(-1.0),
                );
                slots.push(Some(iv));
            }
            per_user.push(slots);
        }
        iota_vars.push(per_user);
    }

    for u in 0..cfg.uav_count {
        let mut energy = LinearExpr::new();
        let mut total_cap = 0.0;
        for n in 0..nslots {
            let mut e = LinearExpr::new();
            for (lk, per_target) in ivars[u].iter().enumerate() {
                let dim = basis[u][lk][n].as_ref().map_or(m, |v| v.ncols());
                e.add_term(per_target[n], CMat::identity(dim, dim));
                energy.add_term(per_target[n], CMat::identity(dim, dim));
            }
            if !e.terms.is_empty() {
                p.add_linear(format!("power(u={u},n={n})"), e, Sense::Le, cap[u][n]);
                total_cap += cap[u][n];
            }
        }
        if !energy.terms.is_empty() && total_cap > allowance[u] {
            p.add_linear(format!("energy(u={u})"), energy, Sense::Le, allowance[u]);
        }
    }

    if let Some(dir) = &settings.dump_dir {
        std::fs::create_dir_all(dir)?;
        let name = format!("alg2{}_iter{:03}.txt", settings.dump_tag, state.iteration);
        std::fs::write(dir.join(name), p.to_text())?;
    }

    let mut cov: Vec<Vec<Vec<CMat>>> = beams.sense_cov.clone();
    let mut iota: Vec<Vec<Vec<f64>>> = (0..cfg.uav_count).map(|u| vec![vec![0.0; nslots]; cfg.users_of(u).len()]).collect();
    if p.dims.is_empty() {
        return Ok((cov, iota, 0.0));
    }
    let mut start = vec![CMat::zeros(1, 1); p.dims.len()];
    for u in 0..cfg.uav_count {
        for (lk, per_target) in ivars[u].iter().enumerate() {
            for (n, idv) in per_target.iter().enumerate() {
                let b = &basis[u][lk][n];
                let grow = if b.is_some() { 1.0 + 0.5 * FIXED_SLACK } else { 1.0 };
                start[idv.0] = proj(b, beams.sense_cov[u][lk][n].clone()) * c(grow, 0.0);
            }
        }
        for (lv, per_user) in iota_vars[u].iter().enumerate() {
            for (n, idv) in per_user.iter().enumerate() {
                if let Some(idv) = idv {
                    start[idv.0] = CMat::from_element(1, 1, c(0.99 * state.iota[u][lv][n], 0.0));
                }
            }
        }
    }
    let sol = conic::solve_from(&p, &settings.solver, Some(&start))?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::Infeasible(sol.message)),
        SolveStatus::NumericalFailure => return Err(Error::Numerical(format!("sensing subproblem: {}", sol.message))),
    }
    for u in 0..cfg.uav_count {
        for (lk, per_target) in ivars[u].iter().enumerate() {
            for (n, idv) in per_target.iter().enumerate() {
                let x = crate::linalg::hermitian_part(&sol.vars[idv.0]);
                cov[u][lk][n] = match &basis[u][lk][n] {
                    Some(v) => v * x * v.adjoint(),
                    None => x,
                };
            }
        }
        for (lv, per_user) in iota_vars[u].iter().enumerate() {
            for (n, idv) in per_user.iter().enumerate() {
                if let Some(idv) = idv {
                    iota[u][lv][n] = sol.vars[idv.0][(0, 0)].re.max(0.0);
                }
            }
        }
    }
    Ok((cov, iota, sol.max_residual))
}

/// Least-power CRB-feasible sensing covariances; errors when the power budget cannot carry
/// them next to the communication beams.
pub fn initial_sensing(beams: &BeamformerSet, chans: &ChannelRealization, traj: &TrajectorySet, cfg: &ScenarioConfig) -> Result<Vec<Vec<Vec<CMat>>>> {
    let m = cfg.antennas();
    let avail = available_power(beams, cfg);
    let allowance = energy_allowance(beams, traj, cfg);
    let mut out = Vec::with_capacity(cfg.uav_count);
    for u in 0..cfg.uav_count {
        let mut per_target = Vec::new();
        for &k in cfg.targets_of(u) {
            let mut slots = Vec::new();
            for n in 0..cfg.slot_count() {
                let req = requirement(chans, cfg, u, k, n);
                if !req.is_finite() {
                    return Err(Error::Infeasible(format!("crb(u={u},k={k},n={n}): target has no echo gain")));
                }
                slots.push(if req > 0.0 { minimal_sensing_covariance(&ata(chans, u, k, n), req) } else { CMat::zeros(m, m) });
            }
            per_target.push(slots);
        }
        let mut total = 0.0;
        for n in 0..cfg.slot_count() {
            let need: f64 = per_target.iter().map(|s: &Vec<CMat>| s[n].trace().re).sum();
            total += need;
            if need > avail[u][n] + power_floor(cfg, u) {
                let lk = (0..per_target.len())
                    .max_by(|&a, &b| per_target[a][n].trace().re.total_cmp(&per_target[b][n].trace().re))
                    .unwrap_or(0);
                let k = cfg.targets_of(u)[lk];
                return Err(Error::Infeasible(format!(
                    "crb(u={u},k={k},n={n}): sensing needs {need:.6e} W but only {:.6e} W is available",
                    avail[u][n]
                )));
            }
        }
        if total > allowance[u] + power_floor(cfg, u) {
            return Err(Error::Infeasible(format!("energy(u={u}): minimum sensing energy exceeds the remaining budget")));
        }
        out.push(per_target);
    }
    Ok(out)
}

fn with_sense_cov(beams: &BeamformerSet, cov: &[Vec<Vec<CMat>>]) -> BeamformerSet {
    let mut b = beams.clone();
    b.sense_cov = cov.to_vec();
    b
}

fn sense_feasible(beams: &BeamformerSet, chans: &ChannelRealization, traj: &TrajectorySet, cfg: &ScenarioConfig) -> bool {
    let has_power = beams.sense_cov.iter().flatten().flatten().any(|i| i.trace().re > 0.0);
    let Ok(res) = crate::metrics::budget_residuals(beams, chans, traj, cfg) else { return false };
    (has_power || cfg.target_count() == 0) && res.max() <= 1e-9
}

/// Rank-one sensing beams scaled onto their CRB bounds, then communication beams scaled down
/// where the power or energy limit would otherwise be exceeded.
pub fn extract_sensing(
    beams: &BeamformerSet,
    cov: &[Vec<Vec<CMat>>],
    chans: &ChannelRealization,
    traj: &TrajectorySet,
    cfg: &ScenarioConfig,
) -> Result<(BeamformerSet, f64)> {
    let mut out = beams.clone();
    let mut quality: f64 = 1.0;
    for u in 0..cfg.uav_count {
        for (lk, &k) in cfg.targets_of(u).iter().enumerate() {
            for n in 0..cfg.slot_count() {
                let x = &cov[u][lk][n];
                let (mut vec, q) = if x.trace().re > 0.0 { rank_one_extract(x)? } else { (CVec::zeros(x.nrows()), 1.0) };
                quality = quality.min(q);
                let req = requirement(chans, cfg, u, k, n);
                // sensing power only adds interference, so every beam is put exactly on its bound
                if req > 0.0 {
                    let a = ata(chans, u, k, n);
                    let have = trace_re(&a, &dyad(&vec));
                    if have <= 0.0 {
                        let fallback = minimal_sensing_covariance(&a, req * (1.0 + 1e-9));
                        vec = rank_one_extract(&fallback)?.0;
                    } else {
                        vec *= c((req * (1.0 + 1e-9) / have).sqrt(), 0.0);
                    }
                } else {
                    vec = CVec::zeros(vec.len());
                }
                out.set_sense(u, lk, n, vec);
            }
        }
    }
    let comm_scale = |out: &mut BeamformerSet, u: usize, n: usize, f: f64| {
        for lv in 0..out.comm[u].len() {
            let g = out.comm[u][lv][n].clone() * c(f, 0.0);
            out.set_comm(u, lv, n, g);
        }
    };
    for u in 0..cfg.uav_count {
        for n in 0..cfg.slot_count() {
            let room = cfg.max_power[u] - out.sense_power(u, n);
            let p = out.comm_power(u, n);
            if p > room.max(0.0) && p > 0.0 {
                comm_scale(&mut out, u, n, (room.max(0.0) / p).sqrt());
            }
        }
        let tau = cfg.slot_length();
        let flight: f64 = crate::metrics::flight_energy_table(traj, cfg)[u].iter().sum();
        let sense: f64 = (0..cfg.slot_count()).map(|n| out.sense_power(u, n)).sum();
        let comm: f64 = (0..cfg.slot_count()).map(|n| out.comm_power(u, n)).sum();
        let comm_room = (cfg.energy_budget[u] - flight) / tau - sense;
        if comm > comm_room.max(0.0) && comm > 0.0 {
            let f = (comm_room.max(0.0) / comm).sqrt();
            for n in 0..cfg.slot_count() {
                comm_scale(&mut out, u, n, f);
            }
        }
    }
    Ok((out, quality))
}

/// Runs the SCA iteration with the communication beams of `beams` fixed.
pub fn run_alg2(
    beams: &BeamformerSet,
    chans: &ChannelRealization,
    traj: &TrajectorySet,
    cfg: &ScenarioConfig,
    settings: &Alg2Settings,
) -> Result<(BeamformerSet, ScaState)> {
    let mut state = ScaState::new(cfg);
    let start = if sense_feasible(beams, chans, traj, cfg) {
        beams.sense_cov.clone()
    } else {
        initial_sensing(beams, chans, traj, cfg).map_err(|e| match e {
            Error::Infeasible(msg) => Error::Infeasible(msg),
            other => Error::Initialization(other.to_string()),
        })?
    };
    let mut current = with_sense_cov(beams, &start);
    let mut cov = start;
    for (u, per_user) in link_powers(&current, chans, cfg).iter().enumerate() {
        for (lv, slots) in per_user.iter().enumerate() {
            for (n, &(s, theta)) in slots.iter().enumerate() {
                // links below the floor are left out: with S fixed they carry under 1e-8 bits/s/Hz
                state.iota[u][lv][n] = if s > SILENT && s / theta >= IOTA_FLOOR { s / theta } else { 0.0 };
            }
        }
    }
    let mut previous = state.objective(cfg);
    state.objective_trace.push(previous);
    for it in 1..=settings.max_iters {
        state.iteration = it;
        update_omega(&mut state, &current, chans, cfg)?;
        let (next, iota, residual) = match solve_i_iota(&state, &current, chans, traj, cfg, settings) {
            Ok(r) => r,
            Err(Error::Numerical(msg)) if it > 1 => {
                log::warn!("stopping successive convex approximation early: {msg}");
                break;
            }
            Err(e) => return Err(e),
        };
        let candidate_obj = {
            let tau = cfg.slot_length();
            iota.iter().flatten().flatten().map(|i| tau * (1.0 + i).log2()).sum::<f64>()
        };
        if candidate_obj + 1e-9 * (1.0 + previous.abs()) < previous {
            state.converged = true;
            break;
        }
        cov = next;
        current = with_sense_cov(beams, &cov);
        // clamp rounding so the next expansion point stays feasible
        let powers = link_powers(&current, chans, cfg);
        for u in 0..cfg.uav_count {
            for lv in 0..cfg.users_of(u).len() {
                for n in 0..cfg.slot_count() {
                    let (s, theta) = powers[u][lv][n];
                    state.iota[u][lv][n] = iota[u][lv][n].min(s / theta);
                }
            }
        }
        let obj = state.objective(cfg);
        state.objective_trace.push(obj);
        let crb = compute_crb(&current, chans, cfg)?;
        state.log.push(Alg2LogRow { iter: it, objective: obj, min_crb_margin: crb.min_margin(), max_residual: residual });
        let change = (obj - previous).abs() / previous.abs().max(1e-12);
        previous = obj;
        if change < settings.tolerance {
            state.converged = true;
            break;
        }
    }
    state.relaxed_objective = compute_rates(&current, chans, cfg)?.sum_rate;
    let (out, quality) = extract_sensing(beams, &cov, chans, traj, cfg)?;
    state.extraction_quality = quality;
    state.extracted_objective = compute_rates(&out, chans, cfg)?.sum_rate;
    Ok((out, state))
}

pub fn alg2_log_csv(state: &ScaState) -> String {
    let mut s = String::from("iter,objective,min_crb_margin,max_residual\n");
    for r in &state.log {
        s.push_str(&format!("{},{:.12e},{:.6e},{:.6e}\n", r.iter, r.objective, r.min_crb_margin, r.max_residual));
    }
    s
}
