//! Communication beamforming by fractional programming.
//!
//! Each outer iteration performs three exact block maximizations of
//!
//! `f(χ, ψ, G) = Σ (τ/ln 2)[ln(1+χ) − χ] + Σ [2ψ √O − ψ² P]`,
//! `O = (τ/ln 2)(1+χ) S`, `P = S + Θ`,
//!
//! where `S = Tr(H G_v)` is the useful power of a link and `Θ` its interference plus noise:
//! `χ ← S/Θ`, `ψ ← √O/P`, then a convex solve over all covariances `G`. The sensing
//! covariances stay fixed.

use crate::channel::ChannelRealization;
use crate::conic::{self, ConicProblem, LinearExpr, ObjectiveTerm, Sense, SolveStatus, SolverSettings, VarId};
use crate::error::{Error, Result};
use crate::linalg::{c, dyad, CMat, CVec};
use crate::metrics::{compute_rates, link_terms, rank_one_extract, BeamformerSet};
use crate::scenario::{ScenarioConfig, TrajectorySet};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq)]
pub struct Alg1Settings {
    pub max_iters: usize,
    /// Relative objective change that ends the iteration.
    pub tolerance: f64,
    pub solver: SolverSettings,
    /// Writes each conic subproblem as text into this directory.
    pub dump_dir: Option<PathBuf>,
    pub dump_tag: String,
}

impl Default for Alg1Settings {
    fn default() -> Self {
        Alg1Settings { max_iters: 100, tolerance: 1e-4, solver: SolverSettings::default(), dump_dir: None, dump_tag: String::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alg1LogRow {
    pub iter: usize,
    pub objective_relaxed: f64,
    pub objective_extracted: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpState {
    /// `[u][local user][n]`
    pub chi: Vec<Vec<Vec<f64>>>,
    pub psi: Vec<Vec<Vec<f64>>>,
    pub iteration: usize,
    /// Objective after every block update: the dual-transformed value after each χ update, the
/// quadratic-transformed value after each ψ and G update.
    pub objective_trace: Vec<f64>,
    pub log: Vec<Alg1LogRow>,
    /// Sum rate of the relaxed covariances at the last iterate.
    pub relaxed_objective: f64,
    /// Sum rate after rank-one extraction and rescaling.
    pub extracted_objective: f64,
    /// Smallest `λ_max / Tr` over the extracted covariances that carry power.
    pub extraction_quality: f64,
    pub converged: bool,
}

impl FpState {
    fn new(cfg: &ScenarioConfig) -> Self {
        let shape = |u: usize| vec![vec![0.0; cfg.slot_count()]; cfg.users_of(u).len()];
        FpState {
            chi: (0..cfg.uav_count).map(shape).collect(),
            psi: (0..cfg.uav_count).map(shape).collect(),
            iteration: 0,
            objective_trace: Vec::new(),
            log: Vec::new(),
            relaxed_objective: 0.0,
            extracted_objective: 0.0,
            extraction_quality: 1.0,
            converged: false,
        }
    }
}

/// `χ* = S / Θ`
pub fn chi_star(signal: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Degenerate(format!("interference-plus-noise power {theta:e} is not positive")));
    }
    Ok(signal.max(0.0) / theta)
}

/// `log2(1+χ) − χ + (1+χ) S/(S+Θ)`: equals `log2(1 + S/Θ)` at `χ = S/Θ`.
pub fn dual_term(chi: f64, signal: f64, theta: f64) -> f64 {
    ((1.0 + chi).ln() - chi + (1.0 + chi) * signal / (signal + theta)) / LN_2
}

/// `ψ* = √O / P`
pub fn psi_star(o: f64, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Degenerate(format!("quadratic-transform denominator {p:e} is not positive")));
    }
    Ok(o.max(0.0).sqrt() / p)
}

/// `Ψ = 2ψ√O − ψ²P`
pub fn quadratic_transform(psi: f64, o: f64, p: f64) -> f64 {
    2.0 * psi * o.max(0.0).sqrt() - psi * psi * p
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

/// Value of the transformed objective at `(χ, ψ, G)`.
pub fn fp_objective(state: &FpState, beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig) -> f64 {
    let a = cfg.slot_length() / LN_2;
    let mut f = 0.0;
    for (u, per_user) in link_powers(beams, chans, cfg).iter().enumerate() {
        for (lv, slots) in per_user.iter().enumerate() {
            for (n, &(s, theta)) in slots.iter().enumerate() {
                let chi = state.chi[u][lv][n];
                let psi = state.psi[u][lv][n];
                f += a * ((1.0 + chi).ln() - chi) + quadratic_transform(psi, a * (1.0 + chi) * s, s + theta);
            }
        }
    }
    f
}

/// Value of the dual-transformed objective `Σ (τ/ln 2)[ln(1+χ) − χ + (1+χ) S/(S+Θ)]` at `(χ, G)`.
pub fn dual_objective(state: &FpState, beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig) -> f64 {
    let tau = cfg.slot_length();
    let mut f = 0.0;
    for (u, per_user) in link_powers(beams, chans, cfg).iter().enumerate() {
        for (lv, slots) in per_user.iter().enumerate() {
            for (n, &(s, theta)) in slots.iter().enumerate() {
                f += tau * dual_term(state.chi[u][lv][n], s, theta);
            }
        }
    }
    f
}

/// Sets every `χ` to the link SINR.
pub fn update_chi(state: &mut FpState, beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig) -> Result<()> {
    for (u, per_user) in link_powers(beams, chans, cfg).iter().enumerate() {
        for (lv, slots) in per_user.iter().enumerate() {
            for (n, &(s, theta)) in slots.iter().enumerate() {
                state.chi[u][lv][n] = chi_star(s, theta)?;
            }
        }
    }
    Ok(())
}

/// Sets every `ψ` to `√O / P` for the current `χ` and covariances.
pub fn update_psi(state: &mut FpState, beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig) -> Result<()> {
    let a = cfg.slot_length() / LN_2;
    for (u, per_user) in link_powers(beams, chans, cfg).iter().enumerate() {
        for (lv, slots) in per_user.iter().enumerate() {
            for (n, &(s, theta)) in slots.iter().enumerate() {
                state.psi[u][lv][n] = psi_star(a * (1.0 + state.chi[u][lv][n]) * s, s + theta)?;
            }
        }
    }
    Ok(())
}

/// Power still available to communication in each `[u][n]` once sensing is served.
fn available_power(beams: &BeamformerSet, cfg: &ScenarioConfig) -> Vec<Vec<f64>> {
    (0..cfg.uav_count)
        .map(|u| (0..cfg.slot_count()).map(|n| cfg.max_power[u] - beams.sense_power(u, n)).collect())
        .collect()
}

/// Communication energy allowance per UAV, as a sum of slot powers (W·slots).
fn energy_allowance(beams: &BeamformerSet, traj: &TrajectorySet, cfg: &ScenarioConfig) -> Vec<f64> {
    let tau = cfg.slot_length();
    let flight = crate::metrics::flight_energy_table(traj, cfg);
    (0..cfg.uav_count)
        .map(|u| {
            let sense: f64 = (0..cfg.slot_count()).map(|n| beams.sense_power(u, n)).sum();
            (cfg.energy_budget[u] - flight[u].iter().sum::<f64>()) / tau - sense
        })
        .collect()
}

fn power_floor(cfg: &ScenarioConfig, u: usize) -> f64 {
    1e-12 * cfg.max_power[u].abs().max(1e-300)
}

/// Builds and solves the covariance subproblem for fixed `χ, ψ`. Covariances of slots with no
/// power left are fixed to zero.
pub fn solve_g(
    state: &FpState,
    beams: &BeamformerSet,
    chans: &ChannelRealization,
    traj: &TrajectorySet,
    cfg: &ScenarioConfig,
    settings: &Alg1Settings,
) -> Result<(Vec<Vec<Vec<CMat>>>, f64)> {
    let m = cfg.antennas();
    let nslots = cfg.slot_count();
    let s2 = cfg.noise_power;
    let a = cfg.slot_length() / LN_2;
    let avail = available_power(beams, cfg);
    let allowance = energy_allowance(beams, traj, cfg);
    for u in 0..cfg.uav_count {
        if allowance[u] < -power_floor(cfg, u) {
            return Err(Error::Infeasible(format!("energy(u={u}): flight and sensing already exceed the energy budget")));
        }
    }

    let mut p = ConicProblem::new();
    let mut vars: Vec<Vec<Vec<Option<VarId>>>> = Vec::with_capacity(cfg.uav_count);
    for u in 0..cfg.uav_count {
        let open = allowance[u] > power_floor(cfg, u);
        vars.push(
            (0..cfg.users_of(u).len())
                .map(|_| (0..nslots).map(|n| (open && avail[u][n] > power_floor(cfg, u)).then(|| p.add_var(m))).collect())
                .collect(),
        );
    }

    // −ψ² P summed over links, collected per variable; the sensing part of P is constant.
    let mut linear: Vec<Option<CMat>> = vec![None; p.dims.len()];
    let mut constant = 0.0;
    for u in 0..cfg.uav_count {
        for (lv, &v) in cfg.users_of(u).iter().enumerate() {
            for n in 0..nslots {
                let psi = state.psi[u][lv][n];
                let chi = state.chi[u][lv][n];
                constant += a * ((1.0 + chi).ln() - chi) - psi * psi;
                for w in 0..cfg.uav_count {
                    let hh = dyad(&chans.comm[w][v][n]) * c(1.0 / s2, 0.0);
                    for i in &beams.sense_cov[w] {
                        constant -= psi * psi * crate::linalg::trace_re(&hh, &i[n]);
                    }
                    for j in 0..cfg.users_of(w).len() {
                        if let Some(id) = vars[w][j][n] {
                            let term = &hh * c(-psi * psi, 0.0);
                            match &mut linear[id.0] {
                                Some(acc) => *acc += term,
                                slot @ None => *slot = Some(term),
                            }
                        }
                    }
                    if w == u {
                        if let Some(id) = vars[u][lv][n] {
                            let weight = 2.0 * psi * (a * (1.0 + chi)).sqrt();
                            if weight > 0.0 {
                                p.maximize(ObjectiveTerm::Sqrt { weight, expr: LinearExpr::new().with_term(id, hh.clone()) });
                            }
                        }
                    }
                }
            }
        }
    }
    let mut lin = LinearExpr::constant(constant);
    for (k, cm) in linear.into_iter().enumerate() {
        if let Some(cm) = cm {
            lin.add_term(VarId(k), cm);
        }
    }
    p.maximize(ObjectiveTerm::Linear { weight: 1.0, expr: lin });

    let id = CMat::identity(m, m);
    for u in 0..cfg.uav_count {
        let mut total_cap = 0.0;
        let mut energy = LinearExpr::new();
        for n in 0..nslots {
            let mut e = LinearExpr::new();
            for per_user in &vars[u] {
                if let Some(idv) = per_user[n] {
                    e.add_term(idv, id.clone());
                    energy.add_term(idv, id.clone());
                }
            }
            if !e.terms.is_empty() {
                p.add_linear(format!("power(u={u},n={n})"), e, Sense::Le, avail[u][n]);
                total_cap += avail[u][n];
            }
        }
        if !energy.terms.is_empty() && total_cap > allowance[u] {
            p.add_linear(format!("energy(u={u})"), energy, Sense::Le, allowance[u]);
        }
    }

    if let Some(dir) = &settings.dump_dir {
        std::fs::create_dir_all(dir)?;
        let name = format!("alg1{}_iter{:03}.txt", settings.dump_tag, state.iteration);
        std::fs::write(dir.join(name), p.to_text())?;
    }

    let mut out: Vec<Vec<Vec<CMat>>> =
        (0..cfg.uav_count).map(|u| vec![vec![CMat::zeros(m, m); nslots]; cfg.users_of(u).len()]).collect();
    if p.dims.is_empty() {
        return Ok((out, 0.0));
    }
    let start: Vec<CMat> = {
        let mut s = vec![CMat::zeros(m, m); p.dims.len()];
        for u in 0..cfg.uav_count {
            for (lv, per_user) in vars[u].iter().enumerate() {
                for (n, idv) in per_user.iter().enumerate() {
                    if let Some(idv) = idv {
                        // pull the warm start strictly inside the power limit
                        let share = avail[u][n] / (vars[u].len() as f64 * m as f64);
                        s[idv.0] = &beams.comm_cov[u][lv][n] * c(0.9, 0.0) + &id * c(0.05 * share, 0.0);
                    }
                }
            }
        }
        s
    };
    let sol = conic::solve_from(&p, &settings.solver, Some(&start))?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::Infeasible(sol.message)),
        SolveStatus::NumericalFailure => return Err(Error::Numerical(format!("covariance subproblem: {}", sol.message))),
    }
    for u in 0..cfg.uav_count {
        for (lv, per_user) in vars[u].iter().enumerate() {
            for (n, idv) in per_user.iter().enumerate() {
                if let Some(idv) = idv {
                    out[u][lv][n] = crate::linalg::hermitian_part(&sol.vars[idv.0]);
                }
            }
        }
    }
    Ok((out, sol.max_residual))
}

/// MRT directions at `P_max / (2(V+K))` per link, scaled into the power and energy budgets.
pub fn initial_covariances(beams: &BeamformerSet, chans: &ChannelRealization, traj: &TrajectorySet, cfg: &ScenarioConfig) -> Vec<Vec<Vec<CMat>>> {
    let m = cfg.antennas();
    let nslots = cfg.slot_count();
    let avail = available_power(beams, cfg);
    let allowance = energy_allowance(beams, traj, cfg);
    let mut out = Vec::with_capacity(cfg.uav_count);
    for u in 0..cfg.uav_count {
        let nodes = (cfg.users_of(u).len() + cfg.targets_of(u).len()).max(1) as f64;
        let share = cfg.max_power[u] / (2.0 * nodes);
        let mut per_user = Vec::new();
        for &v in cfg.users_of(u) {
            per_user.push(
                (0..nslots)
                    .map(|n| {
                        let h = &chans.comm[u][v][n];
                        let nh = h.norm_squared();
                        if nh > 0.0 {
                            dyad(h) * c(share / nh, 0.0)
                        } else {
                            CMat::identity(m, m) * c(share / m as f64, 0.0)
                        }
                    })
                    .collect::<Vec<_>>(),
            );
        }
        // shrink into the per-slot and total allowances
        let mut used_total = 0.0;
        for n in 0..nslots {
            let used: f64 = per_user.iter().map(|g: &Vec<CMat>| g[n].trace().re).sum();
            let cap = 0.9 * avail[u][n].max(0.0);
            if used > cap {
                let f = if used > 0.0 { cap / used } else { 0.0 };
                for g in per_user.iter_mut() {
                    g[n] *= c(f, 0.0);
                }
            }
            used_total += per_user.iter().map(|g| g[n].trace().re).sum::<f64>();
        }
        let cap = 0.9 * allowance[u].max(0.0);
        if used_total > cap {
            let f = if used_total > 0.0 { cap / used_total } else { 0.0 };
            for g in per_user.iter_mut().flatten() {
                *g *= c(f, 0.0);
            }
        }
        out.push(per_user);
    }
    out
}

fn with_comm_cov(beams: &BeamformerSet, cov: &[Vec<Vec<CMat>>]) -> BeamformerSet {
    let mut b = beams.clone();
    b.comm_cov = cov.to_vec();
    b
}

fn has_comm_power(beams: &BeamformerSet) -> bool {
    beams.comm_cov.iter().flatten().flatten().any(|g| g.trace().re > 0.0)
}

/// Whether the lifted communication covariances respect the power and energy limits.
fn comm_feasible(beams: &BeamformerSet, traj: &TrajectorySet, cfg: &ScenarioConfig) -> bool {
    let avail = available_power(beams, cfg);
    let allowance = energy_allowance(beams, traj, cfg);
    (0..cfg.uav_count).all(|u| {
        let mut total = 0.0;
        let slots_ok = (0..cfg.slot_count()).all(|n| {
            let p = beams.comm_power(u, n);
            total += p;
            p <= avail[u][n] * (1.0 + 1e-9) + 1e-15
        });
        slots_ok && total <= allowance[u] * (1.0 + 1e-9) + 1e-15
    })
}

/// Covariances below this fraction of `P_max` are ignored when reporting extraction quality.
pub const QUALITY_POWER_FLOOR: f64 = 1e-6;

/// Principal-component beams of the covariances, rescaled into the power and energy limits.
/// Returns the beam set and the smallest extraction quality.
pub fn extract_beams(
    beams: &BeamformerSet,
    cov: &[Vec<Vec<CMat>>],
    traj: &TrajectorySet,
    cfg: &ScenarioConfig,
) -> Result<(BeamformerSet, f64)> {
    let mut out = beams.clone();
    let mut quality: f64 = 1.0;
    for (u, per_user) in cov.iter().enumerate() {
        for (lv, slots) in per_user.iter().enumerate() {
            for (n, g) in slots.iter().enumerate() {
                let (vec, q) = if g.trace().re > 0.0 { rank_one_extract(g)? } else { (CVec::zeros(g.nrows()), 1.0) };
                // switched-off links keep only barrier residue; their shape carries no meaning
                if g.trace().re > QUALITY_POWER_FLOOR * cfg.max_power[u] {
                    quality = quality.min(q);
                }
                out.set_comm(u, lv, n, vec);
            }
        }
    }
    let avail = available_power(&out, cfg);
    let allowance = energy_allowance(&out, traj, cfg);
    for u in 0..cfg.uav_count {
        let mut total = 0.0;
        for n in 0..cfg.slot_count() {
            let p = out.comm_power(u, n);
            if p > avail[u][n].max(0.0) {
                let f = (avail[u][n].max(0.0) / p).sqrt();
                for lv in 0..out.comm[u].len() {
                    let g = out.comm[u][lv][n].clone() * c(f, 0.0);
                    out.set_comm(u, lv, n, g);
                }
            }
            total += out.comm_power(u, n);
        }
        if total > allowance[u].max(0.0) {
            let f = (allowance[u].max(0.0) / total).sqrt();
            for lv in 0..out.comm[u].len() {
                for n in 0..cfg.slot_count() {
                    let g = out.comm[u][lv][n].clone() * c(f, 0.0);
                    out.set_comm(u, lv, n, g);
                }
            }
        }
    }
    Ok((out, quality))
}

/// Runs the fractional-programming iteration from `beams` (its communication covariances are
/// used as the starting point when they are non-zero and feasible) and returns rank-one beams.
pub fn run_alg1(
    beams: &BeamformerSet,
    chans: &ChannelRealization,
    traj: &TrajectorySet,
    cfg: &ScenarioConfig,
    settings: &Alg1Settings,
) -> Result<(BeamformerSet, FpState)> {
    let mut state = FpState::new(cfg);
    let allowance = energy_allowance(beams, traj, cfg);
    if let Some(u) = (0..cfg.uav_count).find(|&u| allowance[u] < -power_floor(cfg, u)) {
        return Err(Error::Initialization(format!("energy(u={u}): no feasible communication covariances")));
    }
    if let Some((u, n)) = (0..cfg.uav_count)
        .flat_map(|u| (0..cfg.slot_count()).map(move |n| (u, n)))
        .find(|&(u, n)| cfg.max_power[u] - beams.sense_power(u, n) < -power_floor(cfg, u))
    {
        return Err(Error::Initialization(format!("power(u={u},n={n}): sensing alone exceeds the power budget")));
    }
    let mut cov = if has_comm_power(beams) && comm_feasible(beams, traj, cfg) {
        beams.comm_cov.clone()
    } else {
        initial_covariances(beams, chans, traj, cfg)
    };
    let mut current = with_comm_cov(beams, &cov);
    let mut previous = compute_rates(&current, chans, cfg)?.sum_rate;
    for it in 1..=settings.max_iters {
        state.iteration = it;
        update_chi(&mut state, &current, chans, cfg)?;
        state.objective_trace.push(dual_objective(&state, &current, chans, cfg));
        update_psi(&mut state, &current, chans, cfg)?;
        state.objective_trace.push(fp_objective(&state, &current, chans, cfg));
        let (next, residual) = match solve_g(&state, &current, chans, traj, cfg, settings) {
            Ok(r) => r,
            Err(Error::Numerical(msg)) if it > 1 => {
                log::warn!("stopping fractional programming early: {msg}");
                break;
            }
            Err(e) => return Err(e),
        };
        let candidate = with_comm_cov(beams, &next);
        let f_new = fp_objective(&state, &candidate, chans, cfg);
        let f_old = *state.objective_trace.last().unwrap_or(&f64::NEG_INFINITY);
        if f_new + 1e-9 * (1.0 + f_old.abs()) < f_old {
            // inexact solve; keep the previous covariances
            state.objective_trace.push(f_old);
            state.converged = true;
            break;
        }
        cov = next;
        current = candidate;
        state.objective_trace.push(f_new);
        let relaxed = compute_rates(&current, chans, cfg)?.sum_rate;
        let (extracted, _) = extract_beams(beams, &cov, traj, cfg)?;
        let extracted_rate = compute_rates(&extracted, chans, cfg)?.sum_rate;
        state.log.push(Alg1LogRow { iter: it, objective_relaxed: relaxed, objective_extracted: extracted_rate, max_residual: residual });
        let change = (relaxed - previous).abs() / previous.abs().max(1e-12);
        previous = relaxed;
        if change < settings.tolerance {
            state.converged = true;
            break;
        }
    }
    state.relaxed_objective = compute_rates(&current, chans, cfg)?.sum_rate;
    let (out, quality) = extract_beams(beams, &cov, traj, cfg)?;
    state.extraction_quality = quality;
    // refresh the auxiliaries at the extracted point
    update_chi(&mut state, &out, chans, cfg)?;
    update_psi(&mut state, &out, chans, cfg)?;
    state.extracted_objective = compute_rates(&out, chans, cfg)?.sum_rate;
    Ok((out, state))
}

/// Iteration log as CSV text.
pub fn alg1_log_csv(state: &FpState) -> String {
    let mut s = String::from("iter,objective_relaxed,objective_extracted,max_residual\n");
    for r in &state.log {
        s.push_str(&format!("{},{:.12e},{:.12e},{:.6e}\n", r.iter, r.objective_relaxed, r.objective_extracted, r.max_residual));
    }
    s
}
