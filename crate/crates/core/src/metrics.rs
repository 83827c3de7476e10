//! Rates, CRBs and energy for a given beamformer set, trajectory and channel realization.
//!
//! Interference is evaluated in the lifted (trace) form: each beam contributes `hᴴ X h`
//! incoherently, which is the expectation of the coherent sum under independent unit-power
//! symbols.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::linalg::{dyad, fix_phase, hermitian_defect, hermitian_eigen, norm_sqr, trace_re, CMat, CVec};
use crate::scenario::{FlightPowerParams, ScenarioConfig, TrajectorySet, UavState};
use serde::{Deserialize, Serialize};

/// Communication beams `g` and sensing beams `i` with their lifted covariances.
///
/// Indexing is `[uav][local node][slot]`, where the local node index runs over the UAV's
/// partition in order.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub comm: Vec<Vec<Vec<CVec>>>,
    pub sense: Vec<Vec<Vec<CVec>>>,
    pub comm_cov: Vec<Vec<Vec<CMat>>>,
    pub sense_cov: Vec<Vec<Vec<CMat>>>,
}

fn lift(t: &[Vec<Vec<CVec>>]) -> Vec<Vec<Vec<CMat>>> {
    t.iter().map(|a| a.iter().map(|b| b.iter().map(dyad).collect()).collect()).collect()
}

impl BeamformerSet {
    pub fn zeros(cfg: &ScenarioConfig) -> Self {
        let m = cfg.antennas();
        let n = cfg.slot_count();
        let comm: Vec<Vec<Vec<CVec>>> =
            (0..cfg.uav_count).map(|u| vec![vec![CVec::zeros(m); n]; cfg.users_of(u).len()]).collect();
        let sense: Vec<Vec<Vec<CVec>>> =
            (0..cfg.uav_count).map(|u| vec![vec![CVec::zeros(m); n]; cfg.targets_of(u).len()]).collect();
        Self::from_vectors(comm, sense)
    }

    /// Rank-one consistent set built from beam vectors.
    pub fn from_vectors(comm: Vec<Vec<Vec<CVec>>>, sense: Vec<Vec<Vec<CVec>>>) -> Self {
        let comm_cov = lift(&comm);
        let sense_cov = lift(&sense);
        BeamformerSet { comm, sense, comm_cov, sense_cov }
    }

    pub fn set_comm(&mut self, u: usize, v: usize, n: usize, g: CVec) {
        self.comm_cov[u][v][n] = dyad(&g);
        self.comm[u][v][n] = g;
    }

    pub fn set_sense(&mut self, u: usize, k: usize, n: usize, i: CVec) {
        self.sense_cov[u][k][n] = dyad(&i);
        self.sense[u][k][n] = i;
    }

    /// Transmit power `Σ Tr(G) + Σ Tr(I)` of UAV `u` in slot `n` (lifted form).
    pub fn slot_power(&self, u: usize, n: usize) -> f64 {
        self.comm_cov[u].iter().map(|g| g[n].trace().re).sum::<f64>()
            + self.sense_cov[u].iter().map(|i| i[n].trace().re).sum::<f64>()
    }

    pub fn comm_power(&self, u: usize, n: usize) -> f64 {
        self.comm_cov[u].iter().map(|g| g[n].trace().re).sum()
    }

    pub fn sense_power(&self, u: usize, n: usize) -> f64 {
        self.sense_cov[u].iter().map(|i| i[n].trace().re).sum()
    }

    /// Largest distance between a lifted matrix and the dyad of its vector.
    pub fn rank_one_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (vecs, covs) in [(&self.comm, &self.comm_cov), (&self.sense, &self.sense_cov)] {
            for (a, b) in vecs.iter().flatten().flatten().zip(covs.iter().flatten().flatten()) {
                worst = worst.max((dyad(a) - b).norm());
            }
        }
        worst
    }

    fn check_shapes(&self, cfg: &ScenarioConfig) -> Result<()> {
        let n = cfg.slot_count();
        let m = cfg.antennas();
        let ok = self.comm_cov.len() == cfg.uav_count
            && self.sense_cov.len() == cfg.uav_count
            && (0..cfg.uav_count).all(|u| {
                self.comm_cov[u].len() == cfg.users_of(u).len()
                    && self.sense_cov[u].len() == cfg.targets_of(u).len()
                    && self.comm_cov[u].iter().chain(&self.sense_cov[u]).all(|s| {
                        s.len() == n && s.iter().all(|x| x.nrows() == m && x.ncols() == m)
                    })
            });
        if ok {
            Ok(())
        } else {
            Err(Error::Structural("beamformer set shape does not match the scenario".into()))
        }
    }

    fn check_hermitian(&self) -> Result<()> {
        for x in self.comm_cov.iter().chain(&self.sense_cov).flatten().flatten() {
            let scale = x.norm().max(1e-300);
            if hermitian_defect(x) > 1e-9 * scale {
                return Err(Error::Structural("lifted beamformer matrix is not Hermitian".into()));
            }
        }
        Ok(())
    }
}

/// SINR breakdown of one user in one slot. Powers in watts, rate in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRate {
    pub signal: f64,
    pub intra: f64,
    pub inter: f64,
    pub sinr: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `links[u][local v][n]`
    pub links: Vec<Vec<Vec<LinkRate>>>,
    pub sum_rate: f64,
}

impl RateReport {
    pub fn slot_sum(&self, n: usize) -> f64 {
        self.links.iter().flatten().map(|l| l[n].rate).sum()
    }
}

/// `hᴴ X h`
pub fn quad_form(h: &CVec, x: &CMat) -> f64 {
    (h.adjoint() * x * h)[(0, 0)].re
}

/// Signal and interference terms for user `v` (global) of UAV `u` at slot `n`.
pub fn link_terms(beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig, u: usize, lv: usize, n: usize) -> (f64, f64, f64) {
    let v = cfg.users_of(u)[lv];
    let mut intra = 0.0;
    let mut inter = 0.0;
    let mut signal = 0.0;
    for w in 0..cfg.uav_count {
        let h = &chans.comm[w][v][n];
        let mut acc = 0.0;
        for (j, g) in beams.comm_cov[w].iter().enumerate() {
            let p = quad_form(h, &g[n]);
            if w == u && j == lv {
                signal = p;
            } else {
                acc += p;
            }
        }
        for i in &beams.sense_cov[w] {
            acc += quad_form(h, &i[n]);
        }
        if w == u {
            intra += acc;
        } else {
            inter += acc;
        }
    }
    (signal.max(0.0), intra.max(0.0), inter.max(0.0))
}

/// Per-link SINR and rate `τ log2(1 + SINR)` in trace form.
pub fn compute_rates(beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig) -> Result<RateReport> {
    beams.check_shapes(cfg)?;
    beams.check_hermitian()?;
    let tau = cfg.slot_length();
    let mut links = Vec::with_capacity(cfg.uav_count);
    let mut sum = 0.0;
    for u in 0..cfg.uav_count {
        let mut per_user = Vec::new();
        for lv in 0..cfg.users_of(u).len() {
            let mut slots = Vec::with_capacity(cfg.slot_count());
            for n in 0..cfg.slot_count() {
                let (signal, intra, inter) = link_terms(beams, chans, cfg, u, lv, n);
                let sinr = signal / (intra + inter + cfg.noise_power);
                let rate = tau * (1.0 + sinr).log2();
                sum += rate;
                slots.push(LinkRate { signal, intra, inter, sinr, rate });
            }
            per_user.push(slots);
        }
        links.push(per_user);
    }
    Ok(RateReport { links, sum_rate: sum })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbEntry {
    /// rad²; `f64::INFINITY` when the target receives no sensing power.
    pub value: f64,
    /// `Tr(ĀᴴĀ I)`
    pub trace_term: f64,
    pub threshold: f64,
}

impl CrbEntry {
    /// `Γ / CRB - 1`; non-negative when the constraint holds.
    pub fn margin(&self) -> f64 {
        if self.threshold.is_infinite() {
            f64::INFINITY
        } else if self.value.is_infinite() {
            -1.0
        } else {
            self.threshold / self.value - 1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrbReport {
    /// `entries[u][local k][n]`
    pub entries: Vec<Vec<Vec<CrbEntry>>>,
}

impl CrbReport {
    pub fn max_crb(&self) -> f64 {
        self.entries.iter().flatten().flatten().map(|e| e.value).fold(0.0, f64::max)
    }

    pub fn min_margin(&self) -> f64 {
        self.entries.iter().flatten().flatten().map(CrbEntry::margin).fold(f64::INFINITY, f64::min)
    }

    /// Largest relative excess `CRB / Γ - 1` over all targets (zero when all hold).
    pub fn max_violation(&self) -> f64 {
        self.entries
            .iter()
            .flatten()
            .flatten()
            .map(|e| {
                if e.threshold.is_infinite() {
                    0.0
                } else if e.value.is_infinite() {
                    f64::INFINITY
                } else {
                    (e.value / e.threshold - 1.0).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

/// CRB of a single target from the raw quantities.
pub fn crb_value(noise_power: f64, gain: f64, deriv: &CMat, cov: &CMat) -> Result<(f64, f64)> {
    let ata = deriv.adjoint() * deriv;
    let trace = trace_re(&ata, cov);
    let scale = ata.norm() * cov.norm();
    if trace < -1e-9 * scale.max(1e-300) && trace < -1e-300 {
        return Err(Error::Numerical(format!("negative sensing trace term {trace:e}")));
    }
    let trace = trace.max(0.0);
    if trace == 0.0 || gain == 0.0 {
        return Ok((f64::INFINITY, trace));
    }
    Ok((noise_power / (2.0 * gain * gain * trace), trace))
}

/// `CRB = σ² / (2 |β|² Tr(ĀᴴĀ I))` for every sensed target.
pub fn compute_crb(beams: &BeamformerSet, chans: &ChannelRealization, cfg: &ScenarioConfig) -> Result<CrbReport> {
    beams.check_shapes(cfg)?;
    let mut entries = Vec::new();
    for u in 0..cfg.uav_count {
        let mut per_target = Vec::new();
        for (lk, &k) in cfg.targets_of(u).iter().enumerate() {
            let mut slots = Vec::new();
            for n in 0..cfg.slot_count() {
                let (value, trace_term) =
                    crb_value(cfg.noise_power, chans.echo_gain[u][k][n], &chans.echo_deriv[u][k][n], &beams.sense_cov[u][lk][n])?;
                slots.push(CrbEntry { value, trace_term, threshold: cfg.crb_threshold_for(u, k, n) });
            }
            per_target.push(slots);
        }
        entries.push(per_target);
    }
    Ok(CrbReport { entries })
}

/// The four propulsion power terms (W) at a given horizontal and vertical speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightPowerTerms {
    pub induced: f64,
    pub parasite: f64,
    pub profile: f64,
    pub climb: f64,
}

impl FlightPowerTerms {
    pub fn total(&self) -> f64 {
        self.induced + self.parasite + self.profile + self.climb
    }
}

pub fn flight_power_terms(horizontal_speed: f64, vertical_speed: f64, flight: &FlightPowerParams) -> FlightPowerTerms {
    let v = horizontal_speed;
    let v2 = v * v;
    let a0 = flight.hover_speed;
    let inner = (1.0 + v2 * v2 / (4.0 * a0.powi(4))).sqrt() - v2 / (2.0 * a0 * a0);
    FlightPowerTerms {
        induced: flight.c0 * (1.0 + 3.0 * v2 / (flight.tip_speed * flight.tip_speed)),
        parasite: 0.5 * flight.fuselage_drag_ratio * flight.rotor_solidity * flight.air_density * flight.rotor_disc_area * v2 * v,
        profile: flight.c1 * inner.max(0.0).sqrt(),
        climb: flight.c2 * vertical_speed,
    }
}

/// Propulsion energy of one slot.
pub fn compute_flight_energy(state: &UavState, flight: &FlightPowerParams, tau: f64) -> f64 {
    tau * flight_power_terms(state.horizontal_speed, state.vertical_speed, flight).total()
}

/// `τ (Σ ‖g‖² + Σ ‖i‖²)` per `[u][n]`, from the beam vectors.
pub fn compute_cs_energy(beams: &BeamformerSet, tau: f64) -> Vec<Vec<f64>> {
    beams
        .comm
        .iter()
        .zip(&beams.sense)
        .map(|(gs, is)| {
            let slots = gs.first().or(is.first()).map_or(0, Vec::len);
            (0..slots)
                .map(|n| tau * (gs.iter().map(|g| norm_sqr(&g[n])).sum::<f64>() + is.iter().map(|i| norm_sqr(&i[n])).sum::<f64>()))
                .collect()
        })
        .collect()
}

/// Same quantity from the lifted traces.
pub fn compute_cs_energy_lifted(beams: &BeamformerSet, tau: f64) -> Vec<Vec<f64>> {
    (0..beams.comm_cov.len())
        .map(|u| {
            let slots = beams.comm_cov[u].first().or(beams.sense_cov[u].first()).map_or(0, Vec::len);
            (0..slots).map(|n| tau * beams.slot_power(u, n)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// `[u][n]` joules
    pub cs: Vec<Vec<f64>>,
    pub flight: Vec<Vec<f64>>,
    pub totals: Vec<f64>,
    /// `E_th - total` per UAV.
    pub margins: Vec<f64>,
}

/// Flight energy per `[u][n]` along a trajectory.
pub fn flight_energy_table(traj: &TrajectorySet, cfg: &ScenarioConfig) -> Vec<Vec<f64>> {
    (0..traj.uav_count())
        .map(|u| traj.states(u).iter().map(|s| compute_flight_energy(s, &cfg.flight, cfg.slot_length())).collect())
        .collect()
}

pub fn energy_ledger(beams: &BeamformerSet, traj: &TrajectorySet, cfg: &ScenarioConfig) -> EnergyLedger {
    let cs = compute_cs_energy_lifted(beams, cfg.slot_length());
    let flight = flight_energy_table(traj, cfg);
    let totals: Vec<f64> = cs.iter().zip(&flight).map(|(a, b)| a.iter().sum::<f64>() + b.iter().sum::<f64>()).collect();
    let margins = totals.iter().zip(&cfg.energy_budget).map(|(t, e)| e - t).collect();
    EnergyLedger { cs, flight, totals, margins }
}

/// Principal component of a PSD matrix scaled to `√λ_max`, with its share of the trace.
pub fn rank_one_extract(x: &CMat) -> Result<(CVec, f64)> {
    let scale = x.norm().max(1.0);
    if hermitian_defect(x) > 1e-8 * scale {
        return Err(Error::Numerical("matrix is not Hermitian".into()));
    }
    let (vals, vecs) = hermitian_eigen(x);
    let m = vals.len();
    if vals[0] < -1e-8 * scale {
        return Err(Error::Numerical(format!("matrix is not PSD (min eigenvalue {:e})", vals[0])));
    }
    let top = vals[m - 1].max(0.0);
    let trace: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let quality = if trace > 0.0 { top / trace } else { 1.0 };
    let mut v = vecs.column(m - 1).into_owned() * crate::linalg::c(top.sqrt(), 0.0);
    fix_phase(&mut v);
    Ok((v, quality))
}

/// Relative residuals of the CRB, power and energy constraints; zero means satisfied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetResiduals {
    pub crb: f64,
    pub power: f64,
    pub energy: f64,
}

impl BudgetResiduals {
    pub fn max(&self) -> f64 {
        self.crb.max(self.power).max(self.energy)
    }
}

pub fn budget_residuals(
    beams: &BeamformerSet,
    chans: &ChannelRealization,
    traj: &TrajectorySet,
    cfg: &ScenarioConfig,
) -> Result<BudgetResiduals> {
    let crb = compute_crb(beams, chans, cfg)?.max_violation();
    let mut power: f64 = 0.0;
    for u in 0..cfg.uav_count {
        for n in 0..cfg.slot_count() {
            let p = beams.slot_power(u, n);
            let pm = cfg.max_power[u];
            let r = if pm > 0.0 { p / pm - 1.0 } else if p > 1e-15 { f64::INFINITY } else { 0.0 };
            power = power.max(r);
        }
    }
    let ledger = energy_ledger(beams, traj, cfg);
    let energy = ledger.margins.iter().zip(&cfg.energy_budget).map(|(m, e)| -m / e.abs().max(1e-300)).fold(0.0, f64::max);
    Ok(BudgetResiduals { crb, power: power.max(0.0), energy: energy.max(0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::scenario::ScenarioConfig;

    fn scalar_setup(h: f64, sigma2: f64) -> (ScenarioConfig, ChannelRealization) {
        let mut cfg = ScenarioConfig::base(1, 1, 1.0, [0.0, 0.0, 150.0], [0.0, 0.0, 150.0]);
        cfg.array.antenna_count = 1;
        cfg.user_partition = vec![vec![0]];
        cfg.target_partition = vec![vec![0]];
        cfg.user_positions = vec![[0.0, 0.0, 0.0]];
        cfg.target_positions = vec![[1.0, 0.0, 0.0]];
        cfg.radar_cross_sections = vec![1.0];
        cfg.noise_power = sigma2;
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let ch = ChannelRealization {
            antennas: 1,
            comm: vec![vec![vec![CVec::from_element(1, c(h, 0.0))]]],
            comm_los: vec![vec![vec![1.0]]],
            echo: vec![vec![vec![one.clone()]]],
            echo_gain: vec![vec![vec![1.0]]],
            echo_deriv: vec![vec![vec![one]]],
            echo_los: vec![vec![vec![1.0]]],
        };
        (cfg, ch)
    }

    #[test]
    fn unit_sinr_gives_one_bit() {
        let (cfg, ch) = scalar_setup(1.0, 0.5);
        let mut b = BeamformerSet::zeros(&cfg);
        b.set_comm(0, 0, 0, CVec::from_element(1, c(0.5f64.sqrt(), 0.0)));
        let r = compute_rates(&b, &ch, &cfg).unwrap();
        assert!((r.sum_rate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_beams_give_zero_rate_and_infinite_crb() {
        let cfg = ScenarioConfig::desk();
        let traj = TrajectorySet::straight_line(&cfg);
        let ch = ChannelRealization::sample(&cfg, &traj, 1).unwrap();
        let b = BeamformerSet::zeros(&cfg);
        assert_eq!(compute_rates(&b, &ch, &cfg).unwrap().sum_rate, 0.0);
        let crb = compute_crb(&b, &ch, &cfg).unwrap();
        assert!(crb.entries[0][0][0].value.is_infinite());
    }

    #[test]
    fn signal_three_interference_one() {
        // signal 3σ², one sensing interferer delivering σ²
        let (cfg, ch) = scalar_setup(1.0, 1.0);
        let mut b = BeamformerSet::zeros(&cfg);
        b.set_comm(0, 0, 0, CVec::from_element(1, c(3f64.sqrt(), 0.0)));
        b.set_sense(0, 0, 0, CVec::from_element(1, c(1.0, 0.0)));
        let r = compute_rates(&b, &ch, &cfg).unwrap();
        assert!((r.sum_rate - 2.5f64.log2()).abs() < 1e-12);
        assert!((r.sum_rate - 1.3219).abs() < 1e-4);
    }

    #[test]
    fn non_hermitian_lifted_input_is_rejected() {
        let (cfg, ch) = scalar_setup(1.0, 1.0);
        let mut b = BeamformerSet::zeros(&cfg);
        b.comm_cov[0][0][0][(0, 0)] = c(1.0, 0.5);
        assert!(matches!(compute_rates(&b, &ch, &cfg), Err(Error::Structural(_))));
    }

    #[test]
    fn scalar_crb_and_inverse_scaling() {
        let (cfg, ch) = scalar_setup(1.0, 1.0);
        let mut b = BeamformerSet::zeros(&cfg);
        b.sense_cov[0][0][0] = CMat::from_element(1, 1, c(0.5, 0.0));
        let crb = compute_crb(&b, &ch, &cfg).unwrap();
        assert!((crb.entries[0][0][0].value - 1.0).abs() < 1e-15);
        b.sense_cov[0][0][0] = CMat::from_element(1, 1, c(1.0, 0.0));
        let crb2 = compute_crb(&b, &ch, &cfg).unwrap();
        assert!((crb2.entries[0][0][0].value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn flight_energy_reference_values() {
        let f = FlightPowerParams::table_one();
        let hover = UavState { position: [0.0; 3], horizontal_speed: 0.0, heading: 0.0, vertical_speed: 0.0 };
        assert!((compute_flight_energy(&hover, &f, 1.0) - 887.2).abs() < 1e-9);
        let climb = UavState { vertical_speed: 1.0, ..hover };
        assert!((compute_flight_energy(&climb, &f, 1.0) - compute_flight_energy(&hover, &f, 1.0) - 11.5).abs() < 1e-9);
        assert!((flight_power_terms(f.tip_speed, 0.0, &f).induced - 4.0 * f.c0).abs() < 1e-9);
    }

    #[test]
    fn cs_energy_simple_sum() {
        let (cfg, _) = scalar_setup(1.0, 1.0);
        let mut b = BeamformerSet::zeros(&cfg);
        assert_eq!(compute_cs_energy(&b, 1.0)[0][0], 0.0);
        b.set_comm(0, 0, 0, CVec::from_element(1, c(1.0, 1.0)));
        b.set_sense(0, 0, 0, CVec::from_element(1, c(0.0, 1.0)));
        assert!((compute_cs_energy(&b, 1.0)[0][0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_extraction_cases() {
        let g = CVec::from_vec(vec![c(0.3, 0.4), c(-1.0, 0.2), c(0.1, -0.7)]);
        let (v, q) = rank_one_extract(&dyad(&g)).unwrap();
        assert!((q - 1.0).abs() < 1e-12);
        assert!((dyad(&v) - dyad(&g)).norm() < 1e-12);
        assert!(v[0].im.abs() < 1e-12 && v[0].re > 0.0);

        let (_, q2) = rank_one_extract(&CMat::identity(2, 2)).unwrap();
        assert!((q2 - 0.5).abs() < 1e-12);

        let mut bad = CMat::identity(2, 2);
        bad[(1, 1)] = c(-0.1, 0.0);
        assert!(rank_one_extract(&bad).is_err());
    }
}
