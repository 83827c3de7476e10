//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

mod common;

use common::*;
use rand::Rng;
use std::f64::consts::PI;
use std::time::Instant;
use uav_isac::channel::{comm_channel_with_prob, echo_channel_with_prob, steering_derivative, steering_vector, ChannelRealization, LinkGeometry};
use uav_isac::comm::*;
use uav_isac::linalg::{c, CMat, CVec};
use uav_isac::metrics::{compute_flight_energy, energy_ledger, BeamformerSet};
use uav_isac::orchestrator::*;
use uav_isac::rl::*;
use uav_isac::scenario::{validate_kinematics, ArrayGeometry, ScenarioConfig, TrajectorySet};
use uav_isac::sensing::*;

type Outcome = Result<(bool, String), String>;

struct Suite {
    failed: usize,
    /// Converged runs whose CRB is audited by criterion 4.
    audited: Vec<(String, ScenarioConfig, ChannelRealization, BeamformerSet)>,
}

impl Suite {
    fn record(&mut self, id: usize, name: &str, outcome: Outcome) {
        let (pass, detail) = match outcome {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            self.failed += 1;
        }
        println!("{} [{id:>2}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }

    fn audit(&mut self, label: impl Into<String>, cfg: &ScenarioConfig, r: &BcdReport) {
        self.audited.push((label.into(), cfg.clone(), r.channels.clone(), r.beams.clone()));
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|x| x.to_string())
}

fn link_rates_oracle(chans: &[CVec], beams: &[CVec], noise: f64, tau: f64) -> f64 {
    let mut total = 0.0;
    for (v, h) in chans.iter().enumerate() {
        let p = |g: &CVec| h.dotc(g).norm_sqr();
        let signal = p(&beams[v]);
        let interference: f64 = beams.iter().enumerate().filter(|(j, _)| *j != v).map(|(_, g)| p(g)).sum();
        total += tau * (1.0 + signal / (interference + noise)).log2();
    }
    total
}

fn crb_oracle(noise: f64, gain: f64, deriv: &CMat, cov: &CMat) -> f64 {
    let a = deriv.adjoint() * deriv;
    let tr: f64 = (0..a.nrows()).flat_map(|i| (0..a.ncols()).map(move |j| (i, j))).map(|(i, j)| (a[(i, j)] * cov[(j, i)]).re).sum();
    noise / (2.0 * gain * gain * tr)
}

fn c1_fp_monotone() -> Outcome {
    let mut worst_drop = 0.0f64;
    let mut slowest = 0.0f64;
    let mut max_iters = 0;
    let mut all_converged = true;
    for seed in 0..10 {
        let t0 = Instant::now();
        let (cfg, chans, traj) = setup(ScenarioConfig::random_desk(seed));
        let beams = sensing_only_beams(&cfg, &chans, &traj);
        let settings = Alg1Settings { max_iters: 50, tolerance: 1e-4, ..Default::default() };
        let (_, st) = e(run_alg1(&beams, &chans, &traj, &cfg, &settings))?;
        for w in st.objective_trace.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        all_converged &= st.converged;
        max_iters = max_iters.max(st.iteration);
        slowest = slowest.max(t0.elapsed().as_secs_f64());
    }
    let pass = worst_drop <= 1e-6 && all_converged && max_iters <= 50 && slowest < 120.0;
    Ok((pass, format!("worst step drop {worst_drop:.2e}, all converged {all_converged}, max iterations {max_iters}, slowest {slowest:.1}s")))
}

fn c2_aux_identities() -> Outcome {
    let mut r = rng(2024);
    let mut worst_chi = 0.0f64;
    let mut worst_psi = 0.0f64;
    for _ in 0..100 {
        let users = r.random_range(1..=3);
        let chans: Vec<CVec> = (0..users).map(|_| random_cvec(&mut r, 3, 1e-6)).collect();
        let (cfg, ch, traj) = single_slot(&chans, 1.0);
        let g: Vec<CVec> = (0..users).map(|_| random_cvec(&mut r, 3, 0.4)).collect();
        let beams = BeamformerSet::from_vectors(vec![g.iter().map(|x| vec![x.clone()]).collect()], vec![Vec::new()]);
        let (_, mut st) = e(run_alg1(&beams, &ch, &traj, &cfg, &Alg1Settings { max_iters: 0, ..Default::default() }))?;
        e(update_chi(&mut st, &beams, &ch, &cfg))?;
        e(update_psi(&mut st, &beams, &ch, &cfg))?;
        let want = link_rates_oracle(&chans, &g, cfg.noise_power, cfg.slot_length());
        let rel = |x: f64| (x - want).abs() / want.abs().max(1e-300);
        worst_chi = worst_chi.max(rel(dual_objective(&st, &beams, &ch, &cfg)));
        worst_psi = worst_psi.max(rel(fp_objective(&st, &beams, &ch, &cfg)));
        let o: f64 = r.random_range(1e-3..1e3);
        let p: f64 = r.random_range(1e-3..1e3);
        let q = quadratic_transform(e(psi_star(o, p))?, o, p);
        worst_psi = worst_psi.max((q - o / p).abs() / (o / p));
    }
    let pass = worst_chi <= 1e-8 && worst_psi <= 1e-8;
    Ok((pass, format!("chi substitution rel err {worst_chi:.1e}, psi substitution rel err {worst_psi:.1e} (100 instances)")))
}

fn c3_sca(suite: &mut Suite) -> Outcome {
    let mut r = rng(77);
    let mut worst_tight = 0.0f64;
    let mut violations = 0;
    for _ in 0..10_000 {
        let theta: f64 = r.random_range(1.0..1e3);
        let iota: f64 = r.random_range(1e-3..100.0);
        let omega = e(omega_star(theta, iota))?;
        worst_tight = worst_tight.max((surrogate(theta, iota, omega) - iota * theta).abs() / (iota * theta));
        // any point meeting the surrogate constraint meets the original one
        let (t2, i2, w2): (f64, f64, f64) = (r.random_range(1.0..1e3), r.random_range(0.0..100.0), r.random_range(1e-3..1e3));
        let signal = surrogate(t2, i2, w2) * r.random_range(1.0..1.5);
        if signal < i2 * t2 {
            violations += 1;
        }
    }
    let (cfg, chans, traj) = setup(ScenarioConfig::desk());
    let start = sensing_only_beams(&cfg, &chans, &traj);
    let (b1, _) = e(run_alg1(&start, &chans, &traj, &cfg, &Alg1Settings::default()))?;
    let (b2, st) = e(run_alg2(&b1, &chans, &traj, &cfg, &Alg2Settings { max_iters: 50, ..Default::default() }))?;
    let drop = st.objective_trace.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    suite.audited.push(("alg2 desk".into(), cfg.clone(), chans, b2));
    let pass = worst_tight <= 1e-12 && violations == 0 && drop <= 1e-6 && st.converged && st.iteration <= 50;
    Ok((
        pass,
        format!(
            "tightness {worst_tight:.1e}, implication violations {violations}/10000, objective drop {drop:.1e}, converged {} in {} iterations",
            st.converged, st.iteration
        ),
    ))
}

fn c4_crb(suite: &Suite) -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (_, cfg, chans, beams) in &suite.audited {
        for u in 0..cfg.uav_count {
            for (lk, &k) in cfg.targets_of(u).iter().enumerate() {
                for n in 0..cfg.slot_count() {
                    let v = crb_oracle(cfg.noise_power, chans.echo_gain[u][k][n], &chans.echo_deriv[u][k][n], &beams.sense_cov[u][lk][n]);
                    worst = worst.max(v / cfg.crb_threshold_for(u, k, n));
                    count += 1;
                }
            }
        }
    }
    Ok((count > 0 && worst <= 1.0 + 1e-6, format!("worst CRB/threshold {worst:.9} over {count} target-slots in {} runs", suite.audited.len())))
}

fn c5_bcd(suite: &mut Suite) -> Outcome {
    let cfg = ScenarioConfig::desk();
    let t0 = Instant::now();
    let r = e(run_bcd(&cfg, &BcdSettings::new(&cfg, TrajectoryMode::Frozen)))?;
    let secs = t0.elapsed().as_secs_f64();
    let rates: Vec<f64> = r.records.iter().map(|x| x.candidate_rate).collect();
    let last = rates.len();
    let change = if last >= 2 { (rates[last - 1] - rates[last - 2]).abs() / rates[last - 1].abs() } else { f64::INFINITY };
    suite.audit("bcd desk", &cfg, &r);
    let pass = r.status == BcdStatus::Converged && last <= 10 && change < 1e-3 && secs < 600.0;
    Ok((pass, format!("{last} outer iterations, final relative change {change:.1e}, sum rate {:.4}, {secs:.1}s", r.sum_rate)))
}

fn c6_c7_trend(suite: &mut Suite, axis: SweepAxis, values: &[f64]) -> Outcome {
    let cfg = ScenarioConfig::desk();
    let settings = BcdSettings::new(&cfg, TrajectoryMode::Ddpg);
    let rows = e(sweep(&cfg, axis, values, &settings))?;
    let feasible: Vec<&SweepRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let monotone = feasible.windows(2).all(|w| w[1].sum_rate >= w[0].sum_rate);
    for &v in values {
        let point = axis.apply(&cfg, v);
        if let Ok(r) = run_bcd(&point, &BcdSettings::new(&point, TrajectoryMode::Frozen)) {
            suite.audit(format!("{} {v:e}", axis.name()), &point, &r);
        }
    }
    let list: Vec<String> = rows.iter().map(|r| if r.status == "ok" { format!("{:.3}", r.sum_rate) } else { r.status.clone() }).collect();
    Ok((feasible.len() >= 2 && monotone, format!("{} grid {values:?} -> [{}]", axis.name(), list.join(", "))))
}

fn c8_baselines(suite: &mut Suite) -> Outcome {
    let mut worst_twobf = f64::INFINITY;
    let mut worst_bfwot = f64::INFINITY;
    let mut notes = Vec::new();
    for seed in 0..10 {
        let cfg = ScenarioConfig::random_desk(seed);
        let settings = BcdSettings::new(&cfg, TrajectoryMode::Ddpg);
        let p = e(run_bcd(&cfg, &settings))?;
        let bfwot = e(run_baseline(BaselineKind::Bfwot, &cfg, &settings))?;
        let twobf = match run_baseline(BaselineKind::Twobf, &cfg, &settings) {
            Ok(r) => r.sum_rate,
            Err(x) if x.is_infeasible() => {
                notes.push(format!("seed {seed} twobf infeasible"));
                0.0
            }
            Err(x) => return Err(x.to_string()),
        };
        worst_twobf = worst_twobf.min(p.sum_rate - twobf);
        worst_bfwot = worst_bfwot.min(p.sum_rate - bfwot.sum_rate);
        suite.audit(format!("proposed seed {seed}"), &cfg, &p);
    }
    let pass = worst_twobf >= 0.0 && worst_bfwot >= 0.0;
    let mut detail = format!("min(proposed - TWOBF) {worst_twobf:.4}, min(proposed - BFWOT) {worst_bfwot:.4} bits over 10 seeds");
    if !notes.is_empty() {
        detail += &format!(" ({})", notes.join("; "));
    }
    Ok((pass, detail))
}

fn c9_ddpg() -> Outcome {
    let t0 = Instant::now();
    let (cfg, chans, traj) = setup(ScenarioConfig::tiny());
    let start = e(sensing_start(&cfg, &chans, &traj))?;
    let (b1, _) = e(run_alg1(&start, &chans, &traj, &cfg, &Alg1Settings::default()))?;
    let (beams, _) = e(run_alg2(&b1, &chans, &traj, &cfg, &Alg2Settings::default()))?;
    let settings = EnvSettings { penalty: 0.0, terminal_weight: 0.0, adapt_sensing: true, channel_seed: cfg.rng_seed };
    let mut env = e(TrajectoryEnv::new(&cfg, &beams, settings))?;
    let config = DdpgConfig { episodes: 300, ..DdpgConfig::default() };
    let out = e(train(&mut env, &config, cfg.rng_seed))?;
    let greedy = e(rollout(&out.policy, &mut env))?;
    let residual = e(validate_kinematics(&greedy.trajectory, &cfg))?.max();
    let random = e(random_policy_mean(&mut env, 1000, cfg.rng_seed ^ 0x5eed))?;
    let secs = t0.elapsed().as_secs_f64();
    let pass = greedy.total_reward >= 1.2 * random && greedy.total_reward > random && residual == 0.0 && secs < 900.0;
    Ok((
        pass,
        format!(
            "greedy reward {:.3} vs random mean {random:.3} (ratio bound {:.3}), kinematic residual {residual:e}, {secs:.1}s",
            greedy.total_reward,
            1.2 * random
        ),
    ))
}

fn c10_oracles() -> Outcome {
    let h = CVec::from_vec(vec![c(1.2e-6, 0.3e-6), c(-0.4e-6, 0.9e-6), c(0.2e-6, -0.5e-6)]);
    let pmax = 0.8;
    let (cfg, chans, traj) = single_slot(&[h.clone()], pmax);
    let (out, _) = e(run_alg1(&BeamformerSet::zeros(&cfg), &chans, &traj, &cfg, &Alg1Settings::default()))?;
    let want = (1.0 + pmax * h.norm_squared() / cfg.noise_power).log2();
    let got = link_rates_oracle(&[h], &[out.comm[0][0][0].clone()], cfg.noise_power, cfg.slot_length());
    let mrt = (got - want).abs() / want;

    let (hs, d, beta, gamma) = (1e-6, 2.0, 5e-5, 1e-4);
    let (cfg, chans, traj) = scalar_sensing(hs, d, beta, 1.0, gamma);
    let comm = BeamformerSet::from_vectors(vec![vec![vec![CVec::from_element(1, c(0.5, 0.0))]]], vec![vec![vec![CVec::zeros(1)]]]);
    let (out, _) = e(run_alg2(&comm, &chans, &traj, &cfg, &Alg2Settings::default()))?;
    let bound = cfg.noise_power / (2.0 * gamma * beta * beta * d * d);
    let sense = out.sense_cov[0][0][0][(0, 0)].re;
    let crb = (sense - bound).abs() / bound;
    Ok((mrt <= 1e-4 && crb <= 1e-6, format!("MRT rate rel err {mrt:.1e}, scalar sensing power rel err vs bound {crb:.1e}")))
}

fn c11_hygiene() -> Outcome {
    // steering derivative against central differences
    let geom = ArrayGeometry::half_wavelength(4, 0.1);
    let h = 1e-6;
    let mut fd = 0.0f64;
    for i in 0..=40 {
        let phi = -PI / 2.0 + PI * i as f64 / 40.0;
        let num = (steering_vector(phi + h, &geom) - steering_vector(phi - h, &geom)) / c(2.0 * h, 0.0);
        fd = fd.max((num - steering_derivative(phi, &geom)).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }

    // channel second moments against closed forms
    let params = ScenarioConfig::desk().los;
    let link = LinkGeometry::new(120.0, 175.0);
    let p = 0.6;
    let m = geom.antenna_count;
    let mut r = rng(99);
    let draws = 100_000;
    let mut cov = CMat::zeros(m, m);
    let mut echo_power = 0.0;
    let mut beta = 0.0;
    for _ in 0..draws {
        let hv = e(comm_channel_with_prob(&link, p, &params, &geom, &mut r))?;
        cov += &hv * hv.adjoint();
        let (g, b) = e(echo_channel_with_prob(&link, 0.02, p, &params, &geom, &mut r))?;
        echo_power += g.norm_squared();
        beta = b;
    }
    cov /= c(draws as f64, 0.0);
    echo_power /= draws as f64;
    let path = params.alpha0 / link.slant_distance.powi(2);
    let s = steering_vector(link.elevation_rad(), &geom);
    let want = (&s * s.adjoint()) * c(p * path, 0.0) + CMat::identity(m, m) * c((1.0 - p) * path, 0.0);
    let comm_err = (&cov - &want).norm() / want.norm();
    let mf = m as f64;
    let echo_want = beta * beta * (p * mf * mf + (1.0 - p) * params.kappa * mf * mf);
    let echo_err = (echo_power - echo_want).abs() / echo_want;

    // energy ledger additivity and extraction quality at convergence on desk
    let cfg = ScenarioConfig::desk();
    let report = e(run_bcd(&cfg, &BcdSettings::new(&cfg, TrajectoryMode::Frozen)))?;
    let ledger = energy_ledger(&report.beams, &report.trajectory, &cfg);
    let tau = cfg.slot_length();
    let mut additivity = 0.0f64;
    for u in 0..cfg.uav_count {
        let mut total = 0.0;
        for (n, state) in report.trajectory.states(u).iter().enumerate() {
            let comm: f64 = report.beams.comm[u].iter().map(|g| g[n].norm_squared()).sum();
            let sense: f64 = report.beams.sense_cov[u].iter().map(|x| x[n].trace().re).sum();
            total += tau * (comm + sense) + compute_flight_energy(state, &cfg.flight, tau);
        }
        let parts: f64 = ledger.cs[u].iter().sum::<f64>() + ledger.flight[u].iter().sum::<f64>();
        additivity = additivity.max((ledger.totals[u] - total).abs() / total).max((ledger.totals[u] - parts).abs() / total);
    }
    let traj = TrajectorySet::straight_line(&cfg);
    let (b1, s1) = e(run_alg1(&report.beams, &report.channels, &traj, &cfg, &Alg1Settings::default()))?;
    let (_, s2) = e(run_alg2(&b1, &report.channels, &traj, &cfg, &Alg2Settings::default()))?;
    let quality = s1.extraction_quality.min(s2.extraction_quality);

    let pass = fd <= 1e-6 && comm_err <= 0.01 && echo_err <= 0.01 && additivity <= 1e-12 && quality >= 0.99;
    Ok((
        pass,
        format!(
            "steering FD err {fd:.1e}, comm second moment err {:.2}%, echo power err {:.2}%, ledger additivity {additivity:.1e}, extraction quality {quality:.6}",
            100.0 * comm_err,
            100.0 * echo_err
        ),
    ))
}

fn main() {
    let mut suite = Suite { failed: 0, audited: Vec::new() };
    let t0 = Instant::now();
    suite.record(1, "FP monotonicity on 10 random desk scenarios", c1_fp_monotone());
    suite.record(2, "auxiliary-variable identities", c2_aux_identities());
    let o = c3_sca(&mut suite);
    suite.record(3, "SCA surrogate validity and monotonicity", o);
    let o = c5_bcd(&mut suite);
    let o6 = c6_c7_trend(&mut suite, SweepAxis::Crb, &[1e-5, 3e-5, 1e-4, 3e-4, 1e-3]);
    let o7 = c6_c7_trend(&mut suite, SweepAxis::Pmax, &[0.5, 1.0, 2.0]);
    let o8 = c8_baselines(&mut suite);
    let o4 = c4_crb(&suite);
    suite.record(4, "CRB constraint satisfaction", o4);
    suite.record(5, "BCD convergence on desk", o);
    suite.record(6, "sum rate non-decreasing in the CRB threshold", o6);
    suite.record(7, "sum rate non-decreasing in the power budget", o7);
    suite.record(8, "proposed dominates TWOBF and BFWOT", o8);
    suite.record(9, "DDPG learning signal on tiny", c9_ddpg());
    suite.record(10, "closed-form oracle equivalence", c10_oracles());
    suite.record(11, "numerical hygiene", c11_hygiene());
    println!("acceptance: {} of 11 passed in {:.0}s", 11 - suite.failed, t0.elapsed().as_secs_f64());
    if suite.failed > 0 {
        std::process::exit(1);
    }
}
