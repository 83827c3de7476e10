mod common;

use common::*;
use rand::Rng;
use uav_isac::comm::{run_alg1, Alg1Settings};
use uav_isac::error::Error;
use uav_isac::linalg::{c, CVec};
use uav_isac::metrics::{budget_residuals, compute_crb, compute_rates, BeamformerSet};
use uav_isac::scenario::ScenarioConfig;
use uav_isac::sensing::*;

#[test]
fn omega_examples() {
    assert_eq!(omega_star(2.0, 1.0).unwrap(), 2.0);
    assert_eq!(surrogate(2.0, 1.0, 2.0), 2.0);
    assert_eq!(omega_star(6.0, 3.0).unwrap(), 2.0);
    assert!(omega_star(0.0, 1.0).is_err());
    assert_eq!(omega_star(1.0, 0.0).unwrap(), 1.0 / IOTA_FLOOR);
}

#[test]
fn surrogate_tight_and_valid_on_random_points() {
    let mut r = rng(3);
    for _ in 0..10_000 {
        let theta: f64 = r.random_range(1.0..100.0);
        let iota: f64 = r.random_range(1e-3..50.0);
        let omega = omega_star(theta, iota).unwrap();
        let tight = surrogate(theta, iota, omega);
        assert!((tight - iota * theta).abs() <= 1e-12 * iota * theta);
        let any_omega: f64 = r.random_range(1e-3..1e3);
        let other_iota: f64 = r.random_range(0.0..50.0);
        assert!(surrogate(theta, other_iota, any_omega) >= other_iota * theta * (1.0 - 1e-15));
    }
}

fn comm_beam(m: usize, value: f64) -> BeamformerSet {
    let comm = vec![vec![vec![CVec::from_element(m, c(value, 0.0))]]];
    let sense = vec![vec![vec![CVec::zeros(m)]]];
    BeamformerSet::from_vectors(comm, sense)
}

#[test]
fn unconstrained_crb_gives_zero_sensing() {
    let (cfg, chans, traj) = scalar_sensing(1e-6, 2.0, 5e-5, 1.0, f64::INFINITY);
    let (out, _) = run_alg2(&comm_beam(1, 0.5), &chans, &traj, &cfg, &Alg2Settings::default()).unwrap();
    assert_eq!(out.sense_power(0, 0), 0.0);
}

#[test]
fn scalar_case_sits_on_the_crb_bound() {
    let (h, d, beta, gamma) = (1e-6, 2.0, 5e-5, 1e-4);
    let (cfg, chans, traj) = scalar_sensing(h, d, beta, 1.0, gamma);
    let (out, st) = run_alg2(&comm_beam(1, 0.5), &chans, &traj, &cfg, &Alg2Settings::default()).unwrap();
    let bound = cfg.noise_power / (2.0 * gamma * beta * beta * d * d);
    let p = out.sense_power(0, 0);
    assert!((p - bound).abs() <= 1e-6 * bound, "{p} vs {bound}");
    // the relaxed solve lands on the bound too, up to the barrier gap
    assert!(st.relaxed_objective > 0.0);
}

#[test]
fn crb_threshold_below_power_limit_is_infeasible() {
    let (h, d, beta) = (1e-6, 2.0, 5e-5);
    let comm = 0.5f64;
    let pmax = 1.0;
    let sigma2 = ScenarioConfig::base(1, 1, 1.0, [0.0; 3], [0.0; 3]).noise_power;
    // power left for sensing is P_max − |g|²
    let threshold = sigma2 / (2.0 * beta * beta * d * d * (pmax - comm * comm));
    let (cfg, chans, traj) = scalar_sensing(h, d, beta, pmax, threshold * 0.99);
    match run_alg2(&comm_beam(1, comm), &chans, &traj, &cfg, &Alg2Settings::default()) {
        Err(Error::Infeasible(msg)) => assert!(msg.contains("crb(u=0,k=0,n=0)"), "{msg}"),
        other => panic!("expected infeasible, got {other:?}"),
    }
    let (cfg, chans, traj) = scalar_sensing(h, d, beta, pmax, threshold * 1.01);
    assert!(run_alg2(&comm_beam(1, comm), &chans, &traj, &cfg, &Alg2Settings::default()).is_ok());
}

fn desk_beams() -> (ScenarioConfig, uav_isac::channel::ChannelRealization, uav_isac::scenario::TrajectorySet, BeamformerSet) {
    let (cfg, chans, traj) = setup(ScenarioConfig::desk());
    let beams = sensing_only_beams(&cfg, &chans, &traj);
    let (beams, _) = run_alg1(&beams, &chans, &traj, &cfg, &Alg1Settings::default()).unwrap();
    (cfg, chans, traj, beams)
}

#[test]
fn desk_sca_monotone_and_crb_holds() {
    let (cfg, chans, traj, beams) = desk_beams();
    let settings = Alg2Settings { max_iters: 50, ..Default::default() };
    let (out, st) = run_alg2(&beams, &chans, &traj, &cfg, &settings).unwrap();
    assert!(st.converged);
    for w in st.objective_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-6, "{} -> {}", w[0], w[1]);
    }
    let crb = compute_crb(&out, &chans, &cfg).unwrap();
    for e in crb.entries.iter().flatten().flatten() {
        assert!(e.value <= e.threshold * (1.0 + 1e-6), "{} > {}", e.value, e.threshold);
    }
    let res = budget_residuals(&out, &chans, &traj, &cfg).unwrap();
    assert!(res.max() <= 1e-6, "{res:?}");
    let rates = compute_rates(&out, &chans, &cfg).unwrap();
    for (lv, slots) in rates.links[0].iter().enumerate() {
        for (n, l) in slots.iter().enumerate() {
            assert!(st.iota[0][lv][n] <= l.sinr + 1e-5, "ι {} above SINR {}", st.iota[0][lv][n], l.sinr);
        }
    }
    // the sensing step can only help: sensing beams shrink onto their bounds
    let before = compute_rates(&beams, &chans, &cfg).unwrap().sum_rate;
    assert!(rates.sum_rate >= before - 1e-6 * before);
}

#[test]
fn desk_fixed_point_stops_after_one_iteration() {
    let (cfg, chans, traj, beams) = desk_beams();
    let (out, _) = run_alg2(&beams, &chans, &traj, &cfg, &Alg2Settings::default()).unwrap();
    let (again, st) = run_alg2(&out, &chans, &traj, &cfg, &Alg2Settings::default()).unwrap();
    assert!(st.log.len() <= 2, "{} iterations", st.log.len());
    let a = compute_rates(&out, &chans, &cfg).unwrap().sum_rate;
    let b = compute_rates(&again, &chans, &cfg).unwrap().sum_rate;
    assert!((a - b).abs() <= 1e-4 * a);
    assert!(alg2_log_csv(&st).starts_with("iter,objective,min_crb_margin,max_residual\n"));
}
