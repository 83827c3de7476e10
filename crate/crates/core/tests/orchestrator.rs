use uav_isac::channel::ChannelRealization;
use uav_isac::metrics::{compute_crb, compute_rates};
use uav_isac::orchestrator::*;
use uav_isac::rl::DdpgConfig;
use uav_isac::scenario::{validate_kinematics, ScenarioConfig, TrajectorySet};

fn frozen(cfg: &ScenarioConfig) -> BcdSettings {
    BcdSettings::new(cfg, TrajectoryMode::Frozen)
}

#[test]
fn infinite_epsilon_stops_after_one_iteration() {
    let cfg = ScenarioConfig::desk();
    let s = BcdSettings { epsilon: f64::INFINITY, ..frozen(&cfg) };
    let r = run_bcd(&cfg, &s).unwrap();
    assert_eq!(r.records.len(), 1);
    assert_eq!(r.status, BcdStatus::Converged);
}

#[test]
fn frozen_bcd_on_desk_converges_monotonically() {
    let cfg = ScenarioConfig::desk();
    let r = run_bcd(&cfg, &frozen(&cfg)).unwrap();
    assert_eq!(r.status, BcdStatus::Converged);
    assert!(r.records.len() <= 10);
    for w in r.records.windows(2) {
        assert!(w[1].sum_rate >= w[0].sum_rate);
    }
    // the report agrees with independent evaluation of its own iterate
    let chans = ChannelRealization::sample(&cfg, &r.trajectory, cfg.rng_seed).unwrap();
    assert_eq!(chans, r.channels);
    let rate = compute_rates(&r.beams, &chans, &cfg).unwrap().sum_rate;
    assert!((rate - r.sum_rate).abs() <= 1e-9 * rate);
    let crb = compute_crb(&r.beams, &chans, &cfg).unwrap();
    assert!(crb.max_crb() <= cfg.crb_threshold * (1.0 + 1e-6));
    assert!(r.residuals.max() <= 1e-6);
    assert_eq!(r.trajectory, TrajectorySet::straight_line(&cfg));

    let csv = convergence_csv(&r);
    assert!(csv.starts_with("# uav-isac convergence v1\n"));
    assert_eq!(csv.lines().count(), 2 + r.records.len());
}

#[test]
fn proposed_on_tiny_is_feasible_and_dominates_baselines() {
    let cfg = ScenarioConfig::tiny();
    let mut s = BcdSettings::new(&cfg, TrajectoryMode::Ddpg);
    s.ddpg = DdpgConfig { episodes: 120, ..DdpgConfig::default() };
    s.finetune_episodes = 20;
    s.max_outer = 3;
    let proposed = run_bcd(&cfg, &s).unwrap();
    assert_eq!(proposed.label, "proposed");
    assert!(proposed.residuals.max() <= 1e-6);
    assert_eq!(validate_kinematics(&proposed.trajectory, &cfg).unwrap().max(), 0.0);
    assert!(proposed.policy.is_some());
    assert!(!proposed.curve.is_empty());
    let bfwot = run_baseline(BaselineKind::Bfwot, &cfg, &s).unwrap();
    let twobf = run_baseline(BaselineKind::Twobf, &cfg, &s).unwrap();
    assert_eq!(bfwot.label, BaselineKind::Bfwot.label());
    assert!(proposed.sum_rate >= bfwot.sum_rate);
    assert!(proposed.sum_rate >= twobf.sum_rate);
    assert!(twobf.residuals.kinematics.max() <= 1e-6);
}

#[test]
fn random_policy_baseline_runs() {
    let cfg = ScenarioConfig::tiny();
    let s = frozen(&cfg);
    let r = run_baseline(BaselineKind::RandomPolicy, &cfg, &s).unwrap();
    assert!(r.sum_rate.is_finite());
    assert!(r.policy_reward.is_some());
}

#[test]
fn uniform_beams_split_the_budget() {
    let cfg = ScenarioConfig::desk();
    let traj = TrajectorySet::straight_line(&cfg);
    let chans = ChannelRealization::sample(&cfg, &traj, cfg.rng_seed).unwrap();
    let b = uniform_beams(&cfg, &chans);
    for u in 0..cfg.uav_count {
        for n in 0..cfg.slot_count() {
            assert!((b.slot_power(u, n) - cfg.max_power[u]).abs() <= 1e-9 * cfg.max_power[u]);
        }
    }
}

#[test]
fn single_value_sweep_matches_a_direct_run() {
    let cfg = ScenarioConfig::desk();
    let s = frozen(&cfg);
    let rows = sweep(&cfg, SweepAxis::Crb, &[cfg.crb_threshold], &s).unwrap();
    let direct = run_bcd(&cfg, &s).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].status, "ok");
    assert!((rows[0].sum_rate - direct.sum_rate).abs() <= 1e-9 * direct.sum_rate);
}

#[test]
fn sweep_keeps_infeasible_rows_and_checks_order() {
    let cfg = ScenarioConfig::tiny();
    let s = frozen(&cfg);
    let rows = sweep(&cfg, SweepAxis::Crb, &[1e-12, 1e-4], &s).unwrap();
    assert_eq!(rows[0].status, "infeasible");
    assert!(rows[0].sum_rate.is_nan());
    assert_eq!(rows[1].status, "ok");
    let csv = trend_csv(SweepAxis::Crb, &rows);
    assert!(csv.starts_with("# uav-isac trend v1\naxis_value,sum_rate_bits,min_crb,status\n"));
    assert_eq!(csv.lines().count(), 4);

    assert!(sweep(&cfg, SweepAxis::Crb, &[1e-3, 1e-4], &s).is_err());
    assert!(sweep(&cfg, SweepAxis::Pmax, &[], &s).is_err());
}

#[test]
fn replayed_channels_reproduce_the_run() {
    let cfg = ScenarioConfig::tiny();
    let s = frozen(&cfg);
    let a = run_bcd(&cfg, &s).unwrap();
    let replay = BcdSettings { replay_channels: Some(a.channels.clone()), ..frozen(&cfg) };
    let b = run_bcd(&cfg, &replay).unwrap();
    assert_eq!(a.sum_rate, b.sum_rate);

    let mut wrong = ScenarioConfig::tiny();
    wrong.time_grid.slot_count += 1;
    let bad = BcdSettings { replay_channels: Some(a.channels), ..frozen(&wrong) };
    assert!(run_bcd(&wrong, &bad).is_err());
}

#[test]
fn trajectory_csv_lists_every_waypoint() {
    let cfg = ScenarioConfig::desk();
    let traj = TrajectorySet::straight_line(&cfg);
    let csv = trajectory_csv(&traj);
    assert!(csv.starts_with("# uav-isac trajectory v1\n"));
    assert_eq!(csv.lines().count(), 2 + cfg.uav_count * cfg.slot_count());
}
