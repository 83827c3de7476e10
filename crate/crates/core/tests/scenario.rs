use uav_isac::scenario::{
    db_to_linear, generate_random_scenario, parse_scenario, scenario_to_json, validate_kinematics, ScenarioConfig,
    TrajectorySet,
};
use uav_isac::Error;

#[test]
fn table_one_dimensions() {
    let cfg = ScenarioConfig::table_one();
    cfg.validate().unwrap();
    assert_eq!(cfg.uav_count, 3);
    assert_eq!(cfg.antennas(), 3);
    assert!((cfg.los.alpha0 / 1e-7 - 1.0).abs() < 1e-12);
    assert!((cfg.noise_power - db_to_linear(-130.0)).abs() < 1e-25);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = ScenarioConfig::desk();
    cfg.altitude_min = 210.0;
    assert!(matches!(cfg.validate(), Err(Error::Validation(_))));

    let mut cfg = ScenarioConfig::random_desk(3);
    let shared = cfg.user_partition[0][0];
    cfg.user_partition[1].push(shared);
    assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
}

#[test]
fn random_scenarios_are_seeded_and_in_range() {
    let template = ScenarioConfig::table_one();
    let a = generate_random_scenario(7, &template).unwrap();
    let b = generate_random_scenario(7, &template).unwrap();
    assert_eq!(a, b);
    for seed in 0..1000 {
        let cfg = generate_random_scenario(seed, &template).unwrap();
        cfg.validate().unwrap();
        for u in 0..cfg.uav_count {
            assert!((3..=5).contains(&cfg.users_of(u).len()), "seed {seed}");
            assert!((2..=4).contains(&cfg.targets_of(u).len()), "seed {seed}");
        }
        for p in cfg.user_positions.iter().chain(&cfg.target_positions) {
            assert!((0.0..=500.0).contains(&p[0]) && (0.0..=500.0).contains(&p[1]) && p[2] == 0.0);
        }
    }
}

fn two_uavs() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::base(2, 3, 3.0, [0.0, 0.0, 175.0], [0.0, 0.0, 175.0]);
    cfg.max_speed = 20.0;
    cfg
}

#[test]
fn kinematic_residual_examples() {
    let cfg = two_uavs();
    let p = cfg.start;
    let still = TrajectorySet::new(vec![vec![p; 3], vec![p; 3]], 1.0);
    let r = validate_kinematics(&still, &cfg).unwrap();
    // both UAVs hover at the same point in the interior slot
    assert_eq!(r.separation, 10.0);
    assert_eq!((r.step, r.endpoint, r.altitude), (0.0, 0.0, 0.0));

    let apart = TrajectorySet::new(vec![vec![p; 3], vec![p, [0.0, 15.0, 175.0], p]], 1.0);
    assert!(validate_kinematics(&apart, &cfg).unwrap().feasible());

    let jump = TrajectorySet::new(vec![vec![p; 3], vec![p, [0.0, 25.0, 175.0], p]], 1.0);
    let r = validate_kinematics(&jump, &cfg).unwrap();
    assert!((r.step - 5.0).abs() < 1e-12);
    assert!(!r.feasible());

    let short = TrajectorySet::new(vec![vec![p; 2], vec![p; 2]], 1.0);
    assert!(validate_kinematics(&short, &cfg).is_err());
}

#[test]
fn straight_line_is_feasible() {
    for cfg in [ScenarioConfig::table_one(), ScenarioConfig::desk(), ScenarioConfig::random_desk(4)] {
        let traj = TrajectorySet::straight_line(&cfg);
        let r = validate_kinematics(&traj, &cfg).unwrap();
        assert!(r.step == 0.0 && r.endpoint == 0.0 && r.altitude == 0.0, "{r:?}");
    }
}

#[test]
fn json_round_trip() {
    for cfg in [ScenarioConfig::table_one(), ScenarioConfig::tiny(), ScenarioConfig::random_desk(9)] {
        let text = scenario_to_json(&cfg).unwrap();
        assert_eq!(parse_scenario(&text).unwrap(), cfg);
    }
    assert!(parse_scenario("{\"schema\": \"nope\"}").is_err());
}
