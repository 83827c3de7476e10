use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use uav_isac::channel::{
    comm_channel_with_prob, echo_channel_with_prob, echo_derivative, los_probability, steering_derivative,
    steering_vector, ChannelRealization, LinkGeometry,
};
use uav_isac::linalg::{c, dyad, norm_sqr, CVec};
use uav_isac::scenario::{ArrayGeometry, LosModelParams, ScenarioConfig, TrajectorySet};

fn los() -> LosModelParams {
    ScenarioConfig::desk().los
}

fn ula(m: usize) -> ArrayGeometry {
    ArrayGeometry::half_wavelength(m, 0.1)
}

#[test]
fn los_probability_values() {
    let p = los();
    for (phi, want) in [(11.95, 0.077220), (90.0, 0.99971), (0.0, 0.016207)] {
        let got = los_probability(phi, &p).unwrap();
        assert!((got - want).abs() < 5e-6, "phi {phi}: {got}");
    }
    let mut last = 0.0;
    for i in 0..=900 {
        let v = los_probability(i as f64 * 0.1, &p).unwrap();
        assert!(v >= last);
        last = v;
    }
    assert!(los_probability(-1.0, &p).is_err());
    assert!(los_probability(90.5, &p).is_err());
}

#[test]
fn steering_values() {
    let close = |a: &CVec, b: &[(f64, f64)]| a.iter().zip(b).all(|(x, y)| (x - c(y.0, y.1)).norm() < 1e-12);
    assert!(close(&steering_vector(0.0, &ula(3)), &[(1.0, 0.0); 3]));
    assert!(close(&steering_vector(PI / 2.0, &ula(2)), &[(1.0, 0.0), (-1.0, 0.0)]));
    assert!(close(&steering_vector(PI / 6.0, &ula(2)), &[(1.0, 0.0), (0.0, -1.0)]));
    for m in 1..6 {
        assert!((norm_sqr(&steering_vector(0.37, &ula(m))) - m as f64).abs() < 1e-12);
    }
}

#[test]
fn derivative_matches_finite_differences() {
    assert_eq!(steering_derivative(0.8, &ula(1))[0], c(0.0, 0.0));
    assert!(steering_derivative(PI / 2.0, &ula(4)).norm() < 1e-12);
    let h = 1e-6;
    for m in [2, 3, 5] {
        let g = ula(m);
        let fd = (steering_vector(0.3 + h, &g) - steering_vector(0.3 - h, &g)) / c(2.0 * h, 0.0);
        assert!((fd - steering_derivative(0.3, &g)).norm() < 1e-6);
        let p: f64 = 0.4;
        let a = |x: f64| dyad(&steering_vector(x, &g)) * c(p.sqrt(), 0.0);
        let fd = (a(0.3 + h) - a(0.3 - h)) / c(2.0 * h, 0.0);
        assert!((fd - echo_derivative(0.3, p, &g)).norm() < 1e-6);
    }
}

#[test]
fn pure_los_channels_are_deterministic() {
    let geo = LinkGeometry::new(100.0, 175.0);
    let g = ula(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = comm_channel_with_prob(&geo, 1.0, &los(), &g, &mut rng).unwrap();
    let want = steering_vector(geo.elevation_rad(), &g) * c((los().alpha0 / (100.0f64.powi(2) + 175.0f64.powi(2))).sqrt(), 0.0);
    assert!((h - want).norm() < 1e-18);

    let (e, beta) = echo_channel_with_prob(&geo, 0.02, 1.0, &los(), &g, &mut rng).unwrap();
    assert!((beta - 0.02 / (2.0 * geo.slant_distance)).abs() < 1e-18);
    assert!((e.trace().re - 3.0 * beta).abs() < 1e-15);
    let sv = e.singular_values();
    assert!(sv[1] < 1e-12 * sv[0]);
    let (_, beta2) = echo_channel_with_prob(&geo, 0.04, 1.0, &los(), &g, &mut rng).unwrap();
    assert!((beta2 - 2.0 * beta).abs() < 1e-18);

    let mut p = los();
    p.kappa = 0.0;
    let (e, beta) = echo_channel_with_prob(&geo, 0.02, 0.3, &p, &g, &mut rng).unwrap();
    let want = dyad(&steering_vector(geo.elevation_rad(), &g)) * c(beta * 0.3f64.sqrt(), 0.0);
    assert!((e - want).norm() < 1e-15);

    assert!(comm_channel_with_prob(&LinkGeometry::new(0.0, 0.0), 0.5, &los(), &g, &mut rng).is_err());
}

#[test]
fn comm_second_moment_matches_path_loss() {
    let g = ula(3);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for (i, (dx, alt)) in [(0.0, 150.0), (50.0, 175.0), (200.0, 160.0), (400.0, 200.0), (20.0, 1.0)].into_iter().enumerate() {
        let geo = LinkGeometry::new(dx, alt);
        let p = los_probability(geo.elevation_deg, &los()).unwrap();
        let draws = 40_000;
        let mean: f64 = (0..draws)
            .map(|_| norm_sqr(&comm_channel_with_prob(&geo, p, &los(), &g, &mut rng).unwrap()))
            .sum::<f64>()
            / draws as f64;
        let want = 3.0 * los().alpha0 / (dx * dx + alt * alt);
        assert!((mean / want - 1.0).abs() < 0.01, "geometry {i}: {mean} vs {want}");
    }
}

#[test]
fn keyed_streams_make_slots_independent_of_order() {
    let cfg = ScenarioConfig::random_desk(2);
    let traj = TrajectorySet::straight_line(&cfg);
    let a = ChannelRealization::sample(&cfg, &traj, 11).unwrap();
    assert_eq!(a, ChannelRealization::sample(&cfg, &traj, 11).unwrap());
    assert_ne!(a, ChannelRealization::sample(&cfg, &traj, 12).unwrap());

    let mut b = ChannelRealization::sample(&cfg, &traj, 11).unwrap();
    let n = 3;
    let moved: Vec<_> = traj.positions.iter().map(|p| [p[n][0], p[n][1] + 5.0, p[n][2]]).collect();
    b.resample_slot(&cfg, &moved, n, 11).unwrap();
    for u in 0..cfg.uav_count {
        for v in 0..cfg.user_count() {
            for s in 0..cfg.slot_count() {
                assert_eq!(a.comm[u][v][s] == b.comm[u][v][s], s != n);
            }
        }
    }
    let orig: Vec<_> = traj.positions.iter().map(|p| p[n]).collect();
    b.resample_slot(&cfg, &orig, n, 11).unwrap();
    assert_eq!(a, b);
}
