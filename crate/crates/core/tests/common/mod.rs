#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uav_isac::channel::ChannelRealization;
use uav_isac::linalg::{c, CMat, CVec};
use uav_isac::metrics::BeamformerSet;
use uav_isac::scenario::{ScenarioConfig, TrajectorySet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cvec(rng: &mut impl Rng, m: usize, scale: f64) -> CVec {
    CVec::from_iterator(m, (0..m).map(|_| c(rng.random_range(-1.0..1.0) * scale, rng.random_range(-1.0..1.0) * scale)))
}

/// One UAV hovering for one 1 s slot, one user per given channel, no targets.
pub fn single_slot(channels: &[CVec], max_power: f64) -> (ScenarioConfig, ChannelRealization, TrajectorySet) {
    let m = channels[0].len();
    let mut cfg = ScenarioConfig::base(1, 1, 1.0, [0.0, 0.0, 175.0], [0.0, 0.0, 175.0]);
    cfg.array.antenna_count = m;
    cfg.user_partition = vec![(0..channels.len()).collect()];
    cfg.user_positions = vec![[10.0, 0.0, 0.0]; channels.len()];
    cfg.max_power = vec![max_power];
    let traj = TrajectorySet::straight_line(&cfg);
    let chans = ChannelRealization {
        antennas: m,
        comm: vec![channels.iter().map(|h| vec![h.clone()]).collect()],
        comm_los: vec![vec![vec![1.0]; channels.len()]],
        echo: vec![Vec::new()],
        echo_gain: vec![Vec::new()],
        echo_deriv: vec![Vec::new()],
        echo_los: vec![Vec::new()],
    };
    (cfg, chans, traj)
}

/// One UAV, one user and one target over one slot with scalar (M = 1) channels.
pub fn scalar_sensing(h: f64, deriv: f64, gain: f64, max_power: f64, gamma: f64) -> (ScenarioConfig, ChannelRealization, TrajectorySet) {
    let mut cfg = ScenarioConfig::base(1, 1, 1.0, [0.0, 0.0, 175.0], [0.0, 0.0, 175.0]);
    cfg.array.antenna_count = 1;
    cfg.user_partition = vec![vec![0]];
    cfg.target_partition = vec![vec![0]];
    cfg.user_positions = vec![[10.0, 0.0, 0.0]];
    cfg.target_positions = vec![[20.0, 0.0, 0.0]];
    cfg.radar_cross_sections = vec![0.02];
    cfg.max_power = vec![max_power];
    cfg.crb_threshold = gamma;
    let traj = TrajectorySet::straight_line(&cfg);
    let one = |x: f64| CMat::from_element(1, 1, c(x, 0.0));
    let chans = ChannelRealization {
        antennas: 1,
        comm: vec![vec![vec![CVec::from_element(1, c(h, 0.0))]]],
        comm_los: vec![vec![vec![1.0]]],
        echo: vec![vec![vec![one(gain)]]],
        echo_gain: vec![vec![vec![gain]]],
        echo_deriv: vec![vec![vec![one(deriv)]]],
        echo_los: vec![vec![vec![1.0]]],
    };
    (cfg, chans, traj)
}

/// Scenario, straight-line trajectory and its channels.
pub fn setup(cfg: ScenarioConfig) -> (ScenarioConfig, ChannelRealization, TrajectorySet) {
    let traj = TrajectorySet::straight_line(&cfg);
    let chans = ChannelRealization::sample(&cfg, &traj, cfg.rng_seed).expect("channels");
    (cfg, chans, traj)
}

/// Zero communication beams and least-power CRB-feasible sensing covariances.
pub fn sensing_only_beams(cfg: &ScenarioConfig, chans: &ChannelRealization, traj: &TrajectorySet) -> BeamformerSet {
    let mut beams = BeamformerSet::zeros(cfg);
    beams.sense_cov = uav_isac::sensing::initial_sensing(&beams, chans, traj, cfg).expect("sensing init");
    beams
}
