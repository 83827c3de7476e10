use super::{db_to_linear, ScenarioConfig};
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Inclusive ranges for the number of users and targets assigned to each UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionRanges {
    pub users: [usize; 2],
    pub targets: [usize; 2],
}

impl PartitionRanges {
    pub fn table_one() -> Self {
        PartitionRanges { users: [3, 5], targets: [2, 4] }
    }
}

impl Default for PartitionRanges {
    fn default() -> Self {
        Self::table_one()
    }
}

/// Random scenario with the reference partition sizes (3 to 5 users, 2 to 4 targets per UAV).
pub fn generate_random_scenario(seed: u64, template: &ScenarioConfig) -> Result<ScenarioConfig> {
    generate_random_scenario_with(seed, template, &PartitionRanges::table_one())
}

/// Samples partition sizes and node positions (uniform in the square area, zero altitude).
/// Every other field, including the shared start and finish points, comes from `template`.
pub fn generate_random_scenario_with(
    seed: u64,
    template: &ScenarioConfig,
    ranges: &PartitionRanges,
) -> Result<ScenarioConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = template.clone();
    let side = template.area_size;
    let rcs = template.radar_cross_sections.first().copied().unwrap_or_else(|| db_to_linear(-17.0));

    cfg.user_partition.clear();
    cfg.target_partition.clear();
    cfg.user_positions.clear();
    cfg.target_positions.clear();
    cfg.radar_cross_sections.clear();
    for _ in 0..template.uav_count {
        let nv = rng.random_range(ranges.users[0]..=ranges.users[1]);
        let nk = rng.random_range(ranges.targets[0]..=ranges.targets[1]);
        let first_v = cfg.user_positions.len();
        for _ in 0..nv {
            cfg.user_positions.push([rng.random_range(0.0..=side), rng.random_range(0.0..=side), 0.0]);
        }
        cfg.user_partition.push((first_v..first_v + nv).collect());
        let first_k = cfg.target_positions.len();
        for _ in 0..nk {
            cfg.target_positions.push([rng.random_range(0.0..=side), rng.random_range(0.0..=side), 0.0]);
            cfg.radar_cross_sections.push(rcs);
        }
        cfg.target_partition.push((first_k..first_k + nk).collect());
    }
    cfg.user_tracks = None;
    cfg.target_tracks = None;
    cfg.crb_overrides.clear();
    cfg.rng_seed = seed;
    cfg.validate()?;
    Ok(cfg)
}
