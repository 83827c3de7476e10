//! Experiment scenarios: physical constants, user/target partitions, budgets and time grid.

mod file;
mod kinematics;
mod random;

pub use file::{load_scenario, parse_scenario, save_scenario, scenario_to_json, ScenarioFile, SCENARIO_SCHEMA};
pub use kinematics::{validate_kinematics, KinematicResiduals, TrajectorySet, UavState};
pub use random::{generate_random_scenario, generate_random_scenario_with, PartitionRanges};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Point3 = [f64; 3];

pub fn distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn horizontal_distance(a: &Point3, b: &Point3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Flight period `T` split into `N` slots of length `τ = T / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub total_duration: f64,
    pub slot_count: usize,
}

impl TimeGrid {
    pub fn new(total_duration: f64, slot_count: usize) -> Result<Self> {
        let grid = TimeGrid { total_duration, slot_count };
        grid.validate()?;
        Ok(grid)
    }

    pub fn slot_length(&self) -> f64 {
        self.total_duration / self.slot_count as f64
    }

    fn validate(&self) -> Result<()> {
        if self.slot_count == 0 {
            return Err(Error::Validation("time_grid.slot_count must be at least 1".into()));
        }
        if !(self.total_duration > 0.0) {
            return Err(Error::Validation("time_grid.total_duration must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub antenna_count: usize,
    pub wavelength: f64,
    pub element_spacing: f64,
}

impl ArrayGeometry {
    pub fn half_wavelength(antenna_count: usize, wavelength: f64) -> Self {
        ArrayGeometry { antenna_count, wavelength, element_spacing: wavelength / 2.0 }
    }

    fn validate(&self) -> Result<()> {
        if self.antenna_count == 0 {
            return Err(Error::Validation("array.antenna_count must be at least 1".into()));
        }
        if !(self.wavelength > 0.0) || !(self.element_spacing > 0.0) {
            return Err(Error::Validation("array wavelength and element spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Probabilistic LoS model constants. `alpha0` is linear (not dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosModelParams {
    pub c: f64,
    pub d: f64,
    pub alpha0: f64,
    pub kappa: f64,
}

impl LosModelParams {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.d > 0.0 && self.alpha0 > 0.0) {
            return Err(Error::Validation("los parameters C, D and alpha0 must be positive".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::Validation("los.kappa must be non-negative".into()));
        }
        Ok(())
    }
}

/// Rotary-wing propulsion power model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightPowerParams {
    /// Blade profile power in hover (W).
    pub c0: f64,
    /// Induced power in hover (W).
    pub c1: f64,
    /// Climb/descent power per m/s of vertical speed.
    pub c2: f64,
    pub tip_speed: f64,
    pub fuselage_drag_ratio: f64,
    pub rotor_solidity: f64,
    pub air_density: f64,
    pub rotor_disc_area: f64,
    /// Mean rotor induced velocity in hover (m/s).
    pub hover_speed: f64,
}

impl FlightPowerParams {
    pub fn table_one() -> Self {
        FlightPowerParams {
            c0: 798.6,
            c1: 88.6,
            c2: 11.5,
            tip_speed: 120.0,
            fuselage_drag_ratio: 0.6,
            rotor_solidity: 0.005,
            air_density: 1.226,
            rotor_disc_area: 0.503,
            hover_speed: 4.3,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.c0,
            self.c1,
            self.c2,
            self.tip_speed,
            self.fuselage_drag_ratio,
            self.rotor_solidity,
            self.air_density,
            self.rotor_disc_area,
            self.hover_speed,
        ];
        if all.iter().all(|v| *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Validation("flight power parameters must all be positive".into()))
        }
    }
}

/// Box bounds on the per-slot UAV action. Altitude bounds come from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub speed: [f64; 2],
    /// Heading range in radians.
    pub heading: [f64; 2],
}

impl ActionBounds {
    pub fn table_one() -> Self {
        let h = 5.0 * std::f64::consts::PI / 12.0;
        ActionBounds { speed: [10.0, 20.0], heading: [-h, h] }
    }
}

/// A single per-(uav, target, slot) CRB threshold that replaces the uniform value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbOverride {
    pub uav: usize,
    /// Global target index.
    pub target: usize,
    pub slot: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub uav_count: usize,
    /// Global user indices served by each UAV.
    pub user_partition: Vec<Vec<usize>>,
    /// Global target indices sensed by each UAV.
    pub target_partition: Vec<Vec<usize>>,
    pub user_positions: Vec<Point3>,
    pub target_positions: Vec<Point3>,
    /// Optional per-slot positions, indexed `[node][slot]`.
    pub user_tracks: Option<Vec<Vec<Point3>>>,
    pub target_tracks: Option<Vec<Vec<Point3>>>,
    pub start: Point3,
    pub finish: Point3,
    pub max_power: Vec<f64>,
    pub energy_budget: Vec<f64>,
    /// Uniform CRB threshold in rad².
    pub crb_threshold: f64,
    pub crb_overrides: Vec<CrbOverride>,
    pub max_speed: f64,
    pub altitude_min: f64,
    pub altitude_max: f64,
    pub min_separation: f64,
    pub noise_power: f64,
    /// Radar cross sections in m² (linear).
    pub radar_cross_sections: Vec<f64>,
    pub time_grid: TimeGrid,
    pub array: ArrayGeometry,
    pub los: LosModelParams,
    pub flight: FlightPowerParams,
    pub action_bounds: ActionBounds,
    /// Side of the square deployment area in meters.
    pub area_size: f64,
    pub rng_seed: u64,
}

impl ScenarioConfig {
    pub fn slot_count(&self) -> usize {
        self.time_grid.slot_count
    }

    pub fn slot_length(&self) -> f64 {
        self.time_grid.slot_length()
    }

    pub fn antennas(&self) -> usize {
        self.array.antenna_count
    }

    pub fn user_count(&self) -> usize {
        self.user_positions.len()
    }

    pub fn target_count(&self) -> usize {
        self.target_positions.len()
    }

    pub fn users_of(&self, u: usize) -> &[usize] {
        &self.user_partition[u]
    }

    pub fn targets_of(&self, u: usize) -> &[usize] {
        &self.target_partition[u]
    }

    pub fn user_position(&self, v: usize, n: usize) -> Point3 {
        match &self.user_tracks {
            Some(t) => t[v][n],
            None => self.user_positions[v],
        }
    }

    pub fn target_position(&self, k: usize, n: usize) -> Point3 {
        match &self.target_tracks {
            Some(t) => t[k][n],
            None => self.target_positions[k],
        }
    }

    /// CRB threshold for global target `k` sensed by `u` at slot `n`.
    pub fn crb_threshold_for(&self, u: usize, k: usize, n: usize) -> f64 {
        self.crb_overrides
            .iter()
            .rev()
            .find(|o| o.uav == u && o.target == k && o.slot == n)
            .map(|o| o.value)
            .unwrap_or(self.crb_threshold)
    }

    /// Mid altitude between the bounds, used by the straight-line initial trajectory.
    pub fn mid_altitude(&self) -> f64 {
        0.5 * (self.altitude_min + self.altitude_max)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    /// Checks every documented invariant.
    pub fn validate(&self) -> Result<()> {
        self.time_grid.validate()?;
        self.array.validate()?;
        self.los.validate()?;
        self.flight.validate()?;
        let u = self.uav_count;
        if u == 0 {
            return Err(Error::Validation("uav_count must be at least 1".into()));
        }
        for (name, len) in [
            ("user_partition", self.user_partition.len()),
            ("target_partition", self.target_partition.len()),
            ("max_power", self.max_power.len()),
            ("energy_budget", self.energy_budget.len()),
        ] {
            if len != u {
                return Err(Error::Validation(format!("{name} has {len} entries but uav_count is {u}")));
            }
        }
        check_partition("user_partition", &self.user_partition, self.user_positions.len())?;
        check_partition("target_partition", &self.target_partition, self.target_positions.len())?;
        if self.radar_cross_sections.len() != self.target_positions.len() {
            return Err(Error::Validation("radar_cross_sections must have one entry per target".into()));
        }
        if self.radar_cross_sections.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Validation("radar cross sections must be positive".into()));
        }
        for (name, pts) in [("user_positions", &self.user_positions), ("target_positions", &self.target_positions)] {
            if let Some(i) = pts.iter().position(|p| p[2] != 0.0) {
                return Err(Error::Validation(format!("{name}[{i}] must have zero altitude")));
            }
        }
        let n = self.slot_count();
        for (name, tracks, count) in [
            ("user_tracks", &self.user_tracks, self.user_positions.len()),
            ("target_tracks", &self.target_tracks, self.target_positions.len()),
        ] {
            if let Some(t) = tracks {
                if t.len() != count || t.iter().any(|tr| tr.len() != n) {
                    return Err(Error::Validation(format!("{name} must hold {n} positions for each of {count} nodes")));
                }
                if t.iter().flatten().any(|p| p[2] != 0.0) {
                    return Err(Error::Validation(format!("{name} positions must have zero altitude")));
                }
            }
        }
        if !(self.altitude_min <= self.altitude_max) {
            return Err(Error::Validation(format!(
                "altitude bounds inconsistent: H_min = {} > H_max = {}",
                self.altitude_min, self.altitude_max
            )));
        }
        if !(self.altitude_min > 0.0) {
            return Err(Error::Validation("altitude_min must be positive".into()));
        }
        if self.max_power.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Validation("max_power budgets must be non-negative".into()));
        }
        if self.energy_budget.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Validation("energy_budget values must be positive".into()));
        }
        if !(self.crb_threshold > 0.0) || self.crb_overrides.iter().any(|o| !(o.value > 0.0)) {
            return Err(Error::Validation("CRB thresholds must be positive".into()));
        }
        for o in &self.crb_overrides {
            if o.uav >= u || o.slot >= n || !self.target_partition[o.uav].contains(&o.target) {
                return Err(Error::Validation(format!(
                    "CRB override (uav {}, target {}, slot {}) does not name a sensed target",
                    o.uav, o.target, o.slot
                )));
            }
        }
        if !(self.max_speed > 0.0) || !(self.noise_power > 0.0) || !(self.min_separation >= 0.0) {
            return Err(Error::Validation("max_speed and noise_power must be positive, min_separation non-negative".into()));
        }
        if !(self.area_size > 0.0) {
            return Err(Error::Validation("area_size must be positive".into()));
        }
        let b = &self.action_bounds;
        if !(b.speed[0] >= 0.0 && b.speed[0] <= b.speed[1]) || !(b.heading[0] <= b.heading[1]) {
            return Err(Error::Validation("action bounds must be ordered ranges with non-negative speed".into()));
        }
        Ok(())
    }

    /// Reference constants with a three-UAV layout in a 500 m square.
    pub fn table_one() -> Self {
        let template = Self::base(3, 20, 40.0, [0.0, 250.0, 175.0], [500.0, 250.0, 175.0]);
        let ranges = PartitionRanges::table_one();
        generate_random_scenario_with(2024, &template, &ranges)
            .expect("built-in template is valid")
            .with_seed(7)
    }

    /// One UAV, two users, one target, ten slots.
    pub fn desk() -> Self {
        let mut cfg = Self::base(1, 10, 20.0, [100.0, 250.0, 175.0], [350.0, 250.0, 175.0]);
        cfg.user_partition = vec![vec![0, 1]];
        cfg.target_partition = vec![vec![0]];
        cfg.user_positions = vec![[180.0, 300.0, 0.0], [260.0, 190.0, 0.0]];
        cfg.target_positions = vec![[230.0, 260.0, 0.0]];
        cfg.radar_cross_sections = vec![db_to_linear(-17.0)];
        cfg
    }

    /// One UAV, one user, one target, ten slots.
    pub fn tiny() -> Self {
        let mut cfg = Self::base(1, 10, 20.0, [100.0, 250.0, 175.0], [350.0, 250.0, 175.0]);
        cfg.user_partition = vec![vec![0]];
        cfg.target_partition = vec![vec![0]];
        cfg.user_positions = vec![[225.0, 330.0, 0.0]];
        cfg.target_positions = vec![[230.0, 240.0, 0.0]];
        cfg.radar_cross_sections = vec![db_to_linear(-17.0)];
        cfg
    }

    /// Random multi-UAV desk-scale scenario (two UAVs, up to two users and one target each, eight slots).
    pub fn random_desk(seed: u64) -> Self {
        let template = Self::base(2, 8, 16.0, [100.0, 250.0, 175.0], [330.0, 250.0, 175.0]);
        let ranges = PartitionRanges { users: [1, 2], targets: [1, 1] };
        generate_random_scenario_with(seed, &template, &ranges).expect("built-in template is valid")
    }

    /// Shared physical defaults; partitions and positions are left empty.
    pub fn base(uavs: usize, slots: usize, duration: f64, start: Point3, finish: Point3) -> Self {
        ScenarioConfig {
            uav_count: uavs,
            user_partition: vec![Vec::new(); uavs],
            target_partition: vec![Vec::new(); uavs],
            user_positions: Vec::new(),
            target_positions: Vec::new(),
            user_tracks: None,
            target_tracks: None,
            start,
            finish,
            max_power: vec![1.0; uavs],
            energy_budget: vec![60.0 * duration * 1000.0 / 40.0; uavs],
            crb_threshold: 1e-4,
            crb_overrides: Vec::new(),
            max_speed: 35.0,
            altitude_min: 150.0,
            altitude_max: 200.0,
            min_separation: 10.0,
            noise_power: db_to_linear(-100.0) * 1e-3,
            radar_cross_sections: Vec::new(),
            time_grid: TimeGrid { total_duration: duration, slot_count: slots },
            array: ArrayGeometry::half_wavelength(3, 0.1),
            los: LosModelParams { c: 11.95, d: 0.136, alpha0: db_to_linear(-70.0), kappa: 0.1 },
            flight: FlightPowerParams::table_one(),
            action_bounds: ActionBounds::table_one(),
            area_size: 500.0,
            rng_seed: 7,
        }
    }
}

fn check_partition(name: &str, parts: &[Vec<usize>], total: usize) -> Result<()> {
    let mut seen = vec![false; total];
    for (u, part) in parts.iter().enumerate() {
        for &i in part {
            if i >= total {
                return Err(Error::Validation(format!("{name}[{u}] references unknown node {i}")));
            }
            if seen[i] {
                return Err(Error::Validation(format!("{name}: node {i} is assigned to more than one UAV")));
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!("{name}: node {i} is not assigned to any UAV")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_length_is_duration_over_count() {
        let g = TimeGrid::new(40.0, 20).unwrap();
        assert_eq!(g.slot_length(), 2.0);
        assert!(TimeGrid::new(40.0, 0).is_err());
    }

    #[test]
    fn presets_validate() {
        for cfg in [ScenarioConfig::table_one(), ScenarioConfig::desk(), ScenarioConfig::tiny(), ScenarioConfig::random_desk(3)] {
            cfg.validate().unwrap();
        }
        let t = ScenarioConfig::table_one();
        assert_eq!(t.uav_count, 3);
        assert_eq!(t.antennas(), 3);
        assert!((t.los.alpha0 - 1e-7).abs() < 1e-20);
    }

    #[test]
    fn overlapping_partition_is_rejected() {
        let mut cfg = ScenarioConfig::random_desk(1);
        let shared = cfg.user_partition[0][0];
        cfg.user_partition[1].push(shared);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("more than one UAV"), "{err}");
    }

    #[test]
    fn inverted_altitude_bounds_are_rejected() {
        let mut cfg = ScenarioConfig::desk();
        cfg.altitude_min = 210.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("H_min"));
    }

    #[test]
    fn crb_override_takes_precedence() {
        let mut cfg = ScenarioConfig::desk();
        cfg.crb_overrides.push(CrbOverride { uav: 0, target: 0, slot: 3, value: 5e-3 });
        cfg.validate().unwrap();
        assert_eq!(cfg.crb_threshold_for(0, 0, 3), 5e-3);
        assert_eq!(cfg.crb_threshold_for(0, 0, 2), cfg.crb_threshold);
    }
}
