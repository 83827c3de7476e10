//! JSON scenario files.
//!
//! Files carry dB-valued quantities (`alpha0_db`, `rcs_dbsm`, `noise_power_dbm`) and angles in
//! degrees. Both are converted at load time; everything in [`ScenarioConfig`] is linear and in
//! radians. Note the two renamed collisions: the rotor disc area is `rotor_disc_area` (not the
//! lifted beamformer), and altitude bounds are `altitude_min`/`altitude_max`.

use super::{
    db_to_linear, linear_to_db, ActionBounds, ArrayGeometry, CrbOverride, FlightPowerParams, LosModelParams,
    Point3, ScenarioConfig, TimeGrid,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCENARIO_SCHEMA: &str = "uav-isac/scenario/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosFile {
    pub c: f64,
    pub d: f64,
    pub alpha0_db: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBoundsFile {
    pub speed: [f64; 2],
    pub heading_deg: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    pub uav_count: usize,
    pub user_partition: Vec<Vec<usize>>,
    pub target_partition: Vec<Vec<usize>>,
    pub user_positions: Vec<Point3>,
    pub target_positions: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_tracks: Option<Vec<Vec<Point3>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_tracks: Option<Vec<Vec<Point3>>>,
    pub start: Point3,
    pub finish: Point3,
    pub max_power: Vec<f64>,
    pub energy_budget: Vec<f64>,
    pub crb_threshold: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub crb_overrides: Vec<CrbOverride>,
    pub max_speed: f64,
    pub altitude_min: f64,
    pub altitude_max: f64,
    pub min_separation: f64,
    pub noise_power_dbm: f64,
    pub rcs_dbsm: Vec<f64>,
    pub time_grid: TimeGrid,
    pub array: ArrayGeometry,
    pub los: LosFile,
    pub flight: FlightPowerParams,
    pub action_bounds: ActionBoundsFile,
    pub area_size: f64,
    pub rng_seed: u64,
}

impl From<&ScenarioConfig> for ScenarioFile {
    fn from(c: &ScenarioConfig) -> Self {
        ScenarioFile {
            schema: SCENARIO_SCHEMA.to_string(),
            uav_count: c.uav_count,
            user_partition: c.user_partition.clone(),
            target_partition: c.target_partition.clone(),
            user_positions: c.user_positions.clone(),
            target_positions: c.target_positions.clone(),
            user_tracks: c.user_tracks.clone(),
            target_tracks: c.target_tracks.clone(),
            start: c.start,
            finish: c.finish,
            max_power: c.max_power.clone(),
            energy_budget: c.energy_budget.clone(),
            crb_threshold: c.crb_threshold,
            crb_overrides: c.crb_overrides.clone(),
            max_speed: c.max_speed,
            altitude_min: c.altitude_min,
            altitude_max: c.altitude_max,
            min_separation: c.min_separation,
            noise_power_dbm: linear_to_db(c.noise_power * 1e3),
            rcs_dbsm: c.radar_cross_sections.iter().map(|s| linear_to_db(*s)).collect(),
            time_grid: c.time_grid,
            array: c.array,
            los: LosFile { c: c.los.c, d: c.los.d, alpha0_db: linear_to_db(c.los.alpha0), kappa: c.los.kappa },
            flight: c.flight,
            action_bounds: ActionBoundsFile {
                speed: c.action_bounds.speed,
                heading_deg: c.action_bounds.heading.map(f64::to_degrees),
            },
            area_size: c.area_size,
            rng_seed: c.rng_seed,
        }
    }
}

impl ScenarioFile {
    pub fn into_config(self) -> Result<ScenarioConfig> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(Error::schema(
                "schema",
                format!("unsupported schema `{}`, expected `{SCENARIO_SCHEMA}`", self.schema),
            ));
        }
        let cfg = ScenarioConfig {
            uav_count: self.uav_count,
            user_partition: self.user_partition,
            target_partition: self.target_partition,
            user_positions: self.user_positions,
            target_positions: self.target_positions,
            user_tracks: self.user_tracks,
            target_tracks: self.target_tracks,
            start: self.start,
            finish: self.finish,
            max_power: self.max_power,
            energy_budget: self.energy_budget,
            crb_threshold: self.crb_threshold,
            crb_overrides: self.crb_overrides,
            max_speed: self.max_speed,
            altitude_min: self.altitude_min,
            altitude_max: self.altitude_max,
            min_separation: self.min_separation,
            noise_power: db_to_linear(self.noise_power_dbm) * 1e-3,
            radar_cross_sections: self.rcs_dbsm.iter().map(|s| db_to_linear(*s)).collect(),
            time_grid: self.time_grid,
            array: self.array,
            los: LosModelParams {
                c: self.los.c,
                d: self.los.d,
                alpha0: db_to_linear(self.los.alpha0_db),
                kappa: self.los.kappa,
            },
            flight: self.flight,
            action_bounds: ActionBounds {
                speed: self.action_bounds.speed,
                heading: self.action_bounds.heading_deg.map(f64::to_radians),
            },
            area_size: self.area_size,
            rng_seed: self.rng_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse and validate scenario JSON text.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ScenarioFile = serde_path_to_error(de)?;
    file.into_config()
}

fn serde_path_to_error(de: &mut serde_json::Deserializer<serde_json::de::StrRead<'_>>) -> Result<ScenarioFile> {
    ScenarioFile::deserialize(de).map_err(|e| {
        // serde_json reports line/column; surface the offending key when it names one
        let msg = e.to_string();
        let path = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| format!("line {} column {}", e.line(), e.column()));
        Error::schema(path, msg)
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_scenario(&text)
}

pub fn scenario_to_json(cfg: &ScenarioConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ScenarioFile::from(cfg))?)
}

pub fn save_scenario(cfg: &ScenarioConfig, path: impl AsRef<Path>) -> Result<()> {
    let mut text = scenario_to_json(cfg)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn table_one_file_round_trips() {
        let cfg = ScenarioConfig::table_one();
        let text = scenario_to_json(&cfg).unwrap();
        assert!(text.contains("\"alpha0_db\": -70"));
        let back = parse_scenario(&text).unwrap();
        assert_eq!(back.user_partition, cfg.user_partition);
        assert!(close(back.los.alpha0, cfg.los.alpha0));
        assert!(close(back.noise_power, cfg.noise_power));
        assert!(close(back.action_bounds.heading[1], cfg.action_bounds.heading[1]));
    }

    #[test]
    fn unknown_field_reports_its_name() {
        let cfg = ScenarioConfig::desk();
        let text = scenario_to_json(&cfg).unwrap().replacen("\"max_speed\"", "\"max_sped\"", 1);
        match parse_scenario(&text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "max_sped"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let text = scenario_to_json(&ScenarioConfig::desk()).unwrap().replace(SCENARIO_SCHEMA, "uav-isac/scenario/v0");
        assert!(matches!(parse_scenario(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn inconsistent_altitudes_fail_validation() {
        let mut f = ScenarioFile::from(&ScenarioConfig::desk());
        f.altitude_min = 220.0;
        assert!(matches!(f.into_config(), Err(Error::Validation(_))));
    }
}
