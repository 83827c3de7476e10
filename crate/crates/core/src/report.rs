//! Run manifests and the CSV/JSON artifacts written into a results directory.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::metrics::{compute_crb, compute_rates, energy_ledger};
use crate::orchestrator::{convergence_csv, trajectory_csv, BcdReport, BcdStatus, FinalResiduals};
use crate::rl::training_curve_csv;
use crate::scenario::ScenarioConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

pub const MANIFEST_SCHEMA: &str = "uav-isac/manifest/v1";
pub const RESULTS_SCHEMA: &str = "uav-isac/results/v1";
pub const RATES_HEADER: &str = "# uav-isac rates v1";
pub const CRB_HEADER: &str = "# uav-isac crb v1";
pub const ENERGY_HEADER: &str = "# uav-isac energy v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Written before any computation starts. Wall-clock times are logged, not stored, so that
/// a results directory is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: String,
    pub command: String,
    pub scenario_path: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub overrides: serde_json::Value,
    pub settings: serde_json::Value,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::schema("schema", format!("expected `{MANIFEST_SCHEMA}`, found `{}`", m.schema)));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub schema: String,
    pub label: String,
    pub status: BcdStatus,
    pub outer_iterations: usize,
    /// bits over the whole horizon
    pub sum_rate_bits: f64,
    /// rad²
    pub min_crb: f64,
    pub max_crb: f64,
    pub min_crb_margin: f64,
    /// joules per UAV
    pub energy_margins_j: Vec<f64>,
    pub residuals: FinalResiduals,
    pub policy_reward: Option<f64>,
}

pub fn rates_csv(report: &BcdReport, cfg: &ScenarioConfig) -> Result<String> {
    let rates = compute_rates(&report.beams, &report.channels, cfg)?;
    let mut s = format!("{RATES_HEADER}\nslot,uav,user,sinr,rate_bits\n");
    for n in 0..cfg.slot_count() {
        for (u, per) in rates.links.iter().enumerate() {
            for (lv, slots) in per.iter().enumerate() {
                let l = &slots[n];
                let _ = writeln!(s, "{n},{u},{},{:.12e},{:.12e}", cfg.users_of(u)[lv], l.sinr, l.rate);
            }
        }
    }
    Ok(s)
}

pub fn crb_csv(report: &BcdReport, cfg: &ScenarioConfig) -> Result<String> {
    let crb = compute_crb(&report.beams, &report.channels, cfg)?;
    let mut s = format!("{CRB_HEADER}\nslot,uav,target,crb_rad2,threshold_rad2\n");
    for n in 0..cfg.slot_count() {
        for (u, per) in crb.entries.iter().enumerate() {
            for (lk, slots) in per.iter().enumerate() {
                let e = &slots[n];
                let _ = writeln!(s, "{n},{u},{},{:.12e},{:.12e}", cfg.targets_of(u)[lk], e.value, e.threshold);
            }
        }
    }
    Ok(s)
}

pub fn energy_csv(report: &BcdReport, cfg: &ScenarioConfig) -> String {
    let ledger = energy_ledger(&report.beams, &report.trajectory, cfg);
    let mut s = format!("{ENERGY_HEADER}\nuav,slot,cs_j,flight_j\n");
    for u in 0..cfg.uav_count {
        for n in 0..cfg.slot_count() {
            let _ = writeln!(s, "{u},{n},{:.12e},{:.12e}", ledger.cs[u][n], ledger.flight[u][n]);
        }
    }
    s
}

pub fn summary(report: &BcdReport) -> ResultSummary {
    ResultSummary {
        schema: RESULTS_SCHEMA.into(),
        label: report.label.clone(),
        status: report.status.clone(),
        outer_iterations: report.records.len(),
        sum_rate_bits: report.sum_rate,
        min_crb: report.min_crb,
        max_crb: report.max_crb,
        min_crb_margin: report.min_crb_margin,
        energy_margins_j: report.energy_margins.clone(),
        residuals: report.residuals,
        policy_reward: report.policy_reward,
    }
}

/// Writes every artifact of a finished run into `dir`.
pub fn write_results(dir: &Path, report: &BcdReport, cfg: &ScenarioConfig) -> Result<()> {
    std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(&summary(report))? + "\n")?;
    std::fs::write(dir.join("convergence.csv"), convergence_csv(report))?;
    std::fs::write(dir.join("trajectory.csv"), trajectory_csv(&report.trajectory))?;
    std::fs::write(dir.join("rates.csv"), rates_csv(report, cfg)?)?;
    std::fs::write(dir.join("crb.csv"), crb_csv(report, cfg)?)?;
    std::fs::write(dir.join("energy.csv"), energy_csv(report, cfg))?;
    if let Some(p) = &report.policy {
        p.save(dir.join("policy.json"))?;
    }
    if !report.curve.is_empty() {
        std::fs::write(dir.join("training_curve.csv"), training_curve_csv(&report.curve))?;
    }
    Ok(())
}

pub fn dump_channels(ch: &ChannelRealization, path: &Path) -> Result<()> {
    crate::channel::save_channels(ch, path)
}

/// Reads a versioned CSV, checking the header line, and returns the data rows (without
/// the column-name row).
pub fn read_versioned_csv(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or_default();
    if first != header {
        return Err(Error::schema(
            path.display().to_string(),
            format!("expected header `{header}`, found `{first}`"),
        ));
    }
    lines.next();
    Ok(lines.filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_string).collect()).collect())
}
