use super::{distance, horizontal_distance, Point3, ScenarioConfig};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Per-slot kinematic annotation of one UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Point3,
    pub horizontal_speed: f64,
    pub heading: f64,
    pub vertical_speed: f64,
}

/// UAV waypoints, one per slot: `positions[u][n]` is where UAV `u` sits during slot `n`.
/// Slot 0 is the start point and slot `N - 1` the destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub positions: Vec<Vec<Point3>>,
    pub slot_length: f64,
}

impl TrajectorySet {
    pub fn new(positions: Vec<Vec<Point3>>, slot_length: f64) -> Self {
        TrajectorySet { positions, slot_length }
    }

    pub fn uav_count(&self) -> usize {
        self.positions.len()
    }

    pub fn slot_count(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// Straight line from start to finish at mid altitude, with the endpoints at the
    /// configured start/finish points.
    pub fn straight_line(cfg: &ScenarioConfig) -> Self {
        let n = cfg.slot_count();
        let h = cfg.mid_altitude();
        let path: Vec<Point3> = (0..n)
            .map(|i| {
                if i == 0 {
                    return cfg.start;
                }
                if i == n - 1 {
                    return cfg.finish;
                }
                let f = i as f64 / (n - 1) as f64;
                [
                    cfg.start[0] + f * (cfg.finish[0] - cfg.start[0]),
                    cfg.start[1] + f * (cfg.finish[1] - cfg.start[1]),
                    h,
                ]
            })
            .collect();
        let mut positions = vec![path; cfg.uav_count];
        // fan the UAVs out sideways so interior waypoints respect the separation bound
        let u = cfg.uav_count;
        if u > 1 {
            let dx = cfg.finish[0] - cfg.start[0];
            let dy = cfg.finish[1] - cfg.start[1];
            let len = (dx * dx + dy * dy).sqrt().max(1e-12);
            let normal = [-dy / len, dx / len];
            let gap = 2.0 * cfg.min_separation.max(1.0);
            for (k, p) in positions.iter_mut().enumerate() {
                let offset = (k as f64 - (u - 1) as f64 / 2.0) * gap;
                for i in 1..n.saturating_sub(1) {
                    let bump = offset * (std::f64::consts::PI * i as f64 / (n - 1) as f64).sin().max(0.5);
                    p[i][0] += bump * normal[0];
                    p[i][1] += bump * normal[1];
                }
            }
        }
        TrajectorySet::new(positions, cfg.slot_length())
    }

    /// Kinematic state during slot `n`: the move from `n - 1` to `n`. Slot 0 is hover at the start.
    pub fn state(&self, u: usize, n: usize) -> UavState {
        let p = self.positions[u][n];
        if n == 0 {
            return UavState { position: p, horizontal_speed: 0.0, heading: 0.0, vertical_speed: 0.0 };
        }
        let q = self.positions[u][n - 1];
        let tau = self.slot_length;
        UavState {
            position: p,
            horizontal_speed: horizontal_distance(&p, &q) / tau,
            heading: (p[1] - q[1]).atan2(p[0] - q[0]),
            vertical_speed: (p[2] - q[2]).abs() / tau,
        }
    }

    pub fn states(&self, u: usize) -> Vec<UavState> {
        (0..self.slot_count()).map(|n| self.state(u, n)).collect()
    }
}

/// Residual per kinematic constraint; zero means satisfied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KinematicResiduals {
    /// Largest excess of a slot-to-slot move over `a_max · τ`.
    pub step: f64,
    /// Largest distance of a trajectory endpoint from its required point.
    pub endpoint: f64,
    /// Largest violation of the altitude band.
    pub altitude: f64,
    /// Largest shortfall of a pairwise distance below `d_min` (interior slots).
    pub separation: f64,
}

impl KinematicResiduals {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn max(&self) -> f64 {
        self.step.max(self.endpoint).max(self.altitude).max(self.separation)
    }

    pub fn feasible(&self) -> bool {
        self.max() <= Self::TOLERANCE
    }
}

/// Residuals of the velocity, endpoint, altitude and collision constraints.
///
/// All UAVs share the start and finish points, so separation is only enforced on interior slots.
pub fn validate_kinematics(traj: &TrajectorySet, cfg: &ScenarioConfig) -> Result<KinematicResiduals> {
    let n = cfg.slot_count();
    if traj.uav_count() != cfg.uav_count || traj.positions.iter().any(|p| p.len() != n) {
        return Err(Error::Structural(format!(
            "trajectory has {} UAVs x {} slots, scenario expects {} x {}",
            traj.uav_count(),
            traj.slot_count(),
            cfg.uav_count,
            n
        )));
    }
    let reach = cfg.max_speed * cfg.slot_length();
    let mut r = KinematicResiduals::default();
    for path in &traj.positions {
        for w in path.windows(2) {
            r.step = r.step.max(distance(&w[0], &w[1]) - reach);
        }
        r.endpoint = r.endpoint.max(distance(&path[0], &cfg.start)).max(distance(&path[n - 1], &cfg.finish));
        for p in path {
            r.altitude = r.altitude.max(cfg.altitude_min - p[2]).max(p[2] - cfg.altitude_max);
        }
    }
    for a in 0..cfg.uav_count {
        for b in a + 1..cfg.uav_count {
            for s in 1..n.saturating_sub(1) {
                let gap = distance(&traj.positions[a][s], &traj.positions[b][s]);
                r.separation = r.separation.max(cfg.min_separation - gap);
            }
        }
    }
    r.step = r.step.max(0.0);
    r.altitude = r.altitude.max(0.0);
    r.separation = r.separation.max(0.0);
    Ok(r)
}
