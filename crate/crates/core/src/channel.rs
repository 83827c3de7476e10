//! Probabilistic LoS channel model: steering vectors, communication channels and echo channels.

use crate::error::{Error, Result};
use crate::linalg::{c, dyad, outer, CMat, CVec, C64, J};
use crate::scenario::{horizontal_distance, ArrayGeometry, LosModelParams, Point3, ScenarioConfig, TrajectorySet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Geometry of one UAV-to-ground link. The slant distance combines the horizontal offset
/// with the UAV altitude, and the elevation angle is in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub horizontal_distance: f64,
    pub altitude: f64,
    pub slant_distance: f64,
    pub elevation_deg: f64,
}

impl LinkGeometry {
    pub fn new(horizontal: f64, altitude: f64) -> Self {
        let slant = (horizontal * horizontal + altitude * altitude).sqrt();
        let elevation_deg = if slant > 0.0 { (altitude / slant).clamp(-1.0, 1.0).asin().to_degrees() } else { 90.0 };
        LinkGeometry { horizontal_distance: horizontal, altitude, slant_distance: slant, elevation_deg }
    }

    pub fn between(uav: &Point3, node: &Point3) -> Self {
        Self::new(horizontal_distance(uav, node), uav[2] - node[2])
    }

    pub fn elevation_rad(&self) -> f64 {
        self.elevation_deg.to_radians()
    }
}

/// LoS probability `1 / (1 + C exp(-D (φ - C)))` for an elevation angle in degrees.
pub fn los_probability(elevation_deg: f64, params: &LosModelParams) -> Result<f64> {
    if !(0.0..=90.0).contains(&elevation_deg) {
        return Err(Error::Domain(format!("elevation angle {elevation_deg} deg outside [0, 90]")));
    }
    Ok(1.0 / (1.0 + params.c * (-params.d * (elevation_deg - params.c)).exp()))
}

fn phase_step(angle: f64, geom: &ArrayGeometry) -> f64 {
    2.0 * PI * geom.element_spacing / geom.wavelength
        * angle.sin()
}

/// ULA response `[exp(-j 2π m d sin φ / λ)]`, `φ` in radians.
pub fn steering_vector(angle: f64, geom: &ArrayGeometry) -> CVec {
    let step = phase_step(angle, geom);
    CVec::from_iterator(geom.antenna_count, (0..geom.antenna_count).map(|m| (-J * (step * m as f64)).exp()))
}

/// Elementwise derivative of [`steering_vector`] with respect to the angle.
pub fn steering_derivative(angle: f64, geom: &ArrayGeometry) -> CVec {
    let k = 2.0 * PI * geom.element_spacing / geom.wavelength;
    let a = steering_vector(angle, geom);
    CVec::from_iterator(
        geom.antenna_count,
        (0..geom.antenna_count).map(|m| -J * (k * m as f64 * angle.cos()) * a[m]),
    )
}

/// Derivative of the LoS echo response `√Pr_LoS · a aᴴ` with respect to the angle.
/// The NLoS part does not depend on the angle.
pub fn echo_derivative(angle: f64, los_prob: f64, geom: &ArrayGeometry) -> CMat {
    let a = steering_vector(angle, geom);
    let da = steering_derivative(angle, geom);
    (outer(&da, &a) + outer(&a, &da)) * c(los_prob.sqrt(), 0.0)
}

/// One draw of a circularly-symmetric complex Gaussian with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(s * re, s * im)
}

fn check_distance(geometry: &LinkGeometry) -> Result<()> {
    if !(geometry.slant_distance > 0.0) {
        return Err(Error::Domain("slant distance is zero; channel gain is singular".into()));
    }
    Ok(())
}

/// Communication channel with an explicit LoS probability (useful for pinning the mixture).
pub fn comm_channel_with_prob<R: Rng + ?Sized>(
    geometry: &LinkGeometry,
    los_prob: f64,
    params: &LosModelParams,
    geom: &ArrayGeometry,
    rng: &mut R,
) -> Result<CVec> {
    check_distance(geometry)?;
    let path = params.alpha0 / geometry.slant_distance.powi(2);
    let s = steering_vector(geometry.elevation_rad(), geom);
    let w = CVec::from_iterator(geom.antenna_count, (0..geom.antenna_count).map(|_| complex_gaussian(rng)));
    Ok(s * c((los_prob * path).sqrt(), 0.0) + w * c(((1.0 - los_prob) * path).sqrt(), 0.0))
}

/// `√(Pr_LoS α0 d⁻²) s + √(Pr_NLoS α0 d⁻²) w`.
pub fn sample_comm_channel<R: Rng + ?Sized>(
    geometry: &LinkGeometry,
    params: &LosModelParams,
    geom: &ArrayGeometry,
    rng: &mut R,
) -> Result<CVec> {
    let p = los_probability(geometry.elevation_deg, params)?;
    comm_channel_with_prob(geometry, p, params, geom, rng)
}

/// Echo channel with an explicit LoS probability. Returns the matrix and the gain `β = σ_k / (2d)`.
pub fn echo_channel_with_prob<R: Rng + ?Sized>(
    geometry: &LinkGeometry,
    rcs: f64,
    los_prob: f64,
    params: &LosModelParams,
    geom: &ArrayGeometry,
    rng: &mut R,
) -> Result<(CMat, f64)> {
    check_distance(geometry)?;
    let beta = rcs / (2.0 * geometry.slant_distance);
    let a = steering_vector(geometry.elevation_rad(), geom);
    let m = geom.antenna_count;
    let mut w = CMat::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            w[(i, j)] = complex_gaussian(rng);
        }
    }
    let los = dyad(&a) * c(beta * los_prob.sqrt(), 0.0);
    let nlos = w * c(beta * ((1.0 - los_prob) * params.kappa).sqrt(), 0.0);
    Ok((los + nlos, beta))
}

/// `β √Pr_LoS a aᴴ + β √(Pr_NLoS κ) W`.
pub fn sample_echo_channel<R: Rng + ?Sized>(
    geometry: &LinkGeometry,
    rcs: f64,
    params: &LosModelParams,
    geom: &ArrayGeometry,
    rng: &mut R,
) -> Result<(CMat, f64)> {
    let p = los_probability(geometry.elevation_deg, params)?;
    echo_channel_with_prob(geometry, rcs, p, params, geom, rng)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random stream keyed by `(seed, kind, uav, node, slot)`.
///
/// Keying by link rather than by call order means a trajectory change alters only the
/// geometry of a draw, never which NLoS sample a link receives.
pub fn link_rng(seed: u64, kind: u64, uav: usize, node: usize, slot: usize) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for part in [kind, uav as u64, node as u64, slot as u64] {
        h = splitmix(h ^ part.wrapping_mul(0x2545_F491_4F6C_DD1D));
    }
    ChaCha8Rng::seed_from_u64(h)
}

pub const COMM_STREAM: u64 = 1;
pub const ECHO_STREAM: u64 = 2;

/// Sampled channels for every (UAV, node, slot) triple of a scenario and trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub antennas: usize,
    /// `comm[u][v][n]`: channel from UAV `u` to global user `v`.
    pub comm: Vec<Vec<Vec<CVec>>>,
    pub comm_los: Vec<Vec<Vec<f64>>>,
    /// `echo[u][k][n]`: echo channel of global target `k` at UAV `u`.
    pub echo: Vec<Vec<Vec<CMat>>>,
    pub echo_gain: Vec<Vec<Vec<f64>>>,
    /// Angular derivative `Ā` of the normalized echo response.
    pub echo_deriv: Vec<Vec<Vec<CMat>>>,
    pub echo_los: Vec<Vec<Vec<f64>>>,
}

impl ChannelRealization {
    pub fn uav_count(&self) -> usize {
        self.comm.len()
    }

    pub fn slot_count(&self) -> usize {
        self.comm.first().and_then(|v| v.first()).map_or(0, Vec::len)
    }

    /// Samples all links along `traj` using keyed streams derived from `seed`.
    pub fn sample(cfg: &ScenarioConfig, traj: &TrajectorySet, seed: u64) -> Result<Self> {
        let (nu, nv, nk, ns) = (cfg.uav_count, cfg.user_count(), cfg.target_count(), cfg.slot_count());
        let m = cfg.antennas();
        let mut out = ChannelRealization {
            antennas: m,
            comm: vec![vec![vec![CVec::zeros(m); ns]; nv]; nu],
            comm_los: vec![vec![vec![0.0; ns]; nv]; nu],
            echo: vec![vec![vec![CMat::zeros(m, m); ns]; nk]; nu],
            echo_gain: vec![vec![vec![0.0; ns]; nk]; nu],
            echo_deriv: vec![vec![vec![CMat::zeros(m, m); ns]; nk]; nu],
            echo_los: vec![vec![vec![0.0; ns]; nk]; nu],
        };
        for n in 0..ns {
            let positions: Vec<Point3> = (0..nu).map(|u| traj.positions[u][n]).collect();
            out.resample_slot(cfg, &positions, n, seed)?;
        }
        Ok(out)
    }

    /// Redraws every link of slot `n` for the given UAV positions. Keyed streams make the
    /// result identical to what [`ChannelRealization::sample`] draws for the same geometry.
    pub fn resample_slot(&mut self, cfg: &ScenarioConfig, positions: &[Point3], n: usize, seed: u64) -> Result<()> {
        for (u, o) in positions.iter().enumerate() {
            for v in 0..cfg.user_count() {
                let (h, p) = Self::comm_link(cfg, o, &cfg.user_position(v, n), &mut link_rng(seed, COMM_STREAM, u, v, n))?;
                self.comm[u][v][n] = h;
                self.comm_los[u][v][n] = p;
            }
            for k in 0..cfg.target_count() {
                let geo = LinkGeometry::between(o, &cfg.target_position(k, n));
                let p = los_probability(geo.elevation_deg, &cfg.los)?;
                let mut rng = link_rng(seed, ECHO_STREAM, u, k, n);
                let (phi, beta) = echo_channel_with_prob(&geo, cfg.radar_cross_sections[k], p, &cfg.los, &cfg.array, &mut rng)?;
                self.echo[u][k][n] = phi;
                self.echo_gain[u][k][n] = beta;
                self.echo_deriv[u][k][n] = echo_derivative(geo.elevation_rad(), p, &cfg.array);
                self.echo_los[u][k][n] = p;
            }
        }
        Ok(())
    }

    /// Samples one communication link; returns the channel and its LoS probability.
    pub fn comm_link<R: Rng + ?Sized>(cfg: &ScenarioConfig, uav: &Point3, node: &Point3, rng: &mut R) -> Result<(CVec, f64)> {
        let geo = LinkGeometry::between(uav, node);
        let p = los_probability(geo.elevation_deg, &cfg.los)?;
        Ok((comm_channel_with_prob(&geo, p, &cfg.los, &cfg.array, rng)?, p))
    }
}

pub const CHANNEL_SCHEMA: &str = "uav-isac/channels/v1";

/// One link in a channel dump. Matrices are column-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub kind: String,
    pub uav: usize,
    pub node: usize,
    pub slot: usize,
    pub los_prob: f64,
    #[serde(default)]
    pub gain: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deriv_re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deriv_im: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDump {
    pub schema: String,
    pub antennas: usize,
    pub uavs: usize,
    pub users: usize,
    pub targets: usize,
    pub slots: usize,
    pub entries: Vec<ChannelEntry>,
}

fn split(z: &[C64]) -> (Vec<f64>, Vec<f64>) {
    (z.iter().map(|v| v.re).collect(), z.iter().map(|v| v.im).collect())
}

fn join(re: &[f64], im: &[f64]) -> Vec<C64> {
    re.iter().zip(im).map(|(a, b)| c(*a, *b)).collect()
}

impl ChannelDump {
    pub fn from_realization(ch: &ChannelRealization) -> Self {
        let mut entries = Vec::new();
        let (nu, ns) = (ch.uav_count(), ch.slot_count());
        let nv = ch.comm.first().map_or(0, Vec::len);
        let nk = ch.echo.first().map_or(0, Vec::len);
        for u in 0..nu {
            for n in 0..ns {
                for v in 0..nv {
                    let (re, im) = split(ch.comm[u][v][n].as_slice());
                    entries.push(ChannelEntry {
                        kind: "comm".into(),
                        uav: u,
                        node: v,
                        slot: n,
                        los_prob: ch.comm_los[u][v][n],
                        gain: 0.0,
                        re,
                        im,
                        deriv_re: Vec::new(),
                        deriv_im: Vec::new(),
                    });
                }
                for k in 0..nk {
                    let (re, im) = split(ch.echo[u][k][n].as_slice());
                    let (deriv_re, deriv_im) = split(ch.echo_deriv[u][k][n].as_slice());
                    entries.push(ChannelEntry {
                        kind: "echo".into(),
                        uav: u,
                        node: k,
                        slot: n,
                        los_prob: ch.echo_los[u][k][n],
                        gain: ch.echo_gain[u][k][n],
                        re,
                        im,
                        deriv_re,
                        deriv_im,
                    });
                }
            }
        }
        ChannelDump { schema: CHANNEL_SCHEMA.into(), antennas: ch.antennas, uavs: nu, users: nv, targets: nk, slots: ns, entries }
    }

    pub fn into_realization(self) -> Result<ChannelRealization> {
        if self.schema != CHANNEL_SCHEMA {
            return Err(Error::schema("schema", format!("unsupported channel dump schema `{}`", self.schema)));
        }
        let m = self.antennas;
        let (nu, nv, nk, ns) = (self.uavs, self.users, self.targets, self.slots);
        let mut comm = vec![vec![vec![None; ns]; nv]; nu];
        let mut comm_los = vec![vec![vec![0.0; ns]; nv]; nu];
        let mut echo = vec![vec![vec![None; ns]; nk]; nu];
        let mut echo_deriv = vec![vec![vec![None; ns]; nk]; nu];
        let mut echo_gain = vec![vec![vec![0.0; ns]; nk]; nu];
        let mut echo_los = vec![vec![vec![0.0; ns]; nk]; nu];
        for (i, e) in self.entries.into_iter().enumerate() {
            let at = format!("entries[{i}]");
            match e.kind.as_str() {
                "comm" if e.uav < nu && e.node < nv && e.slot < ns && e.re.len() == m && e.im.len() == m => {
                    comm[e.uav][e.node][e.slot] = Some(CVec::from_vec(join(&e.re, &e.im)));
                    comm_los[e.uav][e.node][e.slot] = e.los_prob;
                }
                "echo"
                    if e.uav < nu
                        && e.node < nk
                        && e.slot < ns
                        && e.re.len() == m * m
                        && e.im.len() == m * m
                        && e.deriv_re.len() == m * m
                        && e.deriv_im.len() == m * m =>
                {
                    echo[e.uav][e.node][e.slot] = Some(CMat::from_vec(m, m, join(&e.re, &e.im)));
                    echo_deriv[e.uav][e.node][e.slot] = Some(CMat::from_vec(m, m, join(&e.deriv_re, &e.deriv_im)));
                    echo_gain[e.uav][e.node][e.slot] = e.gain;
                    echo_los[e.uav][e.node][e.slot] = e.los_prob;
                }
                _ => return Err(Error::schema(at, "entry kind, index or length does not match the dump header")),
            }
        }
        let missing = || Error::schema("entries", "channel dump does not cover every (uav, node, slot)");
        let fill = |t: Vec<Vec<Vec<Option<CVec>>>>| -> Result<Vec<Vec<Vec<CVec>>>> {
            t.into_iter()
                .map(|a| a.into_iter().map(|b| b.into_iter().map(|x| x.ok_or_else(missing)).collect()).collect())
                .collect()
        };
        let fill_m = |t: Vec<Vec<Vec<Option<CMat>>>>| -> Result<Vec<Vec<Vec<CMat>>>> {
            t.into_iter()
                .map(|a| a.into_iter().map(|b| b.into_iter().map(|x| x.ok_or_else(missing)).collect()).collect())
                .collect()
        };
        Ok(ChannelRealization {
            antennas: m,
            comm: fill(comm)?,
            comm_los,
            echo: fill_m(echo)?,
            echo_gain,
            echo_deriv: fill_m(echo_deriv)?,
            echo_los,
        })
    }
}

pub fn save_channels(ch: &ChannelRealization, path: impl AsRef<std::path::Path>) -> Result<()> {
    std::fs::write(path, serde_json::to_string(&ChannelDump::from_realization(ch))?)?;
    Ok(())
}

pub fn load_channels(path: impl AsRef<std::path::Path>) -> Result<ChannelRealization> {
    let dump: ChannelDump = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    dump.into_realization()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sqr;
    use std::f64::consts::FRAC_PI_2;

    fn params() -> LosModelParams {
        LosModelParams { c: 11.95, d: 0.136, alpha0: 1e-7, kappa: 0.1 }
    }

    #[test]
    fn los_probability_reference_values() {
        let p = params();
        assert!((los_probability(11.95, &p).unwrap() - 1.0 / 12.95).abs() < 1e-12);
        assert!((los_probability(11.95, &p).unwrap() - 0.077220).abs() < 5e-7);
        // 1 / (1 + 11.95 e^{-0.136 · 78.05})
        assert!((los_probability(90.0, &p).unwrap() - 0.99971).abs() < 5e-6);
        // 1 / (1 + 11.95 e^{0.136 · 11.95})
        assert!((los_probability(0.0, &p).unwrap() - 0.016207).abs() < 1e-6);
        assert!(los_probability(90.5, &p).is_err());
        assert!(los_probability(-1.0, &p).is_err());
    }

    #[test]
    fn steering_vector_reference_values() {
        let g3 = ArrayGeometry::half_wavelength(3, 0.1);
        for z in steering_vector(0.0, &g3).iter() {
            assert!((z - c(1.0, 0.0)).norm() < 1e-15);
        }
        let g2 = ArrayGeometry::half_wavelength(2, 0.1);
        let a = steering_vector(FRAC_PI_2, &g2);
        assert!((a[1] - c(-1.0, 0.0)).norm() < 1e-12);
        let b = steering_vector(30f64.to_radians(), &g2);
        assert!((b[1] - c(0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_derivative_edge_cases() {
        let g1 = ArrayGeometry::half_wavelength(1, 0.1);
        assert_eq!(steering_derivative(0.4, &g1)[0], c(0.0, 0.0));
        let g3 = ArrayGeometry::half_wavelength(3, 0.1);
        assert!(steering_derivative(FRAC_PI_2, &g3).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn pure_los_channel_is_scaled_steering_vector() {
        let geom = ArrayGeometry::half_wavelength(3, 0.1);
        let link = LinkGeometry::new(120.0, 160.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = comm_channel_with_prob(&link, 1.0, &params(), &geom, &mut rng).unwrap();
        let s = steering_vector(link.elevation_rad(), &geom) * c(1e-7f64.sqrt() / link.slant_distance, 0.0);
        assert!((h - s).norm() < 1e-20);
    }

    #[test]
    fn same_rng_state_same_draw() {
        let geom = ArrayGeometry::half_wavelength(3, 0.1);
        let link = LinkGeometry::new(50.0, 150.0);
        let a = sample_comm_channel(&link, &params(), &geom, &mut link_rng(3, 1, 0, 0, 0)).unwrap();
        let b = sample_comm_channel(&link, &params(), &geom, &mut link_rng(3, 1, 0, 0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_distance_is_singular() {
        let geom = ArrayGeometry::half_wavelength(3, 0.1);
        let link = LinkGeometry::new(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(comm_channel_with_prob(&link, 0.5, &params(), &geom, &mut rng).is_err());
        assert!(echo_channel_with_prob(&link, 0.01, 0.5, &params(), &geom, &mut rng).is_err());
    }

    #[test]
    fn echo_channel_scaling_and_los_trace() {
        let geom = ArrayGeometry::half_wavelength(3, 0.1);
        let link = LinkGeometry::new(80.0, 170.0);
        let (phi, beta) = echo_channel_with_prob(&link, 0.02, 1.0, &params(), &geom, &mut link_rng(1, 2, 0, 0, 0)).unwrap();
        assert!((beta - 0.02 / (2.0 * link.slant_distance)).abs() < 1e-18);
        assert!((phi.trace() - c(3.0 * beta, 0.0)).norm() < 1e-15);
        let (vals, _) = crate::linalg::hermitian_eigen(&phi);
        assert!(vals[0].abs() < 1e-15 && vals[1].abs() < 1e-15);

        let (_, beta2) = echo_channel_with_prob(&link, 0.04, 1.0, &params(), &geom, &mut link_rng(1, 2, 0, 0, 0)).unwrap();
        assert!((beta2 - 2.0 * beta).abs() < 1e-18);

        let mut p = params();
        p.kappa = 0.0;
        let (phi0, b0) = echo_channel_with_prob(&link, 0.02, 0.3, &p, &geom, &mut link_rng(1, 2, 0, 0, 0)).unwrap();
        let los_only = dyad(&steering_vector(link.elevation_rad(), &geom)) * c(b0 * 0.3f64.sqrt(), 0.0);
        assert!((phi0 - los_only).norm() < 1e-18);
    }

    #[test]
    fn steering_norm_is_antenna_count() {
        let geom = ArrayGeometry { antenna_count: 5, wavelength: 0.1, element_spacing: 0.037 };
        for i in 0..20 {
            let phi = -1.5 + 0.15 * i as f64;
            assert!((norm_sqr(&steering_vector(phi, &geom)) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn realization_dump_round_trips() {
        let cfg = ScenarioConfig::random_desk(4);
        let traj = TrajectorySet::straight_line(&cfg);
        let ch = ChannelRealization::sample(&cfg, &traj, 11).unwrap();
        let back = ChannelDump::from_realization(&ch).into_realization().unwrap();
        assert_eq!(ch, back);
    }
}
