//! Scenario configuration, validation and RIS geometry.
//!
//! All powers in the configuration file are given in dBm and converted to
//! watts exactly once, in [`SystemConfig::validate`].

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{dbm_to_watts, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Cartesian point in meters.
pub type Point3 = [f64; 3];

/// The configuration shipped with the crate (`configs/default.json`).
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../configs/default.json");

/// Full scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub carrier_frequency_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub clusters: Vec<ClusterConfig>,
    #[serde(default)]
    pub ris_ris_correlated: bool,
    pub rate_threshold_bps_hz: f64,
    pub mc_trials: usize,
    pub rng_seed: u64,
    /// Multiplier on the cluster-1 EMI quadratic form in the joint EMI+IRR
    /// scenario. 4 reproduces the doubled `n_1` of the joint received-signal
    /// model; 1 counts the cluster-1 EMI once.
    #[serde(default = "default_emi_self_factor")]
    pub emi_self_factor: f64,
    #[serde(default)]
    pub sweeps: SweepGrids,
}

fn default_emi_self_factor() -> f64 {
    4.0
}

/// Per-cluster BS / RIS / UE description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub bs_position: Point3,
    pub ris_position: Point3,
    pub ue_positions: Vec<Point3>,
    pub num_antennas: usize,
    /// Side length `L` of the square `L x L` element grid.
    pub ris_side: usize,
    /// Element area in m^2; `(lambda/4)^2` when omitted.
    #[serde(default)]
    pub element_area_m2: Option<f64>,
    pub tx_power_dbm: f64,
    /// Aggregate EMI level `A sigma^2` in dBm, or `"off"` / `null`.
    #[serde(default, with = "emi_level")]
    pub emi_power_dbm: Option<f64>,
    /// User weights; all ones when omitted.
    #[serde(default)]
    pub user_weights: Option<Vec<f64>>,
}

/// Default sweep grids used by the CLI when `--grid` is not given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrids {
    pub tx_power_dbm: Vec<f64>,
    pub ris_elements: Vec<f64>,
    pub emi_power_dbm: Vec<f64>,
}

impl Default for SweepGrids {
    fn default() -> Self {
        Self {
            tx_power_dbm: vec![0.0, 10.0, 20.0, 30.0, 40.0],
            ris_elements: vec![25.0, 100.0, 225.0, 400.0],
            emi_power_dbm: vec![-75.0, -70.0, -65.0, -60.0],
        }
    }
}

mod emi_level {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Dbm(f64),
        Word(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("off"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<f64>, D::Error> {
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Dbm(x)) => Ok(Some(x)),
            Some(Raw::Word(w)) if w.eq_ignore_ascii_case("off") => Ok(None),
            Some(Raw::Word(w)) => Err(serde::de::Error::custom(format!(
                "emi_power_dbm must be a number or \"off\", got {w:?}"
            ))),
        }
    }
}

/// Geometry-derived constants of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterDerived {
    pub num_users: usize,
    pub element_area_m2: f64,
    pub element_positions: Vec<Point3>,
    pub tx_power_w: f64,
    /// `A sigma^2` in watts; zero when EMI is off.
    pub emi_power_w: f64,
    pub weights: Vec<f64>,
    pub bs_ris_distance_m: f64,
    pub ris_ue_distances_m: Vec<f64>,
}

impl ClusterDerived {
    pub fn num_elements(&self) -> usize {
        self.element_positions.len()
    }

    /// Equal split of the BS power across its users.
    pub fn per_user_power_w(&self) -> Vec<f64> {
        vec![self.tx_power_w / self.num_users as f64; self.num_users]
    }
}

/// Wavelength, element grids and pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryDerived {
    pub wavelength_m: f64,
    pub clusters: Vec<ClusterDerived>,
    pub ris_ris_distance_m: f64,
}

/// A configuration that passed validation, with its derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: SystemConfig,
    pub geometry: GeometryDerived,
    /// Thermal noise power `N0 * B` in watts.
    pub noise_power_w: f64,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn cluster(&self, n: usize) -> &ClusterDerived {
        &self.geometry.clusters[n]
    }

    pub fn wavelength_m(&self) -> f64 {
        self.geometry.wavelength_m
    }
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// The shipped default scenario.
    pub fn default_scenario() -> Self {
        Self::from_json(DEFAULT_CONFIG_JSON).expect("shipped default config parses")
    }

    /// Checks every physical invariant and attaches derived quantities.
    ///
    /// Defaults (element area, user weights) are written back into the
    /// returned config so that validating it again is a no-op.
    pub fn validate(&self) -> Result<ValidatedConfig> {
        let mut cfg = self.clone();
        if cfg.clusters.len() != 2 {
            return Err(Error::Config(format!(
                "exactly 2 clusters required, got {}",
                cfg.clusters.len()
            )));
        }
        positive("carrier_frequency_ghz", cfg.carrier_frequency_ghz)?;
        positive("bandwidth_hz", cfg.bandwidth_hz)?;
        positive("rate_threshold_bps_hz", cfg.rate_threshold_bps_hz)?;
        finite("noise_psd_dbm_hz", cfg.noise_psd_dbm_hz)?;
        if cfg.mc_trials == 0 {
            return Err(Error::Config("mc_trials must be at least 1".into()));
        }
        if cfg.ris_ris_correlated {
            return Err(Error::Config(
                "ris_ris_correlated = true is not supported; inter-RIS channels are i.i.d.".into(),
            ));
        }
        if !(cfg.emi_self_factor.is_finite() && cfg.emi_self_factor >= 0.0) {
            return Err(Error::Config(
                "emi_self_factor must be finite and >= 0".into(),
            ));
        }

        let wavelength_m = SPEED_OF_LIGHT / (cfg.carrier_frequency_ghz * 1e9);
        let mut clusters = Vec::with_capacity(2);
        for (n, c) in cfg.clusters.iter_mut().enumerate() {
            let k = c.ue_positions.len();
            if k == 0 {
                return Err(Error::Config(format!(
                    "cluster {}: no user positions",
                    n + 1
                )));
            }
            if c.num_antennas == 0 {
                return Err(Error::Config(format!(
                    "cluster {}: num_antennas must be >= 1",
                    n + 1
                )));
            }
            if k > c.num_antennas {
                return Err(Error::ZfInfeasible {
                    cluster: n + 1,
                    users: k,
                    antennas: c.num_antennas,
                });
            }
            if c.ris_side == 0 {
                return Err(Error::Config(format!(
                    "cluster {}: ris_side must be >= 1",
                    n + 1
                )));
            }
            let area = *c
                .element_area_m2
                .get_or_insert((wavelength_m / 4.0).powi(2));
            positive(&format!("cluster {} element_area_m2", n + 1), area)?;
            finite(&format!("cluster {} tx_power_dbm", n + 1), c.tx_power_dbm)?;
            if let Some(e) = c.emi_power_dbm {
                finite(&format!("cluster {} emi_power_dbm", n + 1), e)?;
            }
            let weights = c.user_weights.get_or_insert_with(|| vec![1.0; k]).clone();
            if weights.len() != k || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::Config(format!(
                    "cluster {}: user_weights must hold {k} finite non-negative values",
                    n + 1
                )));
            }
            for p in std::iter::once(&c.bs_position)
                .chain(std::iter::once(&c.ris_position))
                .chain(c.ue_positions.iter())
            {
                if p.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config(format!(
                        "cluster {}: non-finite position",
                        n + 1
                    )));
                }
            }
            let bs_ris = distance_3d(&c.bs_position, &c.ris_position);
            let ris_ue: Vec<f64> = c
                .ue_positions
                .iter()
                .map(|u| distance_3d(&c.ris_position, u))
                .collect();
            if bs_ris <= 0.0 || ris_ue.iter().any(|d| *d <= 0.0) {
                return Err(Error::Geometry(format!(
                    "cluster {}: co-located BS/RIS/UE",
                    n + 1
                )));
            }
            clusters.push(ClusterDerived {
                num_users: k,
                element_area_m2: area,
                element_positions: ris_element_positions(c.ris_side, area),
                tx_power_w: dbm_to_watts(c.tx_power_dbm),
                emi_power_w: c.emi_power_dbm.map_or(0.0, dbm_to_watts),
                weights,
                bs_ris_distance_m: bs_ris,
                ris_ue_distances_m: ris_ue,
            });
        }
        let ris_ris = distance_3d(&cfg.clusters[0].ris_position, &cfg.clusters[1].ris_position);
        if ris_ris <= 0.0 {
            return Err(Error::Geometry("RIS 1 and RIS 2 are co-located".into()));
        }
        let noise_power_w = dbm_to_watts(cfg.noise_psd_dbm_hz + 10.0 * cfg.bandwidth_hz.log10());

        Ok(ValidatedConfig {
            config: cfg,
            geometry: GeometryDerived {
                wavelength_m,
                clusters,
                ris_ris_distance_m: ris_ris,
            },
            noise_power_w,
        })
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be finite, got {v}")))
    }
}

/// Element centres of an `L x L` RIS of element area `area`, indexed
/// row-by-row and centred on the origin of the RIS plane (z = 0).
pub fn ris_element_positions(side: usize, area: f64) -> Vec<Point3> {
    let pitch = area.sqrt();
    let half = (side as f64 - 1.0) * pitch / 2.0;
    (0..side * side)
        .map(|l| {
            let col = (l % side) as f64;
            let row = (l / side) as f64;
            [-half + pitch * col, half - pitch * row, 0.0]
        })
        .collect()
}

pub fn distance_3d(p: &Point3, q: &Point3) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
