//! TOML run configuration.
//!
//! Stiffness and damping are given in MN/m and MN*s/m and converted to SI
//! once, in [`RunConfig::problem`]. Unknown keys are rejected. Validation
//! messages carry the line of the offending key when it can be located.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::building::{calibrate_uniform_mass, BuildingParams, SensorKind};
use crate::dqn::TrainConfig;
use crate::error::{Error, Result};
use crate::ground_motion::KanaiTajimiParams;
use crate::oracle::DEFAULT_SAMPLES;
use crate::problem::{ParameterPrior, PlacementProblem, SensorType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingSection {
    pub stiffness_mn_per_m: Vec<f64>,
    pub damping_mn_s_per_m: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses_kg: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_period_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// Coefficient of variation shared by every stiffness and damping value.
    pub cov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub kind: SensorKind,
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSection {
    pub omega_g: f64,
    pub zeta_g: f64,
    pub duration_s: f64,
    pub dt_s: f64,
    pub pga_mps2: f64,
}

/// Optional overrides of the [`TrainConfig`] defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub gamma: Option<f64>,
    pub epsilon_start: Option<f64>,
    pub epsilon_decay: Option<f64>,
    pub epsilon_min: Option<f64>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub target_sync_every: Option<usize>,
    pub episodes: Option<usize>,
    pub replay_capacity: Option<usize>,
    pub hidden: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Number of sensors to place.
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub building: BuildingSection,
    pub prior: PriorSection,
    pub sensors: Vec<SensorSection>,
    pub excitation: ExcitationSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

struct Located<'a> {
    source: &'a str,
    origin: &'a str,
}

impl Located<'_> {
    fn error(&self, table: Option<(&str, usize)>, key: &str, message: impl Into<String>) -> Error {
        let message = message.into();
        match find_key_line(self.source, table, key) {
            Some(line) => Error::Config(format!("{}:{line}: {message}", self.origin)),
            None => Error::Config(format!("{}: {message}", self.origin)),
        }
    }
}

/// 1-based line of `key = ...` inside `[table]` (or the `n`-th `[[table]]`),
/// or at top level when `table` is `None`.
fn find_key_line(source: &str, table: Option<(&str, usize)>, key: &str) -> Option<usize> {
    let mut current: Option<(String, usize)> = None;
    let mut array_counts: std::collections::HashMap<String, usize> = Default::default();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix("[[").and_then(|l| l.strip_suffix("]]")) {
            let name = name.trim().to_string();
            let count = array_counts.entry(name.clone()).or_insert(0);
            current = Some((name, *count));
            *count += 1;
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some((name.trim().to_string(), 0));
            continue;
        }
        let in_scope = match (&current, table) {
            (None, None) => true,
            (Some((name, idx)), Some((want, want_idx))) => name == want && *idx == want_idx,
            _ => false,
        };
        if in_scope {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    // Fall back to the table header itself.
    table.and_then(|(want, _)| {
        source.lines().position(|l| {
            let l = l.trim();
            l == format!("[{want}]") || l == format!("[[{want}]]")
        })
    })
    .map(|i| i + 1)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&source, &path.display().to_string())
    }

    /// Parses and validates; `origin` names the source in diagnostics.
    pub fn from_toml_str(source: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(source).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate_located(&Located { source, origin })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_located(&Located {
            source: "",
            origin: "config",
        })
    }

    fn validate_located(&self, at: &Located<'_>) -> Result<()> {
        let b = &self.building;
        let n = b.stiffness_mn_per_m.len();
        let building = Some(("building", 0));
        if n == 0 {
            return Err(at.error(building, "stiffness_mn_per_m", "at least one story is required"));
        }
        if b.damping_mn_s_per_m.len() != n {
            return Err(at.error(
                building,
                "damping_mn_s_per_m",
                format!("{} damping values for {n} stories", b.damping_mn_s_per_m.len()),
            ));
        }
        for (key, values) in [
            ("stiffness_mn_per_m", &b.stiffness_mn_per_m),
            ("damping_mn_s_per_m", &b.damping_mn_s_per_m),
        ] {
            if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(at.error(building, key, "all values must be positive"));
            }
        }
        match (&b.masses_kg, b.target_period_s) {
            (Some(_), Some(_)) => {
                return Err(at.error(
                    building,
                    "target_period_s",
                    "give either masses_kg or target_period_s, not both",
                ))
            }
            (None, None) => {
                return Err(at.error(building, "masses_kg", "give masses_kg or target_period_s"))
            }
            (Some(m), None) => {
                if m.len() != n {
                    return Err(at.error(building, "masses_kg", format!("{} masses for {n} stories", m.len())));
                }
                if m.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(at.error(building, "masses_kg", "masses must be positive"));
                }
            }
            (None, Some(t)) => {
                if !(t.is_finite() && t > 0.0) {
                    return Err(at.error(building, "target_period_s", "period must be positive"));
                }
            }
        }
        if !(self.prior.cov.is_finite() && self.prior.cov > 0.0) {
            return Err(at.error(Some(("prior", 0)), "cov", "coefficient of variation must be positive"));
        }
        if self.sensors.is_empty() {
            return Err(at.error(None, "sensors", "at least one [[sensors]] entry is required"));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            if !(s.noise_variance.is_finite() && s.noise_variance > 0.0) {
                return Err(at.error(
                    Some(("sensors", i)),
                    "noise_variance",
                    format!("noise variance must be positive, got {}", s.noise_variance),
                ));
            }
            if self.sensors[..i].iter().any(|o| o.kind == s.kind) {
                return Err(at.error(Some(("sensors", i)), "kind", format!("duplicate sensor kind {}", s.kind)));
            }
        }
        let e = &self.excitation;
        let exc = Some(("excitation", 0));
        if !(e.omega_g.is_finite() && e.omega_g > 0.0) {
            return Err(at.error(exc, "omega_g", "omega_g must be positive"));
        }
        if !(e.zeta_g > 0.0 && e.zeta_g < 1.0) {
            return Err(at.error(exc, "zeta_g", "zeta_g must lie in (0, 1)"));
        }
        if !(e.dt_s.is_finite() && e.dt_s > 0.0) {
            return Err(at.error(exc, "dt_s", format!("time step must be positive, got {}", e.dt_s)));
        }
        if !(e.duration_s.is_finite() && e.duration_s >= e.dt_s) {
            return Err(at.error(exc, "duration_s", "duration must be at least one time step"));
        }
        if !(e.pga_mps2.is_finite() && e.pga_mps2 > 0.0) {
            return Err(at.error(exc, "pga_mps2", "peak ground acceleration must be positive"));
        }
        let n_channels = n * self.sensors.len();
        if self.budget == 0 || self.budget > n_channels {
            return Err(at.error(
                None,
                "budget",
                format!("budget must be in 1..={n_channels} (stories x sensor types), got {}", self.budget),
            ));
        }
        if let Err(Error::Config(msg)) = self.train_config().validate() {
            return Err(at.error(Some(("train", 0)), first_word(&msg), msg.clone()));
        }
        if self.oracle.n_samples == 0 {
            return Err(at.error(Some(("oracle", 0)), "n_samples", "n_samples must be at least 1"));
        }
        Ok(())
    }

    pub fn building_params(&self) -> Result<BuildingParams> {
        let b = &self.building;
        let stiffness: Vec<f64> = b.stiffness_mn_per_m.iter().map(|k| k * 1e6).collect();
        let damping: Vec<f64> = b.damping_mn_s_per_m.iter().map(|c| c * 1e6).collect();
        let mass = match (&b.masses_kg, b.target_period_s) {
            (Some(m), _) => m.clone(),
            (None, Some(t)) => vec![calibrate_uniform_mass(&stiffness, t)?; stiffness.len()],
            (None, None) => return Err(Error::Config("building needs masses_kg or target_period_s".into())),
        };
        BuildingParams::new(stiffness, damping, mass)
    }

    pub fn excitation_params(&self) -> KanaiTajimiParams {
        let e = &self.excitation;
        KanaiTajimiParams {
            omega_g: e.omega_g,
            zeta_g: e.zeta_g,
            duration: e.duration_s,
            dt: e.dt_s,
            target_pga: e.pga_mps2,
            noise_std: 1.0,
        }
    }

    pub fn problem(&self) -> Result<PlacementProblem> {
        let building = self.building_params()?;
        let prior = ParameterPrior::uniform_cov(building.theta(), self.prior.cov)?;
        let sensors = self
            .sensors
            .iter()
            .map(|s| SensorType {
                kind: s.kind,
                noise_variance: s.noise_variance,
            })
            .collect();
        PlacementProblem::new(building, sensors, prior, self.excitation_params(), self.budget)
    }

    /// Defaults overlaid with the `[train]` section and the run seed.
    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        let d = TrainConfig::default();
        TrainConfig {
            gamma: t.gamma.unwrap_or(d.gamma),
            epsilon_start: t.epsilon_start.unwrap_or(d.epsilon_start),
            epsilon_decay: t.epsilon_decay.unwrap_or(d.epsilon_decay),
            epsilon_min: t.epsilon_min.unwrap_or(d.epsilon_min),
            batch_size: t.batch_size.unwrap_or(d.batch_size),
            learning_rate: t.learning_rate.unwrap_or(d.learning_rate),
            target_sync_every: t.target_sync_every.unwrap_or(d.target_sync_every),
            episodes: t.episodes.unwrap_or(d.episodes),
            replay_capacity: t.replay_capacity.unwrap_or(d.replay_capacity),
            hidden: t.hidden.unwrap_or(d.hidden),
            rng_seed: self.seed,
        }
    }
}

fn first_word(msg: &str) -> &str {
    msg.split_whitespace().next().unwrap_or("")
}
