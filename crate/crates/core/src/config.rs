//! Scene and experiment configuration.
//!
//! Files are TOML with a strict schema: unknown keys are errors. Angles in
//! files carry their unit in the key name (`_deg` or `_rad`).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::SensorPair;
use crate::solver::{self, Geometry, Media, Violation};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid scene: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("invalid frequency grid: {0}")]
    Frequencies(String),
    #[error("invalid sensors: {0}")]
    Sensors(String),
    #[error("invalid {section} section: {reason}")]
    Section { section: &'static str, reason: String },
}

/// Linearly spaced frequencies, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl FrequencyGrid {
    pub fn values(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + step * i as f64).collect()
    }

    fn check(&self) -> Result<(), ConfigError> {
        if !(self.min > 0.0) {
            return Err(ConfigError::Frequencies(format!("min = {} must be positive", self.min)));
        }
        if !(self.min < self.max) {
            return Err(ConfigError::Frequencies(format!("min = {} must be below max = {}", self.min, self.max)));
        }
        if self.count < 2 {
            return Err(ConfigError::Frequencies(format!("count = {} must be at least 2", self.count)));
        }
        Ok(())
    }
}

/// The physical scene shared by every experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub media: Media,
    pub geometry: Geometry,
    pub sensors: SensorPair,
    pub freqs: FrequencyGrid,
    pub truncation_override: Option<usize>,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            media: Media::water_tissue(),
            geometry: Geometry::default_scene(),
            sensors: SensorPair::asymmetric(),
            freqs: FrequencyGrid { min: 200.0, max: 2000.0, count: 41 },
            truncation_override: None,
            seed: 7,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = solver::validate_geometry(&self.geometry, &self.media);
        if !v.is_empty() {
            return Err(ConfigError::Invalid(v));
        }
        self.freqs.check()?;
        for (name, (t, p)) in [("left", self.sensors.left), ("right", self.sensors.right)] {
            if !(0.0..=PI).contains(&t) || !p.is_finite() {
                return Err(ConfigError::Sensors(format!("{name} theta = {t} outside [0, π]")));
            }
        }
        let [l, r] = self.sensors.positions(1.0);
        if (l - r).norm() < 1e-9 {
            return Err(ConfigError::Sensors("left and right coincide".into()));
        }
        if let Some(p) = self.truncation_override {
            if p < 4 {
                return Err(ConfigError::Section { section: "scene", reason: format!("truncation_override = {p} < 4") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorsFile {
    /// `[theta, phi]` in degrees.
    pub left_deg: [f64; 2],
    pub right_deg: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeSection {
    pub truth_rad: [f64; 2],
    #[serde(default)]
    pub init_rad: Option<[f64; 2]>,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_lr() -> f64 {
    0.02
}
fn default_iters() -> usize {
    100
}
fn default_patience() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamformSection {
    pub look_rad: [f64; 2],
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSection {
    pub steps: usize,
    pub start_deg: [f64; 2],
    pub end_deg: [f64; 2],
    pub init_rad: [f64; 2],
    pub sigma_ild_db: f64,
    pub sigma_itd_us: f64,
    pub sigma_acc: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_dt() -> f64 {
    1.0
}

/// On-disk layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    #[serde(default)]
    pub truncation_override: Option<usize>,
    pub media: Media,
    pub geometry: Geometry,
    pub sensors: SensorsFile,
    pub freqs: FrequencyGrid,
    #[serde(default)]
    pub localize: Option<LocalizeSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub beamform: Option<BeamformSection>,
    #[serde(default)]
    pub track: Option<TrackSection>,
}

impl ConfigFile {
    pub fn scene(&self) -> SceneConfig {
        let rad = |a: [f64; 2]| (a[0].to_radians(), a[1].to_radians());
        SceneConfig {
            media: self.media,
            geometry: self.geometry,
            sensors: SensorPair { left: rad(self.sensors.left_deg), right: rad(self.sensors.right_deg) },
            freqs: self.freqs,
            truncation_override: self.truncation_override,
            seed: self.seed,
        }
    }

    pub fn from_scene(scene: &SceneConfig) -> Self {
        let deg = |a: (f64, f64)| [a.0.to_degrees(), a.1.to_degrees()];
        Self {
            seed: scene.seed,
            truncation_override: scene.truncation_override,
            media: scene.media,
            geometry: scene.geometry,
            sensors: SensorsFile { left_deg: deg(scene.sensors.left), right_deg: deg(scene.sensors.right) },
            freqs: scene.freqs,
            localize: None,
            sweep: None,
            beamform: None,
            track: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        file.scene().validate()?;
        file.check_sections()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    fn check_sections(&self) -> Result<(), ConfigError> {
        if let Some(l) = &self.localize {
            if !(l.learning_rate > 0.0) || l.patience > l.max_iters {
                return Err(ConfigError::Section {
                    section: "localize",
                    reason: "learning_rate must be positive and patience <= max_iters".into(),
                });
            }
        }
        if let Some(s) = &self.sweep {
            if s.trials == 0 || s.snr_db.is_empty() {
                return Err(ConfigError::Section { section: "sweep", reason: "needs trials >= 1 and at least one SNR".into() });
            }
        }
        if let Some(b) = &self.beamform {
            if b.grid < 12 {
                return Err(ConfigError::Section { section: "beamform", reason: format!("grid = {} < 12", b.grid) });
            }
        }
        if let Some(t) = &self.track {
            if t.steps == 0 || !(t.dt > 0.0) || t.sigma_ild_db < 0.0 || t.sigma_itd_us < 0.0 || t.sigma_acc < 0.0 {
                return Err(ConfigError::Section {
                    section: "track",
                    reason: "needs steps >= 1, dt > 0 and non-negative noise levels".into(),
                });
            }
        }
        Ok(())
    }
}

/// Load and validate the scene part of a config file.
pub fn load_config(path: &Path) -> Result<SceneConfig, ConfigError> {
    Ok(ConfigFile::load(path)?.scene())
}
