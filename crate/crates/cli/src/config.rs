//! Run configuration file.

use std::fmt;
use std::path::{Path, PathBuf};

use cimpcc_core::harness::{DisturbanceConfig, RaceConfig};
use cimpcc_core::nlp::SolverSettings;
use cimpcc_core::planner::{HorizonConfig, Mode, PlannerConfig, PlannerWeights};
use cimpcc_core::track::{Track, DEFAULT_SPACING, DEFAULT_WINDOW};
use cimpcc_core::tracks;
use cimpcc_core::vehicle::VehicleParams;
use cimpcc_core::velocity_map::{MappingParams, VelocityBounds};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "CIMPCC_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Mpcc,
    Cimpcc,
    Compare,
}

impl RunMode {
    pub fn planner_mode(self) -> Option<Mode> {
        match self {
            RunMode::Mpcc => Some(Mode::Mpcc),
            RunMode::Cimpcc => Some(Mode::Cimpcc),
            RunMode::Compare => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackProcessing {
    /// Moving-average window in points (odd).
    pub window: usize,
    /// Resampling spacing in meters for track files; 0 keeps the file's points.
    pub spacing: f64,
}

impl Default for TrackProcessing {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, spacing: DEFAULT_SPACING }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingSection {
    pub alpha: f64,
    pub beta_per_stage: bool,
}

impl Default for MappingSection {
    fn default() -> Self {
        Self { alpha: MappingParams::default().alpha, beta_per_stage: false }
    }
}

/// Everything a run needs. An empty file gives the default desk comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Track CSV; the built-in stadium-chicane circuit when absent. Relative
    /// paths here and in `output_dir` are resolved against the config
    /// file's directory.
    pub track: Option<PathBuf>,
    pub mode: RunMode,
    pub n_laps: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub warm_start: bool,
    /// Simulated seconds per lap before a race is abandoned.
    pub max_lap_time: f64,
    pub track_processing: TrackProcessing,
    pub horizon: HorizonConfig,
    pub weights: PlannerWeights,
    pub mapping: MappingSection,
    pub velocity: VelocityBounds,
    pub vehicle: VehicleParams,
    pub solver: SolverSettings,
    pub disturbance: DisturbanceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let race = RaceConfig::default();
        Self {
            track: None,
            mode: RunMode::Compare,
            n_laps: 5,
            seed: 1,
            output_dir: PathBuf::from("cimpcc-out"),
            warm_start: race.planner.warm_start,
            max_lap_time: race.max_lap_time,
            track_processing: TrackProcessing::default(),
            horizon: HorizonConfig::default(),
            weights: PlannerWeights::default(),
            mapping: MappingSection::default(),
            velocity: VelocityBounds::default(),
            vehicle: VehicleParams::default(),
            solver: SolverSettings::default(),
            disturbance: DisturbanceConfig::default(),
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    /// Reads a TOML (or `.json`) config, applies `CIMPCC_SEED`, resolves the
    /// track path and validates every section.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(track) = &cfg.track {
            if track.is_relative() {
                cfg.track = Some(base.join(track));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = seed
                .trim()
                .parse()
                .map_err(|_| ConfigError(format!("{SEED_ENV}=`{seed}` is not an unsigned integer")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if json {
            serde_json::from_str(text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = self.track_processing.window;
        if w == 0 || w.is_multiple_of(2) {
            return Err(ConfigError(format!("track_processing.window must be odd and positive, got {w}")));
        }
        if !(self.track_processing.spacing >= 0.0) {
            return Err(ConfigError("track_processing.spacing must be >= 0".into()));
        }
        if self.n_laps == 0 {
            return Err(ConfigError("n_laps must be at least 1".into()));
        }
        if !(self.max_lap_time > 0.0) {
            return Err(ConfigError("max_lap_time must be positive".into()));
        }
        if let Some(t) = &self.track {
            if !t.is_file() {
                return Err(ConfigError(format!("track file {} does not exist", t.display())));
            }
        }
        self.race_config().planner.validate().map_err(|e| ConfigError(e.to_string()))
    }

    pub fn race_config(&self) -> RaceConfig {
        RaceConfig {
            planner: PlannerConfig {
                horizon: self.horizon,
                weights: self.weights,
                velocity: self.velocity,
                mapping: MappingParams { alpha: self.mapping.alpha },
                beta_per_stage: self.mapping.beta_per_stage,
                vehicle: self.vehicle,
                solver: self.solver,
                warm_start: self.warm_start,
            },
            disturbance: self.disturbance,
            max_lap_time: self.max_lap_time,
        }
    }

    pub fn load_track(&self) -> Result<Track, ConfigError> {
        match &self.track {
            None => Track::from_csv(tracks::STADIUM_CHICANE_CSV, self.track_processing.window, None)
                .map_err(|e| ConfigError(e.to_string())),
            Some(path) => load_track_file(path, self.track_processing.window, self.track_processing.spacing),
        }
    }

    /// The config as written beside the outputs: defaults filled in, paths
    /// absolute.
    pub fn resolved_toml(&self) -> String {
        let mut echo = self.clone();
        if let Some(t) = &echo.track {
            echo.track = Some(std::fs::canonicalize(t).unwrap_or_else(|_| t.clone()));
        }
        echo.output_dir = std::fs::canonicalize(&echo.output_dir).unwrap_or(echo.output_dir);
        toml::to_string(&echo).expect("config serializes")
    }
}

pub fn load_track_file(path: &Path, window: usize, spacing: f64) -> Result<Track, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read track {}: {e}", path.display())))?;
    Track::from_csv(&text, window, Some(spacing)).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_default() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.weights.r1, [10.0, 3500.0, 0.0]);
        assert_eq!(cfg.horizon.input_upper, [10.0, 0.35, 10.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("n_lap = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[weights]\nq_cont = 1.0").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = RunConfig { n_laps: 17, mode: RunMode::Cimpcc, ..Default::default() };
        let back: RunConfig = toml::from_str(&cfg.resolved_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn wider_steering_is_accepted() {
        let cfg: RunConfig =
            toml::from_str("[horizon]\ninput_lower = [-10.0, -0.5, -10.0]\ninput_upper = [10.0, 0.5, 10.0]").unwrap();
        assert!(cfg.validate().is_ok());
        let bad: RunConfig = toml::from_str("[track_processing]\nwindow = 4").unwrap();
        assert!(bad.validate().is_err());
    }
}
