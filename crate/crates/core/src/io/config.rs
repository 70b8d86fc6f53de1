use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_atomic, IoError};
use crate::phantom::{single_shell_scheme, AcquisitionSpec, DatasetConfig, NoiseModel, PhantomSpec};
use crate::trainer::TrainConfig;

/// Environment variable that, when set, replaces `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "DWIRATIO_OUTPUT_DIR";

/// Acquisition described by its generator rather than by an explicit table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub directions: usize,
    pub b_value: f64,
    pub scheme_seed: u64,
    pub noise_model: NoiseModel,
    pub noise_sigma: f64,
    pub b0_repeats: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        let d = AcquisitionSpec::default();
        Self {
            directions: 45,
            b_value: 1000.0,
            scheme_seed: 0,
            noise_model: d.noise_model,
            noise_sigma: d.noise_sigma,
            b0_repeats: d.b0_repeats,
        }
    }
}

impl AcquisitionConfig {
    pub fn to_spec(&self) -> Result<AcquisitionSpec, IoError> {
        if self.directions < 6 {
            return Err(IoError::Config(format!("acquisition.directions = {} (at least 6 needed)", self.directions)));
        }
        if !(self.b_value > 0.0 && self.b_value.is_finite()) {
            return Err(IoError::Config(format!("acquisition.b_value = {}", self.b_value)));
        }
        let spec = AcquisitionSpec {
            scheme: single_shell_scheme(self.directions, self.b_value, self.scheme_seed),
            noise_model: self.noise_model,
            noise_sigma: self.noise_sigma,
            b0_repeats: self.b0_repeats,
        };
        spec.validate().map_err(|e| IoError::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// Everything a CLI run needs. Missing keys take the defaults below and
/// unknown keys are rejected; saving writes every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub phantom: PhantomSpec,
    pub acquisition: AcquisitionConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    /// Seeds trained by `compare`.
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Seed for phantom generation, rendering and dataset assembly.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            phantom: PhantomSpec::desk(),
            acquisition: AcquisitionConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.phantom.validate().map_err(|e| IoError::Config(e.to_string()))?;
        self.acquisition.to_spec()?;
        self.dataset.train_fields().map_err(|e| IoError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| IoError::Config(e.to_string()))?;
        Ok(())
    }

    /// `output_dir`, unless overridden by [`OUTPUT_DIR_ENV`].
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg = RunConfig::from_json("{\"seed\": 9}").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.phantom, PhantomSpec::desk());
    }

    #[test]
    fn load_save_load_is_a_fixed_point() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        let mut cfg = RunConfig::default();
        cfg.train.epochs = 3;
        cfg.acquisition.noise_sigma = 0.125;
        cfg.save(&p).unwrap();
        let a = RunConfig::load(&p).unwrap();
        a.save(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let b = RunConfig::load(&p).unwrap();
        assert_eq!(a, cfg);
        assert_eq!(a, b);
        assert_eq!(text, b.to_json());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_json("{\"sede\": 1}"), Err(IoError::Config(_))));
        assert!(RunConfig::from_json("{\"train\": {\"batch\": 2}}").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json("{\"acquisition\": {\"directions\": 3, \"b_value\": 1000, \"scheme_seed\": 0, \"noise_model\": \"none\", \"noise_sigma\": 0, \"b0_repeats\": 1}}").is_err());
        let mut cfg = RunConfig::default();
        cfg.train.batch_size = 0;
        assert!(RunConfig::from_json(&cfg.to_json()).is_err());
    }

    #[test]
    fn acquisition_spec_matches_generator() {
        let spec = AcquisitionConfig::default().to_spec().unwrap();
        assert_eq!(spec, AcquisitionSpec::default());
    }
}
