//! Run configuration: TOML sections `[system]`, `[dataset]`, `[model]`, `[train]`,
//! `[recon]` and `[eval]` whose keys mirror the library's parameter structs.
//!
//! A top-level `preset = "desk" | "full"` picks the defaults. Keys left out fall
//! back to those defaults with a logged notice; unknown keys are rejected.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::compensation::{ModelConfig, PatchSpec, TrainConfig};
use crate::dataset::{SphereDistribution, BASELINE_NOISE};
use crate::error::{Error, Result};
use crate::geometry::{desk_config, SystemConfig, VoxelGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_samples: usize,
    /// Noise standard deviation relative to the 90th percentile of |rect data|.
    pub noise_fraction: f64,
    pub distribution: SphereDistribution,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 64,
            noise_fraction: BASELINE_NOISE,
            distribution: SphereDistribution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconConfig {
    /// Gaussian pre-smoothing target FWHM in mm; 0 disables it.
    pub presmooth_fwhm: f64,
    pub grid: VoxelGrid,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            presmooth_fwhm: 0.0,
            grid: VoxelGrid::default(),
        }
    }
}

impl ReconConfig {
    pub fn presmooth(&self) -> Option<f64> {
        (self.presmooth_fwhm > 0.0).then_some(self.presmooth_fwhm)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// `[inner, outer]` depth ranges below the aperture, mm.
    pub shells: Vec<[f64; 2]>,
    /// Frangi scales in voxels.
    pub frangi_sigmas: Vec<f64>,
    /// Regularizer of the known-geometry compensation in the resolution study.
    pub oracle_lambda: f64,
    /// Resolution-study pre-smoothing FWHM, mm.
    pub study_presmooth_fwhm: f64,
    /// y-profiles span `center ± profile_half_length` at `profile_step` spacing, mm.
    pub profile_half_length: f64,
    pub profile_step: f64,
    /// Rect half-width held fixed in FWHM fits (the phantom sphere radius), mm.
    pub sphere_half_width: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            shells: vec![[25.0, 35.0], [35.0, 45.0]],
            frangi_sigmas: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            oracle_lambda: 1e-4,
            study_presmooth_fwhm: 0.5,
            profile_half_length: 4.0,
            profile_step: 0.05,
            sphere_half_width: 1.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub system: SystemConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub recon: ReconConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Defaults for a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        let system = desk_config(name)?;
        Ok(match name {
            "desk" => Self {
                preset: name.into(),
                system,
                dataset: DatasetConfig::default(),
                model: ModelConfig {
                    n_kernels: 16,
                    patch: PatchSpec::new(8, 8),
                    widths: vec![4, 8, 16],
                    ..ModelConfig::default()
                },
                train: TrainConfig {
                    lr: 1e-2,
                    ..TrainConfig::default()
                },
                recon: ReconConfig {
                    presmooth_fwhm: 0.0,
                    grid: VoxelGrid::covering([-60.0, -60.0, -60.0], 1.0, [120, 120, 60]),
                },
                eval: EvalConfig::default(),
            },
            _ => Self {
                preset: name.into(),
                system,
                dataset: DatasetConfig::default(),
                model: ModelConfig::default(),
                train: TrainConfig::default(),
                recon: ReconConfig::default(),
                eval: EvalConfig::default(),
            },
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: Table = text.parse().map_err(|e: toml::de::Error| Error::config(format!("config is not valid TOML: {e}")))?;
        let preset = match user.get("preset") {
            None => {
                log::info!("config: preset not set, using default \"desk\"");
                "desk".to_string()
            }
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(Error::config(format!("preset must be a string, got {other}"))),
        };
        let defaults = Self::preset(&preset)?;
        let cfg: Self = merged("", &defaults, &user)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Fully resolved configuration, every key explicit.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config structs serialize to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.dataset.distribution.validate()?;
        if self.dataset.n_samples == 0 {
            return Err(Error::config("dataset.n_samples must be at least 1"));
        }
        if !(self.dataset.noise_fraction >= 0.0 && self.dataset.noise_fraction.is_finite()) {
            return Err(Error::config("dataset.noise_fraction must be nonnegative"));
        }
        self.model.patch.validate(&self.system)?;
        self.train.validate()?;
        self.recon.grid.validate()?;
        if !(self.recon.presmooth_fwhm >= 0.0) {
            return Err(Error::config("recon.presmooth_fwhm must be nonnegative"));
        }
        if self.eval.shells.iter().any(|[a, b]| !(a < b)) {
            return Err(Error::config("every eval shell needs inner < outer"));
        }
        Ok(())
    }
}

/// Overlays `user` on the serialized defaults, recursing into tables.
fn overlay(path: &str, base: &mut Table, user: &Table) -> Result<()> {
    for (k, v) in user {
        let full = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match (base.get_mut(k), v) {
            (None, _) => return Err(Error::config(format!("unknown key `{full}`"))),
            (Some(Value::Table(b)), Value::Table(u)) => overlay(&full, b, u)?,
            (Some(Value::Table(_)), _) => return Err(Error::config(format!("`{full}` must be a table"))),
            (Some(slot), _) => *slot = v.clone(),
        }
    }
    for (k, v) in base.iter() {
        if !user.contains_key(k) && !(path.is_empty() && k == "preset") {
            let full = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            match v {
                Value::Table(_) => log::info!("config: section [{full}] not set, using defaults"),
                _ => log::info!("config: {full} not set, using default {v}"),
            }
        }
    }
    Ok(())
}

fn merged<S: Serialize + DeserializeOwned>(path: &str, defaults: &S, user: &Table) -> Result<S> {
    let mut base = Table::try_from(defaults).map_err(|e| Error::config(e.to_string()))?;
    overlay(path, &mut base, user)?;
    base.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))
}
