//! Experiment configuration (TOML). Every field has a default, so an empty
//! file, or no file at all, describes the reference feedback experiment.

use std::fs;
use std::path::Path;

use burstpdmp_core::model::{JumpKind, Scaling};
use burstpdmp_core::{BurstModel, BurstRate, JumpDensity, ModelParams, RateKind, ScalingFamily, State2D};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; every replica draws from its own stream of this seed.
    pub seed: u64,
    pub output_dir: String,
    pub model: ModelConfig,
    pub sweep: SweepConfig,
    pub simulate: SimulateConfig,
    pub stationary: StationaryConfig,
    pub moments: MomentsConfig,
    pub density: DensityConfig,
}

/// The model at the reference `gamma1` and the family that extends it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    pub lambda2: f64,
    pub scaling: Scaling,
    pub initial_x: f64,
    pub initial_y: f64,
    pub rate: RateKind,
    pub jump: JumpKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// `γ₁` values for `simulate` and the figure commands.
    pub gamma1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub horizon: f64,
    /// Spacing of recorded observations, 0 for none; jumps are always recorded.
    pub observe_every: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub n_samples: usize,
    /// Defaults to `20/γ₂`.
    pub burn_in: Option<f64>,
    /// Defaults to ten majorant events per sample, `10·n_samples/φ̄`.
    pub window: Option<f64>,
    pub bins: usize,
    /// Upper tail mass of the stationary law beyond the histogram range.
    pub tail_mass: f64,
    /// Quantile of the `X` samples used as the `X` histogram range.
    pub x_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub gamma1: Vec<f64>,
    pub k_max: usize,
    pub replicas: usize,
    /// Evaluation time; defaults to `5/γ₂`.
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub bins: usize,
    /// Horizon of the transient solve started at `initial_y`.
    pub horizon: f64,
    /// `‖L v‖₁` threshold for the numerical steady state.
    pub steady_tol: f64,
    pub cfl: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: "burstpdmp-out".into(),
            model: ModelConfig::default(),
            sweep: SweepConfig::default(),
            simulate: SimulateConfig::default(),
            stationary: StationaryConfig::default(),
            moments: MomentsConfig::default(),
            density: DensityConfig::default(),
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            gamma1: 1.0,
            gamma2: 1.0,
            lambda2: 2.0,
            scaling: Scaling::S2,
            initial_x: 0.0,
            initial_y: 0.0,
            rate: RateKind::Hill {
                phi0: 5.0,
                k: 1.0,
                a: 4.0,
                b: 1.0,
                n: 4.0,
            },
            jump: JumpKind::Exponential { mean: 0.5 },
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            gamma1: vec![0.1, 1.0, 10.0, 100.0],
        }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            observe_every: 0.1,
            replicas: 1,
        }
    }
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            burn_in: None,
            window: None,
            bins: 200,
            tail_mass: 1e-6,
            x_quantile: 0.999,
        }
    }
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            gamma1: vec![1.0, 10.0, 100.0, 1000.0],
            k_max: 2,
            replicas: 100_000,
            t: None,
        }
    }
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            bins: 600,
            horizon: 10.0,
            steady_tol: 1e-9,
            cfl: 0.9,
        }
    }
}

fn positive(field: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(field: &str, v: f64) -> CliResult<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(
            field,
            format!("must be nonnegative and finite, got {v}"),
        ))
    }
}

fn grid(field: &str, values: &[f64]) -> CliResult<()> {
    if values.is_empty() {
        return Err(CliError::config(field, "must list at least one value"));
    }
    for v in values {
        positive(field, *v)?;
    }
    Ok(())
}

fn at_least(field: &str, v: usize, min: usize) -> CliResult<()> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::config(field, format!("must be at least {min}, got {v}")))
    }
}

impl ModelConfig {
    pub fn params(&self) -> CliResult<ModelParams> {
        ModelParams::new(self.gamma1, self.gamma2, self.lambda2).map_err(|e| CliError::in_section("model", e))
    }

    pub fn rate(&self) -> CliResult<BurstRate> {
        BurstRate::from_kind(self.rate.clone()).map_err(|e| CliError::in_section("model.rate", e))
    }

    pub fn jump(&self) -> CliResult<JumpDensity> {
        JumpDensity::from_kind(self.jump.clone()).map_err(|e| CliError::in_section("model.jump", e))
    }

    pub fn base_model(&self) -> CliResult<BurstModel> {
        BurstModel::new(self.params()?, self.rate()?, self.jump()?).map_err(|e| CliError::in_section("model", e))
    }

    pub fn family(&self) -> CliResult<ScalingFamily> {
        Ok(ScalingFamily::new(self.scaling, self.base_model()?))
    }

    pub fn initial_state(&self) -> State2D {
        State2D::new(0.0, self.initial_x, self.initial_y)
    }
}

impl ExperimentConfig {
    /// Checks every field; errors name the offending field path.
    pub fn validate(&self) -> CliResult<()> {
        if self.seed > i64::MAX as u64 {
            return Err(CliError::config("seed", "must be below 2^63"));
        }
        if self.output_dir.trim().is_empty() {
            return Err(CliError::config("output_dir", "must not be empty"));
        }
        let m = &self.model;
        m.family()?;
        nonnegative("model.initial_x", m.initial_x)?;
        nonnegative("model.initial_y", m.initial_y)?;
        grid("sweep.gamma1", &self.sweep.gamma1)?;

        let s = &self.simulate;
        nonnegative("simulate.horizon", s.horizon)?;
        nonnegative("simulate.observe_every", s.observe_every)?;
        at_least("simulate.replicas", s.replicas, 1)?;

        let st = &self.stationary;
        at_least("stationary.n_samples", st.n_samples, 1)?;
        at_least("stationary.bins", st.bins, 1)?;
        if let Some(b) = st.burn_in {
            nonnegative("stationary.burn_in", b)?;
        }
        if let Some(w) = st.window {
            positive("stationary.window", w)?;
        }
        if !(st.tail_mass > 0.0 && st.tail_mass < 1.0) {
            return Err(CliError::config("stationary.tail_mass", "must lie in (0, 1)"));
        }
        if !(st.x_quantile > 0.0 && st.x_quantile <= 1.0) {
            return Err(CliError::config("stationary.x_quantile", "must lie in (0, 1]"));
        }

        let mo = &self.moments;
        grid("moments.gamma1", &mo.gamma1)?;
        at_least("moments.k_max", mo.k_max, 1)?;
        at_least("moments.replicas", mo.replicas, 8)?;
        if let Some(t) = mo.t {
            positive("moments.t", t)?;
        }

        let d = &self.density;
        at_least("density.bins", d.bins, 1)?;
        nonnegative("density.horizon", d.horizon)?;
        positive("density.steady_tol", d.steady_tol)?;
        if !(d.cfl > 0.0 && d.cfl <= 1.0) {
            return Err(CliError::config("density.cfl", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::config("config", e.to_string()))
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config("config", e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> CliResult<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    /// Reads a TOML config, or the config embedded in a run manifest (JSON).
    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            let manifest: RunManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
            return Ok(manifest.config);
        }
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn partial_sections() {
        let c = ExperimentConfig::from_toml(
            "seed = 7\n[model]\nscaling = \"S3\"\n[model.rate]\nkind = \"constant\"\nphi0 = 2.0\n[sweep]\ngamma1 = [1.0, 2.0]\n",
        )
        .unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.scaling, Scaling::S3);
        assert_eq!(c.model.rate, RateKind::Constant { phi0: 2.0 });
        assert_eq!(c.model.gamma2, 1.0);
        assert_eq!(c.sweep.gamma1, vec![1.0, 2.0]);
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = ExperimentConfig::from_toml("[model]\ngama1 = 2.0\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("gama1"), "{err}");
    }

    #[test]
    fn validation_names_fields() {
        let mut c = ExperimentConfig::default();
        c.model.gamma2 = -1.0;
        match c.validate().unwrap_err() {
            CliError::Config { field, .. } => assert_eq!(field, "model.gamma2"),
            other => panic!("{other:?}"),
        }
        let mut c = ExperimentConfig::default();
        c.model.rate = RateKind::Hill {
            phi0: 5.0,
            k: 1.0,
            a: 0.0,
            b: 1.0,
            n: 4.0,
        };
        match c.validate().unwrap_err() {
            CliError::Config { field, .. } => assert!(field.starts_with("model.rate"), "{field}"),
            other => panic!("{other:?}"),
        }
        let mut c = ExperimentConfig::default();
        c.moments.replicas = 3;
        match c.validate().unwrap_err() {
            CliError::Config { field, .. } => assert_eq!(field, "moments.replicas"),
            other => panic!("{other:?}"),
        }
    }
}
