//! JSON schemas of the subcommand config files.
//!
//! Frequencies carry the `"units"` tag of [`DeviceParams`] and
//! [`NoiseInjection`]; times carry their own tag in [`TimeGrid`]. Rates and
//! PSD values are always in s⁻¹.

use std::path::{Path, PathBuf};

use dll_core::analytic::{dressed_dephasing_rate, injected_psd, PsdValue};
use dll_core::inference::{PriorSpec, SamplerSettings, SummaryOptions};
use dll_core::model::{
    linear_grid, log_spaced_grid, DeviceParams, NoiseInjection, ProtocolConfig, ReadoutModel,
};
use dll_core::trajectory::SimEngineConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Reads and parses a config file. Returns the raw bytes too, for hashing.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>), HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HarnessError::ConfigNotFound(path.to_path_buf()),
        _ => HarnessError::io(format!("reading {}", path.display()), e),
    })?;
    let value = serde_json::from_slice(&bytes).map_err(|e| HarnessError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((value, bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeUnits {
    #[serde(rename = "s")]
    Seconds,
    #[serde(rename = "ms")]
    Milliseconds,
    #[serde(rename = "us")]
    Microseconds,
}

impl TimeUnits {
    fn seconds(self, value: f64) -> f64 {
        match self {
            TimeUnits::Seconds => value,
            TimeUnits::Milliseconds => value * 1e-3,
            TimeUnits::Microseconds => value * 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

/// Sample times. Either an explicit list or a generated grid of multiples
/// of T_m: log spacing runs from T_m, linear spacing from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub units: TimeUnits,
    pub total_time: f64,
    #[serde(default)]
    pub spacing: Spacing,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

fn default_points() -> usize {
    30
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            units: TimeUnits::Milliseconds,
            total_time: 12.0,
            spacing: Spacing::Log,
            points: default_points(),
            times: None,
        }
    }
}

impl TimeGrid {
    pub fn total_seconds(&self) -> f64 {
        self.units.seconds(self.total_time)
    }

    /// Sample times in seconds.
    pub fn resolve(&self, t_m: f64) -> Vec<f64> {
        match &self.times {
            Some(times) => times.iter().map(|&t| self.units.seconds(t)).collect(),
            None => match self.spacing {
                Spacing::Log => log_spaced_grid(t_m, self.total_seconds(), self.points),
                Spacing::Linear => linear_grid(t_m, self.total_seconds(), self.points),
            },
        }
    }
}

/// Where κ_dd comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DressedSource {
    /// κ_dd itself (s⁻¹).
    KappaDd(f64),
    /// Frequency-noise PSD at the detuning (s⁻¹, angular convention).
    Psd(f64),
    /// A two-tone injection, evaluated at the detuning.
    Noise(NoiseInjection),
}

impl DressedSource {
    pub fn kappa_dd(&self, params: &DeviceParams) -> Result<f64, HarnessError> {
        let rate = match self {
            DressedSource::KappaDd(k) => *k,
            DressedSource::Psd(s) => {
                dressed_dephasing_rate(params.g, params.delta, PsdValue::new(*s, params.delta))?
            }
            DressedSource::Noise(noise) => {
                noise.check()?;
                dressed_dephasing_rate(params.g, params.delta, injected_psd(noise, params.delta))?
            }
        };
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(dll_core::Error::InvalidParameter {
                field: "dressed",
                reason: format!("κ_dd = {rate} must be finite and >= 0"),
            }
            .into());
        }
        Ok(rate)
    }
}

fn yes() -> bool {
    true
}

/// Grid and switches of a simulated protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    #[serde(default)]
    pub grid: TimeGrid,
    #[serde(default = "yes")]
    pub include_reverse_dd: bool,
    #[serde(default = "yes")]
    pub post_select_init: bool,
    /// Fresh shots at every sample time, as in the lab.
    #[serde(default = "yes")]
    pub independent_points: bool,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            grid: TimeGrid::default(),
            include_reverse_dd: true,
            post_select_init: true,
            independent_points: true,
        }
    }
}

impl ProtocolSpec {
    pub fn to_protocol(&self, t_m: f64, n_shots: u64, seed: u64) -> ProtocolConfig {
        ProtocolConfig {
            total_time: self.grid.total_seconds(),
            sample_times: self.grid.resolve(t_m),
            n_shots,
            seed,
            include_reverse_dd: self.include_reverse_dd,
            post_select_init: self.post_select_init,
            independent_points: self.independent_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: DeviceParams,
    #[serde(default)]
    pub readout: ReadoutModel,
    pub dressed: DressedSource,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    pub n_shots: u64,
    #[serde(default)]
    pub seed: u64,
    /// Also write every shot to `shots.jsonl` (shared-shot runs only).
    #[serde(default)]
    pub export_shots: bool,
}

impl SimulateConfig {
    pub fn engine(&self, seed: u64) -> Result<SimEngineConfig, HarnessError> {
        let config = SimEngineConfig {
            params: self.params,
            readout: self.readout,
            protocol: self.protocol.to_protocol(self.params.t_m, self.n_shots, seed),
            kappa_dd: self.dressed.kappa_dd(&self.params)?,
        };
        config.check()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub params: DeviceParams,
    pub dressed: DressedSource,
    #[serde(default)]
    pub grid: TimeGrid,
}

fn default_ppc_draws() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Curves CSV, relative to the config file.
    pub data: PathBuf,
    /// Unit of `t_m`. The CSV time column is always in seconds.
    pub units: TimeUnits,
    pub t_m: f64,
    #[serde(default)]
    pub priors: PriorSpec,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub summary: SummaryOptions,
    #[serde(default = "default_ppc_draws")]
    pub ppc_draws: usize,
}

impl FitConfig {
    pub fn t_m_seconds(&self) -> f64 {
        self.units.seconds(self.t_m)
    }
}

/// Device, readout and protocol shared by every point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBase {
    pub params: DeviceParams,
    #[serde(default)]
    pub readout: ReadoutModel,
    #[serde(default)]
    pub protocol: ProtocolSpec,
}

/// PSD scan: simulate and fit once per PSD value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// s⁻¹, non-negative and sorted.
    pub psd_values: Vec<f64>,
    pub shots_per_point: u64,
    #[serde(default)]
    pub seed: u64,
    pub base: SweepBase,
    #[serde(default)]
    pub priors: PriorSpec,
    /// The seed field is replaced by the per-point seed.
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub summary: SummaryOptions,
}

impl SweepSpec {
    pub fn check(&self) -> Result<(), dll_core::Error> {
        let bad = |reason: &str| dll_core::Error::InvalidParameter {
            field: "psd_values",
            reason: reason.into(),
        };
        if self.psd_values.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(bad("values must be finite and >= 0"));
        }
        if self.psd_values.windows(2).any(|w| w[1] < w[0]) {
            return Err(bad("values must be sorted"));
        }
        if self.shots_per_point == 0 {
            return Err(dll_core::Error::InvalidParameter {
                field: "shots_per_point",
                reason: "must be >= 1".into(),
            });
        }
        self.priors.check()?;
        self.sampler.check()
    }
}

/// Trajectory overlay for the master-equation trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    pub n_shots: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladConfig {
    pub params: DeviceParams,
    pub dressed: DressedSource,
    #[serde(default)]
    pub grid: TimeGrid,
    #[serde(default = "yes")]
    pub include_reverse_dd: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay: Option<Overlay>,
}
