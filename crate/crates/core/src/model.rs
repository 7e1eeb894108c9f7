//! Domain types shared by every other module.
//!
//! Unit convention: every frequency is stored as an angular quantity (rad/s),
//! every rate in s⁻¹ and every duration in seconds. Noise power spectral
//! densities are stored in rad²/s² per rad/s, which reduces to s⁻¹. With this
//! convention the peak PSD of the two-tone injection is `δω₁·δω₂·T` with
//! angular Stark shifts, i.e. `(2π)²·δf₁·δf₂·T` when the shifts are given in
//! Hz. PSD values written as "Hz²/Hz" are read as values in this angular
//! convention, without any hidden factor of 2π.
//!
//! The JSON form of [`DeviceParams`] and [`NoiseInjection`] carries a
//! mandatory `"units"` tag (`"Hz"` or `"rad/s"`) that applies to the
//! frequency-valued fields only. Values are always written back as `rad/s`.

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measured values of the reference device, kept for documentation and for
/// building the default scenarios.
pub mod reference {
    /// Cavity resonance frequency (Hz).
    pub const CAVITY_FREQUENCY_HZ: f64 = 4.308e9;
    /// Cavity single-photon lifetime T₁ᶜ (s), no injected noise.
    pub const CAVITY_T1: f64 = 11.3e-3;
    /// Cavity coherence time T₂ᶜ (s). Not used by any model.
    pub const CAVITY_T2: f64 = 3.4e-3;
    /// Cavity-transmon dispersive shift χ/2π (Hz). Not used by any model.
    pub const CHI_HZ: f64 = 31.7e3;
    /// Cavity-transmon coupling g/2π (Hz), calculated rather than measured.
    pub const COUPLING_HZ: f64 = 6.4e6;
    /// Transmon resonance frequency (Hz).
    pub const QUBIT_FREQUENCY_HZ: f64 = 3.80e9;
    /// Transmon anharmonicity K_q/2π (Hz). Not used by any model.
    pub const ANHARMONICITY_HZ: f64 = 124e6;
    /// Transmon T₁ (s).
    pub const QUBIT_T1: f64 = 71.0e-6;
    /// Uncertainty of the transmon T₁ (s).
    pub const QUBIT_T1_SD: f64 = 1.0e-6;
    /// Transmon Ramsey T₂ (s).
    pub const QUBIT_T2: f64 = 35.0e-6;
    /// Transmon Hahn-echo T₂ (s). Not used by any model.
    pub const QUBIT_T2_ECHO: f64 = 42.0e-6;
    /// Transmon thermal excited-state population.
    pub const THERMAL_POPULATION: f64 = 0.025;
    /// Transmon-readout dispersive shift χ_qr/2π (Hz). Not used by any model.
    pub const CHI_QR_HZ: f64 = 1.05e6;
    /// Readout resonator frequency (Hz). Not used by any model.
    pub const READOUT_FREQUENCY_HZ: f64 = 7.82e9;
    /// Readout resonator lifetime (s). Not used by any model.
    pub const READOUT_T1: f64 = 607.0e-9;
    /// Cavity-qubit detuning Δ/2π (Hz) during the sensing runs.
    pub const DETUNING_HZ: f64 = 508e6;
    /// Mid-circuit measurement interval (s).
    pub const MEASUREMENT_INTERVAL: f64 = 4e-6;
    /// Readout false-positive probability (upper bound, used as the value).
    pub const FALSE_POSITIVE: f64 = 0.0015;
    /// Readout false-negative probability.
    pub const FALSE_NEGATIVE: f64 = 0.13;

    /// Intrinsic cavity lifetime fitted under injected noise (s).
    pub const NOISY_INTRINSIC_LIFETIME: f64 = 9.7e-3;
    /// Dressed-dephasing lifetime fitted under injected noise (s).
    pub const NOISY_DRESSED_LIFETIME: f64 = 5.4e-3;
    /// Dressed-dephasing lifetime fitted to the transient qubit heating (s).
    pub const HEATING_DRESSED_LIFETIME: f64 = 9.1e-3;
    /// Stark shifts δf₁, δf₂ (Hz) of the two injection tones.
    pub const STARK_SHIFTS_HZ: (f64, f64) = (93e3, 314e3);
    /// Phase-randomisation interval of the second tone (s).
    pub const PHASE_RANDOMIZATION: f64 = 300e-9;
}

/// Unit tag applied to frequency-valued JSON fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrequencyUnits {
    #[serde(rename = "Hz")]
    Hz,
    #[serde(rename = "rad/s")]
    RadPerSecond,
}

impl FrequencyUnits {
    fn to_angular(self, value: f64) -> f64 {
        match self {
            FrequencyUnits::Hz => TAU * value,
            FrequencyUnits::RadPerSecond => value,
        }
    }
}

/// Pure dephasing rate from T₁ and Ramsey T₂ via `1/T₂ = 1/(2T₁) + Γ_φ`.
pub fn pure_dephasing_rate(t1: f64, t2: f64) -> f64 {
    1.0 / t2 - 0.5 / t1
}

/// Physical rates and couplings of the cavity-qubit system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeviceParamsRepr", into = "DeviceParamsRepr")]
pub struct DeviceParams {
    /// Intrinsic cavity loss rate κ₀ (s⁻¹).
    pub kappa0: f64,
    /// Qubit relaxation rate Γ (s⁻¹).
    pub gamma: f64,
    /// Qubit thermal population.
    pub n_th: f64,
    /// Qubit pure dephasing rate Γ_φ (s⁻¹).
    pub gamma_phi: f64,
    /// Cavity-qubit coupling g (rad/s).
    pub g: f64,
    /// Cavity-qubit detuning Δ (rad/s).
    pub delta: f64,
    /// Mid-circuit measurement interval T_m (s).
    pub t_m: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceParamsRepr {
    units: FrequencyUnits,
    kappa0: f64,
    gamma: f64,
    n_th: f64,
    gamma_phi: f64,
    g: f64,
    delta: f64,
    t_m: f64,
}

impl TryFrom<DeviceParamsRepr> for DeviceParams {
    type Error = String;

    fn try_from(r: DeviceParamsRepr) -> std::result::Result<Self, String> {
        let p = DeviceParams {
            kappa0: r.kappa0,
            gamma: r.gamma,
            n_th: r.n_th,
            gamma_phi: r.gamma_phi,
            g: r.units.to_angular(r.g),
            delta: r.units.to_angular(r.delta),
            t_m: r.t_m,
        };
        Ok(p)
    }
}

impl From<DeviceParams> for DeviceParamsRepr {
    fn from(p: DeviceParams) -> Self {
        DeviceParamsRepr {
            units: FrequencyUnits::RadPerSecond,
            kappa0: p.kappa0,
            gamma: p.gamma,
            n_th: p.n_th,
            gamma_phi: p.gamma_phi,
            g: p.g,
            delta: p.delta,
            t_m: p.t_m,
        }
    }
}

/// Device parameters of the reference device without injected noise.
pub fn reference_device_params() -> DeviceParams {
    use reference::*;
    DeviceParams {
        kappa0: 1.0 / CAVITY_T1,
        gamma: 1.0 / QUBIT_T1,
        n_th: THERMAL_POPULATION,
        gamma_phi: pure_dephasing_rate(QUBIT_T1, QUBIT_T2),
        g: TAU * COUPLING_HZ,
        delta: TAU * DETUNING_HZ,
        t_m: MEASUREMENT_INTERVAL,
    }
}

/// Reference device with the intrinsic loss fitted under injected noise,
/// κ₀ = (9.7 ms)⁻¹. Pair with [`reference::NOISY_DRESSED_LIFETIME`].
pub fn noisy_device_params() -> DeviceParams {
    DeviceParams {
        kappa0: 1.0 / reference::NOISY_INTRINSIC_LIFETIME,
        ..reference_device_params()
    }
}

/// Non-fatal problems found by [`DeviceParams::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ParamWarning {
    NegativeRate { field: &'static str, value: f64 },
    NonFinite { field: &'static str },
    ThermalPopulationOutOfRange { value: f64 },
    NonPositiveDetuning { value: f64 },
    NonPositiveMeasurementInterval { value: f64 },
    /// Δ < 10·g.
    DispersiveConditionWeak { ratio: f64 },
}

impl ParamWarning {
    /// Short machine-stable name of the warning.
    pub fn kind(&self) -> &'static str {
        match self {
            ParamWarning::NegativeRate { .. } => "negative rate",
            ParamWarning::NonFinite { .. } => "non-finite value",
            ParamWarning::ThermalPopulationOutOfRange { .. } => "thermal population out of range",
            ParamWarning::NonPositiveDetuning { .. } => "non-positive detuning",
            ParamWarning::NonPositiveMeasurementInterval { .. } => {
                "non-positive measurement interval"
            }
            ParamWarning::DispersiveConditionWeak { .. } => "dispersive condition weak",
        }
    }
}

impl fmt::Display for ParamWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamWarning::NegativeRate { field, value } => {
                write!(f, "{} ({field} = {value})", self.kind())
            }
            ParamWarning::NonFinite { field } => write!(f, "{} ({field})", self.kind()),
            ParamWarning::ThermalPopulationOutOfRange { value }
            | ParamWarning::NonPositiveDetuning { value }
            | ParamWarning::NonPositiveMeasurementInterval { value } => {
                write!(f, "{} ({value})", self.kind())
            }
            ParamWarning::DispersiveConditionWeak { ratio } => {
                write!(f, "{} (delta/g = {ratio:.3})", self.kind())
            }
        }
    }
}

impl DeviceParams {
    fn fields(&self) -> [(&'static str, f64); 7] {
        [
            ("kappa0", self.kappa0),
            ("gamma", self.gamma),
            ("n_th", self.n_th),
            ("gamma_phi", self.gamma_phi),
            ("g", self.g),
            ("delta", self.delta),
            ("t_m", self.t_m),
        ]
    }

    /// Lists every violated invariant. An empty list means the parameters
    /// are usable as-is.
    pub fn validate(&self) -> Vec<ParamWarning> {
        let mut out = Vec::new();
        for (field, value) in self.fields() {
            if !value.is_finite() {
                out.push(ParamWarning::NonFinite { field });
            }
        }
        for (field, value) in [
            ("kappa0", self.kappa0),
            ("gamma", self.gamma),
            ("gamma_phi", self.gamma_phi),
        ] {
            if value < 0.0 {
                out.push(ParamWarning::NegativeRate { field, value });
            }
        }
        if !(0.0..=1.0).contains(&self.n_th) {
            out.push(ParamWarning::ThermalPopulationOutOfRange { value: self.n_th });
        }
        if self.delta <= 0.0 {
            out.push(ParamWarning::NonPositiveDetuning { value: self.delta });
        } else if self.delta < 10.0 * self.g.abs() {
            out.push(ParamWarning::DispersiveConditionWeak {
                ratio: self.delta / self.g.abs(),
            });
        }
        if self.t_m <= 0.0 {
            out.push(ParamWarning::NonPositiveMeasurementInterval { value: self.t_m });
        }
        out
    }

    /// Hard check used by the simulators: every warning except the weak
    /// dispersive condition is an error.
    pub fn check(&self) -> Result<()> {
        for w in self.validate() {
            let field = match &w {
                ParamWarning::DispersiveConditionWeak { .. } => continue,
                ParamWarning::NegativeRate { field, .. } | ParamWarning::NonFinite { field } => {
                    field
                }
                ParamWarning::ThermalPopulationOutOfRange { .. } => "n_th",
                ParamWarning::NonPositiveDetuning { .. } => "delta",
                ParamWarning::NonPositiveMeasurementInterval { .. } => "t_m",
            };
            return Err(Error::invalid(field, w.to_string()));
        }
        Ok(())
    }
}

/// Two-tone frequency-noise injection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseInjectionRepr", into = "NoiseInjectionRepr")]
pub struct NoiseInjection {
    /// Stark shift of tone 1 alone, δω₁ (rad/s).
    pub dw1: f64,
    /// Stark shift of tone 2 alone, δω₂ (rad/s).
    pub dw2: f64,
    /// Phase-randomisation interval T of tone 2 (s).
    pub t_rand: f64,
    /// Beat frequency Δω = ω₁ − ω₂ (rad/s).
    pub beat: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseInjectionRepr {
    units: FrequencyUnits,
    dw1: f64,
    dw2: f64,
    t_rand: f64,
    beat: f64,
}

impl TryFrom<NoiseInjectionRepr> for NoiseInjection {
    type Error = String;

    fn try_from(r: NoiseInjectionRepr) -> std::result::Result<Self, String> {
        Ok(NoiseInjection {
            dw1: r.units.to_angular(r.dw1),
            dw2: r.units.to_angular(r.dw2),
            t_rand: r.t_rand,
            beat: r.units.to_angular(r.beat),
        })
    }
}

impl From<NoiseInjection> for NoiseInjectionRepr {
    fn from(n: NoiseInjection) -> Self {
        NoiseInjectionRepr {
            units: FrequencyUnits::RadPerSecond,
            dw1: n.dw1,
            dw2: n.dw2,
            t_rand: n.t_rand,
            beat: n.beat,
        }
    }
}

impl NoiseInjection {
    /// Injection used for the survival-curve benchmark: δf₁ = 93 kHz,
    /// δf₂ = 314 kHz, T = 300 ns, beat tuned to Δ.
    pub fn reference() -> Self {
        let (f1, f2) = reference::STARK_SHIFTS_HZ;
        NoiseInjection {
            dw1: TAU * f1,
            dw2: TAU * f2,
            t_rand: reference::PHASE_RANDOMIZATION,
            beat: TAU * reference::DETUNING_HZ,
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.dw1 >= 0.0) {
            return Err(Error::invalid("dw1", "Stark shift must be >= 0"));
        }
        if !(self.dw2 >= 0.0) {
            return Err(Error::invalid("dw2", "Stark shift must be >= 0"));
        }
        if !(self.t_rand > 0.0) {
            return Err(Error::invalid("t_rand", "interval must be > 0"));
        }
        if !self.beat.is_finite() {
            return Err(Error::invalid("beat", "must be finite"));
        }
        Ok(())
    }
}

/// Single-shot qubit readout error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutModel {
    /// P(read e | qubit in g).
    pub p_false_pos: f64,
    /// P(read g | qubit in e).
    pub p_false_neg: f64,
}

impl ReadoutModel {
    pub const fn ideal() -> Self {
        ReadoutModel {
            p_false_pos: 0.0,
            p_false_neg: 0.0,
        }
    }

    /// Reference device readout: 0.15 % false positives, 13 % false negatives.
    pub const fn reference() -> Self {
        ReadoutModel {
            p_false_pos: reference::FALSE_POSITIVE,
            p_false_neg: reference::FALSE_NEGATIVE,
        }
    }

    pub fn is_ideal(&self) -> bool {
        self.p_false_pos == 0.0 && self.p_false_neg == 0.0
    }

    /// Probability of reading "excited" given the true qubit state.
    pub fn p_read_excited(&self, excited: bool) -> f64 {
        if excited {
            1.0 - self.p_false_neg
        } else {
            self.p_false_pos
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_false_pos) {
            return Err(Error::invalid("p_false_pos", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.p_false_neg) {
            return Err(Error::invalid("p_false_neg", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self::reference()
    }
}

fn default_true() -> bool {
    true
}

/// Shot budget and sampling grid of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Length of each shot (s).
    pub total_time: f64,
    /// Times at which survival is evaluated (s); multiples of T_m.
    pub sample_times: Vec<f64>,
    pub n_shots: u64,
    pub seed: u64,
    /// Simulate the reverse dressed-dephasing process (qubit → photon).
    #[serde(default = "default_true")]
    pub include_reverse_dd: bool,
    /// Start every shot with the qubit in |g⟩ (initialisation post-selected).
    /// Otherwise the qubit starts thermally populated.
    #[serde(default = "default_true")]
    pub post_select_init: bool,
    /// Run a fresh set of `n_shots` shots for every sample time, as a real
    /// experiment does, instead of reading all times off the same shots.
    #[serde(default)]
    pub independent_points: bool,
}

impl ProtocolConfig {
    /// A protocol on the default grid: 30 log-spaced points from T_m to
    /// `total_time`, snapped to multiples of T_m.
    pub fn on_default_grid(t_m: f64, total_time: f64, n_shots: u64, seed: u64) -> Self {
        ProtocolConfig {
            total_time,
            sample_times: log_spaced_grid(t_m, total_time, 30),
            n_shots,
            seed,
            include_reverse_dd: true,
            post_select_init: true,
            independent_points: false,
        }
    }

    /// Checks the grid against the measurement interval `t_m`.
    pub fn check(&self, t_m: f64) -> Result<()> {
        if self.n_shots < 1 {
            return Err(Error::invalid("n_shots", "must be >= 1"));
        }
        if !(self.total_time >= 0.0) || !self.total_time.is_finite() {
            return Err(Error::invalid("total_time", "must be finite and >= 0"));
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.sample_times {
            if !(t >= 0.0) {
                return Err(Error::invalid("sample_times", "times must be >= 0"));
            }
            if t <= prev {
                return Err(Error::invalid("sample_times", "must be strictly increasing"));
            }
            if t > self.total_time * (1.0 + 1e-12) {
                return Err(Error::invalid(
                    "sample_times",
                    format!("time {t} exceeds total_time {}", self.total_time),
                ));
            }
            let k = t / t_m;
            if (k - k.round()).abs() > 1e-6 {
                return Err(Error::invalid(
                    "sample_times",
                    format!("time {t} is not a multiple of t_m = {t_m}"),
                ));
            }
            prev = t;
        }
        Ok(())
    }
}

/// Number of whole measurement intervals in `t`.
pub fn measurement_count(t: f64, t_m: f64) -> usize {
    (t / t_m).round() as usize
}

/// `n` distinct log-spaced multiples of `t_m` from `t_m` to `t_max`.
///
/// Points that collide after snapping are pushed to the next free multiple,
/// so the grid has exactly `min(n, t_max/t_m)` entries and always ends at
/// `t_max` (snapped).
pub fn log_spaced_grid(t_m: f64, t_max: f64, n: usize) -> Vec<f64> {
    let k_max = measurement_count(t_max, t_m);
    if n == 0 || k_max == 0 {
        return Vec::new();
    }
    let n = n.min(k_max);
    if n == 1 {
        return vec![k_max as f64 * t_m];
    }
    let ratio = (k_max as f64).ln() / (n - 1) as f64;
    let mut ks: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let target = (ratio * i as f64).exp().round() as usize;
        // leave room for the remaining points below k_max
        let ceiling = k_max - (n - 1 - i);
        let floor = ks.last().map_or(1, |&k| k + 1);
        ks.push(target.clamp(floor, ceiling));
    }
    ks.into_iter().map(|k| k as f64 * t_m).collect()
}

/// `n` evenly spaced multiples of `t_m` from 0 to `t_max` inclusive.
pub fn linear_grid(t_m: f64, t_max: f64, n: usize) -> Vec<f64> {
    let k_max = measurement_count(t_max, t_m);
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0.0];
    }
    let mut ks: Vec<usize> = (0..n)
        .map(|i| ((k_max as f64) * i as f64 / (n - 1) as f64).round() as usize)
        .collect();
    ks.dedup();
    ks.into_iter().map(|k| k as f64 * t_m).collect()
}

/// Binomial counts of photon survival, with and without post-selection.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurvivalCurves {
    pub times: Vec<f64>,
    pub n_uncond: Vec<u64>,
    pub k_uncond: Vec<u64>,
    pub n_cond: Vec<u64>,
    pub k_cond: Vec<u64>,
    /// Shots whose every measurement up to each time returned |g⟩.
    pub n_retained: Vec<u64>,
}

impl SurvivalCurves {
    pub fn with_times(times: Vec<f64>) -> Self {
        let n = times.len();
        SurvivalCurves {
            times,
            n_uncond: vec![0; n],
            k_uncond: vec![0; n],
            n_cond: vec![0; n],
            k_cond: vec![0; n],
            n_retained: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Checks the count invariants (k ≤ n, n_cond = n_retained ≤ n_uncond).
    pub fn check(&self) -> Result<()> {
        let n = self.times.len();
        for (name, len) in [
            ("n_uncond", self.n_uncond.len()),
            ("k_uncond", self.k_uncond.len()),
            ("n_cond", self.n_cond.len()),
            ("k_cond", self.k_cond.len()),
            ("n_retained", self.n_retained.len()),
        ] {
            if len != n {
                return Err(Error::InvalidData(format!(
                    "column {name} has {len} rows, expected {n}"
                )));
            }
        }
        for i in 0..n {
            if !self.times[i].is_finite() || self.times[i] < 0.0 {
                return Err(Error::InvalidData(format!("row {i}: bad time")));
            }
            if self.k_uncond[i] > self.n_uncond[i] || self.k_cond[i] > self.n_cond[i] {
                return Err(Error::InvalidData(format!("row {i}: successes exceed trials")));
            }
            if self.n_cond[i] != self.n_retained[i] || self.n_cond[i] > self.n_uncond[i] {
                return Err(Error::InvalidData(format!(
                    "row {i}: conditional trials must equal retained shots and not exceed total"
                )));
            }
        }
        Ok(())
    }

    /// Retained fraction n_retained / n_uncond per time.
    pub fn retained_fraction(&self) -> Vec<f64> {
        self.n_retained
            .iter()
            .zip(&self.n_uncond)
            .map(|(&r, &n)| if n == 0 { f64::NAN } else { r as f64 / n as f64 })
            .collect()
    }

    pub fn p_uncond(&self) -> Vec<f64> {
        ratio(&self.k_uncond, &self.n_uncond)
    }

    pub fn p_cond(&self) -> Vec<f64> {
        ratio(&self.k_cond, &self.n_cond)
    }

    /// Copy with every time multiplied by `factor` (unit changes).
    pub fn rescale_time(&self, factor: f64) -> Self {
        SurvivalCurves {
            times: self.times.iter().map(|t| t * factor).collect(),
            ..self.clone()
        }
    }
}

fn ratio(k: &[u64], n: &[u64]) -> Vec<f64> {
    k.iter()
        .zip(n)
        .map(|(&k, &n)| if n == 0 { f64::NAN } else { k as f64 / n as f64 })
        .collect()
}

/// Which process removed the cavity photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossChannel {
    Intrinsic,
    Dressed,
}

/// Qubit state right after a change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitEvent {
    pub time: f64,
    pub excited: bool,
}

/// One simulated shot.
///
/// Measurement outcomes are stored compactly: outcomes are recorded up to
/// and including the first "excited" readout, after which the shot is
/// discarded, so the bit sequence is `measurements` zeros with a final one
/// when `discarded_at` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ShotRecordRepr", into = "ShotRecordRepr")]
pub struct ShotRecord {
    /// First time the photon left the cavity.
    pub loss_time: Option<f64>,
    pub loss_channel: Option<LossChannel>,
    /// Number of recorded measurement outcomes.
    pub measurements: usize,
    /// Index of the measurement that read "excited".
    pub discarded_at: Option<usize>,
    /// Times at which photon presence flipped (starts present).
    pub photon_toggles: Vec<f64>,
    pub truth_qubit_trace: Option<Vec<QubitEvent>>,
}

impl ShotRecord {
    pub fn measurement_outcomes(&self) -> Vec<bool> {
        let mut bits = vec![false; self.measurements];
        if let Some(i) = self.discarded_at {
            bits[i] = true;
        }
        bits
    }

    pub fn photon_present_at(&self, t: f64) -> bool {
        self.photon_toggles.iter().take_while(|&&x| x <= t).count() % 2 == 0
    }

    /// Whether every one of the first `m` measurements read |g⟩.
    pub fn retained_through(&self, m: usize) -> bool {
        self.discarded_at.is_none_or(|d| d >= m)
    }
}

#[derive(Serialize, Deserialize)]
struct ShotRecordRepr {
    loss_time: Option<f64>,
    loss_channel: Option<LossChannel>,
    measurement_outcomes: String,
    discarded_at: Option<usize>,
    photon_toggles: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth_qubit_trace: Option<Vec<QubitEvent>>,
}

impl From<ShotRecord> for ShotRecordRepr {
    fn from(r: ShotRecord) -> Self {
        let outcomes = r
            .measurement_outcomes()
            .into_iter()
            .map(|b| if b { '1' } else { '0' })
            .collect();
        ShotRecordRepr {
            loss_time: r.loss_time,
            loss_channel: r.loss_channel,
            measurement_outcomes: outcomes,
            discarded_at: r.discarded_at,
            photon_toggles: r.photon_toggles,
            truth_qubit_trace: r.truth_qubit_trace,
        }
    }
}

impl TryFrom<ShotRecordRepr> for ShotRecord {
    type Error = String;

    fn try_from(r: ShotRecordRepr) -> std::result::Result<Self, String> {
        if r.loss_time.is_some() != r.loss_channel.is_some() {
            return Err("loss_channel must be present iff loss_time is".into());
        }
        let bits = r.measurement_outcomes.as_bytes();
        let first_one = bits.iter().position(|&b| b == b'1');
        if bits.iter().any(|&b| b != b'0' && b != b'1') {
            return Err("measurement_outcomes must contain only 0 and 1".into());
        }
        match (first_one, r.discarded_at) {
            (None, None) => {}
            (Some(i), Some(d)) if i == d && d + 1 == bits.len() => {}
            _ => {
                return Err(
                    "measurement_outcomes must end at the single excited readout \
                     given by discarded_at"
                        .into(),
                )
            }
        }
        Ok(ShotRecord {
            loss_time: r.loss_time,
            loss_channel: r.loss_channel,
            measurements: bits.len(),
            discarded_at: r.discarded_at,
            photon_toggles: r.photon_toggles,
            truth_qubit_trace: r.truth_qubit_trace,
        })
    }
}
