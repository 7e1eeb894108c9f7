//! Closed-form model of the sensing protocol.
//!
//! All functions are pure. Probabilities are clamped to `[0, 1]` after
//! evaluation; a clamp larger than `1e-12` is logged as a warning because it
//! points at a formula evaluated outside its domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DeviceParams, NoiseInjection};

/// Frequency-noise PSD at one angular frequency, in s⁻¹ (angular convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdValue {
    pub value: f64,
    /// rad/s
    pub at_frequency: f64,
}

impl PsdValue {
    pub fn new(value: f64, at_frequency: f64) -> Self {
        PsdValue {
            value,
            at_frequency,
        }
    }
}

const CLAMP_TOLERANCE: f64 = 1e-12;

pub(crate) fn clamp_probability(p: f64) -> f64 {
    if p.is_nan() {
        return p;
    }
    if !(-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&p) {
        tracing::warn!(value = p, "probability clamped by more than tolerance");
    }
    p.clamp(0.0, 1.0)
}

/// `(1 - e^{-x}) / x`, continuous through `x = 0`.
fn relative_expm1(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    }
}

/// Dressed-dephasing photon loss rate `κ_dd = 4 (g/Δ)² S(Δ)`.
pub fn dressed_dephasing_rate(g: f64, delta: f64, psd: PsdValue) -> Result<f64> {
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::invalid("delta", "detuning must be non-zero and finite"));
    }
    let ratio = g / delta;
    Ok(4.0 * ratio * ratio * psd.value)
}

/// Inverse of [`dressed_dephasing_rate`]: PSD at Δ producing `kappa_dd`.
pub fn psd_for_rate(g: f64, delta: f64, kappa_dd: f64) -> Result<PsdValue> {
    if g == 0.0 {
        return Err(Error::invalid("g", "coupling must be non-zero"));
    }
    let per_unit = dressed_dephasing_rate(g, delta, PsdValue::new(1.0, delta))?;
    Ok(PsdValue::new(kappa_dd / per_unit, delta))
}

/// Probability ξ that a photon lost within one measurement interval leaves
/// the qubit excited at the end of that interval.
///
/// `ξ = κ_dd/(Γ−κ) · (e^{−κT} − e^{−ΓT}) / (1 − e^{−κT})` with
/// `κ = κ_dd + κ₀`. The point Γ = κ is a removable singularity and is
/// evaluated through its limit `κ_dd T e^{−κT} / (1 − e^{−κT})`.
pub fn detection_probability(kappa_dd: f64, kappa0: f64, gamma: f64, t_m: f64) -> Result<f64> {
    if !(kappa_dd >= 0.0) {
        return Err(Error::invalid("kappa_dd", "must be >= 0"));
    }
    if !(kappa0 >= 0.0) {
        return Err(Error::invalid("kappa0", "must be >= 0"));
    }
    if !(gamma >= 0.0) {
        return Err(Error::invalid("gamma", "must be >= 0"));
    }
    if !(t_m > 0.0) || !t_m.is_finite() {
        return Err(Error::invalid("t_m", "must be > 0"));
    }
    if kappa_dd == 0.0 {
        return Ok(0.0);
    }
    let kappa = kappa_dd + kappa0;
    // e^{-κT}(1 - e^{-(Γ-κ)T})/(Γ-κ) = e^{-κT}·T·h((Γ-κ)T)
    let lost_in_interval = -(-kappa * t_m).exp_m1();
    let numerator = (-kappa * t_m).exp() * t_m * relative_expm1((gamma - kappa) * t_m);
    Ok(clamp_probability(kappa_dd * numerator / lost_in_interval))
}

/// `P₁(t) = e^{−κt}`.
pub fn unconditional_survival(t: f64, kappa: f64) -> f64 {
    (-kappa * t).exp()
}

/// Post-selected survival
/// `P₁ᵍ(t) = e^{−κt} / (e^{−κt} + (1−ξ)(1−e^{−κt}))`.
pub fn conditional_survival(t: f64, kappa: f64, xi: f64) -> f64 {
    let p = (-kappa * t).exp();
    let lost = -(-kappa * t).exp_m1();
    let denom = p + (1.0 - xi) * lost;
    if denom <= 0.0 {
        // ξ = 1 with the photon certainly lost: every retained shot still has it.
        return 1.0;
    }
    clamp_probability(p / denom)
}

/// `ln P₁ᵍ(t)` and `ln(1 − P₁ᵍ(t))` without cancellation at small κt.
pub(crate) fn ln_conditional_survival(t: f64, kappa: f64, xi: f64) -> (f64, f64) {
    let ln_p = -kappa * t;
    let lost = -(-kappa * t).exp_m1();
    let undetected = (1.0 - xi) * lost;
    let denom = ln_p.exp() + undetected;
    if denom <= 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let ln_denom = denom.ln();
    (ln_p - ln_denom, undetected.ln() - ln_denom)
}

/// Two-tone injected PSD `δω₁ δω₂ T sinc²((ω−Δω)T/2)` with
/// `sinc(x) = sin(x)/x`.
pub fn injected_psd(noise: &NoiseInjection, omega: f64) -> PsdValue {
    let x = 0.5 * (omega - noise.beat) * noise.t_rand;
    let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
    PsdValue::new(noise.dw1 * noise.dw2 * noise.t_rand * sinc * sinc, omega)
}

/// Peak PSD from the individually measured Stark shifts, `δω₁ δω₂ T`.
pub fn stark_calibrated_psd(noise: &NoiseInjection) -> PsdValue {
    injected_psd(noise, noise.beat)
}

/// Unconditional and post-selected survival on `times`.
pub fn predict_curves(
    params: &DeviceParams,
    kappa_dd: f64,
    times: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("times", "must be sorted"));
    }
    let xi = detection_probability(kappa_dd, params.kappa0, params.gamma, params.t_m)?;
    let kappa = kappa_dd + params.kappa0;
    let uncond = times
        .iter()
        .map(|&t| unconditional_survival(t, kappa))
        .collect();
    let cond = times
        .iter()
        .map(|&t| conditional_survival(t, kappa, xi))
        .collect();
    Ok((uncond, cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{noisy_device_params, reference_device_params, reference};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn benchmark() -> (f64, f64, f64, f64) {
        (1.0 / 5.4e-3, 1.0 / 9.7e-3, 1.0 / 71e-6, 4e-6)
    }

    /// ξ by midpoint quadrature of the loss-time integral.
    fn xi_quadrature(kappa_dd: f64, kappa0: f64, gamma: f64, t_m: f64) -> f64 {
        let kappa = kappa_dd + kappa0;
        let n = 200_000;
        let h = t_m / n as f64;
        let norm = 1.0 - (-kappa * t_m).exp();
        (0..n)
            .map(|i| {
                let tau = (i as f64 + 0.5) * h;
                kappa * (-kappa * tau).exp() / norm * (kappa_dd / kappa)
                    * (-gamma * (t_m - tau)).exp()
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn rate_from_psd() {
        let p = reference_device_params();
        let k = dressed_dephasing_rate(p.g, p.delta, PsdValue::new(5.4e3, p.delta)).unwrap();
        assert!((k - 1.0 / 0.29).abs() < 0.03 / 0.29);
        let k = dressed_dephasing_rate(p.g, p.delta, PsdValue::new(293e3, p.delta)).unwrap();
        assert!((k - 1.0 / 5.4e-3).abs() < 0.03 / 5.4e-3);
        assert_eq!(
            dressed_dephasing_rate(p.g, p.delta, PsdValue::new(0.0, p.delta)).unwrap(),
            0.0
        );
        assert!(dressed_dephasing_rate(p.g, 0.0, PsdValue::new(1.0, 0.0)).is_err());
        let s = psd_for_rate(p.g, p.delta, k).unwrap();
        assert!((s.value - 293e3).abs() < 1e-6);
    }

    #[test]
    fn xi_reference_value() {
        let (kdd, k0, g, tm) = benchmark();
        let xi = detection_probability(kdd, k0, g, tm).unwrap();
        assert!((xi - 0.62).abs() <= 0.01, "xi = {xi}");
        assert!((xi - 0.63).abs() <= 0.01, "xi = {xi}");
        assert!((xi - xi_quadrature(kdd, k0, g, tm)).abs() < 1e-8);
        assert_eq!(detection_probability(0.0, k0, g, tm).unwrap(), 0.0);
    }

    #[test]
    fn xi_short_interval_limit() {
        let (kdd, k0, g, _) = benchmark();
        let xi = detection_probability(kdd, k0, g, 1e-9).unwrap();
        assert!((xi - kdd / (kdd + k0)).abs() < 1e-3);
        assert!((kdd / (kdd + k0) - 0.6424).abs() < 1e-4);
    }

    #[test]
    fn xi_limits_relative() {
        let (kdd, k0, g, _) = benchmark();
        let ratio = kdd / (kdd + k0);
        let xi = detection_probability(kdd, k0, g, 0.9e-3 / g).unwrap();
        assert!((xi - ratio).abs() < 1e-3 * ratio);
        let xi = detection_probability(kdd, k0, g, 1.1e3 / g).unwrap();
        assert!(xi < 1e-3);
    }

    #[test]
    fn xi_removable_singularity() {
        let (kdd, k0, _, tm) = benchmark();
        let kappa = kdd + k0;
        let limit = kdd * tm * (-kappa * tm).exp() / (1.0 - (-kappa * tm).exp());
        let at = detection_probability(kdd, k0, kappa, tm).unwrap();
        assert!((at - limit).abs() < 1e-12 * limit);
        for s in [1.0 + 1e-9, 1.0 - 1e-9] {
            let near = detection_probability(kdd, k0, kappa * s, tm).unwrap();
            assert!((near - limit).abs() < 1e-6 * limit);
        }
    }

    #[test]
    fn xi_rejects_bad_inputs() {
        assert!(detection_probability(-1.0, 1.0, 1.0, 1e-6).is_err());
        assert!(detection_probability(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn survival_special_cases() {
        assert_eq!(conditional_survival(0.0, 300.0, 0.6), 1.0);
        let t = 3e-3;
        let k = 300.0;
        assert_eq!(conditional_survival(t, k, 0.0), (-k * t).exp());
        assert_eq!(conditional_survival(t, k, 1.0), 1.0);
        assert_eq!(conditional_survival(1e3, k, 1.0), 1.0);
        assert_eq!(unconditional_survival(0.0, k), 1.0);
        assert_eq!(unconditional_survival(5.0, 0.0), 1.0);
        let e = unconditional_survival(reference::CAVITY_T1, 1.0 / reference::CAVITY_T1);
        assert!((e - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn ln_forms_match() {
        for &(t, k, xi) in &[(1e-5, 288.0, 0.62), (5e-3, 288.0, 0.3), (0.02, 1000.0, 0.99)] {
            let (a, b) = ln_conditional_survival(t, k, xi);
            let p = conditional_survival(t, k, xi);
            assert!((a.exp() - p).abs() < 1e-12);
            assert!((b.exp() - (1.0 - p)).abs() < 1e-12);
        }
    }

    #[test]
    fn injected_psd_values() {
        let n = NoiseInjection::reference();
        let s = stark_calibrated_psd(&n);
        assert!((s.value - 346e3).abs() < 0.01 * 346e3, "S = {}", s.value);
        let zero = injected_psd(&n, n.beat + TAU / n.t_rand);
        assert!(zero.value < 1e-12 * s.value);
        let off = NoiseInjection { dw1: 0.0, ..n };
        assert_eq!(stark_calibrated_psd(&off).value, 0.0);
    }

    #[test]
    fn predict_without_dressed_loss() {
        let p = reference_device_params();
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 6e-4).collect();
        let (u, c) = predict_curves(&p, 0.0, &times).unwrap();
        for ((a, b), t) in u.iter().zip(&c).zip(&times) {
            assert_eq!(a, b);
            assert!((a - (-p.kappa0 * t).exp()).abs() < 1e-15);
        }
        assert!(predict_curves(&p, 0.0, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn predict_reference_ordering() {
        let p = noisy_device_params();
        let times: Vec<f64> = (1..30).map(|i| i as f64 * 4e-4).collect();
        let (u, c) = predict_curves(&p, 1.0 / 5.4e-3, &times).unwrap();
        assert!(u.iter().zip(&c).all(|(a, b)| b > a));
    }

    proptest! {
        #[test]
        fn rate_is_linear(s in 0.0f64..1e7, c in 0.0f64..100.0) {
            let p = reference_device_params();
            let a = dressed_dephasing_rate(p.g, p.delta, PsdValue::new(c * s, p.delta)).unwrap();
            let b = c * dressed_dephasing_rate(p.g, p.delta, PsdValue::new(s, p.delta)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }

        #[test]
        fn xi_bounds(kdd in 0.0f64..1e4, k0 in 0.0f64..1e4, g in 0.0f64..1e6, tm in 1e-9f64..1e-2) {
            let xi = detection_probability(kdd, k0, g, tm).unwrap();
            prop_assert!(xi >= 0.0);
            if kdd > 0.0 {
                prop_assert!(xi <= kdd / (kdd + k0) * (1.0 + 1e-9));
            }
        }

        #[test]
        fn xi_proportional_to_share(kappa in 1.0f64..1e4, f1 in 0.01f64..1.0, f2 in 0.01f64..1.0,
                                    g in 1.0f64..1e6, tm in 1e-8f64..1e-3) {
            // at fixed total κ, ξ/κ_dd does not depend on how κ splits
            let a = detection_probability(f1 * kappa, (1.0 - f1) * kappa, g, tm).unwrap() / (f1 * kappa);
            let b = detection_probability(f2 * kappa, (1.0 - f2) * kappa, g, tm).unwrap() / (f2 * kappa);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()));
        }

        #[test]
        fn xi_monotone_in_kdd(kdd in 0.0f64..1e4, dk in 0.0f64..1e3, r0 in 0.1f64..10.0,
                              g in 1.0f64..1e6, x in 1e-6f64..0.1) {
            // needs an intrinsic channel: with κ₀ = 0 a larger κ_dd only moves
            // losses earlier in the interval and ξ can drop
            let k0 = r0 * (kdd + dk).max(1.0);
            let tm = x / (kdd + dk + k0);
            let a = detection_probability(kdd, k0, g, tm).unwrap();
            let b = detection_probability(kdd + dk, k0, g, tm).unwrap();
            prop_assert!(b >= a * (1.0 - 1e-12));
        }

        #[test]
        fn xi_decreasing_for_long_intervals(kdd in 1.0f64..1e3, k0 in 0.0f64..1e3,
                                            g in 1e4f64..1e5, f in 5.0f64..50.0, df in 0.0f64..20.0) {
            let a = detection_probability(kdd, k0, g, f / g).unwrap();
            let b = detection_probability(kdd, k0, g, (f + df) / g).unwrap();
            prop_assert!(b <= a + 1e-15);
        }

        #[test]
        fn conditional_dominates(t in 0.0f64..0.1, k in 0.0f64..2e3, xi in 0.0f64..1.0) {
            let c = conditional_survival(t, k, xi);
            let u = unconditional_survival(t, k);
            prop_assert!(c >= u - 1e-15);
            prop_assert!((0.0..=1.0).contains(&c));
            if xi > 1e-6 && t * k > 1e-6 && t * k < 30.0 {
                prop_assert!(c > u);
            }
        }

        #[test]
        fn conditional_monotone(t in 0.0f64..0.05, dt in 0.0f64..0.01, k in 0.0f64..2e3, xi in 0.0f64..1.0) {
            prop_assert!(conditional_survival(t + dt, k, xi) <= conditional_survival(t, k, xi) + 1e-15);
        }

        #[test]
        fn predicted_ordering(kdd in 0.0f64..2e3, k0 in 0.0f64..2e3, t in 0.0f64..0.05) {
            let p = DeviceParams { kappa0: k0, ..reference_device_params() };
            let (u, c) = predict_curves(&p, kdd, &[t]).unwrap();
            prop_assert!(c[0] >= u[0] - 1e-15);
        }
    }
}
