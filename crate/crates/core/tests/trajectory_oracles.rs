//! Monte Carlo protocol simulation checked against the closed-form model.

use dll_core::analysis::{fit_detection_probability, fit_exponential_rate};
use dll_core::analytic::{conditional_survival, detection_probability};
use dll_core::model::{noisy_device_params, DeviceParams, LossChannel, ProtocolConfig, ReadoutModel};
use dll_core::trajectory::{loss_detected, run_experiment, run_shots, SimEngineConfig};

const KDD: f64 = 1.0 / 5.4e-3;

/// Benchmark rates without the reverse process, which the closed form omits.
fn benchmark(n_shots: u64, seed: u64) -> SimEngineConfig {
    let params = DeviceParams {
        n_th: 0.0,
        ..noisy_device_params()
    };
    let mut protocol = ProtocolConfig::on_default_grid(params.t_m, 12e-3, n_shots, seed);
    protocol.include_reverse_dd = false;
    SimEngineConfig {
        params,
        readout: ReadoutModel::ideal(),
        protocol,
        kappa_dd: KDD,
    }
}

fn sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[test]
fn every_loss_detected_without_relaxation() {
    // κ₀ = 0 and Γ = 0: the qubit stays excited until the next readout
    let mut c = benchmark(100_000, 1);
    c.params.kappa0 = 0.0;
    c.params.gamma = 0.0;
    let xi = detection_probability(c.kappa_dd, 0.0, 0.0, c.params.t_m).unwrap();
    assert!((xi - 1.0).abs() < 1e-12);
    let records = run_shots(&c).unwrap();
    let outcomes: Vec<bool> = records.iter().filter_map(|r| loss_detected(r, c.params.t_m)).collect();
    assert!(outcomes.len() > 80_000);
    assert!(outcomes.iter().all(|&d| d));
}

#[test]
fn detection_fraction_matches_closed_form() {
    let c = benchmark(20_000, 2);
    let p = c.params;
    let xi = detection_probability(KDD, p.kappa0, p.gamma, p.t_m).unwrap();
    let records = run_shots(&c).unwrap();
    let outcomes: Vec<bool> = records.iter().filter_map(|r| loss_detected(r, p.t_m)).collect();
    let n = outcomes.len() as u64;
    let frac = outcomes.iter().filter(|&&d| d).count() as f64 / n as f64;
    assert!((frac - 0.62).abs() <= 0.02, "fraction {frac}");
    assert!((frac - xi).abs() < 3.0 * sigma(xi, n), "fraction {frac} vs {xi}");
}

#[test]
fn dressed_losses_detected_with_conditional_probability() {
    let c = benchmark(50_000, 3);
    let p = c.params;
    let kappa = KDD + p.kappa0;
    let expected = detection_probability(KDD, p.kappa0, p.gamma, p.t_m).unwrap() * kappa / KDD;
    let records = run_shots(&c).unwrap();
    let outcomes: Vec<bool> = records
        .iter()
        .filter(|r| r.loss_channel == Some(LossChannel::Dressed))
        .filter_map(|r| loss_detected(r, p.t_m))
        .collect();
    let n = outcomes.len() as u64;
    let frac = outcomes.iter().filter(|&&d| d).count() as f64 / n as f64;
    assert!((frac - expected).abs() < 3.0 * sigma(expected, n), "{frac} vs {expected}");
}

#[test]
fn channel_ratio() {
    let c = benchmark(50_000, 4);
    let records = run_shots(&c).unwrap();
    let lost: Vec<_> = records.iter().filter_map(|r| r.loss_channel).collect();
    let n = lost.len() as u64;
    let dressed = lost.iter().filter(|&&ch| ch == LossChannel::Dressed).count() as f64 / n as f64;
    let expected = KDD / (KDD + c.params.kappa0);
    assert!((dressed - expected).abs() < 3.0 * sigma(expected, n), "{dressed} vs {expected}");
}

#[test]
fn conditional_curve_matches_closed_form() {
    let mut c = benchmark(10_000, 5);
    c.protocol.independent_points = true;
    let curves = run_experiment(&c).unwrap();
    let p = c.params;
    let kappa = KDD + p.kappa0;
    let xi = detection_probability(KDD, p.kappa0, p.gamma, p.t_m).unwrap();
    let within = (0..curves.len())
        .filter(|&i| {
            let model = conditional_survival(curves.times[i], kappa, xi);
            let obs = curves.k_cond[i] as f64 / curves.n_cond[i] as f64;
            (obs - model).abs() <= 3.0 * sigma(model, curves.n_cond[i])
        })
        .count();
    assert!(within as f64 >= 0.95 * curves.len() as f64, "{within}/{}", curves.len());

    let fit = fit_exponential_rate(&curves.times, &curves.n_uncond, &curves.k_uncond).unwrap();
    assert!((fit.rate - kappa).abs() < 2.0 * fit.se, "{fit:?} vs {kappa}");
}

#[test]
fn no_dressed_dephasing_no_post_selection_pressure() {
    let mut c = benchmark(20_000, 6);
    c.kappa_dd = 0.0;
    let curves = run_experiment(&c).unwrap();
    assert_eq!(curves.n_cond, curves.n_uncond);
    assert_eq!(curves.k_cond, curves.k_uncond);
}

#[test]
fn identical_across_thread_counts() {
    let mut c = benchmark(3_000, 7);
    c.params.n_th = 0.025;
    c.readout = ReadoutModel::reference();
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| (run_experiment(&c).unwrap(), run_shots(&c).unwrap()))
    };
    let one = run_with(1);
    assert_eq!(one, run_with(3));
    assert_eq!(one, run_with(8));
    let mut ind = c.clone();
    ind.protocol.independent_points = true;
    let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| run_experiment(&ind).unwrap());
    let b = rayon::ThreadPoolBuilder::new().num_threads(6).build().unwrap().install(|| run_experiment(&ind).unwrap());
    assert_eq!(a, b);
}

#[test]
fn retained_shots_never_increase() {
    let mut c = benchmark(5_000, 8);
    c.params.n_th = 0.025;
    c.readout = ReadoutModel::reference();
    let curves = run_experiment(&c).unwrap();
    assert!(curves.n_retained.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn false_negatives_barely_move_fitted_xi() {
    let mut c = benchmark(50_000, 9);
    c.protocol.independent_points = true;
    let kappa = KDD + c.params.kappa0;
    let clean = fit_detection_probability(&run_experiment(&c).unwrap(), kappa).unwrap();
    c.readout.p_false_neg = 0.13;
    let missed = fit_detection_probability(&run_experiment(&c).unwrap(), kappa).unwrap();
    let change = (clean - missed).abs() / clean;
    assert!(change < 0.05, "xi {clean} -> {missed} ({change})");
}

#[test]
fn reverse_process_below_one_sigma() {
    // common random numbers isolate the systematic effect
    let off = benchmark(20_000, 10);
    let mut on = off.clone();
    on.protocol.include_reverse_dd = true;
    let a = run_experiment(&on).unwrap();
    let b = run_experiment(&off).unwrap();
    for i in 0..a.len() {
        let pu = b.k_uncond[i] as f64 / b.n_uncond[i] as f64;
        let du = (a.k_uncond[i] as f64 / a.n_uncond[i] as f64 - pu).abs();
        assert!(du < sigma(pu, b.n_uncond[i]).max(1.0 / b.n_uncond[i] as f64), "uncond row {i}");
        let pc = b.k_cond[i] as f64 / b.n_cond[i] as f64;
        let dc = (a.k_cond[i] as f64 / a.n_cond[i] as f64 - pc).abs();
        assert!(dc < sigma(pc, b.n_cond[i]).max(1.0 / b.n_cond[i] as f64), "cond row {i}");
    }
}
