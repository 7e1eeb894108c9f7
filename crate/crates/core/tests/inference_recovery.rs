//! End-to-end posterior sampling on synthetic survival data.

use dll_core::inference::{
    fit, posterior_predictive_check, sample_posterior, synthetic_curves, Prior, PriorSpec,
    SamplerSettings, SummaryOptions, Theta,
};
use dll_core::model::{log_spaced_grid, SurvivalCurves};

const T_M: f64 = 4e-6;

fn benchmark() -> Theta {
    Theta {
        kappa_dd: 1.0 / 5.4e-3,
        kappa0: 1.0 / 9.7e-3,
        gamma: 1.0 / 71e-6,
    }
}

fn grid() -> Vec<f64> {
    log_spaced_grid(T_M, 12e-3, 30)
}

fn settings(seed: u64) -> SamplerSettings {
    SamplerSettings {
        seed,
        ..Default::default()
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn recovers_benchmark_rates() {
    let data = synthetic_curves(&benchmark(), T_M, &grid(), 20_000, 1).unwrap();
    let (_, res) = fit(&data, &PriorSpec::default(), &settings(1), &SummaryOptions::default(), T_M).unwrap();
    assert!(res.converged, "{:?}", res.diagnostics);
    assert!((res.kappa_dd.median / benchmark().kappa_dd - 1.0).abs() < 0.1);
    assert!(res.resolved && res.upper_bound_kappa_dd.is_none());
    let s = res.kappa_dd;
    assert!(s.hdi_lo <= s.median && s.median <= s.hdi_hi);
    // the reported lifetime (5.4 +0.1/−0.2 ms) spans about 5.6 % of the rate
    let width = (s.hdi_hi - s.hdi_lo) / s.median;
    assert!(width > 0.1 * 0.056 && width < 10.0 * 0.056, "relative width {width}");
}

#[test]
fn no_signal_gives_bound_only() {
    let truth = Theta {
        kappa_dd: 0.0,
        ..benchmark()
    };
    let data = synthetic_curves(&truth, T_M, &grid(), 20_000, 2).unwrap();
    let (post, res) = fit(&data, &PriorSpec::default(), &settings(2), &SummaryOptions::default(), T_M).unwrap();
    assert!(!res.resolved);
    let bound = res.upper_bound_kappa_dd.expect("bound when unresolved");
    assert!(bound > 0.0 && bound < 10.0, "{bound}");
    // the HDI reaches down to the prior edge at 0
    assert!(res.kappa_dd.hdi_lo <= 0.05 * res.kappa_dd.hdi_hi, "{:?}", res.kappa_dd);
    let prior = PriorSpec::default();
    assert!(post.samples.iter().all(|t| prior.contains(t)));
}

#[test]
fn prior_only_sampling_reproduces_prior_moments() {
    let prior = PriorSpec::default();
    let empty = SurvivalCurves::with_times(vec![]);
    let post = sample_posterior(&empty, &prior, &settings(3), T_M).unwrap();
    for (i, p) in [prior.kappa_dd, prior.kappa0, prior.gamma].iter().enumerate() {
        let (m, sd) = mean_sd(&post.column(i));
        let mcse = p.sd() / post.diagnostics.ess[i].sqrt();
        assert!((m - p.mean()).abs() < 4.0 * mcse, "param {i}: mean {m} vs {}", p.mean());
        assert!((sd / p.sd() - 1.0).abs() < 0.1, "param {i}: sd {sd} vs {}", p.sd());
    }
}

#[test]
fn detection_floor_scales_with_shots() {
    let truth = Theta {
        kappa_dd: 0.0,
        ..benchmark()
    };
    let median_bound = |shots: u64, base: u64| {
        let mut bounds: Vec<f64> = (0..15)
            .map(|k| {
                let data = synthetic_curves(&truth, T_M, &grid(), shots, base + k).unwrap();
                let (_, r) = fit(&data, &PriorSpec::default(), &settings(base + k), &SummaryOptions::default(), T_M)
                    .unwrap();
                r.upper_bound_kappa_dd.unwrap_or(r.kappa_dd.hdi_hi)
            })
            .collect();
        bounds.sort_by(f64::total_cmp);
        bounds[bounds.len() / 2]
    };
    let ratio = median_bound(80_000, 100) / median_bound(20_000, 200);
    assert!((ratio / 0.5 - 1.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn time_unit_change_is_a_reparameterisation() {
    let data = synthetic_curves(&benchmark(), T_M, &grid(), 20_000, 4).unwrap();
    let (post_s, res_s) = fit(&data, &PriorSpec::default(), &settings(4), &SummaryOptions::default(), T_M).unwrap();
    // same data with times in ms; every rate is then per ms
    let ms = data.rescale_time(1e3);
    let prior_ms = PriorSpec {
        kappa_dd: Prior::Uniform { lo: 0.0, hi: 10.0 },
        kappa0: Prior::Uniform { lo: 0.0, hi: 10.0 },
        gamma: Prior::Normal {
            mean: benchmark().gamma * 1e-3,
            sd: benchmark().gamma * 1e-3 / 71.0,
        },
    };
    let (post_ms, res_ms) = fit(&ms, &prior_ms, &settings(5), &SummaryOptions::default(), T_M * 1e3).unwrap();
    for (i, (a, b)) in [
        (res_s.kappa_dd, res_ms.kappa_dd),
        (res_s.kappa0, res_ms.kappa0),
    ]
    .iter()
    .enumerate()
    {
        let mcse = a.sd * (1.0 / post_s.diagnostics.ess[i] + 1.0 / post_ms.diagnostics.ess[i]).sqrt();
        assert!((a.median - 1e3 * b.median).abs() < 4.0 * mcse, "param {i}: {} vs {}", a.median, 1e3 * b.median);
        assert!((a.sd / (1e3 * b.sd) - 1.0).abs() < 0.15);
    }
}

#[test]
fn predictive_p_values_calibrated_under_the_model() {
    let data = synthetic_curves(&benchmark(), T_M, &grid(), 20_000, 6).unwrap();
    let (post, _) = fit(&data, &PriorSpec::default(), &settings(6), &SummaryOptions::default(), T_M).unwrap();
    let ppc = posterior_predictive_check(&post, &data, T_M, 2000, 6).unwrap();
    let p: Vec<f64> = ppc.iter().flat_map(|x| [x.p_uncond, x.p_cond]).collect();
    let extreme = p.iter().filter(|&&v| !(0.025..=0.975).contains(&v)).count();
    assert!((extreme as f64) < 0.1 * p.len() as f64, "{extreme} of {}", p.len());
}

#[test]
fn predictive_check_flags_a_step_artifact() {
    let mut data = synthetic_curves(&benchmark(), T_M, &grid(), 20_000, 7).unwrap();
    let j = 20;
    data.k_cond[j] = (data.k_cond[j] as f64 * 0.9) as u64;
    let (post, _) = fit(&data, &PriorSpec::default(), &settings(7), &SummaryOptions::default(), T_M).unwrap();
    let ppc = posterior_predictive_check(&post, &data, T_M, 2000, 7).unwrap();
    assert!(ppc[j].p_cond < 0.01, "{:?}", ppc[j]);
}
