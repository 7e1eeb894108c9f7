//! Binomial likelihood of paired survival curves.

use crate::analytic::{detection_probability, ln_conditional_survival};
use crate::model::SurvivalCurves;

use super::Theta;

/// `k ln p + (n−k) ln(1−p)` given `ln p` and `ln(1−p)`, with `0·ln 0 = 0`.
pub(crate) fn binomial_kernel(k: u64, n: u64, ln_p: f64, ln_q: f64) -> f64 {
    let mut out = 0.0;
    if k > 0 {
        out += k as f64 * ln_p;
    }
    if n > k {
        out += (n - k) as f64 * ln_q;
    }
    out
}

/// Log-likelihood of `data` at `theta`, up to the binomial coefficients.
///
/// Unconditional counts are `Binom(n, e^{−κt})`, post-selected counts are
/// `Binom(n_cond, P₁ᵍ(t))` with `κ = κ_dd + κ₀` and ξ from the detection
/// probability at measurement interval `t_m`. Returns `−∞` outside the
/// physical domain.
pub fn log_likelihood(theta: &Theta, data: &SurvivalCurves, t_m: f64) -> f64 {
    let Ok(xi) = detection_probability(theta.kappa_dd, theta.kappa0, theta.gamma, t_m) else {
        return f64::NEG_INFINITY;
    };
    let kappa = theta.kappa();
    let mut total = 0.0;
    for i in 0..data.len() {
        let t = data.times[i];
        let ln_p = -kappa * t;
        let ln_q = (-(-kappa * t).exp_m1()).ln();
        total += binomial_kernel(data.k_uncond[i], data.n_uncond[i], ln_p, ln_q);
        let (ln_pc, ln_qc) = ln_conditional_survival(t, kappa, xi);
        total += binomial_kernel(data.k_cond[i], data.n_cond[i], ln_pc, ln_qc);
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::synthetic_curves;
    use crate::model::log_spaced_grid;

    fn truth() -> Theta {
        Theta {
            kappa_dd: 1.0 / 5.4e-3,
            kappa0: 1.0 / 9.7e-3,
            gamma: 1.0 / 71e-6,
        }
    }

    #[test]
    fn kernel_edge_cases() {
        assert_eq!(binomial_kernel(10, 10, 0.0, f64::NEG_INFINITY), 0.0);
        assert_eq!(binomial_kernel(0, 10, f64::NEG_INFINITY, 0.0), 0.0);
        assert_eq!(
            binomial_kernel(1, 10, f64::NEG_INFINITY, 0.0),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn time_zero_contributes_nothing() {
        let data = SurvivalCurves {
            times: vec![0.0],
            n_uncond: vec![100],
            k_uncond: vec![100],
            n_cond: vec![100],
            k_cond: vec![100],
            n_retained: vec![100],
        };
        assert_eq!(log_likelihood(&truth(), &data, 4e-6), 0.0);
    }

    #[test]
    fn outside_domain_is_neg_inf() {
        let data = synthetic_curves(&truth(), 4e-6, &[1e-3], 100, 1).unwrap();
        let bad = Theta {
            kappa_dd: -1.0,
            ..truth()
        };
        assert_eq!(log_likelihood(&bad, &data, 4e-6), f64::NEG_INFINITY);
    }

    #[test]
    fn truth_maximises_on_grid() {
        let times = log_spaced_grid(4e-6, 12e-3, 30);
        let data = synthetic_curves(&truth(), 4e-6, &times, 10_000_000, 3).unwrap();
        let at_truth = log_likelihood(&truth(), &data, 4e-6);
        for dd in [-0.05, 0.0, 0.05] {
            for d0 in [-0.05, 0.0, 0.05] {
                if dd == 0.0 && d0 == 0.0 {
                    continue;
                }
                let th = Theta {
                    kappa_dd: truth().kappa_dd * (1.0 + dd),
                    kappa0: truth().kappa0 * (1.0 + d0),
                    ..truth()
                };
                assert!(log_likelihood(&th, &data, 4e-6) < at_truth);
            }
        }
    }

    #[test]
    fn misspecified_rate_costs_many_nats() {
        let times = log_spaced_grid(4e-6, 12e-3, 30);
        let data = synthetic_curves(&truth(), 4e-6, &times, 20_000, 5).unwrap();
        let at_truth = log_likelihood(&truth(), &data, 4e-6);
        let wrong = Theta {
            kappa_dd: truth().kappa_dd * 10.0,
            ..truth()
        };
        assert!(at_truth - log_likelihood(&wrong, &data, 4e-6) > 100.0);
        let wrong = Theta {
            kappa_dd: truth().kappa_dd / 10.0,
            ..truth()
        };
        assert!(at_truth - log_likelihood(&wrong, &data, 4e-6) > 100.0);
    }

    #[test]
    fn smooth_under_finite_differences() {
        // symmetric differences at h and h/2 agree: no kinks near the truth
        let times = log_spaced_grid(4e-6, 12e-3, 30);
        let data = synthetic_curves(&truth(), 4e-6, &times, 20_000, 9).unwrap();
        let base = truth().to_array();
        for i in 0..3 {
            let deriv = |h: f64| {
                let mut up = base;
                let mut dn = base;
                up[i] += h;
                dn[i] -= h;
                (log_likelihood(&Theta::from_array(up), &data, 4e-6)
                    - log_likelihood(&Theta::from_array(dn), &data, 4e-6))
                    / (2.0 * h)
            };
            let h = 1e-5 * base[i];
            let (d1, d2) = (deriv(h), deriv(h / 2.0));
            assert!(
                (d1 - d2).abs() <= 1e-5 * d1.abs().max(1e-3),
                "param {i}: {d1} vs {d2}"
            );
        }
    }
}
