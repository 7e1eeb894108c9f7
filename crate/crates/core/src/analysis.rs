//! Small estimators used to summarise simulated curves.

use serde::{Deserialize, Serialize};

use crate::analytic::ln_conditional_survival;
use crate::error::{Error, Result};
use crate::model::SurvivalCurves;
use crate::inference::likelihood_kernel;
use crate::lindblad::golden_section;

/// Rate estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub se: f64,
}

/// Maximum-likelihood rate `r` of `k_i ~ Binom(n_i, e^{−r t_i})` with the
/// Fisher-information standard error `(Σ n t² p/(1−p))^{−1/2}`.
pub fn fit_exponential_rate(times: &[f64], n: &[u64], k: &[u64]) -> Result<RateFit> {
    if times.len() != n.len() || times.len() != k.len() {
        return Err(Error::InvalidData("column lengths differ".into()));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    if !(t_max > 0.0) || n.iter().all(|&x| x == 0) {
        return Err(Error::InvalidData("need positive times with trials".into()));
    }
    let neg_ll = |r: f64| {
        let mut total = 0.0;
        for i in 0..times.len() {
            let ln_p = -r * times[i];
            total += likelihood_kernel(k[i], n[i], ln_p, (-ln_p.exp_m1()).ln());
        }
        Ok(-total)
    };
    let r_max = 50.0 / times.iter().copied().filter(|&t| t > 0.0).fold(f64::INFINITY, f64::min);
    let rate = golden_section(neg_ll, 1e-12 * r_max, r_max, 1e-10 * r_max, 500)?;
    let info: f64 = times
        .iter()
        .zip(n)
        .map(|(&t, &ni)| {
            let p = (-rate * t).exp();
            if p >= 1.0 {
                0.0
            } else {
                ni as f64 * t * t * p / (1.0 - p)
            }
        })
        .sum();
    Ok(RateFit {
        rate,
        se: 1.0 / info.sqrt(),
    })
}

/// Maximum-likelihood detection probability ξ from the post-selected
/// counts alone, with the total loss rate `kappa` held fixed.
pub fn fit_detection_probability(curves: &SurvivalCurves, kappa: f64) -> Result<f64> {
    curves.check()?;
    if !(kappa >= 0.0) {
        return Err(Error::invalid("kappa", "must be >= 0"));
    }
    let neg_ll = |xi: f64| {
        let mut total = 0.0;
        for i in 0..curves.len() {
            let (ln_p, ln_q) = ln_conditional_survival(curves.times[i], kappa, xi);
            total += likelihood_kernel(curves.k_cond[i], curves.n_cond[i], ln_p, ln_q);
        }
        Ok(if total.is_nan() { f64::INFINITY } else { -total })
    };
    golden_section(neg_ll, 0.0, 1.0 - 1e-9, 1e-9, 500)
}

/// Ordinary least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
}

pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidData("need at least 3 paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidData("x values are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok(LineFit {
        intercept,
        slope,
        slope_se: (rss / (n - 2.0) / sxx).sqrt(),
    })
}

/// Regression of `ln y` on `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidData("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_regression(&lx, &ly)
}
