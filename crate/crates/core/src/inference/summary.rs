//! Posterior summaries: highest density intervals and one-sided bounds.

use crate::error::{Error, Result};

/// Minimum number of samples accepted by the summaries.
pub const MIN_SAMPLES: usize = 100;

fn sorted(samples: &[f64], mass: f64) -> Result<Vec<f64>> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::invalid("mass", "must lie in (0, 1)"));
    }
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidData("NaN sample".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Shortest interval spanning `ceil(mass·n)` sorted samples.
pub fn hdi(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    let v = sorted(samples, mass)?;
    let n = v.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let (mut best, mut width) = (0, f64::INFINITY);
    for i in 0..=n - k {
        let w = v[i + k - 1] - v[i];
        if w < width {
            width = w;
            best = i;
        }
    }
    Ok((v[best], v[best + k - 1]))
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn quantile(samples: &[f64], q: f64) -> Result<f64> {
    Ok(quantile_sorted(&sorted(samples, q)?, q))
}

/// One-sided credible upper bound: the `mass` quantile.
pub fn upper_bound(samples: &[f64], mass: f64) -> Result<f64> {
    quantile(samples, mass)
}
