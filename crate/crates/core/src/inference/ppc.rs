//! Posterior predictive checks of the two binomial curves.

use serde::{Deserialize, Serialize};

use crate::analytic::detection_probability;
use crate::error::{Error, Result};
use crate::model::SurvivalCurves;
use crate::trajectory::{mix_seed, shot_rng};

use super::{binomial, model_probabilities, Posterior};

/// Two-sided predictive p-values at one time point. `NaN` where the curve
/// has no trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpcPoint {
    pub time: f64,
    pub p_uncond: f64,
    pub p_cond: f64,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    below: u64,
    equal: u64,
}

impl Tally {
    fn add(&mut self, replicated: u64, observed: u64) {
        if replicated < observed {
            self.below += 1;
        } else if replicated == observed {
            self.equal += 1;
        }
    }

    /// Mid-p tail probability folded to two sides.
    fn two_sided(&self, draws: usize) -> f64 {
        let p = (self.below as f64 + 0.5 * self.equal as f64) / draws as f64;
        (2.0 * p.min(1.0 - p)).min(1.0)
    }
}

/// For `n_draws` posterior samples (evenly spaced through the pooled
/// draws) regenerates `k_uncond` and `k_cond` given the observed trial
/// counts and reports where the observations fall.
pub fn posterior_predictive_check(
    posterior: &Posterior,
    data: &SurvivalCurves,
    t_m: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<PpcPoint>> {
    if posterior.is_empty() {
        return Err(Error::TooFewSamples {
            required: 1,
            got: 0,
        });
    }
    if n_draws == 0 {
        return Err(Error::invalid("n_draws", "must be >= 1"));
    }
    data.check()?;
    let total = posterior.samples.len();
    let mut uncond = vec![Tally::default(); data.len()];
    let mut cond = vec![Tally::default(); data.len()];
    let mut rng = shot_rng(mix_seed(seed, 0x5050_4321), 0);
    for d in 0..n_draws {
        let theta = &posterior.samples[d * total / n_draws];
        let xi = detection_probability(theta.kappa_dd, theta.kappa0, theta.gamma, t_m)?;
        for i in 0..data.len() {
            let (p, _, p_cond) = model_probabilities(theta, xi, data.times[i]);
            uncond[i].add(binomial(&mut rng, data.n_uncond[i], p), data.k_uncond[i]);
            cond[i].add(binomial(&mut rng, data.n_cond[i], p_cond), data.k_cond[i]);
        }
    }
    Ok((0..data.len())
        .map(|i| PpcPoint {
            time: data.times[i],
            p_uncond: if data.n_uncond[i] == 0 {
                f64::NAN
            } else {
                uncond[i].two_sided(n_draws)
            },
            p_cond: if data.n_cond[i] == 0 {
                f64::NAN
            } else {
                cond[i].two_sided(n_draws)
            },
        })
        .collect())
}
