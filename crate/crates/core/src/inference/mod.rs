//! Bayesian estimation of `(κ_dd, κ₀, Γ)` from paired survival counts.

mod diagnostics;
mod likelihood;
pub(crate) use likelihood::binomial_kernel as likelihood_kernel;
mod ppc;
mod sampler;
mod summary;

pub use diagnostics::{bulk_ess, split_rhat};
pub use likelihood::log_likelihood;
pub use ppc::{posterior_predictive_check, PpcPoint};
pub use summary::{hdi, quantile, upper_bound, MIN_SAMPLES};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{conditional_survival, detection_probability, unconditional_survival};
use crate::error::{Error, Result};
use crate::model::{reference, SurvivalCurves};
use crate::trajectory::{mix_seed, shot_rng};

use sampler::Point;

pub const PARAM_NAMES: [&str; 3] = ["kappa_dd", "kappa0", "gamma"];

/// Rates in s⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub kappa_dd: f64,
    pub kappa0: f64,
    pub gamma: f64,
}

impl Theta {
    /// Total photon loss rate κ = κ_dd + κ₀.
    pub fn kappa(&self) -> f64 {
        self.kappa_dd + self.kappa0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.kappa_dd, self.kappa0, self.gamma]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Theta {
            kappa_dd: a[0],
            kappa0: a[1],
            gamma: a[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
}

impl Prior {
    fn check(&self, field: &'static str) -> Result<()> {
        match *self {
            Prior::Uniform { lo, hi } => {
                if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                    return Err(Error::invalid(field, "uniform bounds need 0 <= lo < hi < inf"));
                }
            }
            Prior::Normal { mean, sd } => {
                if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
                    return Err(Error::invalid(field, "normal prior needs finite mean and sd > 0"));
                }
            }
        }
        Ok(())
    }

    fn ln_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }

    /// Hard lower edge of the support.
    fn lower(&self) -> f64 {
        match *self {
            Prior::Uniform { lo, .. } => lo,
            Prior::Normal { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => 0.5 * (lo + hi),
            Prior::Normal { mean, .. } => mean,
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => (hi - lo) / 12f64.sqrt(),
            Prior::Normal { sd, .. } => sd,
        }
    }
}

/// Priors on κ_dd, κ₀ (uniform) and Γ (normal). Γ is always restricted to
/// Γ ≥ 0 in addition to its prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kappa_dd: Prior,
    pub kappa0: Prior,
    pub gamma: Prior,
}

/// Upper edge of the default uniform priors on κ_dd and κ₀.
pub const DEFAULT_RATE_CEILING: f64 = 1e4;

impl Default for PriorSpec {
    fn default() -> Self {
        Self::with_qubit_lifetime(reference::QUBIT_T1, reference::QUBIT_T1_SD)
    }
}

impl PriorSpec {
    /// Default rate priors with Γ ~ N(1/T₁, (σ_T₁/T₁)/T₁).
    pub fn with_qubit_lifetime(t1: f64, t1_sd: f64) -> Self {
        let mean = 1.0 / t1;
        PriorSpec {
            kappa_dd: Prior::Uniform {
                lo: 0.0,
                hi: DEFAULT_RATE_CEILING,
            },
            kappa0: Prior::Uniform {
                lo: 0.0,
                hi: DEFAULT_RATE_CEILING,
            },
            gamma: Prior::Normal {
                mean,
                sd: t1_sd / t1 * mean,
            },
        }
    }

    pub fn check(&self) -> Result<()> {
        self.kappa_dd.check("kappa_dd")?;
        self.kappa0.check("kappa0")?;
        self.gamma.check("gamma")?;
        for (field, p) in [("kappa_dd", self.kappa_dd), ("kappa0", self.kappa0)] {
            if !matches!(p, Prior::Uniform { .. }) {
                return Err(Error::invalid(field, "rate priors must be uniform"));
            }
        }
        Ok(())
    }

    fn as_array(&self) -> [Prior; 3] {
        [self.kappa_dd, self.kappa0, self.gamma]
    }

    pub fn log_prior(&self, theta: &Theta) -> f64 {
        if !(theta.gamma >= 0.0) {
            return f64::NEG_INFINITY;
        }
        self.as_array()
            .iter()
            .zip(theta.to_array())
            .map(|(p, x)| p.ln_density(x))
            .sum()
    }

    pub fn contains(&self, theta: &Theta) -> bool {
        self.log_prior(theta) > f64::NEG_INFINITY
    }

    fn lower(&self) -> Point {
        let a = self.as_array();
        [a[0].lower(), a[1].lower(), a[2].lower().max(0.0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSettings {
    pub n_chains: usize,
    pub n_tune: usize,
    pub n_draws: usize,
    pub seed: u64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            n_chains: 4,
            n_tune: 2000,
            n_draws: 5000,
            seed: 0,
        }
    }
}

impl SamplerSettings {
    pub fn check(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::invalid("n_chains", "need at least 2 chains for R-hat"));
        }
        if self.n_draws < 4 {
            return Err(Error::invalid("n_draws", "need at least 4 draws per chain"));
        }
        Ok(())
    }
}

/// Convergence thresholds.
pub const RHAT_MAX: f64 = 1.01;
pub const ESS_MIN: f64 = 400.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rhat: [f64; 3],
    pub ess: [f64; 3],
    pub acceptance_rate: f64,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        self.rhat.iter().all(|&r| r <= RHAT_MAX) && self.ess.iter().all(|&e| e >= ESS_MIN)
    }
}

/// Pooled post-tuning draws, chain-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub samples: Vec<Theta>,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub diagnostics: Diagnostics,
    pub converged: bool,
}

impl Posterior {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// All draws of one parameter (0 = κ_dd, 1 = κ₀, 2 = Γ).
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.samples.iter().map(|t| t.to_array()[index]).collect()
    }

    fn chain_column(&self, index: usize) -> Vec<Vec<f64>> {
        self.column(index)
            .chunks(self.draws_per_chain.max(1))
            .map(|c| c.to_vec())
            .collect()
    }
}

fn log_posterior(theta: &Theta, data: &SurvivalCurves, priors: &PriorSpec, t_m: f64) -> f64 {
    let lp = priors.log_prior(theta);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    lp + log_likelihood(theta, data, t_m)
}

/// Data-driven starting point for the mode search: κ from the unconditional
/// curve alone, then the κ_dd share that best explains the post-selected one.
fn initial_guess(data: &SurvivalCurves, priors: &PriorSpec, t_m: f64) -> Point {
    let gamma = priors.gamma.mean().max(0.0);
    let [lo_dd, lo_0, _] = priors.lower();
    let hi_of = |p: &Prior| match *p {
        Prior::Uniform { hi, .. } => hi,
        Prior::Normal { .. } => f64::INFINITY,
    };
    let (hi_dd, hi_0) = (hi_of(&priors.kappa_dd), hi_of(&priors.kappa0));
    if data.is_empty() {
        return [priors.kappa_dd.mean(), priors.kappa0.mean(), gamma];
    }
    let kappa_lo = lo_dd + lo_0;
    let kappa_hi = hi_dd + hi_0;
    let uncond_only = |kappa: f64| {
        let mut total = 0.0;
        for i in 0..data.len() {
            let t = data.times[i];
            let ln_q = (-(-kappa * t).exp_m1()).ln();
            total += likelihood::binomial_kernel(data.k_uncond[i], data.n_uncond[i], -kappa * t, ln_q);
        }
        -total
    };
    let kappa = crate::lindblad::golden_section(
        |k| Ok(uncond_only(k)),
        kappa_lo.max(1e-9),
        kappa_hi,
        1e-6 * kappa_hi,
        200,
    )
    .unwrap_or(0.5 * (kappa_lo + kappa_hi));
    let mut best = (f64::NEG_INFINITY, [lo_dd, kappa - lo_dd, gamma]);
    for i in 0..=40 {
        let frac = i as f64 / 40.0;
        let kdd = (frac * kappa).clamp(lo_dd, hi_dd);
        let k0 = (kappa - kdd).clamp(lo_0, hi_0);
        let p = [kdd, k0, gamma];
        let v = log_posterior(&Theta::from_array(p), data, priors, t_m);
        if v > best.0 {
            best = (v, p);
        }
    }
    best.1
}

/// Posterior mode (MAP) by Nelder-Mead from a data-driven start.
pub fn map_estimate(data: &SurvivalCurves, priors: &PriorSpec, t_m: f64) -> Result<Theta> {
    priors.check()?;
    data.check()?;
    let start = initial_guess(data, priors, t_m);
    let f = |p: &Point| -log_posterior(&Theta::from_array(*p), data, priors, t_m);
    let step = [
        0.1 * start[0].abs().max(1.0),
        0.1 * start[1].abs().max(1.0),
        0.01 * start[2].abs().max(1.0),
    ];
    let mut best = sampler::nelder_mead(f, start, step, 4000, 1e-12);
    // A restart guards against premature simplex collapse.
    let step = [
        0.02 * best.0[0].abs().max(1.0),
        0.02 * best.0[1].abs().max(1.0),
        0.005 * best.0[2].abs().max(1.0),
    ];
    let again = sampler::nelder_mead(f, best.0, step, 4000, 1e-12);
    if again.1 < best.1 {
        best = again;
    }
    if !best.1.is_finite() {
        return Err(Error::NonConvergence("no point with finite posterior density found".into()));
    }
    Ok(Theta::from_array(best.0))
}

/// Runs `settings.n_chains` adaptive Metropolis chains in parallel.
///
/// Empty data samples the prior. Non-converged results are returned with
/// `converged = false`.
pub fn sample_posterior(
    data: &SurvivalCurves,
    priors: &PriorSpec,
    settings: &SamplerSettings,
    t_m: f64,
) -> Result<Posterior> {
    settings.check()?;
    priors.check()?;
    data.check()?;
    if !(t_m > 0.0) {
        return Err(Error::invalid("t_m", "must be > 0"));
    }
    let mode = map_estimate(data, priors, t_m)?.to_array();
    let logp = |p: &Point| log_posterior(&Theta::from_array(*p), data, priors, t_m);
    let fallback_sd = priors.as_array().map(|p| p.sd());
    let cov = sampler::laplace_covariance(logp, mode, priors.lower(), fallback_sd);
    let chol = cov.cholesky().map(|c| c.l());

    let chains: Vec<sampler::ChainOutput> = (0..settings.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = shot_rng(mix_seed(settings.seed, 0x5A4D_504C), c as u64);
            // Over-dispersed start: mode + 2·N(0, cov), redrawn until inside the support.
            let mut start = mode;
            if let Some(l) = &chol {
                for _ in 0..100 {
                    let z = nalgebra::Vector3::from_fn(|_, _| {
                        rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal)
                    });
                    let cand: Point = (nalgebra::Vector3::from(mode) + l * z * 2.0).into();
                    if logp(&cand) > f64::NEG_INFINITY {
                        start = cand;
                        break;
                    }
                }
            }
            sampler::run_chain(&logp, start, cov, settings.n_tune, settings.n_draws, &mut rng)
        })
        .collect();

    let accepted: usize = chains.iter().map(|c| c.accepted).sum();
    let samples: Vec<Theta> = chains
        .iter()
        .flat_map(|c| c.draws.iter().map(|p| Theta::from_array(*p)))
        .collect();
    let mut posterior = Posterior {
        samples,
        n_chains: settings.n_chains,
        draws_per_chain: settings.n_draws,
        diagnostics: Diagnostics {
            rhat: [0.0; 3],
            ess: [0.0; 3],
            acceptance_rate: accepted as f64 / (settings.n_chains * settings.n_draws) as f64,
        },
        converged: false,
    };
    for i in 0..3 {
        let cols = posterior.chain_column(i);
        let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        posterior.diagnostics.rhat[i] = split_rhat(&refs);
        posterior.diagnostics.ess[i] = bulk_ess(&refs);
    }
    posterior.converged = posterior.diagnostics.converged();
    if !posterior.converged {
        tracing::warn!(
            rhat = ?posterior.diagnostics.rhat,
            ess = ?posterior.diagnostics.ess,
            "posterior not converged"
        );
    }
    Ok(posterior)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub hdi_lo: f64,
    pub hdi_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryOptions {
    pub hdi_mass: f64,
    pub bound_mass: f64,
    /// κ_dd counts as resolved when its posterior median exceeds this many
    /// posterior standard deviations.
    pub resolution_z: f64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            hdi_mass: 0.68,
            bound_mass: 0.68,
            resolution_z: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kappa_dd: ParamSummary,
    pub kappa0: ParamSummary,
    pub gamma: ParamSummary,
    pub hdi_mass: f64,
    /// Present whenever κ_dd is not resolved.
    pub upper_bound_kappa_dd: Option<f64>,
    pub bound_mass: f64,
    pub resolved: bool,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn medians(&self) -> Theta {
        Theta {
            kappa_dd: self.kappa_dd.median,
            kappa0: self.kappa0.median,
            gamma: self.gamma.median,
        }
    }
}

fn param_summary(samples: &[f64], mass: f64) -> Result<ParamSummary> {
    let (hdi_lo, hdi_hi) = hdi(samples, mass)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let median = quantile(samples, 0.5)?;
    Ok(ParamSummary {
        median,
        mean,
        sd: var.sqrt(),
        // the HDI of a skewed sample can miss the median by a sample spacing
        hdi_lo: hdi_lo.min(median),
        hdi_hi: hdi_hi.max(median),
    })
}

pub fn summarize(posterior: &Posterior, options: &SummaryOptions) -> Result<FitResult> {
    if posterior.is_empty() {
        return Err(Error::TooFewSamples {
            required: MIN_SAMPLES,
            got: 0,
        });
    }
    let dd = posterior.column(0);
    let kappa_dd = param_summary(&dd, options.hdi_mass)?;
    let kappa0 = param_summary(&posterior.column(1), options.hdi_mass)?;
    let gamma = param_summary(&posterior.column(2), options.hdi_mass)?;
    let resolved = kappa_dd.sd > 0.0 && kappa_dd.median > options.resolution_z * kappa_dd.sd;
    let upper_bound_kappa_dd = if resolved {
        None
    } else {
        Some(upper_bound(&dd, options.bound_mass)?)
    };
    Ok(FitResult {
        kappa_dd,
        kappa0,
        gamma,
        hdi_mass: options.hdi_mass,
        upper_bound_kappa_dd,
        bound_mass: options.bound_mass,
        resolved,
        converged: posterior.converged,
        diagnostics: posterior.diagnostics.clone(),
    })
}

/// Samples the posterior and summarises it.
pub fn fit(
    data: &SurvivalCurves,
    priors: &PriorSpec,
    settings: &SamplerSettings,
    options: &SummaryOptions,
    t_m: f64,
) -> Result<(Posterior, FitResult)> {
    if data.is_empty() {
        return Err(Error::InvalidData("no time points to fit".into()));
    }
    let posterior = sample_posterior(data, priors, settings, t_m)?;
    let result = summarize(&posterior, options)?;
    Ok((posterior, result))
}

/// Model probabilities `(P₁, retained fraction, P₁ᵍ)` at `t`.
pub(crate) fn model_probabilities(theta: &Theta, xi: f64, t: f64) -> (f64, f64, f64) {
    let kappa = theta.kappa();
    let p = unconditional_survival(t, kappa);
    let retained = (p + (1.0 - xi) * -(-kappa * t).exp_m1()).clamp(0.0, 1.0);
    (p, retained, conditional_survival(t, kappa, xi))
}

pub(crate) fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    match Binomial::new(n, p.clamp(0.0, 1.0)) {
        Ok(d) => d.sample(rng),
        Err(_) => 0,
    }
}

/// Counts drawn directly from the likelihood's generative model: at every
/// time an independent batch of `n_shots` gives `k_uncond ~ Binom(n, P₁)`,
/// `n_cond ~ Binom(n, retained)` and `k_cond ~ Binom(n_cond, P₁ᵍ)`.
pub fn synthetic_curves(
    theta: &Theta,
    t_m: f64,
    times: &[f64],
    n_shots: u64,
    seed: u64,
) -> Result<SurvivalCurves> {
    let xi = detection_probability(theta.kappa_dd, theta.kappa0, theta.gamma, t_m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5359_4E54));
    let mut curves = SurvivalCurves::with_times(times.to_vec());
    for (i, &t) in times.iter().enumerate() {
        let (p, retained, p_cond) = model_probabilities(theta, xi, t);
        let n_cond = binomial(&mut rng, n_shots, retained);
        curves.n_uncond[i] = n_shots;
        curves.k_uncond[i] = binomial(&mut rng, n_shots, p);
        curves.n_cond[i] = n_cond;
        curves.n_retained[i] = n_cond;
        curves.k_cond[i] = binomial(&mut rng, n_cond, p_cond);
    }
    curves.check()?;
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_spaced_grid;

    const T_M: f64 = 4e-6;

    fn benchmark() -> Theta {
        Theta {
            kappa_dd: 1.0 / 5.4e-3,
            kappa0: 1.0 / 9.7e-3,
            gamma: 1.0 / 71e-6,
        }
    }

    #[test]
    fn default_priors() {
        let p = PriorSpec::default();
        p.check().unwrap();
        let Prior::Normal { mean, sd } = p.gamma else {
            panic!()
        };
        assert!((mean - 14084.5).abs() < 0.1);
        assert!((sd - mean / 71.0).abs() < 1e-9);
        assert!(p.contains(&benchmark()));
        assert!(!p.contains(&Theta { kappa_dd: -1.0, ..benchmark() }));
        assert!(!p.contains(&Theta { kappa0: 2e4, ..benchmark() }));
    }

    #[test]
    fn prior_validation() {
        let mut p = PriorSpec::default();
        p.kappa_dd = Prior::Uniform { lo: -1.0, hi: 10.0 };
        assert!(p.check().is_err());
        let mut p = PriorSpec::default();
        p.gamma = Prior::Normal { mean: 1.0, sd: 0.0 };
        assert!(p.check().is_err());
    }

    #[test]
    fn synthetic_counts_consistent() {
        let times = log_spaced_grid(T_M, 12e-3, 30);
        let c = synthetic_curves(&benchmark(), T_M, &times, 20_000, 1).unwrap();
        c.check().unwrap();
        assert!(c.n_uncond.iter().all(|&n| n == 20_000));
        let again = synthetic_curves(&benchmark(), T_M, &times, 20_000, 1).unwrap();
        assert_eq!(c, again);
        // post-selected survival exceeds the unconditional one at late times
        let last = c.len() - 1;
        assert!(c.p_cond()[last] > 2.0 * c.p_uncond()[last]);
    }

    #[test]
    fn map_recovers_truth() {
        let times = log_spaced_grid(T_M, 12e-3, 30);
        let c = synthetic_curves(&benchmark(), T_M, &times, 1_000_000, 2).unwrap();
        let m = map_estimate(&c, &PriorSpec::default(), T_M).unwrap();
        assert!((m.kappa_dd / benchmark().kappa_dd - 1.0).abs() < 0.02, "{m:?}");
        assert!((m.kappa0 / benchmark().kappa0 - 1.0).abs() < 0.03, "{m:?}");
    }

    #[test]
    fn summarize_rejects_empty() {
        let post = Posterior {
            samples: vec![],
            n_chains: 4,
            draws_per_chain: 0,
            diagnostics: Diagnostics {
                rhat: [f64::NAN; 3],
                ess: [0.0; 3],
                acceptance_rate: 0.0,
            },
            converged: false,
        };
        assert!(summarize(&post, &SummaryOptions::default()).is_err());
    }

    #[test]
    fn settings_validation() {
        assert!(SamplerSettings {
            n_chains: 1,
            ..Default::default()
        }
        .check()
        .is_err());
        SamplerSettings::default().check().unwrap();
    }
}
