//! Mode finding and adaptive random-walk Metropolis.
//!
//! Chains start from an over-dispersed Laplace approximation around the
//! posterior mode. During tuning the proposal covariance is re-estimated
//! from the chain's own history every 200 steps (until 75 % of tuning) and
//! a global scale is adapted by Robbins-Monro towards 23.4 % acceptance.
//! The proposal is frozen for the draw phase.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

pub(crate) type Point = [f64; 3];

const TARGET_ACCEPT: f64 = 0.234;
const COV_REFRESH: usize = 200;

/// Nelder-Mead minimisation (standard coefficients).
pub(crate) fn nelder_mead<F>(f: F, x0: Point, step: Point, max_iter: usize, ftol: f64) -> (Point, f64)
where
    F: Fn(&Point) -> f64,
{
    let eval = |x: &Point| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Point, f64)> = Vec::with_capacity(4);
    simplex.push((x0, eval(&x0)));
    for i in 0..3 {
        let mut x = x0;
        x[i] += step[i];
        simplex.push((x, eval(&x)));
    }
    let lerp = |a: &Point, b: &Point, t: f64| -> Point {
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        if worst.is_finite() && (worst - best).abs() <= ftol * (best.abs() + ftol) {
            break;
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for k in 0..3 {
                centroid[k] += x[k] / 3.0;
            }
        }
        let worst_x = simplex[3].0;
        let reflected = lerp(&centroid, &worst_x, -1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &worst_x, -2.0);
            let fe = eval(&expanded);
            simplex[3] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < simplex[3].1 {
                let c = lerp(&centroid, &reflected, 0.5);
                (c, eval(&c))
            } else {
                let c = lerp(&centroid, &worst_x, 0.5);
                (c, eval(&c))
            };
            if fc < fr.min(simplex[3].1) {
                simplex[3] = (contracted, fc);
            } else {
                let best_x = simplex[0].0;
                for item in simplex.iter_mut().skip(1) {
                    let x = lerp(&best_x, &item.0, 0.5);
                    *item = (x, eval(&x));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Covariance of the Laplace approximation of `logp` at `x`.
///
/// Finite differences are centred at least three steps above `lower` so
/// that modes on a boundary still give a usable curvature. Falls back to a
/// diagonal matrix (using `fallback_sd` for flat directions) when the
/// Hessian is not negative definite.
pub(crate) fn laplace_covariance<F>(logp: F, x: Point, lower: Point, fallback_sd: Point) -> Matrix3<f64>
where
    F: Fn(&Point) -> f64,
{
    let mut h: Point = [0.0; 3];
    for i in 0..3 {
        h[i] = 1e-4 * x[i].abs().max(1.0);
    }
    let centre = |h: &Point| -> Point {
        let mut c = x;
        for i in 0..3 {
            c[i] = c[i].max(lower[i] + 3.0 * h[i]);
        }
        c
    };
    let second_diag = |h: &Point| -> Point {
        let c = centre(h);
        let f0 = logp(&c);
        let mut d = [0.0; 3];
        for i in 0..3 {
            let (mut up, mut dn) = (c, c);
            up[i] += h[i];
            dn[i] -= h[i];
            d[i] = (logp(&up) - 2.0 * f0 + logp(&dn)) / (h[i] * h[i]);
        }
        d
    };
    let d = second_diag(&h);
    for i in 0..3 {
        if d[i] < 0.0 && d[i].is_finite() {
            h[i] = 0.2 / (-d[i]).sqrt();
        }
    }
    let d = second_diag(&h);
    let diag_fallback = Matrix3::from_diagonal(&Vector3::from_fn(|i, _| {
        if d[i] < 0.0 && d[i].is_finite() {
            -1.0 / d[i]
        } else {
            fallback_sd[i] * fallback_sd[i]
        }
    }));

    let c = centre(&h);
    let mut hess = Matrix3::zeros();
    for i in 0..3 {
        hess[(i, i)] = d[i];
        for j in 0..i {
            let at = |si: f64, sj: f64| {
                let mut p = c;
                p[i] += si * h[i];
                p[j] += sj * h[j];
                logp(&p)
            };
            let v = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    if hess.iter().all(|v| v.is_finite()) {
        if let Some(chol) = (-hess).cholesky() {
            let cov = chol.inverse();
            if cov.iter().all(|v| v.is_finite()) {
                return cov;
            }
        }
    }
    diag_fallback
}

pub(crate) struct ChainOutput {
    pub draws: Vec<Point>,
    pub accepted: usize,
}

struct Welford {
    n: usize,
    mean: Vector3<f64>,
    m2: Matrix3<f64>,
}

impl Welford {
    fn new() -> Self {
        Welford {
            n: 0,
            mean: Vector3::zeros(),
            m2: Matrix3::zeros(),
        }
    }

    fn push(&mut self, x: &Vector3<f64>) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean).transpose();
    }

    fn covariance(&self) -> Matrix3<f64> {
        self.m2 / (self.n as f64 - 1.0)
    }
}

/// One adaptive Metropolis chain.
pub(crate) fn run_chain<F, R>(
    logp: &F,
    start: Point,
    initial_cov: Matrix3<f64>,
    n_tune: usize,
    n_draws: usize,
    rng: &mut R,
) -> ChainOutput
where
    F: Fn(&Point) -> f64,
    R: Rng,
{
    let base_scale = (2.38f64 / 3f64.sqrt()).ln();
    let mut log_scale = base_scale;
    let mut chol = initial_cov
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| Matrix3::from_diagonal(&initial_cov.diagonal().map(|v| v.abs().sqrt())));
    let mut x = Vector3::from(start);
    let mut lp = logp(&start);
    let mut history = Welford::new();
    let history_start = n_tune / 5;
    let last_refresh = n_tune * 3 / 4;
    let mut since_update = 0usize;
    let mut draws = Vec::with_capacity(n_draws);
    let mut accepted = 0;

    for step in 0..n_tune + n_draws {
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let proposal = x + chol * z * log_scale.exp();
        let p: Point = proposal.into();
        let lp_prop = logp(&p);
        let accept_prob = if lp_prop.is_nan() || lp_prop == f64::NEG_INFINITY {
            0.0
        } else {
            (lp_prop - lp).min(0.0).exp()
        };
        if rng.random::<f64>() < accept_prob {
            x = proposal;
            lp = lp_prop;
            if step >= n_tune {
                accepted += 1;
            }
        }

        if step < n_tune {
            since_update += 1;
            let gain = 0.5 / (since_update as f64).powf(0.6);
            log_scale += gain * (accept_prob - TARGET_ACCEPT);
            if step >= history_start {
                history.push(&x);
                let elapsed = step - history_start;
                if elapsed > 0 && elapsed % COV_REFRESH == 0 && step <= last_refresh && history.n > 50
                {
                    let cov = history.covariance();
                    if let Some(c) = cov.cholesky() {
                        chol = c.l();
                        log_scale = base_scale;
                        since_update = 0;
                    }
                }
            }
        } else {
            draws.push(x.into());
        }
    }
    ChainOutput { draws, accepted }
}
