//! Dense master-equation solver on qubit {g,e} ⊗ cavity {0,1}.
//!
//! Basis order is `(g0, g1, e0, e1)`. The generator is
//! `dρ/dt = −i[H, ρ] + Σᵢ γᵢ (Lᵢ ρ Lᵢ† − ½{Lᵢ†Lᵢ, ρ})`; the sensing model uses
//! no Hamiltonian, the optional one exists for integrator tests. Integration
//! is fixed-step RK4 with `dt = min(1/(100·max rate), t_span/1000)`. The
//! trace is never renormalised; drift beyond `1e-6` is an error.
//!
//! The equation is linear and autonomous, so one RK4 step of size `h` is a
//! fixed linear map on the 16 entries of ρ. It is tabulated once per step
//! size by stepping the 16 matrix units, and applied as a 16×16 product.

use nalgebra::{Matrix4, SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::DeviceParams;

pub type Operator = Matrix4<Complex64>;

pub const G0: usize = 0;
pub const G1: usize = 1;
pub const E0: usize = 2;
pub const E1: usize = 3;

const MAX_TRACE_DRIFT: f64 = 1e-6;

type Propagator = SMatrix<Complex64, 16, 16>;
type Flat = SVector<Complex64, 16>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn basis_op(entries: &[(usize, usize, f64)]) -> Operator {
    let mut m = Operator::zeros();
    for &(row, col, v) in entries {
        m[(row, col)] = c(v);
    }
    m
}

/// Cavity annihilation `c = 1 ⊗ a`.
pub fn cavity_lowering() -> Operator {
    basis_op(&[(G0, G1, 1.0), (E0, E1, 1.0)])
}

/// Qubit lowering `σ₋ = |g⟩⟨e| ⊗ 1`.
pub fn qubit_lowering() -> Operator {
    basis_op(&[(G0, E0, 1.0), (G1, E1, 1.0)])
}

/// Qubit raising `σ₊ = |e⟩⟨g| ⊗ 1`.
pub fn qubit_raising() -> Operator {
    qubit_lowering().adjoint()
}

/// `σ_z = |e⟩⟨e| − |g⟩⟨g|` on the qubit.
pub fn qubit_z() -> Operator {
    basis_op(&[(G0, G0, -1.0), (G1, G1, -1.0), (E0, E0, 1.0), (E1, E1, 1.0)])
}

/// A 4×4 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(pub Operator);

impl DensityMatrix {
    /// Projector onto one basis state.
    pub fn pure(index: usize) -> Self {
        let mut m = Operator::zeros();
        m[(index, index)] = c(1.0);
        DensityMatrix(m)
    }

    pub fn matrix(&self) -> &Operator {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn trace_drift(&self) -> f64 {
        (self.trace() - 1.0).abs()
    }

    /// Largest entry of `|ρ − ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.0 + self.0.adjoint()) * c(0.5);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks Hermiticity (1e-10), unit trace (1e-8) and positivity (−1e-8).
    pub fn check(&self) -> Result<()> {
        if self.hermiticity_error() > 1e-10 {
            return Err(Error::InvalidData("density matrix is not Hermitian".into()));
        }
        if self.trace_drift() > 1e-8 {
            return Err(Error::InvalidData("density matrix trace differs from 1".into()));
        }
        if self.min_eigenvalue() < -1e-8 {
            return Err(Error::InvalidData("density matrix is not positive".into()));
        }
        Ok(())
    }

    fn population(&self, indices: [usize; 2]) -> f64 {
        let p: f64 = indices.iter().map(|&i| self.0[(i, i)].re).sum();
        crate::analytic::clamp_probability(p)
    }

    /// `Tr[|e⟩⟨e| ρ]`.
    pub fn excited_population(&self) -> f64 {
        self.population([E0, E1])
    }

    /// `Tr[c†c ρ]`.
    pub fn photon_population(&self) -> f64 {
        self.population([G1, E1])
    }
}

/// `[(1−n_th)|g⟩⟨g| + n_th|e⟩⟨e|] ⊗ |1⟩⟨1|`.
pub fn initial_state(n_th: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&n_th) {
        return Err(Error::invalid("n_th", "must lie in [0, 1]"));
    }
    let mut m = Operator::zeros();
    m[(G1, G1)] = c(1.0 - n_th);
    m[(E1, E1)] = c(n_th);
    Ok(DensityMatrix(m))
}

/// One dissipative channel.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseChannel {
    pub name: &'static str,
    pub operator: Operator,
    /// s⁻¹
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollapseSet {
    pub channels: Vec<CollapseChannel>,
}

impl CollapseSet {
    pub fn push(&mut self, name: &'static str, operator: Operator, rate: f64) -> Result<()> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::invalid("rate", format!("channel {name}: must be >= 0")));
        }
        self.channels.push(CollapseChannel {
            name,
            operator,
            rate,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Channels with a strictly positive rate.
    pub fn active(&self) -> impl Iterator<Item = &CollapseChannel> {
        self.channels.iter().filter(|ch| ch.rate > 0.0)
    }

    pub fn max_rate(&self) -> f64 {
        self.channels.iter().map(|ch| ch.rate).fold(0.0, f64::max)
    }
}

/// The cavity-qubit collapse operators: cavity decay `√κ₀ c`, relaxation
/// `√Γ σ₋`, thermal excitation `√(Γ n_th) σ₊`, pure dephasing `√(Γ_φ/2) σ_z`,
/// forward dressed dephasing `√κ_dd c σ₊` and, optionally, the reverse
/// process `√κ_dd c† σ₋` at the same rate.
pub fn build_collapse_set(
    params: &DeviceParams,
    kappa_dd: f64,
    include_reverse: bool,
) -> Result<CollapseSet> {
    params.check()?;
    let a = cavity_lowering();
    let sm = qubit_lowering();
    let sp = qubit_raising();
    let mut set = CollapseSet::default();
    set.push("cavity_decay", a, params.kappa0)?;
    set.push("qubit_relaxation", sm, params.gamma)?;
    set.push("thermal_excitation", sp, params.gamma * params.n_th)?;
    set.push("pure_dephasing", qubit_z(), params.gamma_phi / 2.0)?;
    set.push("dressed_dephasing", a * sp, kappa_dd)?;
    if include_reverse {
        set.push("reverse_dressed_dephasing", a.adjoint() * sm, kappa_dd)?;
    }
    Ok(set)
}

struct Generator {
    hamiltonian: Operator,
    jumps: Vec<(Operator, Operator)>,
    /// Σ γ L†L / 2
    half_decay: Operator,
}

impl Generator {
    fn new(collapse: &CollapseSet, hamiltonian: Option<&Operator>) -> Self {
        let mut half_decay = Operator::zeros();
        let mut jumps = Vec::new();
        for ch in collapse.active() {
            let l = ch.operator * c(ch.rate.sqrt());
            let ld = l.adjoint();
            half_decay += ld * l * c(0.5);
            jumps.push((l, ld));
        }
        Generator {
            hamiltonian: hamiltonian.copied().unwrap_or_else(Operator::zeros),
            jumps,
            half_decay,
        }
    }

    fn apply(&self, rho: &Operator) -> Operator {
        let i = Complex64::new(0.0, 1.0);
        let mut out = (self.hamiltonian * rho - rho * self.hamiltonian) * (-i);
        for (l, ld) in &self.jumps {
            out += l * rho * ld;
        }
        out -= self.half_decay * rho + rho * self.half_decay;
        out
    }

    fn rk4_step(&self, rho: &Operator, h: f64) -> Operator {
        let hc = c(h);
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + k1 * (hc * 0.5)));
        let k3 = self.apply(&(rho + k2 * (hc * 0.5)));
        let k4 = self.apply(&(rho + k3 * hc));
        rho + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * (hc / 6.0)
    }

    /// The RK4 step of size `h` as a matrix on column-major flattened ρ.
    fn step_propagator(&self, h: f64) -> Propagator {
        let mut m = Propagator::zeros();
        for k in 0..16 {
            let mut unit = Operator::zeros();
            unit[k] = c(1.0);
            let image = self.rk4_step(&unit, h);
            m.set_column(k, &Flat::from_column_slice(image.as_slice()));
        }
        m
    }
}

/// Step size rule `min(1/(100·max rate), t_span/1000)`; the Hamiltonian's
/// largest entry counts as a rate.
pub fn step_size(collapse: &CollapseSet, hamiltonian: Option<&Operator>, t_span: f64) -> f64 {
    let h_scale = hamiltonian
        .map(|h| h.iter().map(|z| z.norm()).fold(0.0, f64::max))
        .unwrap_or(0.0);
    let rate = collapse.max_rate().max(h_scale);
    let by_span = t_span / 1000.0;
    if rate > 0.0 {
        (1.0 / (100.0 * rate)).min(by_span)
    } else {
        by_span
    }
}

/// Integrates the master equation from `t = 0` and returns `ρ(t)` at every
/// requested time.
pub fn evolve(
    rho0: &DensityMatrix,
    collapse: &CollapseSet,
    times: &[f64],
) -> Result<Vec<DensityMatrix>> {
    evolve_with_hamiltonian(rho0, collapse, None, times)
}

/// [`evolve`] with an optional Hamiltonian (angular units, ħ = 1).
pub fn evolve_with_hamiltonian(
    rho0: &DensityMatrix,
    collapse: &CollapseSet,
    hamiltonian: Option<&Operator>,
    times: &[f64],
) -> Result<Vec<DensityMatrix>> {
    if times.iter().any(|&t| !(t >= 0.0) || !t.is_finite())
        || times.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::invalid("times", "must be sorted, finite and non-negative"));
    }
    let Some(&t_end) = times.last() else {
        return Ok(Vec::new());
    };
    let generator = Generator::new(collapse, hamiltonian);
    let dt = step_size(collapse, hamiltonian, t_end);
    let mut rho = Flat::from_column_slice(rho0.0.as_slice());
    let mut cached: Option<(f64, Propagator)> = None;
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - now;
        if span > 0.0 {
            let steps = (span / dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            let step = match &cached {
                Some((ch, m)) if *ch == h => *m,
                _ => {
                    let m = generator.step_propagator(h);
                    cached = Some((h, m));
                    m
                }
            };
            for _ in 0..steps {
                rho = step * rho;
            }
            now = t;
        }
        let rho = Operator::from_column_slice(rho.as_slice());
        let state = DensityMatrix(rho);
        let drift = (state.trace() - rho0.trace()).abs();
        if !(drift <= MAX_TRACE_DRIFT) {
            return Err(Error::IntegrationFailure {
                time: t,
                drift,
                suggested_step: dt / 2.0,
            });
        }
        out.push(state);
    }
    Ok(out)
}

/// Excited-state population `P_e(t)` of the sensing model.
pub fn excited_population_trace(
    params: &DeviceParams,
    kappa_dd: f64,
    include_reverse: bool,
    times: &[f64],
) -> Result<Vec<f64>> {
    let rho0 = initial_state(params.n_th)?;
    let set = build_collapse_set(params, kappa_dd, include_reverse)?;
    Ok(evolve(&rho0, &set, times)?
        .iter()
        .map(DensityMatrix::excited_population)
        .collect())
}

/// Upper end of the κ_dd search interval (s⁻¹).
pub const FIT_KAPPA_DD_MAX: f64 = 1e3;

/// κ_dd minimising the squared residuals between the simulated and the
/// observed `P_e(t)`, by golden-section search over `[0, 10³] s⁻¹`.
pub fn fit_kappa_dd_to_trace(
    observed: &[f64],
    times: &[f64],
    params: &DeviceParams,
) -> Result<f64> {
    if observed.len() != times.len() {
        return Err(Error::InvalidData(format!(
            "{} observations for {} times",
            observed.len(),
            times.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::InvalidData("empty trace".into()));
    }
    let sse = |kappa_dd: f64| -> Result<f64> {
        let model = excited_population_trace(params, kappa_dd, true, times)?;
        Ok(model
            .iter()
            .zip(observed)
            .map(|(m, o)| (m - o) * (m - o))
            .sum())
    };
    golden_section(sse, 0.0, FIT_KAPPA_DD_MAX, 1e-4, 200)
}

/// Bounded golden-section minimisation of a unimodal function.
pub(crate) fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..max_iter {
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::NonConvergence("objective is not finite".into()));
        }
        if (b - a).abs() <= tol {
            // the open interval never reaches the bounds; check them
            let mid = 0.5 * (a + b);
            let f_mid = f(mid)?;
            let mut best = (mid, f_mid);
            for edge in [lo, hi] {
                if (edge - mid).abs() <= 2.0 * tol {
                    let fe = f(edge)?;
                    if fe < best.1 {
                        best = (edge, fe);
                    }
                }
            }
            return Ok(best.0);
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        }
    }
    Err(Error::NonConvergence(format!(
        "golden-section search did not reach tolerance {tol} in {max_iter} iterations"
    )))
}
