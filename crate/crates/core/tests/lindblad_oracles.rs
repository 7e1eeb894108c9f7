//! Master-equation solver against exact solutions and the trajectory engine.

use dll_core::lindblad::{
    build_collapse_set, evolve, excited_population_trace, fit_kappa_dd_to_trace, initial_state,
    DensityMatrix, G0,
};
use dll_core::model::{linear_grid, reference_device_params, ProtocolConfig, ReadoutModel};
use dll_core::trajectory::{run_experiment, simulate_population_trace, SimEngineConfig};

const KDD_HEATING: f64 = 1.0 / 9.1e-3;

fn heating_times() -> Vec<f64> {
    let mut t = vec![0.0];
    t.extend(linear_grid(4e-6, 12e-3, 30));
    t
}

fn engine(kappa_dd: f64, n_shots: u64, seed: u64) -> SimEngineConfig {
    let params = reference_device_params();
    let mut protocol = ProtocolConfig::on_default_grid(params.t_m, 12e-3, n_shots, seed);
    // Lindblad starts from the thermal qubit state, not a post-selected |g⟩
    protocol.post_select_init = false;
    SimEngineConfig {
        params,
        readout: ReadoutModel::ideal(),
        protocol,
        kappa_dd,
    }
}

#[test]
fn physical_state_over_twelve_ms() {
    let p = reference_device_params();
    let rho0 = initial_state(p.n_th).unwrap();
    let set = build_collapse_set(&p, KDD_HEATING, true).unwrap();
    let times = linear_grid(4e-6, 12e-3, 120);
    for rho in evolve(&rho0, &set, &times).unwrap() {
        assert!(rho.trace_drift() < 1e-8, "drift {}", rho.trace_drift());
        assert!(rho.hermiticity_error() < 1e-10);
        assert!(rho.min_eigenvalue() >= -1e-8);
        rho.check().unwrap();
    }
}

#[test]
fn transient_rise_above_thermal_population() {
    let p = reference_device_params();
    let times = heating_times();
    let pe = excited_population_trace(&p, KDD_HEATING, true, &times).unwrap();
    let (imax, &max) = pe
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    assert!(imax > 0 && imax < pe.len() - 1, "maximum at index {imax}");
    assert!(max > p.n_th + 1e-3, "peak {max}");
    let flat = excited_population_trace(&p, 0.0, true, &times).unwrap();
    let steady = p.n_th / (1.0 + p.n_th);
    assert!(flat.iter().skip(5).all(|&x| (x - steady).abs() < 1e-6));
}

#[test]
fn steady_state_is_detailed_balance() {
    // two-rate telegraph: P_e → Γn/(Γ + Γn) = n/(1+n); the reverse channel
    // would keep pumping |e,0⟩ → |g,1⟩ and is not part of that oracle
    let p = reference_device_params();
    let set = build_collapse_set(&p, KDD_HEATING, false).unwrap();
    let rho = evolve(&DensityMatrix::pure(G0), &set, &[20.0 / p.gamma]).unwrap();
    let expected = p.n_th / (1.0 + p.n_th);
    assert!((rho[0].excited_population() - expected).abs() < 1e-4);
}

#[test]
fn photon_loss_monotone_without_reverse() {
    let p = reference_device_params();
    let set = build_collapse_set(&p, KDD_HEATING * 10.0, false).unwrap();
    let rho0 = initial_state(p.n_th).unwrap();
    let pops: Vec<f64> = evolve(&rho0, &set, &linear_grid(4e-6, 12e-3, 60))
        .unwrap()
        .iter()
        .map(DensityMatrix::photon_population)
        .collect();
    assert!(pops.windows(2).all(|w| w[1] <= w[0] + 1e-14));
}

#[test]
fn reverse_process_negligible() {
    let p = reference_device_params();
    let times = heating_times();
    let on = excited_population_trace(&p, KDD_HEATING, true, &times).unwrap();
    let off = excited_population_trace(&p, KDD_HEATING, false, &times).unwrap();
    let worst = on.iter().zip(&off).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn populations_agree_with_trajectories() {
    let times = heating_times();
    let n = 100_000u64;
    let c = engine(KDD_HEATING, n, 21);
    let mc = simulate_population_trace(&c, &times).unwrap();
    let exact = excited_population_trace(&c.params, KDD_HEATING, true, &times).unwrap();
    let within = mc
        .iter()
        .zip(&exact)
        .filter(|(m, e)| (*m - *e).abs() <= 3.0 * (*e * (1.0 - *e) / n as f64).sqrt())
        .count();
    assert!(within as f64 >= 0.95 * times.len() as f64, "{within}/{}", times.len());

    // photon population: unconditional survival of the protocol run
    let mut c = engine(KDD_HEATING, 20_000, 22);
    c.protocol.sample_times = linear_grid(c.params.t_m, 12e-3, 20);
    c.protocol.independent_points = true;
    let curves = run_experiment(&c).unwrap();
    let rho0 = initial_state(c.params.n_th).unwrap();
    let set = build_collapse_set(&c.params, KDD_HEATING, true).unwrap();
    let states = evolve(&rho0, &set, &curves.times).unwrap();
    let within = (0..curves.len())
        .filter(|&i| {
            let e = states[i].photon_population();
            let m = curves.k_uncond[i] as f64 / curves.n_uncond[i] as f64;
            (m - e).abs() <= 3.0 * (e * (1.0 - e) / curves.n_uncond[i] as f64).sqrt()
        })
        .count();
    assert!(within as f64 >= 0.95 * curves.len() as f64, "{within}/{}", curves.len());
}

#[test]
fn fit_recovers_its_own_trace() {
    let p = reference_device_params();
    let times = heating_times();
    let observed = excited_population_trace(&p, 100.0, true, &times).unwrap();
    let fitted = fit_kappa_dd_to_trace(&observed, &times, &p).unwrap();
    assert!((fitted - 100.0).abs() < 0.1, "{fitted}");
    let quiet = excited_population_trace(&p, 0.0, true, &times).unwrap();
    assert!(fit_kappa_dd_to_trace(&quiet, &times, &p).unwrap() < 1e-3);
}

#[test]
fn fit_recovers_trajectory_trace() {
    let times = heating_times();
    let c = engine(KDD_HEATING, 100_000, 23);
    let observed = simulate_population_trace(&c, &times).unwrap();
    let fitted = fit_kappa_dd_to_trace(&observed, &times, &c.params).unwrap();
    assert!((fitted / KDD_HEATING - 1.0).abs() < 0.05, "{fitted} vs {KDD_HEATING}");
}
