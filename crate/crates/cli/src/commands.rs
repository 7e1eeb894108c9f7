//! The five subcommands. Each one loads its config, computes every output
//! in memory and hands the bytes back; [`crate::run`] writes them.

use std::path::{Path, PathBuf};

use dll_core::analytic::{dressed_dephasing_rate, predict_curves, PsdValue};
use dll_core::inference::{fit, posterior_predictive_check, FitResult, PARAM_NAMES};
use dll_core::lindblad::{build_collapse_set, evolve, initial_state};
use dll_core::model::{ProtocolConfig, ReadoutModel};
use dll_core::trajectory::{
    mix_seed, run_experiment, run_shots, simulate_population_trace, SimEngineConfig,
};
use rayon::prelude::*;
use serde::Serialize;
use tracing::{info, warn};

use crate::config::{
    load, FitConfig, LindbladConfig, PredictConfig, SimulateConfig, SweepSpec,
};
use crate::error::HarnessError;
use crate::output::{curves_table, fmt_f64, read_curves, sha256_hex, Table};
use crate::{FitArgs, RunArgs};

/// Outputs of one command, not yet on disk.
#[derive(Debug, Default)]
pub struct Done {
    pub config_sha256: String,
    pub data: Option<(PathBuf, String)>,
    pub seed: Option<u64>,
    pub exit_code: i32,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Done {
    fn new(config_bytes: &[u8], seed: Option<u64>) -> Self {
        Done {
            config_sha256: sha256_hex(config_bytes),
            seed,
            ..Default::default()
        }
    }

    fn table(&mut self, name: &str, table: Table) {
        self.files.push((name.into(), table.to_bytes()));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serialisable output");
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> HarnessError {
    dll_core::Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
    .into()
}

pub fn simulate(args: &RunArgs) -> Result<Done, HarnessError> {
    let (cfg, raw): (SimulateConfig, _) = load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let engine = cfg.engine(seed)?;
    if cfg.export_shots && engine.protocol.independent_points {
        return Err(invalid(
            "export_shots",
            "shot export needs protocol.independent_points = false",
        ));
    }
    info!(
        kappa_dd = engine.kappa_dd,
        shots = engine.protocol.n_shots,
        points = engine.protocol.sample_times.len(),
        "simulating"
    );
    let curves = run_experiment(&engine)?;
    let mut done = Done::new(&raw, Some(seed));
    done.table("curves.csv", curves_table(&curves));
    done.json("engine.json", &engine);
    if cfg.export_shots {
        let mut jsonl = Vec::new();
        for record in run_shots(&engine)? {
            serde_json::to_writer(&mut jsonl, &record).expect("serialisable shot");
            jsonl.push(b'\n');
        }
        done.files.push(("shots.jsonl".into(), jsonl));
    }
    Ok(done)
}

pub fn predict(args: &RunArgs) -> Result<Done, HarnessError> {
    let (cfg, raw): (PredictConfig, _) = load(&args.config)?;
    cfg.params.check()?;
    let kappa_dd = cfg.dressed.kappa_dd(&cfg.params)?;
    let times = cfg.grid.resolve(cfg.params.t_m);
    let (uncond, cond) = predict_curves(&cfg.params, kappa_dd, &times)?;
    let mut table = Table::new(&["time_s", "p_uncond", "p_cond"]);
    for i in 0..times.len() {
        table.push(vec![fmt_f64(times[i]), fmt_f64(uncond[i]), fmt_f64(cond[i])]);
    }
    let mut done = Done::new(&raw, None);
    done.table("predict.csv", table);
    Ok(done)
}

pub fn fit_curves(args: &FitArgs) -> Result<Done, HarnessError> {
    let (cfg, raw): (FitConfig, _) = load(&args.run.config)?;
    let data_path = match &args.data {
        Some(p) => p.clone(),
        None => args.run.config.parent().unwrap_or(Path::new("")).join(&cfg.data),
    };
    let bytes = std::fs::read(&data_path).map_err(|e| HarnessError::Input {
        path: data_path.clone(),
        message: format!("cannot read data: {e}"),
    })?;
    let curves = read_curves(&data_path, &bytes)?;
    let mut sampler = cfg.sampler;
    if let Some(seed) = args.run.seed {
        sampler.seed = seed;
    }
    let t_m = cfg.t_m_seconds();
    info!(points = curves.len(), seed = sampler.seed, "fitting");
    let (posterior, result) = fit(&curves, &cfg.priors, &sampler, &cfg.summary, t_m)?;
    let ppc = posterior_predictive_check(&posterior, &curves, t_m, cfg.ppc_draws, sampler.seed)?;
    log_fit(&result);

    let mut done = Done::new(&raw, Some(sampler.seed));
    done.data = Some((data_path, sha256_hex(&bytes)));
    done.exit_code = if result.converged { 0 } else { 1 };
    done.json("fit.json", &result);
    let mut samples = Table::new(&["chain", "draw", PARAM_NAMES[0], PARAM_NAMES[1], PARAM_NAMES[2]]);
    for (i, theta) in posterior.samples.iter().enumerate() {
        let [a, b, c] = theta.to_array();
        samples.push(vec![
            (i / posterior.draws_per_chain).to_string(),
            (i % posterior.draws_per_chain).to_string(),
            fmt_f64(a),
            fmt_f64(b),
            fmt_f64(c),
        ]);
    }
    done.table("posterior.csv", samples);
    let mut checks = Table::new(&["time_s", "p_uncond", "p_cond"]);
    for p in &ppc {
        checks.push(vec![fmt_f64(p.time), fmt_f64(p.p_uncond), fmt_f64(p.p_cond)]);
    }
    done.table("ppc.csv", checks);
    Ok(done)
}

fn log_fit(r: &FitResult) {
    info!(
        median = r.kappa_dd.median,
        hdi_lo = r.kappa_dd.hdi_lo,
        hdi_hi = r.kappa_dd.hdi_hi,
        resolved = r.resolved,
        upper_bound = ?r.upper_bound_kappa_dd,
        "kappa_dd"
    );
    if !r.converged {
        warn!(rhat = ?r.diagnostics.rhat, ess = ?r.diagnostics.ess, "chains did not converge");
    }
}

/// Seed of sweep point `index`, used both for its simulation and for its
/// sampler. Running `simulate` and then `fit` with this seed reproduces the
/// point.
pub fn sweep_point_seed(seed: u64, index: usize) -> u64 {
    mix_seed(seed, 0x5357_0000 + index as u64)
}

struct SweepRow {
    psd: f64,
    kappa_dd_true: Option<f64>,
    outcome: Result<FitResult, String>,
}

fn sweep_point(spec: &SweepSpec, index: usize, psd: f64) -> SweepRow {
    let seed = sweep_point_seed(spec.seed, index);
    let p = spec.base.params;
    let mut row = SweepRow {
        psd,
        kappa_dd_true: None,
        outcome: Err(String::new()),
    };
    let run = |kappa_dd: f64| -> Result<FitResult, dll_core::Error> {
        let engine = SimEngineConfig {
            params: p,
            readout: spec.base.readout,
            protocol: spec.base.protocol.to_protocol(p.t_m, spec.shots_per_point, seed),
            kappa_dd,
        };
        let curves = run_experiment(&engine)?;
        let sampler = dll_core::inference::SamplerSettings {
            seed,
            ..spec.sampler
        };
        Ok(fit(&curves, &spec.priors, &sampler, &spec.summary, p.t_m)?.1)
    };
    row.outcome = match dressed_dephasing_rate(p.g, p.delta, PsdValue::new(psd, p.delta)) {
        Ok(kappa_dd) => {
            row.kappa_dd_true = Some(kappa_dd);
            run(kappa_dd).map_err(|e| e.to_string())
        }
        Err(e) => Err(e.to_string()),
    };
    match &row.outcome {
        Ok(r) => info!(
            point = index,
            psd,
            kappa_dd_true = row.kappa_dd_true,
            median = r.kappa_dd.median,
            resolved = r.resolved,
            converged = r.converged,
            "sweep point"
        ),
        Err(e) => warn!(point = index, psd, error = %e, "sweep point failed"),
    }
    row
}

pub const SWEEP_HEADER: [&str; 9] = [
    "psd",
    "kappa_dd_true",
    "kappa_dd_median",
    "hdi_lo",
    "hdi_hi",
    "resolved",
    "upper_bound",
    "converged",
    "error",
];

pub fn sweep(args: &RunArgs) -> Result<Done, HarnessError> {
    let (mut spec, raw): (SweepSpec, _) = load(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.check()?;
    let base = &spec.base;
    SimEngineConfig {
        params: base.params,
        readout: base.readout,
        protocol: base.protocol.to_protocol(base.params.t_m, spec.shots_per_point, spec.seed),
        kappa_dd: 0.0,
    }
    .check()?;
    info!(points = spec.psd_values.len(), shots = spec.shots_per_point, "sweep");
    let rows: Vec<SweepRow> = spec
        .psd_values
        .par_iter()
        .enumerate()
        .map(|(i, &psd)| sweep_point(&spec, i, psd))
        .collect();

    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    let mut table = Table::new(&SWEEP_HEADER);
    for row in &rows {
        let mut cells = vec![fmt_f64(row.psd), opt(row.kappa_dd_true)];
        match &row.outcome {
            Ok(r) => cells.extend([
                fmt_f64(r.kappa_dd.median),
                fmt_f64(r.kappa_dd.hdi_lo),
                fmt_f64(r.kappa_dd.hdi_hi),
                r.resolved.to_string(),
                opt(r.upper_bound_kappa_dd),
                r.converged.to_string(),
                String::new(),
            ]),
            Err(e) => {
                cells.extend(std::iter::repeat_n(String::new(), 6));
                cells.push(e.clone());
            }
        }
        table.push(cells);
    }
    let mut done = Done::new(&raw, Some(spec.seed));
    done.table("sweep.csv", table);
    Ok(done)
}

pub fn lindblad(args: &RunArgs) -> Result<Done, HarnessError> {
    let (cfg, raw): (LindbladConfig, _) = load(&args.config)?;
    let p = cfg.params;
    p.check()?;
    let kappa_dd = cfg.dressed.kappa_dd(&p)?;
    let times = cfg.grid.resolve(p.t_m);
    if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|&t| !(t >= 0.0)) {
        return Err(invalid("grid", "times must be non-negative and strictly increasing"));
    }
    info!(kappa_dd, points = times.len(), "master equation");
    let set = build_collapse_set(&p, kappa_dd, cfg.include_reverse_dd)?;
    let states = evolve(&initial_state(p.n_th)?, &set, &times)?;

    let overlay = match cfg.overlay {
        Some(o) => {
            let seed = args.seed.unwrap_or(o.seed);
            let engine = SimEngineConfig {
                params: p,
                readout: ReadoutModel::ideal(),
                protocol: ProtocolConfig {
                    total_time: times.last().copied().unwrap_or(0.0),
                    sample_times: Vec::new(),
                    n_shots: o.n_shots,
                    seed,
                    include_reverse_dd: cfg.include_reverse_dd,
                    post_select_init: false,
                    independent_points: true,
                },
                kappa_dd,
            };
            info!(shots = o.n_shots, "trajectory overlay");
            Some((seed, o.n_shots, simulate_population_trace(&engine, &times)?))
        }
        None => None,
    };

    let mut header = vec!["time_s", "P_e", "P_photon", "trace_drift"];
    if overlay.is_some() {
        header.extend(["P_e_traj", "P_e_traj_se"]);
    }
    let mut table = Table::new(&header);
    for (i, rho) in states.iter().enumerate() {
        let mut cells = vec![
            fmt_f64(times[i]),
            fmt_f64(rho.excited_population()),
            fmt_f64(rho.photon_population()),
            fmt_f64(rho.trace_drift()),
        ];
        if let Some((_, n, trace)) = &overlay {
            let q = trace[i];
            cells.push(fmt_f64(q));
            cells.push(fmt_f64((q * (1.0 - q) / *n as f64).sqrt()));
        }
        table.push(cells);
    }
    let mut done = Done::new(&raw, overlay.as_ref().map(|o| o.0));
    done.table("lindblad.csv", table);
    Ok(done)
}
