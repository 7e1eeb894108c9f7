//! Event-driven Monte Carlo of the mid-circuit measurement protocol.
//!
//! The qubit ⊗ {0,1}-photon system is a four-state continuous-time Markov
//! chain with exactly the jump channels of the master equation in
//! [`crate::lindblad`]:
//!
//! | from  | to    | rate      | process                        |
//! |-------|-------|-----------|--------------------------------|
//! | g,1   | g,0   | κ₀        | intrinsic cavity loss          |
//! | e,1   | e,0   | κ₀        | intrinsic cavity loss          |
//! | g,1   | e,0   | κ_dd      | dressed dephasing              |
//! | e,0   | g,1   | κ_dd      | reverse dressed dephasing (opt)|
//! | e,·   | g,·   | Γ         | qubit relaxation               |
//! | g,·   | e,·   | Γ·n_th    | thermal excitation             |
//!
//! Waiting times are drawn exactly (Gillespie); nothing is discretised
//! except the measurement boundaries at multiples of T_m. Between two jumps
//! the qubit state is constant, so the index of the first "excited" readout
//! among the boundaries in that window is a single geometric draw.
//!
//! Readout is a classical misreport model: the qubit is always in a
//! definite basis state, a correct readout leaves it there (projection is a
//! no-op) and an erroneous one also leaves it unchanged. Measurements never
//! act on the photon.
//!
//! Every shot owns a ChaCha8 stream that is a pure function of
//! `(seed, stream id)`, so results do not depend on thread count or order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    measurement_count, DeviceParams, LossChannel, ProtocolConfig, QubitEvent, ReadoutModel,
    ShotRecord, SurvivalCurves,
};

/// Everything needed to simulate one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimEngineConfig {
    pub params: DeviceParams,
    pub readout: ReadoutModel,
    pub protocol: ProtocolConfig,
    /// Dressed-dephasing rate κ_dd (s⁻¹).
    pub kappa_dd: f64,
}

impl SimEngineConfig {
    pub fn check(&self) -> Result<()> {
        self.params.check()?;
        self.readout.check()?;
        self.protocol.check(self.params.t_m)?;
        if !(self.kappa_dd >= 0.0) || !self.kappa_dd.is_finite() {
            return Err(Error::invalid("kappa_dd", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser, used to derive independent seeds from one seed.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG of one shot.
pub fn shot_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn point_stream(point: usize, shot: u64) -> u64 {
    ((point as u64 + 1) << 40) | shot
}

const POPULATION_TAG: u64 = 0x706f_7075_6c61_7469;

#[derive(Clone, Copy)]
struct Rates {
    kappa0: f64,
    kappa_dd: f64,
    gamma: f64,
    up: f64,
    reverse: f64,
}

impl Rates {
    fn new(config: &SimEngineConfig) -> Self {
        let p = &config.params;
        Rates {
            kappa0: p.kappa0,
            kappa_dd: config.kappa_dd,
            gamma: p.gamma,
            up: p.gamma * p.n_th,
            reverse: if config.protocol.include_reverse_dd {
                config.kappa_dd
            } else {
                0.0
            },
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Jump {
    IntrinsicLoss,
    DressedLoss,
    Relax,
    Excite,
    Reverse,
}

struct ShotSpec<'a> {
    rates: Rates,
    readout: &'a ReadoutModel,
    t_m: f64,
    horizon: f64,
    mid_circuit: bool,
    record_trace: bool,
}

/// Index of the first "excited" readout among `count` reads with per-read
/// probability `p`, if any.
fn first_excited_read<R: Rng>(p: f64, count: usize, rng: &mut R) -> Option<usize> {
    if p <= 0.0 || count == 0 {
        return None;
    }
    if p >= 1.0 {
        return Some(0);
    }
    let failures = Geometric::new(p).expect("p in (0,1)").sample(rng);
    (failures < count as u64).then_some(failures as usize)
}

/// Runs one shot; returns the record and the final qubit state.
fn run_shot<R: Rng>(spec: &ShotSpec, init_excited: bool, rng: &mut R) -> (ShotRecord, bool) {
    let r = spec.rates;
    let n_meas = if spec.mid_circuit {
        measurement_count(spec.horizon, spec.t_m)
    } else {
        0
    };
    let mut t = 0.0f64;
    let mut photon = true;
    let mut excited = init_excited;
    let mut next_boundary = 1usize;
    let mut discarded: Option<usize> = None;
    let mut loss_time = None;
    let mut loss_channel = None;
    let mut toggles = Vec::new();
    let mut trace = spec.record_trace.then(|| {
        vec![QubitEvent {
            time: 0.0,
            excited,
        }]
    });

    loop {
        let mut jumps: [(Jump, f64); 3] = [(Jump::Relax, 0.0); 3];
        let n_jumps = match (photon, excited) {
            (true, false) => {
                jumps[0] = (Jump::IntrinsicLoss, r.kappa0);
                jumps[1] = (Jump::DressedLoss, r.kappa_dd);
                jumps[2] = (Jump::Excite, r.up);
                3
            }
            (true, true) => {
                jumps[0] = (Jump::IntrinsicLoss, r.kappa0);
                jumps[1] = (Jump::Relax, r.gamma);
                2
            }
            (false, false) => {
                jumps[0] = (Jump::Excite, r.up);
                1
            }
            (false, true) => {
                jumps[0] = (Jump::Relax, r.gamma);
                jumps[1] = (Jump::Reverse, r.reverse);
                2
            }
        };
        let total: f64 = jumps[..n_jumps].iter().map(|j| j.1).sum();
        let t_next = if total > 0.0 {
            t + Exp::new(total).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        };

        if discarded.is_none() && next_boundary <= n_meas {
            // boundaries k·T_m with k·T_m < t_next see the current state
            let last = if t_next.is_finite() {
                ((t_next / spec.t_m).ceil() as usize)
                    .saturating_sub(1)
                    .min(n_meas)
            } else {
                n_meas
            };
            if last >= next_boundary {
                let count = last - next_boundary + 1;
                let p = spec.readout.p_read_excited(excited);
                if let Some(i) = first_excited_read(p, count, rng) {
                    discarded = Some(next_boundary - 1 + i);
                }
                next_boundary = last + 1;
            }
        }

        if t_next >= spec.horizon {
            break;
        }

        let mut u = rng.random::<f64>() * total;
        let mut jump = jumps[n_jumps - 1].0;
        for &(j, rate) in &jumps[..n_jumps] {
            if u < rate {
                jump = j;
                break;
            }
            u -= rate;
        }
        t = t_next;
        match jump {
            Jump::IntrinsicLoss | Jump::DressedLoss => {
                photon = false;
                toggles.push(t);
                if loss_time.is_none() {
                    loss_time = Some(t);
                    loss_channel = Some(if jump == Jump::DressedLoss {
                        LossChannel::Dressed
                    } else {
                        LossChannel::Intrinsic
                    });
                }
                if jump == Jump::DressedLoss {
                    excited = true;
                }
            }
            Jump::Reverse => {
                photon = true;
                excited = false;
                toggles.push(t);
            }
            Jump::Relax => excited = false,
            Jump::Excite => excited = true,
        }
        if let Some(tr) = trace.as_mut() {
            if jump != Jump::IntrinsicLoss {
                tr.push(QubitEvent { time: t, excited });
            }
        }
        if spec.mid_circuit && discarded.is_some() && !photon && r.reverse == 0.0 {
            break;
        }
    }

    let record = ShotRecord {
        loss_time,
        loss_channel,
        measurements: discarded.map_or(n_meas, |d| d + 1),
        discarded_at: discarded,
        photon_toggles: toggles,
        truth_qubit_trace: trace,
    };
    (record, excited)
}

fn initial_excited<R: Rng>(config: &SimEngineConfig, rng: &mut R) -> bool {
    if config.protocol.post_select_init {
        false
    } else {
        rng.random::<f64>() < config.params.n_th
    }
}

fn simulate_to<R: Rng>(
    config: &SimEngineConfig,
    horizon: f64,
    mid_circuit: bool,
    record_trace: bool,
    rng: &mut R,
) -> (ShotRecord, bool) {
    let spec = ShotSpec {
        rates: Rates::new(config),
        readout: &config.readout,
        t_m: config.params.t_m,
        horizon,
        mid_circuit,
        record_trace,
    };
    let init = initial_excited(config, rng);
    run_shot(&spec, init, rng)
}

/// Simulates shot `shot_index` of the run over `[0, total_time]`.
pub fn simulate_shot(config: &SimEngineConfig, shot_index: u64) -> ShotRecord {
    let mut rng = shot_rng(config.protocol.seed, shot_index);
    simulate_to(config, config.protocol.total_time, true, false, &mut rng).0
}

/// Like [`simulate_shot`] but also records the true qubit trajectory.
pub fn simulate_shot_traced(config: &SimEngineConfig, shot_index: u64) -> ShotRecord {
    let mut rng = shot_rng(config.protocol.seed, shot_index);
    simulate_to(config, config.protocol.total_time, true, true, &mut rng).0
}

/// All shots of a shared-shot run, in index order.
pub fn run_shots(config: &SimEngineConfig) -> Result<Vec<ShotRecord>> {
    config.check()?;
    Ok((0..config.protocol.n_shots)
        .into_par_iter()
        .map(|i| simulate_shot(config, i))
        .collect())
}

#[derive(Clone)]
struct Counts {
    n_uncond: Vec<u64>,
    k_uncond: Vec<u64>,
    n_cond: Vec<u64>,
    k_cond: Vec<u64>,
}

impl Counts {
    fn zeros(n: usize) -> Self {
        Counts {
            n_uncond: vec![0; n],
            k_uncond: vec![0; n],
            n_cond: vec![0; n],
            k_cond: vec![0; n],
        }
    }

    fn add_shot(&mut self, i: usize, record: &ShotRecord, t: f64, t_m: f64) {
        let present = record.photon_present_at(t);
        self.n_uncond[i] += 1;
        self.k_uncond[i] += present as u64;
        if record.retained_through(measurement_count(t, t_m)) {
            self.n_cond[i] += 1;
            self.k_cond[i] += present as u64;
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        for (a, b) in [
            (&mut self.n_uncond, &other.n_uncond),
            (&mut self.k_uncond, &other.k_uncond),
            (&mut self.n_cond, &other.n_cond),
            (&mut self.k_cond, &other.k_cond),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }

    fn into_curves(self, times: Vec<f64>) -> SurvivalCurves {
        SurvivalCurves {
            times,
            n_retained: self.n_cond.clone(),
            n_uncond: self.n_uncond,
            k_uncond: self.k_uncond,
            n_cond: self.n_cond,
            k_cond: self.k_cond,
        }
    }
}

/// Aggregates shot records into survival counts at `times`.
pub fn aggregate(records: &[ShotRecord], times: &[f64], t_m: f64) -> SurvivalCurves {
    let mut counts = Counts::zeros(times.len());
    for r in records {
        for (i, &t) in times.iter().enumerate() {
            counts.add_shot(i, r, t, t_m);
        }
    }
    counts.into_curves(times.to_vec())
}

/// Simulates the full protocol and returns binomial survival counts.
///
/// Unconditional counts use the true photon state at each time; conditional
/// counts keep only shots whose every readout up to that time was |g⟩. With
/// `independent_points` every time gets its own `n_shots` fresh shots.
pub fn run_experiment(config: &SimEngineConfig) -> Result<SurvivalCurves> {
    config.check()?;
    let times = &config.protocol.sample_times;
    let n_times = times.len();
    let n_shots = config.protocol.n_shots;
    let t_m = config.params.t_m;
    let seed = config.protocol.seed;

    let counts = if config.protocol.independent_points {
        (0..n_times)
            .into_par_iter()
            .flat_map(|j| (0..n_shots).into_par_iter().map(move |i| (j, i)))
            .fold(
                || Counts::zeros(n_times),
                |mut acc, (j, i)| {
                    let mut rng = shot_rng(seed, point_stream(j, i));
                    let (record, _) = simulate_to(config, times[j], true, false, &mut rng);
                    acc.add_shot(j, &record, times[j], t_m);
                    acc
                },
            )
            .reduce(|| Counts::zeros(n_times), Counts::merge)
    } else {
        (0..n_shots)
            .into_par_iter()
            .fold(
                || Counts::zeros(n_times),
                |mut acc, i| {
                    let record = simulate_shot(config, i);
                    for (j, &t) in times.iter().enumerate() {
                        acc.add_shot(j, &record, t, t_m);
                    }
                    acc
                },
            )
            .reduce(|| Counts::zeros(n_times), Counts::merge)
    };
    Ok(counts.into_curves(times.clone()))
}

/// Excited-state fraction after free evolution without mid-circuit
/// measurements, one terminal readout per shot, fresh shots at every time.
///
/// The initial qubit state follows `post_select_init` (|g⟩ when set,
/// thermal otherwise).
pub fn simulate_population_trace(config: &SimEngineConfig, times: &[f64]) -> Result<Vec<f64>> {
    config.params.check()?;
    config.readout.check()?;
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| !(t >= 0.0)) {
        return Err(Error::invalid("times", "must be sorted and non-negative"));
    }
    let n_shots = config.protocol.n_shots;
    if n_shots == 0 {
        return Err(Error::invalid("n_shots", "must be >= 1"));
    }
    let seed = mix_seed(config.protocol.seed, POPULATION_TAG);
    Ok(times
        .par_iter()
        .enumerate()
        .map(|(j, &t)| {
            let excited: u64 = (0..n_shots)
                .into_par_iter()
                .map(|i| {
                    let mut rng = shot_rng(seed, point_stream(j, i));
                    let (_, final_excited) = simulate_to(config, t, false, false, &mut rng);
                    let p = config.readout.p_read_excited(final_excited);
                    (rng.random::<f64>() < p) as u64
                })
                .sum();
            excited as f64 / n_shots as f64
        })
        .collect())
}

/// Whether the first photon loss was caught by the next readout.
///
/// `None` when there was no loss, the shot was already discarded, or the
/// loss happened after the last measurement.
pub fn loss_detected(record: &ShotRecord, t_m: f64) -> Option<bool> {
    let tau = record.loss_time?;
    let j = ((tau / t_m).ceil() as usize).saturating_sub(1);
    match record.discarded_at {
        Some(d) if d < j => None,
        Some(d) => Some(d == j),
        None => (j < record.measurements).then_some(false),
    }
}
