//! Measurement schedules, the warm-up/observation protocol, parallel
//! trajectory ensembles and bootstrap statistics.

use crate::error::{invalid, Error, Result};
use crate::gaussian::{
    run_trajectory, BornSampler, CorrelationMatrix, DenseGaussian, MeasurementEvent, OrbitalFrame, TrajectoryState,
};
use crate::linalg::Propagator;
use crate::model::{build_hamiltonian, ModelParams};
use crate::observables::{Channel, ObservableSet};
use crate::special::NeumaierSum;
use crate::tdhf::{TdhfOptions, TdhfOrbitals};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

/// Stream id of the bootstrap generator; trajectory streams use 0..2^63.
pub const BOOTSTRAP_STREAM: u64 = 1 << 63;
pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Orbital-frame Gaussian engine (O(L N) measurements).
    Gaussian,
    /// Dense correlation-matrix Gaussian engine.
    GaussianDense,
    Tdhf,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Gaussian => "gaussian",
            Engine::GaussianDense => "gaussian-dense",
            Engine::Tdhf => "tdhf",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Engine::Gaussian),
            "gaussian-dense" => Ok(Engine::GaussianDense),
            "tdhf" => Ok(Engine::Tdhf),
            _ => invalid(format!("unknown engine '{s}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub warmup_time: f64,
    pub obs_interval: f64,
    pub t_max: f64,
    pub n_traj: usize,
    pub master_seed: u64,
    pub engine: Engine,
    pub n_resample: usize,
    /// Integrator tolerance for the TDHF engine.
    pub tdhf_tol: f64,
}

impl ProtocolConfig {
    /// Warm-up 25/gamma, probes every 5/gamma, up to 100/gamma.
    pub fn standard(gamma: f64, n_traj: usize, master_seed: u64, engine: Engine) -> Self {
        Self {
            warmup_time: 25.0 / gamma,
            obs_interval: 5.0 / gamma,
            t_max: 100.0 / gamma,
            n_traj,
            master_seed,
            engine,
            n_resample: DEFAULT_RESAMPLES,
            tdhf_tol: crate::tdhf::DEFAULT_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.obs_interval > 0.0 && self.obs_interval.is_finite()) {
            return invalid("obs_interval must be positive");
        }
        if (self.warmup_time - 5.0 * self.obs_interval).abs() > 1e-9 * self.warmup_time.abs().max(1.0) {
            return invalid("warmup_time must equal 5 obs_interval");
        }
        if !(self.t_max >= self.warmup_time && self.t_max.is_finite()) {
            return invalid("t_max must be at least warmup_time");
        }
        if self.n_traj == 0 {
            return invalid("n_traj must be positive");
        }
        if self.n_resample == 0 {
            return invalid("n_resample must be positive");
        }
        if !(self.tdhf_tol > 0.0) {
            return invalid("tdhf_tol must be positive");
        }
        Ok(())
    }

    /// warmup + k obs_interval for k = 0, 1, ... up to t_max.
    pub fn probe_times(&self) -> Vec<f64> {
        let n = ((self.t_max - self.warmup_time) / self.obs_interval + 1e-9).floor() as usize;
        (0..=n).map(|k| self.warmup_time + k as f64 * self.obs_interval).collect()
    }
}

/// Merged Poisson process of rate L gamma with uniform site labels on [0, t].
pub fn sample_schedule<R: Rng>(rng: &mut R, l: usize, gamma: f64, t: f64) -> Vec<(f64, usize)> {
    let rate = l as f64 * gamma;
    let mut out = Vec::new();
    if rate <= 0.0 || l == 0 {
        return out;
    }
    let mut now = 0.0;
    loop {
        let u: f64 = rng.random();
        now += -(1.0 - u).ln() / rate;
        if now > t {
            break;
        }
        out.push((now, rng.random_range(0..l)));
    }
    out
}

/// Product state with n randomly chosen occupied sites.
pub fn random_occupations<R: Rng>(rng: &mut R, l: usize, n: usize) -> Vec<bool> {
    let mut occ = vec![false; l];
    for i in rand::seq::index::sample(rng, l, n) {
        occ[i] = true;
    }
    occ
}

pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Probe-time observables and the measurement record of one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryOutput {
    pub index: u64,
    pub occupations: Vec<bool>,
    /// values[probe][channel]
    pub values: Vec<Vec<f64>>,
    pub events: Vec<MeasurementEvent>,
}

/// Shared, read-only inputs of an ensemble run.
pub struct EnsembleContext {
    pub params: ModelParams,
    pub protocol: ProtocolConfig,
    pub observables: ObservableSet,
    pub probes: Vec<f64>,
    prop: Arc<Propagator>,
    h0: nalgebra::DMatrix<num_complex::Complex64>,
}

impl EnsembleContext {
    pub fn new(params: ModelParams, protocol: ProtocolConfig, observables: ObservableSet) -> Result<Self> {
        params.validate()?;
        protocol.validate()?;
        if params.v != 0.0 && protocol.engine != Engine::Tdhf {
            return invalid("interacting runs (V != 0) require the tdhf engine");
        }
        let h0 = build_hamiltonian(&params)?;
        let prop = Arc::new(Propagator::new(&h0)?);
        let probes = protocol.probe_times();
        Ok(Self { params, protocol, observables, probes, prop, h0 })
    }

    fn initial_state(&self, occ: &[bool]) -> Result<Box<dyn TrajectoryState>> {
        Ok(match self.protocol.engine {
            Engine::Gaussian => Box::new(OrbitalFrame::from_occupations(occ, self.prop.clone())?),
            Engine::GaussianDense => {
                Box::new(DenseGaussian::new(CorrelationMatrix::from_occupations(occ), self.prop.clone()))
            }
            Engine::Tdhf => Box::new(TdhfOrbitals::from_occupations(
                occ,
                self.h0.clone(),
                crate::tdhf::interaction_matrix(&self.params),
                TdhfOptions { tol: self.protocol.tdhf_tol, fock_sign: 1.0 },
            )?),
        })
    }

    /// Draws the schedule, then the initial state, then the outcomes, all
    /// from the trajectory's own stream.
    pub fn run_one(&self, index: u64) -> Result<TrajectoryOutput> {
        let p = &self.params;
        let mut rng = trajectory_rng(self.protocol.master_seed, index);
        let schedule = sample_schedule(&mut rng, p.l, p.gamma, self.protocol.t_max);
        let occ = random_occupations(&mut rng, p.l, p.particle_number());
        let mut state = self.initial_state(&occ)?;
        let mut values = Vec::with_capacity(self.probes.len());
        let events = run_trajectory(
            state.as_mut(),
            &schedule,
            &self.probes,
            &mut BornSampler { rng: &mut rng },
            |_, s| {
                s.check()?;
                values.push(self.observables.evaluate(&s.correlation())?);
                Ok(())
            },
        )?;
        Ok(TrajectoryOutput { index, occupations: occ, values, events })
    }

    /// All trajectories in index order; fails if any trajectory fails.
    pub fn run_all(&self) -> Result<Vec<TrajectoryOutput>> {
        (0..self.protocol.n_traj as u64).into_par_iter().map(|i| self.run_one(i)).collect()
    }
}

/// Mean of the samples and bootstrap standard error from shared resample
/// index sets, scaled by sqrt(n/(n-1)).
pub fn bootstrap_with(samples: &[f64], resamples: &[Vec<usize>]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n == 0 {
        return invalid("bootstrap of an empty sample");
    }
    let mean = mean(samples);
    if n == 1 {
        return Ok((mean, 0.0));
    }
    let mut means = Vec::with_capacity(resamples.len());
    for idx in resamples {
        let mut s = NeumaierSum::default();
        for &i in idx {
            s.add(samples[i]);
        }
        means.push(s.value() / n as f64);
    }
    let m = self::mean(&means);
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / means.len() as f64;
    Ok((mean, (var * n as f64 / (n - 1) as f64).sqrt()))
}

pub fn resample_indices<R: Rng>(rng: &mut R, n: usize, n_resample: usize) -> Vec<Vec<usize>> {
    (0..n_resample).map(|_| (0..n).map(|_| rng.random_range(0..n)).collect()).collect()
}

pub fn bootstrap<R: Rng>(samples: &[f64], n_resample: usize, rng: &mut R) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return invalid("bootstrap of an empty sample");
    }
    let idx = resample_indices(rng, samples.len(), n_resample);
    bootstrap_with(samples, &idx)
}

pub fn mean(xs: &[f64]) -> f64 {
    crate::special::neumaier_sum(xs) / xs.len() as f64
}

/// One summarized channel at one probe time, or pooled over probes (t = None).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub observable: String,
    pub region: String,
    pub t: Option<f64>,
    pub mean: f64,
    pub stderr: f64,
    pub n_traj: usize,
    pub n_time_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub params: ModelParams,
    pub protocol: ProtocolConfig,
    pub build_id: String,
    pub probes: Vec<f64>,
    pub rows: Vec<SummaryRow>,
}

impl EnsembleSummary {
    pub fn from_trajectories(ctx: &EnsembleContext, trajs: &[TrajectoryOutput]) -> Result<Self> {
        let n = trajs.len();
        if n == 0 {
            return invalid("no trajectories to summarize");
        }
        let mut rng = trajectory_rng(ctx.protocol.master_seed, BOOTSTRAP_STREAM);
        let idx = resample_indices(&mut rng, n, ctx.protocol.n_resample);
        let channels: &[Channel] = ctx.observables.channels();
        let np = ctx.probes.len();
        let mut rows = Vec::with_capacity(channels.len() * (np + 1));
        for (c, ch) in channels.iter().enumerate() {
            let label = ch.observable.to_string();
            for (k, &t) in ctx.probes.iter().enumerate() {
                let xs: Vec<f64> = trajs.iter().map(|tr| tr.values[k][c]).collect();
                let (m, se) = bootstrap_with(&xs, &idx)?;
                rows.push(SummaryRow {
                    observable: label.clone(),
                    region: ch.region.clone(),
                    t: Some(t),
                    mean: m,
                    stderr: se,
                    n_traj: n,
                    n_time_samples: 1,
                });
            }
            let pooled: Vec<f64> =
                trajs.iter().map(|tr| mean(&tr.values.iter().map(|v| v[c]).collect::<Vec<_>>())).collect();
            let (m, se) = bootstrap_with(&pooled, &idx)?;
            rows.push(SummaryRow {
                observable: label,
                region: ch.region.clone(),
                t: None,
                mean: m,
                stderr: se,
                n_traj: n,
                n_time_samples: np,
            });
        }
        Ok(Self {
            params: ctx.params.clone(),
            protocol: ctx.protocol.clone(),
            build_id: build_id(),
            probes: ctx.probes.clone(),
            rows,
        })
    }

    pub fn pooled(&self, observable: &str, region: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.t.is_none() && r.observable == observable && r.region == region)
    }
}

pub fn build_id() -> String {
    format!("monfer-core {}", env!("CARGO_PKG_VERSION"))
}

pub fn run_ensemble(params: &ModelParams, protocol: &ProtocolConfig, observables: ObservableSet) -> Result<EnsembleSummary> {
    let ctx = EnsembleContext::new(params.clone(), protocol.clone(), observables)?;
    let trajs = ctx.run_all()?;
    EnsembleSummary::from_trajectories(&ctx, &trajs)
}

/// Kolmogorov distribution tail Q(lambda) = 2 sum_k (-1)^(k-1) exp(-2 k^2 lambda^2).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        s += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov-Smirnov test; returns (D, p-value).
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}
