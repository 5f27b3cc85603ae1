//! Monte Carlo campaigns over Gaussian parameter draws.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::guidance::{run_mission, solve_reference, Method, MissionSetup, Reference};

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub runs: usize,
    /// Standard deviation as a fraction of each nominal parameter.
    pub q: f64,
    /// Terminal weight `Q_f = beta I` of the desensitized methods.
    pub beta: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Worker threads; 0 picks the rayon default.
    pub workers: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            runs: 100,
            q: 0.01,
            beta: 5.0,
            seed: 2024,
            methods: Method::ALL.to_vec(),
            workers: 0,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("mc.runs must be at least 1".into()));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mc.q must be non-negative, got {}",
                self.q
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mc.beta must be non-negative, got {}",
                self.beta
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument(
                "mc.methods must name at least one method".into(),
            ));
        }
        Ok(())
    }

    /// `sigma_i = q * p_i`.
    pub fn sigma(&self, nominal: &DVector<f64>) -> DVector<f64> {
        nominal.map(|p| self.q * p.abs())
    }
}

/// Draw `run` of a campaign: ChaCha8 keyed by the seed, stream = run index,
/// so a run's parameters never depend on scheduling or the method set.
pub fn sample_params(
    seed: u64,
    run: usize,
    nominal: &DVector<f64>,
    sigma: &DVector<f64>,
) -> Result<DVector<f64>> {
    if nominal.len() != sigma.len() {
        return Err(Error::DimensionMismatch {
            context: "parameter standard deviations",
            expected: nominal.len(),
            actual: sigma.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let mut out = nominal.clone();
    for (p, &s) in out.iter_mut().zip(sigma.iter()) {
        let normal = Normal::new(*p, s)
            .map_err(|e| Error::InvalidArgument(format!("invalid standard deviation {s}: {e}")))?;
        *p = normal.sample(&mut rng);
    }
    Ok(out)
}

/// `run_count` scalar draws from `N(alpha, sigma^2)`.
pub fn sample_alpha(seed: u64, run_count: usize, alpha: f64, sigma: f64) -> Result<Vec<f64>> {
    let nominal = DVector::from_element(1, alpha);
    let s = DVector::from_element(1, sigma);
    (0..run_count)
        .map(|run| sample_params(seed, run, &nominal, &s).map(|p| p[0]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunStatus {
    Ok,
    /// An NLP solve did not converge.
    SolverFailure,
    /// The plant integration failed (step size underflow, non-finite state).
    IntegrationFailure,
    /// Anything else, e.g. an invalid restart.
    Error,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::SolverFailure => "solver-failure",
            RunStatus::IntegrationFailure => "integration-failure",
            RunStatus::Error => "error",
        }
    }

    fn of(err: &Error) -> Self {
        match err {
            Error::SolverFailure { .. } | Error::RootFinding { .. } => RunStatus::SolverFailure,
            Error::Integration { .. } => RunStatus::IntegrationFailure,
            Error::Cycle { source, .. } => RunStatus::of(source),
            _ => RunStatus::Error,
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRecord {
    pub run: usize,
    /// First component of the sampled parameter vector.
    pub alpha_tilde: f64,
    pub method: Method,
    /// First component of `x(tf) - x_ref(tf)`; `None` for a failed run.
    pub epsilon: Option<f64>,
    /// SQP iterations over the mission's re-solves.
    pub iterations: usize,
    pub status: RunStatus,
}

/// Applies the campaign's `q` and `beta` to `setup`: `P = diag(q p)^2`,
/// `Q_f = beta I`.
pub fn campaign_setup(cfg: &MonteCarloConfig, setup: &MissionSetup) -> MissionSetup {
    let mut out = setup.clone();
    let sigma = cfg.sigma(setup.ocp.nominal_params());
    out.spec.param_covariance = DMatrix::from_diagonal(&sigma.map(|s| s * s));
    let r = out.spec.terminal_weight.nrows();
    out.spec.terminal_weight = DMatrix::identity(r, r) * cfg.beta;
    out
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))
}

/// Runs every requested method on every draw. The reference solve of each
/// method family is computed once and shared; a failing reference aborts the
/// campaign, a failing mission is recorded and the campaign continues.
/// Records come back ordered by run, then by method.
pub fn run_campaign(cfg: &MonteCarloConfig, setup: &MissionSetup) -> Result<Vec<MonteCarloRecord>> {
    cfg.validate()?;
    let setup = campaign_setup(cfg, setup);
    setup.validate()?;
    let nominal = setup.ocp.nominal_params().clone();
    let sigma = cfg.sigma(&nominal);
    let draws = (0..cfg.runs)
        .map(|run| sample_params(cfg.seed, run, &nominal, &sigma))
        .collect::<Result<Vec<_>>>()?;

    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    let pool = build_pool(cfg.workers)?;
    pool.install(|| {
        let needs = |d: bool| methods.iter().any(|m| m.is_desensitized() == d);
        let (plain, desens) = rayon::join(
            || {
                needs(false)
                    .then(|| solve_reference(&setup, false))
                    .transpose()
            },
            || {
                needs(true)
                    .then(|| solve_reference(&setup, true))
                    .transpose()
            },
        );
        let (plain, desens) = (plain?, desens?);
        let reference = |m: Method| -> &Reference {
            if m.is_desensitized() {
                desens.as_ref().expect("desensitized reference solved")
            } else {
                plain.as_ref().expect("plain reference solved")
            }
        };

        let jobs: Vec<(usize, Method)> = (0..cfg.runs)
            .flat_map(|run| methods.iter().map(move |&m| (run, m)))
            .collect();
        let mut records: Vec<MonteCarloRecord> = jobs
            .par_iter()
            .map(|&(run, method)| {
                let p = &draws[run];
                let base = MonteCarloRecord {
                    run,
                    alpha_tilde: p[0],
                    method,
                    epsilon: None,
                    iterations: 0,
                    status: RunStatus::Ok,
                };
                match run_mission(&setup, method, p, reference(method)) {
                    Ok(m) => MonteCarloRecord {
                        epsilon: Some(m.epsilon[0]),
                        iterations: m.iterations,
                        ..base
                    },
                    Err(e) => MonteCarloRecord {
                        status: RunStatus::of(&e),
                        ..base
                    },
                }
            })
            .collect();
        records.sort_by_key(|r| (r.run, r.method));
        Ok(records)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation (divides by the count).
    pub std: f64,
    pub max_abs: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        let max_abs = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        Some(Self {
            mean,
            median,
            std: var.sqrt(),
            max_abs,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub ok: usize,
    pub failures: usize,
    /// `None` when every run of the method failed.
    pub stats: Option<Stats>,
}

/// Per-method statistics over the successful records, in method order.
pub fn summarize(records: &[MonteCarloRecord]) -> Result<Vec<MethodSummary>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot summarize an empty record set".into(),
        ));
    }
    let mut methods: Vec<Method> = records.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    Ok(methods
        .into_iter()
        .map(|method| {
            let of_method = records.iter().filter(|r| r.method == method);
            let eps: Vec<f64> = of_method.clone().filter_map(|r| r.epsilon).collect();
            MethodSummary {
                method,
                ok: eps.len(),
                failures: of_method.count() - eps.len(),
                stats: Stats::of(&eps),
            }
        })
        .collect())
}
