//! Closed-loop guidance missions.
//!
//! Each cycle flies the current solution on the perturbed plant for one
//! cycle duration, discards the expired horizon, compresses the mesh onto
//! what remains and re-solves from the simulated state.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::nlp::{SolveStatus, SolverOptions};
use crate::ocp::{DesensitizationSpec, OcpDefinition};
use crate::sensitivity::augment;
use crate::sim::{integrate, OdeOptions, SimResult};
use crate::trajectory::Trajectory;
use crate::transcription::{base_objective, solve_ocp, Mesh, SolveOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Oc,
    Doc,
    Og,
    Dog,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Oc, Method::Doc, Method::Og, Method::Dog];

    pub fn is_desensitized(self) -> bool {
        matches!(self, Method::Doc | Method::Dog)
    }

    pub fn is_guided(self) -> bool {
        matches!(self, Method::Og | Method::Dog)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Oc => "OC",
            Method::Doc => "DOC",
            Method::Og => "OG",
            Method::Dog => "DOG",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OC" => Ok(Method::Oc),
            "DOC" => Ok(Method::Doc),
            "OG" => Ok(Method::Og),
            "DOG" => Ok(Method::Dog),
            _ => Err(Error::InvalidArgument(format!(
                "unknown method '{s}' (expected OC, DOC, OG or DOG)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig {
    pub cycle_duration: f64,
    pub cycles: usize,
    /// Restart every re-solve from `S = 0` instead of the previous solution's
    /// sensitivity at the handoff time.
    pub reset_sensitivity: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            cycle_duration: 4.0,
            cycles: 12,
            reset_sensitivity: false,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self, t0: f64, tf: f64) -> Result<()> {
        if !(self.cycle_duration > 0.0 && self.cycle_duration.is_finite()) {
            return Err(Error::InvalidArgument(
                "cycle duration must be positive".into(),
            ));
        }
        if self.cycles == 0 {
            return Err(Error::InvalidArgument(
                "at least one guidance cycle is required".into(),
            ));
        }
        let covered = self.cycles as f64 * self.cycle_duration;
        if covered > (tf - t0) * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "{} cycles of {} s exceed the horizon of {} s",
                self.cycles,
                self.cycle_duration,
                tf - t0
            )));
        }
        Ok(())
    }
}

/// `[t0 + s D, t0 + (s + 1) D]`, cycles counted from zero.
pub fn cycle_bounds(s: usize, t0: f64, d: f64, tf: f64) -> Result<(f64, f64)> {
    let start = t0 + s as f64 * d;
    let end = t0 + (s + 1) as f64 * d;
    if end > tf * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "cycle {s} ends at {end}, after the final time {tf}"
        )));
    }
    Ok((start, end.min(tf)))
}

/// Everything a mission needs besides the method and the perturbed parameters.
#[derive(Debug, Clone)]
pub struct MissionSetup {
    pub ocp: OcpDefinition,
    /// Used by the desensitized methods.
    pub spec: DesensitizationSpec,
    pub mesh: Mesh,
    pub solver: SolverOptions,
    pub ode: OdeOptions,
    pub guidance: GuidanceConfig,
}

impl MissionSetup {
    pub fn validate(&self) -> Result<()> {
        let (t0, tf) = self.ocp.time_domain();
        self.guidance.validate(t0, tf)?;
        self.solver.validate()?;
        self.ode.validate()?;
        self.spec.validate(&self.ocp)?;
        if self.mesh.time_domain() != (t0, tf) {
            return Err(Error::InvalidArgument(
                "mesh horizon differs from the problem horizon".into(),
            ));
        }
        Ok(())
    }

    fn zero_sensitivity(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.ocp.n_states(), self.ocp.n_params())
    }
}

/// Solves `ocp` on `mesh`; with a spec, the sensitivity-augmented problem
/// starting from `s0`. Without a warm start the augmented solve is
/// initialized from the unaugmented optimum.
pub fn solve_problem(
    ocp: &OcpDefinition,
    spec: Option<(&DesensitizationSpec, DMatrix<f64>)>,
    mesh: &Mesh,
    warm: Option<&Trajectory>,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    match spec {
        None => solve_ocp(ocp, mesh, warm, opts),
        Some((spec, s0)) => {
            let aug = augment(ocp, spec, s0)?;
            match warm {
                Some(w) => solve_ocp(&aug, mesh, Some(w), opts),
                None => {
                    let base = solve_ocp(ocp, mesh, None, opts)?;
                    if !base.converged() {
                        return Ok(base);
                    }
                    let mut out = solve_ocp(&aug, mesh, Some(&base.trajectory), opts)?;
                    out.nlp.iterations += base.nlp.iterations;
                    Ok(out)
                }
            }
        }
    }
}

fn require_converged(out: SolveOutcome) -> Result<SolveOutcome> {
    if out.converged() {
        Ok(out)
    } else {
        Err(Error::SolverFailure {
            status: out.nlp.status.to_string(),
            iterations: out.nlp.iterations,
            kkt_residual: out.nlp.kkt_residual,
        })
    }
}

/// The initial solve shared by a method family (OC/OG or DOC/DOG).
#[derive(Debug, Clone)]
pub struct Reference {
    pub desensitized: bool,
    pub outcome: SolveOutcome,
    /// Cost of the original problem along the solution.
    pub base_objective: f64,
}

impl Reference {
    pub fn trajectory(&self) -> &Trajectory {
        &self.outcome.trajectory
    }
}

pub fn solve_reference(setup: &MissionSetup, desensitized: bool) -> Result<Reference> {
    let spec = desensitized.then(|| (&setup.spec, setup.zero_sensitivity()));
    let outcome = require_converged(solve_problem(
        &setup.ocp,
        spec,
        &setup.mesh,
        None,
        &setup.solver,
    )?)?;
    let base_objective = base_objective(&setup.ocp, &outcome.trajectory, &outcome.mesh)?;
    Ok(Reference {
        desensitized,
        outcome,
        base_objective,
    })
}

/// Initial conditions for the next re-solve: the simulated state and,
/// when the previous solution carries one, its sensitivity.
pub fn restart_conditions(
    prev: &Trajectory,
    sim: &SimResult,
    t_handoff: f64,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let x0 = sim.state_at(t_handoff)?;
    let s0 = prev.sensitivity_at(t_handoff)?;
    Ok((x0, s0))
}

/// Re-solves on `[t_start, tf]` from `x0` (and `s0` for the desensitized
/// problem) on the compressed mesh, warm-started from `warm`.
pub fn remap_and_resolve(
    setup: &MissionSetup,
    desensitized: bool,
    x0: DVector<f64>,
    s0: Option<DMatrix<f64>>,
    t_start: f64,
    warm: &Trajectory,
) -> Result<SolveOutcome> {
    let ocp = setup.ocp.restarted(x0, t_start)?;
    let mesh = setup.mesh.remapped(t_start)?;
    let spec = if desensitized {
        Some((&setup.spec, s0.unwrap_or_else(|| setup.zero_sensitivity())))
    } else {
        None
    };
    require_converged(solve_problem(&ocp, spec, &mesh, Some(warm), &setup.solver)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// SQP iterations of the re-solve at `t_end`; `None` when no re-solve
    /// followed (the horizon was exhausted).
    pub iterations: Option<usize>,
    pub status: Option<SolveStatus>,
}

#[derive(Debug, Clone)]
pub struct MissionResult {
    pub method: Method,
    /// The reference followed by every re-solved trajectory.
    pub solutions: Vec<Trajectory>,
    pub cycles: Vec<CycleRecord>,
    /// Stitched truth history.
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub final_state: DVector<f64>,
    /// `x(tf) - x_ref(tf)`.
    pub epsilon: DVector<f64>,
    /// SQP iterations over all re-solves (the reference excluded).
    pub iterations: usize,
}

fn append(result: &mut MissionResult, sim: SimResult) {
    let skip = usize::from(!result.times.is_empty());
    result.times.extend(sim.times.iter().skip(skip));
    result.states.extend(sim.states.iter().skip(skip).cloned());
    result
        .controls
        .extend(sim.controls.iter().skip(skip).cloned());
    result.final_state = sim.terminal;
}

/// Flies `method` on the plant with parameters `p_tilde`. `reference` must
/// belong to the method's family (see [`solve_reference`]).
pub fn run_mission(
    setup: &MissionSetup,
    method: Method,
    p_tilde: &DVector<f64>,
    reference: &Reference,
) -> Result<MissionResult> {
    if reference.desensitized != method.is_desensitized() {
        return Err(Error::InvalidArgument(format!(
            "reference solve does not belong to method {method}"
        )));
    }
    let (t0, tf) = setup.ocp.time_domain();
    let x_init = setup
        .ocp
        .initial_state()
        .cloned()
        .unwrap_or_else(|| reference.trajectory().initial_state());
    let x_ref_final = reference.trajectory().final_state();
    let mut result = MissionResult {
        method,
        solutions: vec![reference.trajectory().clone()],
        cycles: Vec::new(),
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        final_state: x_init.clone(),
        epsilon: DVector::zeros(x_init.len()),
        iterations: 0,
    };

    if !method.is_guided() {
        let sim = integrate(
            &setup.ocp,
            reference.trajectory(),
            &x_init,
            (t0, tf),
            p_tilde,
            &setup.ode,
        )?;
        append(&mut result, sim);
    } else {
        setup.guidance.validate(t0, tf)?;
        let d = setup.guidance.cycle_duration;
        let mut x = x_init;
        let mut t = t0;
        for s in 0..setup.guidance.cycles {
            let (a, b) = cycle_bounds(s, t0, d, tf)?;
            let current = result.solutions[result.solutions.len() - 1].clone();
            let step = |e: Error| Error::Cycle {
                cycle: s,
                source: Box::new(e),
            };
            let sim =
                integrate(&setup.ocp, &current, &x, (a, b), p_tilde, &setup.ode).map_err(step)?;
            let (x_next, s_prev) = restart_conditions(&current, &sim, b).map_err(step)?;
            append(&mut result, sim);
            x = x_next.clone();
            t = b;
            let mut record = CycleRecord {
                index: s,
                t_start: a,
                t_end: b,
                iterations: None,
                status: None,
            };
            if b < tf {
                let s0 = if setup.guidance.reset_sensitivity {
                    None
                } else {
                    s_prev
                };
                let out =
                    remap_and_resolve(setup, method.is_desensitized(), x_next, s0, b, &current)
                        .map_err(step)?;
                record.iterations = Some(out.nlp.iterations);
                record.status = Some(out.nlp.status);
                result.iterations += out.nlp.iterations;
                result.solutions.push(out.trajectory);
            }
            result.cycles.push(record);
        }
        if t < tf {
            let last = &result.solutions[result.solutions.len() - 1];
            let sim = integrate(&setup.ocp, last, &x, (t, tf), p_tilde, &setup.ode)?;
            append(&mut result, sim);
        }
    }
    result.epsilon = &result.final_state - x_ref_final;
    Ok(result)
}
