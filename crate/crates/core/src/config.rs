//! TOML campaign configuration and the named (q, beta) presets.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::guidance::{GuidanceConfig, Method, MissionSetup};
use crate::monte_carlo::MonteCarloConfig;
use crate::nlp::{HessianMode, SolverOptions};
use crate::ocp::example_problem;
use crate::sim::OdeOptions;
use crate::transcription::Mesh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub q: f64,
    pub beta: f64,
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "fig3a",
        q: 0.01,
        beta: 5.0,
    },
    Preset {
        name: "fig3b",
        q: 0.01,
        beta: 10.0,
    },
    Preset {
        name: "fig3c",
        q: 0.02,
        beta: 5.0,
    },
    Preset {
        name: "fig3d",
        q: 0.02,
        beta: 10.0,
    },
];

/// Looks up a preset; `fig4` is the single-mission case sharing fig3b's weights.
pub fn preset(name: &str) -> Result<Preset> {
    let key = if name == "fig4" { "fig3b" } else { name };
    PRESETS
        .iter()
        .find(|p| p.name == key)
        .copied()
        .ok_or_else(|| {
            let known: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
            Error::Config(format!(
                "unknown preset '{name}' (known: {}, fig4)",
                known.join(", ")
            ))
        })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawProblem {
    name: String,
    alpha: f64,
}

impl Default for RawProblem {
    fn default() -> Self {
        Self {
            name: "example".into(),
            alpha: 2.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMesh {
    intervals: usize,
    order: usize,
    grading: f64,
}

impl Default for RawMesh {
    fn default() -> Self {
        Self {
            intervals: 16,
            order: 6,
            grading: 2.0,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSolver {
    kkt_tolerance: Option<f64>,
    max_iterations: Option<usize>,
    hessian: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawIntegrator {
    abs_tol: Option<f64>,
    rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGuidance {
    cycle_duration: Option<f64>,
    cycles: Option<usize>,
    method: Option<String>,
    reset_sensitivity: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMc {
    runs: Option<usize>,
    q: Option<f64>,
    beta: Option<f64>,
    seed: Option<u64>,
    methods: Option<Vec<String>>,
    workers: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    dir: PathBuf,
}

impl Default for RawOutput {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    preset: Option<String>,
    problem: RawProblem,
    mesh: RawMesh,
    solver: RawSolver,
    integrator: RawIntegrator,
    guidance: RawGuidance,
    mc: RawMc,
    output: RawOutput,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub preset: Option<String>,
    pub problem: String,
    pub alpha: f64,
    pub mesh_intervals: usize,
    pub mesh_order: usize,
    /// Width ratio of neighbouring intervals growing inward from both ends;
    /// 1 is uniform.
    pub mesh_grading: f64,
    pub solver: SolverOptions,
    pub ode: OdeOptions,
    pub guidance: GuidanceConfig,
    /// Method of the `mission` subcommand.
    pub method: Method,
    pub mc: MonteCarloConfig,
    pub output_dir: PathBuf,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig::from_raw(RawConfig::default()).expect("defaults are valid")
    }
}

fn key_error(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

impl CampaignConfig {
    fn from_raw(raw: RawConfig) -> Result<Self> {
        let preset = raw.preset.as_deref().map(preset).transpose()?;
        if raw.problem.name != "example" {
            return Err(key_error(
                "problem.name",
                format!("unknown problem '{}' (known: example)", raw.problem.name),
            ));
        }
        let mut solver = SolverOptions::default();
        if let Some(t) = raw.solver.kkt_tolerance {
            solver.kkt_tolerance = t;
        }
        if let Some(n) = raw.solver.max_iterations {
            solver.max_iterations = n;
        }
        if let Some(h) = raw.solver.hessian {
            solver.hessian = match h.to_ascii_lowercase().as_str() {
                "exact" => HessianMode::Exact,
                "quasi-newton" | "bfgs" => HessianMode::QuasiNewton,
                _ => {
                    return Err(key_error(
                        "solver.hessian",
                        format!("expected exact or quasi-newton, got '{h}'"),
                    ))
                }
            };
        }
        let mut ode = OdeOptions::default();
        if let Some(t) = raw.integrator.abs_tol {
            ode.abs_tol = t;
        }
        if let Some(t) = raw.integrator.rel_tol {
            ode.rel_tol = t;
        }
        let dg = GuidanceConfig::default();
        let guidance = GuidanceConfig {
            cycle_duration: raw.guidance.cycle_duration.unwrap_or(dg.cycle_duration),
            cycles: raw.guidance.cycles.unwrap_or(dg.cycles),
            reset_sensitivity: raw
                .guidance
                .reset_sensitivity
                .unwrap_or(dg.reset_sensitivity),
        };
        let method = match &raw.guidance.method {
            Some(m) => m.parse().map_err(|e| key_error("guidance.method", e))?,
            None => Method::Dog,
        };
        let dm = MonteCarloConfig::default();
        let methods = match raw.mc.methods {
            Some(list) => list
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<Result<Vec<_>>>()
                .map_err(|e| key_error("mc.methods", e))?,
            None => dm.methods.clone(),
        };
        let mc = MonteCarloConfig {
            runs: raw.mc.runs.unwrap_or(dm.runs),
            q: raw.mc.q.or(preset.map(|p| p.q)).unwrap_or(dm.q),
            beta: raw.mc.beta.or(preset.map(|p| p.beta)).unwrap_or(dm.beta),
            seed: raw.mc.seed.unwrap_or(dm.seed),
            methods,
            workers: raw.mc.workers.unwrap_or(dm.workers),
        };
        let cfg = Self {
            preset: raw.preset,
            problem: raw.problem.name,
            alpha: raw.problem.alpha,
            mesh_intervals: raw.mesh.intervals,
            mesh_order: raw.mesh.order,
            mesh_grading: raw.mesh.grading,
            solver,
            ode,
            guidance,
            method,
            mc,
            output_dir: raw.output.dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(key_error("problem.alpha", "must be positive"));
        }
        if self.mesh_intervals == 0 {
            return Err(key_error("mesh.intervals", "must be at least 1"));
        }
        if self.mesh_order == 0 {
            return Err(key_error("mesh.order", "must be at least 1"));
        }
        if !(self.mesh_grading >= 1.0 && self.mesh_grading.is_finite()) {
            return Err(key_error("mesh.grading", "must be at least 1"));
        }
        self.solver.validate().map_err(|e| key_error("solver", e))?;
        self.ode
            .validate()
            .map_err(|e| key_error("integrator", e))?;
        let (t0, tf) = (crate::ocp::EXAMPLE_T0, crate::ocp::EXAMPLE_TF);
        self.guidance
            .validate(t0, tf)
            .map_err(|e| key_error("guidance", e))?;
        self.mc.validate().map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Config(msg),
            other => other,
        })?;
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let (t0, tf) = (crate::ocp::EXAMPLE_T0, crate::ocp::EXAMPLE_TF);
        Mesh::graded(
            t0,
            tf,
            self.mesh_intervals,
            &[self.mesh_order],
            self.mesh_grading,
        )
    }

    /// Mission setup at the configured `q` and `beta`.
    pub fn mission_setup(&self) -> Result<MissionSetup> {
        self.mission_setup_with(self.mc.beta, self.mc.q)
    }

    pub fn mission_setup_with(&self, beta: f64, q: f64) -> Result<MissionSetup> {
        let (ocp, weights) = example_problem(self.alpha)?;
        let setup = MissionSetup {
            ocp,
            spec: weights.spec(beta, q),
            mesh: self.mesh()?,
            solver: self.solver.clone(),
            ode: self.ode,
            guidance: self.guidance,
        };
        setup.validate()?;
        Ok(setup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = CampaignConfig::parse_str("").unwrap();
        assert_eq!(cfg.problem, "example");
        assert_eq!(cfg.alpha, 2.0);
        assert_eq!(cfg, CampaignConfig::default());
        assert_eq!((cfg.mesh_intervals, cfg.mesh_order), (16, 6));
    }

    #[test]
    fn presets_resolve() {
        let cfg = CampaignConfig::parse_str("preset = \"fig3a\"").unwrap();
        assert_eq!((cfg.mc.q, cfg.mc.beta), (0.01, 5.0));
        let fig4 = preset("fig4").unwrap();
        assert_eq!((fig4.q, fig4.beta), (0.01, 10.0));
        let over = CampaignConfig::parse_str("preset = \"fig3d\"\n[mc]\nbeta = 1.0\n").unwrap();
        assert_eq!((over.mc.q, over.mc.beta), (0.02, 1.0));
        assert!(CampaignConfig::parse_str("preset = \"fig9\"").is_err());
    }

    #[test]
    fn rejects_zero_runs_and_unknown_keys() {
        let err = CampaignConfig::parse_str("[mc]\nruns = 0\n").unwrap_err();
        assert!(err.to_string().contains("mc.runs"), "{err}");
        let err = CampaignConfig::parse_str("[mc]\nrun = 3\n").unwrap_err();
        assert!(err.to_string().contains("run"), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn methods_and_solver_keys() {
        let cfg = CampaignConfig::parse_str(
            "[mc]\nmethods = [\"oc\", \"DOG\"]\n[solver]\nhessian = \"quasi-newton\"\n[guidance]\nmethod = \"OG\"\n",
        )
        .unwrap();
        assert_eq!(cfg.mc.methods, vec![Method::Oc, Method::Dog]);
        assert_eq!(cfg.solver.hessian, HessianMode::QuasiNewton);
        assert_eq!(cfg.method, Method::Og);
        assert!(CampaignConfig::parse_str("[mc]\nmethods = [\"XX\"]\n").is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = CampaignConfig::load(Path::new("/nonexistent/cfg.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cfg.toml"));
    }
}
