//! Bolza optimal control problem definitions.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `(x, u, p, t) -> xdot`
pub type DynamicsFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
/// `(x, u, p, t) -> matrix`, used for both `df/dx` and `df/dp`.
pub type JacobianFn =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> DMatrix<f64> + Send + Sync>;
/// `(x, u, t) -> L`
pub type RunningCostFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> f64 + Send + Sync>;
/// `(x0, t0, xf, tf) -> M`
pub type EndpointCostFn = Arc<dyn Fn(&DVector<f64>, f64, &DVector<f64>, f64) -> f64 + Send + Sync>;
/// `(x0, t0, xf, tf) -> b`
pub type EndpointFn =
    Arc<dyn Fn(&DVector<f64>, f64, &DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
/// `(x, u, t) -> c`
pub type PathFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync>;

/// A vector function together with componentwise bounds. Equal bounds
/// encode equality constraints.
#[derive(Clone)]
pub struct Bounded<F> {
    pub func: F,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl<F> Bounded<F> {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FinalTime {
    Fixed,
    /// Final time is a decision variable bounded to `[lower, upper]`.
    Free {
        lower: f64,
        upper: f64,
    },
}

/// Bolza problem: dynamics with parameters, Jacobians, costs, boundary and
/// path constraints, nominal parameters and the time domain.
#[derive(Clone)]
pub struct OcpDefinition {
    n_states: usize,
    n_controls: usize,
    n_params: usize,
    dynamics: DynamicsFn,
    jac_x: JacobianFn,
    jac_p: JacobianFn,
    running_cost: Option<RunningCostFn>,
    terminal_cost: Option<EndpointCostFn>,
    initial_state: Option<DVector<f64>>,
    final_state_guess: Option<DVector<f64>>,
    boundary: Option<Bounded<EndpointFn>>,
    path: Option<Bounded<PathFn>>,
    nominal_params: DVector<f64>,
    t0: f64,
    tf: f64,
    final_time: FinalTime,
}

impl fmt::Debug for OcpDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OcpDefinition")
            .field("n_states", &self.n_states)
            .field("n_controls", &self.n_controls)
            .field("n_params", &self.n_params)
            .field("initial_state", &self.initial_state)
            .field("nominal_params", &self.nominal_params)
            .field("time_domain", &(self.t0, self.tf))
            .field("final_time", &self.final_time)
            .finish_non_exhaustive()
    }
}

impl OcpDefinition {
    pub fn builder(n_states: usize, n_controls: usize, n_params: usize) -> OcpBuilder {
        OcpBuilder {
            n_states,
            n_controls,
            n_params,
            dynamics: None,
            jacobians: None,
            running_cost: None,
            terminal_cost: None,
            initial_state: None,
            final_state_guess: None,
            boundary: None,
            path: None,
            nominal_params: None,
            time_domain: None,
            final_time: FinalTime::Fixed,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn time_domain(&self) -> (f64, f64) {
        (self.t0, self.tf)
    }

    pub fn final_time(&self) -> FinalTime {
        self.final_time
    }

    pub fn nominal_params(&self) -> &DVector<f64> {
        &self.nominal_params
    }

    pub fn initial_state(&self) -> Option<&DVector<f64>> {
        self.initial_state.as_ref()
    }

    /// Terminal state used to seed straight-line initial guesses.
    pub fn final_state_guess(&self) -> Option<&DVector<f64>> {
        self.final_state_guess.as_ref()
    }

    pub fn boundary(&self) -> Option<&Bounded<EndpointFn>> {
        self.boundary.as_ref()
    }

    pub fn path_constraints(&self) -> Option<&Bounded<PathFn>> {
        self.path.as_ref()
    }

    pub fn dynamics(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        p: &DVector<f64>,
        t: f64,
    ) -> DVector<f64> {
        (self.dynamics)(x, u, p, t)
    }

    /// `A = df/dx`, `n x n`.
    pub fn jac_x(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        p: &DVector<f64>,
        t: f64,
    ) -> DMatrix<f64> {
        (self.jac_x)(x, u, p, t)
    }

    /// `B = df/dp`, `n x m`.
    pub fn jac_p(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        p: &DVector<f64>,
        t: f64,
    ) -> DMatrix<f64> {
        (self.jac_p)(x, u, p, t)
    }

    pub fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64 {
        self.running_cost.as_ref().map_or(0.0, |l| l(x, u, t))
    }

    pub fn terminal_cost(&self, x0: &DVector<f64>, t0: f64, xf: &DVector<f64>, tf: f64) -> f64 {
        self.terminal_cost
            .as_ref()
            .map_or(0.0, |m| m(x0, t0, xf, tf))
    }

    /// Same problem restarted from `x0` at `t_start`; the terminal side is untouched.
    pub fn restarted(&self, x0: DVector<f64>, t_start: f64) -> Result<Self> {
        if x0.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                context: "restart state",
                expected: self.n_states,
                actual: x0.len(),
            });
        }
        if !(t_start < self.tf) {
            return Err(Error::InvalidArgument(format!(
                "restart time {t_start} is not before the final time {}",
                self.tf
            )));
        }
        let mut next = self.clone();
        next.initial_state = Some(x0);
        next.t0 = t_start;
        Ok(next)
    }

    /// Same problem with different nominal parameters.
    pub fn with_nominal_params(&self, p: DVector<f64>) -> Result<Self> {
        if p.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected: self.n_params,
                actual: p.len(),
            });
        }
        let mut next = self.clone();
        next.nominal_params = p;
        Ok(next)
    }
}

pub struct OcpBuilder {
    n_states: usize,
    n_controls: usize,
    n_params: usize,
    dynamics: Option<DynamicsFn>,
    jacobians: Option<(JacobianFn, JacobianFn)>,
    running_cost: Option<RunningCostFn>,
    terminal_cost: Option<EndpointCostFn>,
    initial_state: Option<DVector<f64>>,
    final_state_guess: Option<DVector<f64>>,
    boundary: Option<Bounded<EndpointFn>>,
    path: Option<Bounded<PathFn>>,
    nominal_params: Option<DVector<f64>>,
    time_domain: Option<(f64, f64)>,
    final_time: FinalTime,
}

impl OcpBuilder {
    pub fn dynamics<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> DVector<f64>
            + Send
            + Sync
            + 'static,
    {
        self.dynamics = Some(Arc::new(f));
        self
    }

    /// Analytic `df/dx` and `df/dp`. Without them, [`OcpBuilder::build`]
    /// falls back to central finite differences of the dynamics.
    pub fn jacobians<A, B>(mut self, jac_x: A, jac_p: B) -> Self
    where
        A: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> DMatrix<f64>
            + Send
            + Sync
            + 'static,
        B: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>, f64) -> DMatrix<f64>
            + Send
            + Sync
            + 'static,
    {
        self.jacobians = Some((Arc::new(jac_x), Arc::new(jac_p)));
        self
    }

    pub fn running_cost<F>(mut self, l: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>, f64) -> f64 + Send + Sync + 'static,
    {
        self.running_cost = Some(Arc::new(l));
        self
    }

    pub fn terminal_cost<F>(mut self, m: F) -> Self
    where
        F: Fn(&DVector<f64>, f64, &DVector<f64>, f64) -> f64 + Send + Sync + 'static,
    {
        self.terminal_cost = Some(Arc::new(m));
        self
    }

    pub fn initial_state(mut self, x0: DVector<f64>) -> Self {
        self.initial_state = Some(x0);
        self
    }

    pub fn final_state_guess(mut self, xf: DVector<f64>) -> Self {
        self.final_state_guess = Some(xf);
        self
    }

    pub fn boundary<F>(mut self, b: F, lower: DVector<f64>, upper: DVector<f64>) -> Self
    where
        F: Fn(&DVector<f64>, f64, &DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        self.boundary = Some(Bounded {
            func: Arc::new(b),
            lower,
            upper,
        });
        self
    }

    pub fn path_constraints<F>(mut self, c: F, lower: DVector<f64>, upper: DVector<f64>) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        self.path = Some(Bounded {
            func: Arc::new(c),
            lower,
            upper,
        });
        self
    }

    pub fn nominal_params(mut self, p: DVector<f64>) -> Self {
        self.nominal_params = Some(p);
        self
    }

    pub fn time_domain(mut self, t0: f64, tf: f64) -> Self {
        self.time_domain = Some((t0, tf));
        self
    }

    pub fn free_final_time(mut self, lower: f64, upper: f64) -> Self {
        self.final_time = FinalTime::Free { lower, upper };
        self
    }

    pub fn build(self) -> Result<OcpDefinition> {
        let n = self.n_states;
        let dynamics = self
            .dynamics
            .ok_or_else(|| Error::InvalidArgument("dynamics are required".into()))?;
        let (t0, tf) = self
            .time_domain
            .ok_or_else(|| Error::InvalidArgument("time domain is required".into()))?;
        if !(t0 < tf) {
            return Err(Error::InvalidArgument(format!(
                "t0 = {t0} must precede tf = {tf}"
            )));
        }
        if let FinalTime::Free { lower, upper } = self.final_time {
            if !(lower <= upper && lower > t0) {
                return Err(Error::InvalidArgument(format!(
                    "final time bounds [{lower}, {upper}] are inconsistent with t0 = {t0}"
                )));
            }
        }
        let nominal_params = self
            .nominal_params
            .unwrap_or_else(|| DVector::zeros(self.n_params));
        if nominal_params.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                context: "nominal parameters",
                expected: self.n_params,
                actual: nominal_params.len(),
            });
        }
        if let Some(x0) = &self.initial_state {
            if x0.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "initial state",
                    expected: n,
                    actual: x0.len(),
                });
            }
        }
        if let Some(xf) = &self.final_state_guess {
            if xf.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "final state guess",
                    expected: n,
                    actual: xf.len(),
                });
            }
        }
        if let Some(b) = &self.boundary {
            check_bounds("boundary", &b.lower, &b.upper)?;
        }
        if let Some(c) = &self.path {
            check_bounds("path constraint", &c.lower, &c.upper)?;
        }
        let (jac_x, jac_p) = match self.jacobians {
            Some(pair) => pair,
            None => finite_difference_jacobians(Arc::clone(&dynamics)),
        };
        Ok(OcpDefinition {
            n_states: n,
            n_controls: self.n_controls,
            n_params: self.n_params,
            dynamics,
            jac_x,
            jac_p,
            running_cost: self.running_cost,
            terminal_cost: self.terminal_cost,
            initial_state: self.initial_state,
            final_state_guess: self.final_state_guess,
            boundary: self.boundary,
            path: self.path,
            nominal_params,
            t0,
            tf,
            final_time: self.final_time,
        })
    }
}

fn check_bounds(what: &str, lower: &DVector<f64>, upper: &DVector<f64>) -> Result<()> {
    if lower.len() != upper.len() {
        return Err(Error::DimensionMismatch {
            context: "constraint bounds",
            expected: lower.len(),
            actual: upper.len(),
        });
    }
    if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
        return Err(Error::InvalidArgument(format!(
            "{what} bound {i}: lower {} exceeds upper {}",
            lower[i], upper[i]
        )));
    }
    Ok(())
}

fn fd_step(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

/// Central-difference Jacobian of `g` at `v`.
fn central_jacobian(
    v: &DVector<f64>,
    rows: usize,
    g: impl Fn(&DVector<f64>) -> DVector<f64>,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, v.len());
    let mut probe = v.clone();
    for j in 0..v.len() {
        let h = fd_step(v[j]);
        probe[j] = v[j] + h;
        let plus = g(&probe);
        probe[j] = v[j] - h;
        let minus = g(&probe);
        probe[j] = v[j];
        jac.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    jac
}

/// `df/dx` and `df/dp` generated from the dynamics by central differences.
pub fn finite_difference_jacobians(dynamics: DynamicsFn) -> (JacobianFn, JacobianFn) {
    let fx = Arc::clone(&dynamics);
    let jac_x: JacobianFn =
        Arc::new(move |x, u, p, t| central_jacobian(x, x.len(), |xv| fx(xv, u, p, t)));
    let fp = dynamics;
    let jac_p: JacobianFn =
        Arc::new(move |x, u, p, t| central_jacobian(p, x.len(), |pv| fp(x, u, pv, t)));
    (jac_x, jac_p)
}

/// Outcome of [`validate_jacobians`].
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    pub max_rel_error: f64,
    pub samples: usize,
}

pub const JACOBIAN_TOLERANCE: f64 = 1e-4;

/// Compares the problem's Jacobians with central differences of its
/// dynamics at each `(x, u, t)` sample (parameters at their nominal values).
///
/// Discrepancies are measured relative to `max(|fd|, 1)`.
pub fn validate_jacobians(
    ocp: &OcpDefinition,
    samples: &[(DVector<f64>, DVector<f64>, f64)],
) -> Result<JacobianReport> {
    let p = ocp.nominal_params();
    let n = ocp.n_states();
    let mut worst: Option<Error> = None;
    let mut max_rel = 0.0_f64;
    for (x, u, t) in samples {
        if x.len() != n || u.len() != ocp.n_controls() {
            return Err(Error::DimensionMismatch {
                context: "jacobian sample",
                expected: n,
                actual: x.len(),
            });
        }
        let checks = [
            (
                "jac_x",
                ocp.jac_x(x, u, p, *t),
                central_jacobian(x, n, |xv| ocp.dynamics(xv, u, p, *t)),
            ),
            (
                "jac_p",
                ocp.jac_p(x, u, p, *t),
                central_jacobian(p, n, |pv| ocp.dynamics(x, u, pv, *t)),
            ),
        ];
        for (which, analytic, numeric) in checks {
            if analytic.shape() != numeric.shape() {
                return Err(Error::DimensionMismatch {
                    context: which,
                    expected: numeric.len(),
                    actual: analytic.len(),
                });
            }
            for r in 0..numeric.nrows() {
                for c in 0..numeric.ncols() {
                    let (a, fd) = (analytic[(r, c)], numeric[(r, c)]);
                    let rel = (a - fd).abs() / fd.abs().max(1.0);
                    if rel > max_rel {
                        max_rel = rel;
                        worst = Some(Error::JacobianMismatch {
                            which,
                            row: r,
                            col: c,
                            analytic: a,
                            numeric: fd,
                            rel_error: rel,
                        });
                    }
                }
            }
        }
    }
    if max_rel > JACOBIAN_TOLERANCE {
        return Err(worst.expect("worst entry recorded"));
    }
    Ok(JacobianReport {
        max_rel_error: max_rel,
        samples: samples.len(),
    })
}

/// `(x, t) -> G`, the `r x n` Jacobian of the penalty function `h`.
pub type PenaltyJacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// `t -> Q(t)`, `r x r`.
pub type WeightFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Penalty and weighting data for desensitized optimal control.
#[derive(Clone)]
pub struct DesensitizationSpec {
    pub penalty_jacobian: PenaltyJacobianFn,
    pub terminal_weight: DMatrix<f64>,
    pub running_weight: Option<WeightFn>,
    pub param_covariance: DMatrix<f64>,
}

impl fmt::Debug for DesensitizationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DesensitizationSpec")
            .field("terminal_weight", &self.terminal_weight)
            .field("has_running_weight", &self.running_weight.is_some())
            .field("param_covariance", &self.param_covariance)
            .finish()
    }
}

const PSD_TOLERANCE: f64 = 1e-12;

/// Symmetric with no eigenvalue below `-1e-12`.
pub fn is_symmetric_psd(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    if (m - m.transpose()).abs().max() > 1e-12 * (1.0 + m.abs().max()) {
        return false;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .all(|&l| l >= -PSD_TOLERANCE)
}

impl DesensitizationSpec {
    /// Checks weight/covariance shapes against `ocp` and that they are PSD.
    /// Returns the penalty dimension `r`.
    pub fn validate(&self, ocp: &OcpDefinition) -> Result<usize> {
        let n = ocp.n_states();
        let m = ocp.n_params();
        let probe = ocp
            .initial_state()
            .cloned()
            .unwrap_or_else(|| DVector::zeros(n));
        let g = (self.penalty_jacobian)(&probe);
        if g.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "penalty jacobian columns",
                expected: n,
                actual: g.ncols(),
            });
        }
        let r = g.nrows();
        if self.terminal_weight.shape() != (r, r) {
            return Err(Error::DimensionMismatch {
                context: "terminal weight",
                expected: r,
                actual: self.terminal_weight.nrows(),
            });
        }
        if self.param_covariance.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                context: "parameter covariance",
                expected: m,
                actual: self.param_covariance.nrows(),
            });
        }
        if !is_symmetric_psd(&self.terminal_weight) {
            return Err(Error::InvalidArgument(
                "terminal weight is not symmetric PSD".into(),
            ));
        }
        if !is_symmetric_psd(&self.param_covariance) {
            return Err(Error::InvalidArgument(
                "parameter covariance is not symmetric PSD".into(),
            ));
        }
        if let Some(q) = &self.running_weight {
            let (t0, tf) = ocp.time_domain();
            for t in [t0, 0.5 * (t0 + tf), tf] {
                let w = q(t);
                if w.shape() != (r, r) {
                    return Err(Error::DimensionMismatch {
                        context: "running weight",
                        expected: r,
                        actual: w.nrows(),
                    });
                }
                if !is_symmetric_psd(&w) {
                    return Err(Error::InvalidArgument(format!(
                        "running weight at t = {t} is not symmetric PSD"
                    )));
                }
            }
        }
        Ok(r)
    }
}

/// Weighting template for the built-in scalar example: `h = x_f`, `G = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleWeights {
    alpha: f64,
}

impl ExampleWeights {
    /// `Q_f = beta`, `P = (q alpha)^2` with `alpha` the nominal value.
    pub fn spec(&self, beta: f64, q: f64) -> DesensitizationSpec {
        let sigma = q * self.alpha;
        DesensitizationSpec {
            penalty_jacobian: Arc::new(|_x| DMatrix::identity(1, 1)),
            terminal_weight: DMatrix::from_element(1, 1, beta),
            running_weight: None,
            param_covariance: DMatrix::from_element(1, 1, sigma * sigma),
        }
    }

    pub fn nominal_alpha(&self) -> f64 {
        self.alpha
    }
}

pub const EXAMPLE_X0: f64 = 1.5;
pub const EXAMPLE_XF: f64 = 1.0;
pub const EXAMPLE_T0: f64 = 0.0;
pub const EXAMPLE_TF: f64 = 50.0;

/// The scalar example: minimize `0.5 * int (x^2 + u^2) dt` subject to
/// `xdot = -alpha^2 x^3 + alpha u`, `x(0) = 1.5`, `x(50) = 1`.
pub fn example_problem(alpha: f64) -> Result<(OcpDefinition, ExampleWeights)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let ocp = OcpDefinition::builder(1, 1, 1)
        .dynamics(|x, u, p, _t| {
            let a = p[0];
            DVector::from_element(1, -a * a * x[0].powi(3) + a * u[0])
        })
        .jacobians(
            |x, _u, p, _t| DMatrix::from_element(1, 1, -3.0 * p[0] * p[0] * x[0] * x[0]),
            |x, u, p, _t| DMatrix::from_element(1, 1, -2.0 * p[0] * x[0].powi(3) + u[0]),
        )
        .running_cost(|x, u, _t| 0.5 * (x[0] * x[0] + u[0] * u[0]))
        .initial_state(DVector::from_element(1, EXAMPLE_X0))
        .final_state_guess(DVector::from_element(1, EXAMPLE_XF))
        .boundary(
            |_x0, _t0, xf, _tf| xf.clone(),
            DVector::from_element(1, EXAMPLE_XF),
            DVector::from_element(1, EXAMPLE_XF),
        )
        .nominal_params(DVector::from_element(1, alpha))
        .time_domain(EXAMPLE_T0, EXAMPLE_TF)
        .build()?;
    Ok((ocp, ExampleWeights { alpha }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn example_dynamics_and_partials() {
        let (ocp, _) = example_problem(2.0).unwrap();
        let p = v(2.0);
        assert_eq!(ocp.dynamics(&v(1.5), &v(0.0), &p, 0.0)[0], -13.5);
        assert_eq!(ocp.jac_x(&v(1.5), &v(0.0), &p, 0.0)[(0, 0)], -27.0);
        assert_eq!(ocp.jac_p(&v(1.5), &v(0.0), &p, 0.0)[(0, 0)], -13.5);
        assert_eq!(ocp.running_cost(&v(1.0), &v(1.0), 3.0), 1.0);
    }

    #[test]
    fn example_jacobians_validate() {
        let (ocp, _) = example_problem(2.0).unwrap();
        let report = validate_jacobians(&ocp, &[(v(1.5), v(0.0), 0.0)]).unwrap();
        assert!(report.max_rel_error < 1e-8);
    }

    #[test]
    fn example_jacobians_match_on_grid() {
        for &alpha in &[0.5, 1.0, 2.0, 3.5] {
            let (ocp, _) = example_problem(alpha).unwrap();
            let samples: Vec<_> = (-4..=4)
                .flat_map(|i| (-2..=2).map(move |j| (v(0.4 * i as f64), v(0.7 * j as f64), 0.0)))
                .collect();
            let report = validate_jacobians(&ocp, &samples).unwrap();
            assert!(report.max_rel_error < 1e-6, "alpha {alpha}: {report:?}");
        }
    }

    #[test]
    fn zero_dynamics_have_zero_jacobians() {
        let ocp = OcpDefinition::builder(2, 1, 1)
            .dynamics(|_x, _u, _p, _t| DVector::zeros(2))
            .time_domain(0.0, 1.0)
            .build()
            .unwrap();
        let x = DVector::from_vec(vec![0.3, -1.0]);
        let a = ocp.jac_x(&x, &v(0.0), &v(0.0), 0.0);
        let b = ocp.jac_p(&x, &v(0.0), &v(0.0), 0.0);
        assert!(a.iter().all(|&e| e == 0.0) && b.iter().all(|&e| e == 0.0));
        assert!(validate_jacobians(&ocp, &[(x, v(0.0), 0.0)]).is_ok());
    }

    #[test]
    fn wrong_state_jacobian_is_named() {
        let ocp = OcpDefinition::builder(1, 1, 1)
            .dynamics(|x, u, p, _t| v(-p[0] * p[0] * x[0].powi(3) + p[0] * u[0]))
            .jacobians(
                |x, _u, p, _t| DMatrix::from_element(1, 1, -6.0 * p[0] * p[0] * x[0] * x[0]),
                |x, u, p, _t| DMatrix::from_element(1, 1, -2.0 * p[0] * x[0].powi(3) + u[0]),
            )
            .nominal_params(v(2.0))
            .time_domain(0.0, 1.0)
            .build()
            .unwrap();
        match validate_jacobians(&ocp, &[(v(1.5), v(0.0), 0.0)]) {
            Err(Error::JacobianMismatch {
                which, row, col, ..
            }) => {
                assert_eq!((which, row, col), ("jac_x", 0, 0));
            }
            other => panic!("expected a jacobian mismatch, got {other:?}"),
        }
    }

    #[test]
    fn fallback_jacobians_match_analytic() {
        let analytic = example_problem(2.0).unwrap().0;
        let fd = OcpDefinition::builder(1, 1, 1)
            .dynamics(|x, u, p, _t| v(-p[0] * p[0] * x[0].powi(3) + p[0] * u[0]))
            .nominal_params(v(2.0))
            .time_domain(0.0, 1.0)
            .build()
            .unwrap();
        let (x, u, p) = (v(0.8), v(-0.3), v(2.0));
        let a = analytic.jac_x(&x, &u, &p, 0.0)[(0, 0)];
        let b = analytic.jac_p(&x, &u, &p, 0.0)[(0, 0)];
        assert!((fd.jac_x(&x, &u, &p, 0.0)[(0, 0)] - a).abs() < 1e-8);
        assert!((fd.jac_p(&x, &u, &p, 0.0)[(0, 0)] - b).abs() < 1e-8);
    }

    #[test]
    fn builder_rejects_bad_domains() {
        let base = || OcpDefinition::builder(1, 1, 0).dynamics(|x, _u, _p, _t| x.clone());
        assert!(base().time_domain(1.0, 1.0).build().is_err());
        assert!(base()
            .time_domain(0.0, 1.0)
            .boundary(|x0, _, _, _| x0.clone(), v(1.0), v(0.0))
            .build()
            .is_err());
        assert!(base().build().is_err());
        assert!(example_problem(0.0).is_err());
    }

    #[test]
    fn example_weights() {
        let (ocp, w) = example_problem(2.0).unwrap();
        let spec = w.spec(5.0, 0.01);
        assert!((spec.param_covariance[(0, 0)] - 0.02_f64.powi(2)).abs() < 1e-18);
        assert_eq!(spec.terminal_weight[(0, 0)], 5.0);
        assert_eq!(spec.validate(&ocp).unwrap(), 1);
        let bad = w.spec(-1.0, 0.01);
        assert!(bad.validate(&ocp).is_err());
    }

    #[test]
    fn restart_moves_initial_time() {
        let (ocp, _) = example_problem(2.0).unwrap();
        let r = ocp.restarted(v(0.2), 12.0).unwrap();
        assert_eq!(r.time_domain(), (12.0, 50.0));
        assert_eq!(r.initial_state().unwrap()[0], 0.2);
        assert!(ocp.restarted(v(0.2), 50.0).is_err());
    }
}
