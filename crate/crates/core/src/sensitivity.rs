//! Sensitivity-augmented problems.
//!
//! The sensitivity `S = dx/dp` (`n x m`, constant parameters) obeys
//! `Sdot = A S + B` with `A = df/dx`, `B = df/dp`. It is appended to the
//! state column-major, and the cost gains the expected penalty variation
//! `tr(W G S P S' G')` at the final time (weight `Q_f`) and, optionally,
//! under the integral (weight `Q(t)`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ocp::{DesensitizationSpec, FinalTime, OcpDefinition};
use crate::problem::CollocationProblem;
use crate::sim::{integrate_ode, OdeOptions};

/// `tr(W (G S) P (G S)')`.
pub fn penalty_value(
    s: &DMatrix<f64>,
    g: &DMatrix<f64>,
    w: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let gs = g * s;
    (w * &gs * p * gs.transpose()).trace()
}

/// Column-major `vec(S)`.
pub fn vec_column_major(s: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(s.as_slice())
}

/// Inverse of [`vec_column_major`].
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v)
}

/// Base OCP with the sensitivity stacked under the state.
#[derive(Debug, Clone)]
pub struct AugmentedOcp {
    base: OcpDefinition,
    spec: DesensitizationSpec,
    s0: DMatrix<f64>,
}

/// Builds the augmented problem; `s0` is the sensitivity at the initial time
/// (zero for a fresh solve, carried over on guidance restarts).
pub fn augment(
    ocp: &OcpDefinition,
    spec: &DesensitizationSpec,
    s0: DMatrix<f64>,
) -> Result<AugmentedOcp> {
    spec.validate(ocp)?;
    let (n, m) = (ocp.n_states(), ocp.n_params());
    if s0.shape() != (n, m) {
        return Err(Error::DimensionMismatch {
            context: "initial sensitivity",
            expected: n * m,
            actual: s0.len(),
        });
    }
    Ok(AugmentedOcp {
        base: ocp.clone(),
        spec: spec.clone(),
        s0,
    })
}

impl AugmentedOcp {
    pub fn base(&self) -> &OcpDefinition {
        &self.base
    }

    pub fn spec(&self) -> &DesensitizationSpec {
        &self.spec
    }

    pub fn initial_sensitivity(&self) -> &DMatrix<f64> {
        &self.s0
    }

    /// Splits an augmented state into `(x, S)`.
    pub fn split(&self, xa: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.base.n_states();
        let x = xa.rows(0, n).into_owned();
        let s = unvec(&xa.as_slice()[n..], n, self.base.n_params());
        (x, s)
    }

    pub fn stack(&self, x: &DVector<f64>, s: &DMatrix<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len() + s.len());
        out.rows_mut(0, x.len()).copy_from(x);
        out.rows_mut(x.len(), s.len()).copy_from_slice(s.as_slice());
        out
    }

    /// `E||dh(t_f)||^2_{Q_f}` at a terminal augmented state.
    pub fn terminal_penalty(&self, xf: &DVector<f64>) -> f64 {
        let (x, s) = self.split(xf);
        let g = (self.spec.penalty_jacobian)(&x);
        penalty_value(
            &s,
            &g,
            &self.spec.terminal_weight,
            &self.spec.param_covariance,
        )
    }

    /// Integrand of the running penalty; zero without a running weight.
    pub fn running_penalty(&self, xa: &DVector<f64>, t: f64) -> f64 {
        match &self.spec.running_weight {
            Some(q) => {
                let (x, s) = self.split(xa);
                let g = (self.spec.penalty_jacobian)(&x);
                penalty_value(&s, &g, &q(t), &self.spec.param_covariance)
            }
            None => 0.0,
        }
    }

    /// The augmented dynamics with the model parameters set to `p`.
    pub fn dynamics_with_params(
        &self,
        xa: &DVector<f64>,
        u: &DVector<f64>,
        p: &DVector<f64>,
        t: f64,
    ) -> DVector<f64> {
        let (x, s) = self.split(xa);
        let xdot = self.base.dynamics(&x, u, p, t);
        let a = self.base.jac_x(&x, u, p, t);
        let b = self.base.jac_p(&x, u, p, t);
        let sdot = a * s + b;
        self.stack(&xdot, &sdot)
    }

    fn base_initial_is_free(&self) -> bool {
        self.base.initial_state().is_none()
    }
}

impl CollocationProblem for AugmentedOcp {
    fn n_states(&self) -> usize {
        let n = self.base.n_states();
        n + n * self.base.n_params()
    }

    fn n_controls(&self) -> usize {
        self.base.n_controls()
    }

    fn time_domain(&self) -> (f64, f64) {
        self.base.time_domain()
    }

    fn final_time(&self) -> FinalTime {
        self.base.final_time()
    }

    fn dynamics(&self, xa: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        self.dynamics_with_params(xa, u, self.base.nominal_params(), t)
    }

    fn running_cost(&self, xa: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64 {
        let x = xa.rows(0, self.base.n_states()).into_owned();
        self.base.running_cost(&x, u, t) + self.running_penalty(xa, t)
    }

    fn terminal_cost(&self, x0: &DVector<f64>, t0: f64, xf: &DVector<f64>, tf: f64) -> f64 {
        let n = self.base.n_states();
        let base = self.base.terminal_cost(
            &x0.rows(0, n).into_owned(),
            t0,
            &xf.rows(0, n).into_owned(),
            tf,
        );
        base + self.terminal_penalty(xf)
    }

    fn initial_state(&self) -> Option<DVector<f64>> {
        self.base.initial_state().map(|x0| self.stack(x0, &self.s0))
    }

    fn n_boundary(&self) -> usize {
        let extra = if self.base_initial_is_free() {
            self.s0.len()
        } else {
            0
        };
        CollocationProblem::n_boundary(&self.base) + extra
    }

    fn boundary_values(
        &self,
        x0: &DVector<f64>,
        t0: f64,
        xf: &DVector<f64>,
        tf: f64,
    ) -> DVector<f64> {
        let n = self.base.n_states();
        let base = CollocationProblem::boundary_values(
            &self.base,
            &x0.rows(0, n).into_owned(),
            t0,
            &xf.rows(0, n).into_owned(),
            tf,
        );
        if !self.base_initial_is_free() {
            return base;
        }
        let mut out = DVector::zeros(base.len() + self.s0.len());
        out.rows_mut(0, base.len()).copy_from(&base);
        out.rows_mut(base.len(), self.s0.len())
            .copy_from(&x0.rows(n, self.s0.len()));
        out
    }

    fn boundary_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let (lo, hi) = CollocationProblem::boundary_bounds(&self.base);
        if !self.base_initial_is_free() {
            return (lo, hi);
        }
        let s = vec_column_major(&self.s0);
        let extend = |b: DVector<f64>| {
            let mut out = DVector::zeros(b.len() + s.len());
            out.rows_mut(0, b.len()).copy_from(&b);
            out.rows_mut(b.len(), s.len()).copy_from(&s);
            out
        };
        (extend(lo), extend(hi))
    }

    fn n_path(&self) -> usize {
        CollocationProblem::n_path(&self.base)
    }

    fn path_values(&self, xa: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        let x = xa.rows(0, self.base.n_states()).into_owned();
        CollocationProblem::path_values(&self.base, &x, u, t)
    }

    fn path_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        CollocationProblem::path_bounds(&self.base)
    }

    fn n_base_states(&self) -> usize {
        self.base.n_states()
    }

    fn n_sensitivity_params(&self) -> usize {
        self.base.n_params()
    }

    fn guess_endpoints(&self) -> (DVector<f64>, DVector<f64>) {
        let (x_start, x_end) = CollocationProblem::guess_endpoints(&self.base);
        (self.stack(&x_start, &self.s0), self.stack(&x_end, &self.s0))
    }
}

/// Integrates `x` and `S` together over `span` under an open-loop control,
/// with the model parameters at `p`. Returns `(x(t1), S(t1))`.
pub fn propagate_sensitivity(
    ocp: &OcpDefinition,
    control: impl Fn(f64) -> DVector<f64>,
    x0: &DVector<f64>,
    s0: &DMatrix<f64>,
    span: (f64, f64),
    p: &DVector<f64>,
    opts: &OdeOptions,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, m) = (ocp.n_states(), ocp.n_params());
    let rhs = |_seg: usize, t: f64, y: &DVector<f64>| {
        let x = y.rows(0, n).into_owned();
        let s = unvec(&y.as_slice()[n..], n, m);
        let u = control(t);
        let xdot = ocp.dynamics(&x, &u, p, t);
        let sdot = ocp.jac_x(&x, &u, p, t) * s + ocp.jac_p(&x, &u, p, t);
        let mut out = DVector::zeros(n + n * m);
        out.rows_mut(0, n).copy_from(&xdot);
        out.rows_mut(n, n * m).copy_from_slice(sdot.as_slice());
        out
    };
    let mut y0 = DVector::zeros(n + n * m);
    y0.rows_mut(0, n).copy_from(x0);
    y0.rows_mut(n, n * m).copy_from_slice(s0.as_slice());
    let sol = integrate_ode(rhs, span.0, &y0, span.1, &[], opts)?;
    let yf = sol.final_state();
    Ok((yf.rows(0, n).into_owned(), unvec(&yf.as_slice()[n..], n, m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::example_problem;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn penalty_scalar_cases() {
        assert_eq!(
            penalty_value(&scalar(0.0), &scalar(1.0), &scalar(5.0), &scalar(4e-4)),
            0.0
        );
        assert_relative_eq!(
            penalty_value(&scalar(2.0), &scalar(1.0), &scalar(5.0), &scalar(4e-4)),
            8e-3,
            epsilon = 1e-17
        );
        assert_relative_eq!(
            penalty_value(
                &scalar(3.0),
                &scalar(1.0),
                &scalar(10.0),
                &scalar(0.04 * 0.04)
            ),
            0.144,
            epsilon = 1e-15
        );
    }

    #[test]
    fn penalty_identity_weights_is_frobenius() {
        let s = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, -1.5]);
        let v = penalty_value(
            &s,
            &DMatrix::identity(2, 2),
            &DMatrix::identity(2, 2),
            &DMatrix::identity(3, 3),
        );
        assert_relative_eq!(v, s.norm_squared(), epsilon = 1e-14);
    }

    #[test]
    fn vec_is_column_major() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(vec_column_major(&s).as_slice(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(unvec(&[1.0, 3.0, 2.0, 4.0], 2, 2), s);
    }

    #[test]
    fn sensitivity_rate_at_rest() {
        let (ocp, w) = example_problem(2.0).unwrap();
        let aug = augment(&ocp, &w.spec(5.0, 0.01), DMatrix::zeros(1, 1)).unwrap();
        let xa = DVector::from_vec(vec![1.5, 0.0]);
        let d = CollocationProblem::dynamics(&aug, &xa, &DVector::zeros(1), 0.0);
        assert_eq!(d[0], -13.5);
        assert_eq!(d[1], -13.5);
    }

    #[test]
    fn zero_weight_reduces_to_base_cost() {
        let (ocp, w) = example_problem(2.0).unwrap();
        let aug = augment(&ocp, &w.spec(0.0, 0.02), DMatrix::zeros(1, 1)).unwrap();
        for &(x, s, u) in &[(1.5, 0.0, 0.0), (0.3, 7.0, -1.0), (1.0, -3.0, 2.0)] {
            let xa = DVector::from_vec(vec![x, s]);
            let uu = DVector::from_element(1, u);
            assert_eq!(
                CollocationProblem::running_cost(&aug, &xa, &uu, 1.0),
                ocp.running_cost(&DVector::from_element(1, x), &uu, 1.0)
            );
            assert_eq!(
                CollocationProblem::terminal_cost(&aug, &xa, 0.0, &xa, 50.0),
                0.0
            );
        }
    }

    #[test]
    fn terminal_penalty_matches_hand_value() {
        let (ocp, w) = example_problem(2.0).unwrap();
        // beta = 10, sigma = q alpha = 0.04 -> P = 0.0016
        let aug = augment(&ocp, &w.spec(10.0, 0.02), DMatrix::zeros(1, 1)).unwrap();
        let xf = DVector::from_vec(vec![1.0, 3.0]);
        assert_relative_eq!(aug.terminal_penalty(&xf), 0.144, epsilon = 1e-15);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (ocp, w) = example_problem(2.0).unwrap();
        assert!(augment(&ocp, &w.spec(1.0, 0.01), DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn augmented_initial_state_carries_s0() {
        let (ocp, w) = example_problem(2.0).unwrap();
        let aug = augment(&ocp, &w.spec(1.0, 0.01), scalar(0.25)).unwrap();
        let x0 = CollocationProblem::initial_state(&aug).unwrap();
        assert_eq!(x0.as_slice(), &[1.5, 0.25]);
        assert_eq!(CollocationProblem::n_states(&aug), 2);
        assert_eq!(CollocationProblem::n_boundary(&aug), 1);
    }
}
