//! Dense sequential quadratic programming.
//!
//! Problems have the form `min f(z)` subject to `lower <= c(z) <= upper`,
//! where rows with `lower == upper` are equalities. Multipliers follow the
//! convention `grad f + J' lambda = 0`, so an active upper bound carries
//! `lambda >= 0` and an active lower bound `lambda <= 0`.

mod qp;

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use qp::{min_norm_correction, solve_qp, working_system, Side};

/// A smooth nonlinear program with dense derivatives.
pub trait NlpProblem {
    fn n_variables(&self) -> usize;
    fn n_constraints(&self) -> usize;
    /// `(lower, upper)`; infinite entries are allowed for one-sided rows.
    fn constraint_bounds(&self) -> (DVector<f64>, DVector<f64>);
    fn objective(&self, z: &DVector<f64>) -> f64;
    fn constraints(&self, z: &DVector<f64>) -> DVector<f64>;

    fn objective_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        forward_difference_gradient(|v| self.objective(v), z)
    }

    fn constraint_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        forward_difference_jacobian(|v| self.constraints(v), z, self.n_constraints())
    }

    /// Hessian of `f + lambda' c`. `None` makes the solver fall back to a
    /// quasi-Newton approximation.
    fn lagrangian_hessian(
        &self,
        _z: &DVector<f64>,
        _lambda: &DVector<f64>,
    ) -> Option<DMatrix<f64>> {
        None
    }
}

fn forward_step(v: f64) -> f64 {
    1e-7 * (1.0 + v.abs())
}

pub fn forward_difference_gradient(
    f: impl Fn(&DVector<f64>) -> f64,
    z: &DVector<f64>,
) -> DVector<f64> {
    let f0 = f(z);
    let mut probe = z.clone();
    DVector::from_iterator(
        z.len(),
        (0..z.len()).map(|j| {
            let h = forward_step(z[j]);
            probe[j] = z[j] + h;
            let d = (f(&probe) - f0) / h;
            probe[j] = z[j];
            d
        }),
    )
}

pub fn forward_difference_jacobian(
    c: impl Fn(&DVector<f64>) -> DVector<f64>,
    z: &DVector<f64>,
    rows: usize,
) -> DMatrix<f64> {
    let c0 = c(z);
    let mut jac = DMatrix::zeros(rows, z.len());
    let mut probe = z.clone();
    for j in 0..z.len() {
        let h = forward_step(z[j]);
        probe[j] = z[j] + h;
        jac.set_column(j, &((c(&probe) - &c0) / h));
        probe[j] = z[j];
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// The problem's Lagrangian Hessian when available, else quasi-Newton.
    Exact,
    /// Damped BFGS started from the identity.
    QuasiNewton,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    pub hessian: HessianMode,
    /// Armijo constant for the l1 merit function.
    pub sufficient_decrease: f64,
    /// Backtracking factor.
    pub contraction: f64,
    pub min_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-8,
            max_iterations: 200,
            hessian: HessianMode::Exact,
            sufficient_decrease: 1e-4,
            contraction: 0.5,
            min_step: 1e-10,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidArgument(
                "kkt tolerance must be positive".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(Error::InvalidArgument(
                "contraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 0.5) {
            return Err(Error::InvalidArgument(
                "sufficient decrease constant must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchFailure,
    /// The QP subproblem could not be solved (inconsistent linearization).
    SubproblemFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::LineSearchFailure => "line-search-failure",
            SolveStatus::SubproblemFailure => "subproblem-failure",
        })
    }
}

/// One accepted SQP step.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub merit_penalty: f64,
    pub merit_before: f64,
    pub merit_after: f64,
    pub step_length: f64,
    pub second_order_correction: bool,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub x: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub trace: Vec<IterationRecord>,
}

impl NlpSolution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// Converts a non-converged outcome into an error.
    pub fn into_converged(self) -> Result<Self> {
        if self.converged() {
            Ok(self)
        } else {
            Err(Error::SolverFailure {
                status: self.status.to_string(),
                iterations: self.iterations,
                kkt_residual: self.kkt_residual,
            })
        }
    }
}

fn violation(c: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        c.len(),
        (0..c.len()).map(|i| (lower[i] - c[i]).max(c[i] - upper[i]).max(0.0)),
    )
}

/// Largest of the stationarity, feasibility and complementarity violations.
fn kkt_measure(
    g: &DVector<f64>,
    jac: &DMatrix<f64>,
    c: &DVector<f64>,
    lambda: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> f64 {
    let stationarity = (g + jac.transpose() * lambda).amax();
    let feasibility = violation(c, lower, upper).amax();
    let mut complementarity = 0.0_f64;
    for i in 0..c.len() {
        if lower[i] == upper[i] {
            continue;
        }
        let l = lambda[i];
        let gap = if l > 0.0 {
            upper[i] - c[i]
        } else if l < 0.0 {
            c[i] - lower[i]
        } else {
            continue;
        };
        // an infinite gap means the multiplier sits on a bound that does not exist
        let term = if gap.is_finite() {
            l.abs() * gap.max(0.0)
        } else {
            l.abs()
        };
        complementarity = complementarity.max(term);
    }
    stationarity.max(feasibility).max(complementarity)
}

/// First-order optimality residual of `nlp` at `(z, lambda)`.
pub fn kkt_residual<P: NlpProblem + ?Sized>(
    nlp: &P,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
) -> f64 {
    let (lower, upper) = nlp.constraint_bounds();
    kkt_measure(
        &nlp.objective_gradient(z),
        &nlp.constraint_jacobian(z),
        &nlp.constraints(z),
        lambda,
        &lower,
        &upper,
    )
}

/// Least-squares multipliers on the constraints that are active at `z`,
/// sign-corrected for inequalities.
fn estimate_multipliers(
    g: &DVector<f64>,
    jac: &DMatrix<f64>,
    c: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> DVector<f64> {
    let m = c.len();
    let working = qp::initial_working_set(c, lower, upper);
    let (rows, a, _) = working_system(jac, c, lower, upper, &working);
    let mut lambda = DVector::zeros(m);
    if rows.is_empty() {
        return lambda;
    }
    // min |g + a' l|  <=>  a a' l = -a g
    let normal = &a * a.transpose();
    let rhs = -(&a * g);
    let Some(sol) = normal.lu().solve(&rhs) else {
        return lambda;
    };
    for (k, &i) in rows.iter().enumerate() {
        let v = sol[k];
        lambda[i] = match working[i] {
            Some(Side::Upper) => v.max(0.0),
            Some(Side::Lower) => v.min(0.0),
            _ => v,
        };
    }
    if lambda.iter().all(|v| v.is_finite()) {
        lambda
    } else {
        DVector::zeros(m)
    }
}

fn damped_bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 1e-16 * s.norm_squared().max(1e-300)) {
        return;
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs {
        1.0
    } else {
        0.8 * sbs / (sbs - sy)
    };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    if sr <= 0.0 {
        return;
    }
    *b -= &bs * bs.transpose() / sbs;
    *b += &r * r.transpose() / sr;
}

struct Point {
    z: DVector<f64>,
    f: f64,
    g: DVector<f64>,
    c: DVector<f64>,
    jac: DMatrix<f64>,
}

impl Point {
    fn at<P: NlpProblem + ?Sized>(nlp: &P, z: DVector<f64>) -> Self {
        Self {
            f: nlp.objective(&z),
            g: nlp.objective_gradient(&z),
            c: nlp.constraints(&z),
            jac: nlp.constraint_jacobian(&z),
            z,
        }
    }
}

/// Runs SQP from `guess`. Non-convergence is reported through the status
/// of the returned solution, which carries the last accepted iterate.
pub fn solve<P: NlpProblem + ?Sized>(
    nlp: &P,
    guess: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<NlpSolution> {
    opts.validate()?;
    let n = nlp.n_variables();
    let m = nlp.n_constraints();
    if guess.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial guess",
            expected: n,
            actual: guess.len(),
        });
    }
    let (lower, upper) = nlp.constraint_bounds();
    if lower.len() != m || upper.len() != m {
        return Err(Error::DimensionMismatch {
            context: "constraint bounds",
            expected: m,
            actual: lower.len(),
        });
    }

    let mut pt = Point::at(nlp, guess.clone());
    let mut lambda = estimate_multipliers(&pt.g, &pt.jac, &pt.c, &lower, &upper);
    let mut quasi_newton = DMatrix::identity(n, n);
    let mut penalty = 0.0_f64;
    let mut working: Option<Vec<Option<Side>>> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;

    let finish =
        |pt: Point, lambda: DVector<f64>, kkt: f64, iterations, status, trace| NlpSolution {
            constraint_violation: violation(&pt.c, &lower, &upper).amax(),
            objective: pt.f,
            x: pt.z,
            multipliers: lambda,
            kkt_residual: kkt,
            iterations,
            status,
            trace,
        };

    loop {
        let kkt = kkt_measure(&pt.g, &pt.jac, &pt.c, &lambda, &lower, &upper);
        if !kkt.is_finite() {
            return Ok(finish(
                pt,
                lambda,
                kkt,
                iterations,
                SolveStatus::LineSearchFailure,
                trace,
            ));
        }
        if kkt <= opts.kkt_tolerance {
            return Ok(finish(
                pt,
                lambda,
                kkt,
                iterations,
                SolveStatus::Converged,
                trace,
            ));
        }
        if iterations >= opts.max_iterations {
            return Ok(finish(
                pt,
                lambda,
                kkt,
                iterations,
                SolveStatus::MaxIterations,
                trace,
            ));
        }

        let exact = match opts.hessian {
            HessianMode::Exact => nlp.lagrangian_hessian(&pt.z, &lambda),
            HessianMode::QuasiNewton => None,
        };
        let using_exact = exact.is_some();
        let hessian = exact.unwrap_or_else(|| quasi_newton.clone());

        let sub = match solve_qp(
            &hessian,
            &pt.g,
            &pt.jac,
            &pt.c,
            &lower,
            &upper,
            working.as_deref(),
        ) {
            Ok(s) => s,
            Err(_) => {
                return Ok(finish(
                    pt,
                    lambda,
                    kkt,
                    iterations,
                    SolveStatus::SubproblemFailure,
                    trace,
                ));
            }
        };
        let p = sub.step;

        let needed = sub.multipliers.amax();
        if penalty < needed * 1.05 + 1e-8 {
            penalty = 2.0 * needed + 1e-6;
        }
        let merit = |f: f64, c: &DVector<f64>| f + penalty * violation(c, &lower, &upper).sum();
        let merit0 = merit(pt.f, &pt.c);
        let slope = pt.g.dot(&p) - penalty * violation(&pt.c, &lower, &upper).sum();

        let mut alpha = 1.0;
        let mut tried_soc = false;
        let accepted = loop {
            let trial = &pt.z + &p * alpha;
            let (ft, ct) = (nlp.objective(&trial), nlp.constraints(&trial));
            let mt = merit(ft, &ct);
            let bound = merit0 + opts.sufficient_decrease * alpha * slope.min(0.0);
            if mt.is_finite() && mt <= bound {
                break Some((trial, mt, false));
            }
            if alpha == 1.0 && !tried_soc && m > 0 && mt.is_finite() {
                tried_soc = true;
                let (_, a, r) = working_system(&pt.jac, &ct, &lower, &upper, &sub.working);
                if let Ok(d) = min_norm_correction(&a, &r) {
                    let corrected = &trial + d;
                    let mc = merit(nlp.objective(&corrected), &nlp.constraints(&corrected));
                    if mc.is_finite() && mc <= bound {
                        break Some((corrected, mc, true));
                    }
                }
            }
            alpha *= opts.contraction;
            if alpha < opts.min_step {
                break None;
            }
        };
        let Some((z_next, merit_after, soc)) = accepted else {
            return Ok(finish(
                pt,
                lambda,
                kkt,
                iterations,
                SolveStatus::LineSearchFailure,
                trace,
            ));
        };

        let lambda_next = &lambda + (&sub.multipliers - &lambda) * alpha;
        let next = Point::at(nlp, z_next);
        if !using_exact {
            let s = &next.z - &pt.z;
            let y = (&next.g + next.jac.transpose() * &lambda_next)
                - (&pt.g + pt.jac.transpose() * &lambda_next);
            damped_bfgs_update(&mut quasi_newton, &s, &y);
        }
        iterations += 1;
        trace.push(IterationRecord {
            merit_penalty: penalty,
            merit_before: merit0,
            merit_after,
            step_length: alpha,
            second_order_correction: soc,
            kkt_residual: kkt,
        });
        working = Some(sub.working);
        lambda = lambda_next;
        pt = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// min x^2 s.t. x = 3
    struct Pinned;

    impl NlpProblem for Pinned {
        fn n_variables(&self) -> usize {
            1
        }
        fn n_constraints(&self) -> usize {
            1
        }
        fn constraint_bounds(&self) -> (DVector<f64>, DVector<f64>) {
            (DVector::from_element(1, 3.0), DVector::from_element(1, 3.0))
        }
        fn objective(&self, z: &DVector<f64>) -> f64 {
            z[0] * z[0]
        }
        fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
            z.clone()
        }
    }

    #[test]
    fn pinned_scalar() {
        let sol = solve(
            &Pinned,
            &DVector::from_element(1, 0.0),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(sol.converged());
        assert_relative_eq!(sol.x[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(sol.multipliers[0], -6.0, epsilon = 1e-5);
    }

    #[test]
    fn exact_kkt_point_has_small_residual() {
        let z = DVector::from_element(1, 3.0);
        let l = DVector::from_element(1, -6.0);
        // forward differences of x^2 carry an O(h) bias of ~3e-7
        assert!(kkt_residual(&Pinned, &z, &l) < 1e-6);
        let bad = DVector::from_element(1, 1.0);
        assert!(kkt_residual(&Pinned, &bad, &DVector::zeros(1)) > 0.0);
    }

    #[test]
    fn wrong_guess_length() {
        assert!(solve(&Pinned, &DVector::zeros(2), &SolverOptions::default()).is_err());
    }

    #[test]
    fn options_validation() {
        let o = SolverOptions {
            kkt_tolerance: 0.0,
            ..SolverOptions::default()
        };
        assert!(o.validate().is_err());
        let o = SolverOptions {
            max_iterations: 0,
            ..SolverOptions::default()
        };
        assert!(o.validate().is_err());
    }

    #[test]
    fn bfgs_update_keeps_positive_definite() {
        let mut b = DMatrix::identity(2, 2);
        let s = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![-1.0, 0.5]);
        damped_bfgs_update(&mut b, &s, &y);
        assert!(b.clone().cholesky().is_some());
    }
}
