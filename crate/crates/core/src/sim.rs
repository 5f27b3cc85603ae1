//! Truth-plant simulation: an adaptive Dormand-Prince 5(4) integrator with
//! dense output, and the propagation of the model under an interpolated
//! reference control.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ocp::OcpDefinition;
use crate::trajectory::Trajectory;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_steps: 1_000_000,
        }
    }
}

impl OdeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "integration tolerances must be positive".into(),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument(
                "max_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
struct DenseStep {
    t0: f64,
    h: f64,
    r: [DVector<f64>; 5],
}

impl DenseStep {
    fn eval(&self, t: f64) -> DVector<f64> {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        r1 + (r2 + (r3 + (r4 + r5 * th1) * th) * th1) * th
    }
}

/// Output of [`integrate_ode`]: the accepted step grid and a dense
/// interpolant over it.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    steps: Vec<DenseStep>,
}

impl OdeSolution {
    pub fn final_state(&self) -> &DVector<f64> {
        &self.states[self.states.len() - 1]
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    /// Dense output at `t` (within the integrated span).
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        let (a, b) = self.span();
        let (lo, hi) = (a.min(b), a.max(b));
        if t < lo || t > hi {
            return Err(Error::Extrapolation { at: t, lo, hi });
        }
        if let Some(k) = self.times.iter().position(|&s| s == t) {
            return Ok(self.states[k].clone());
        }
        let forward = b >= a;
        let k = if forward {
            self.times.partition_point(|&s| s <= t)
        } else {
            self.times.partition_point(|&s| s >= t)
        };
        Ok(self.steps[k.saturating_sub(1).min(self.steps.len() - 1)].eval(t))
    }
}

fn error_norm(err: &DVector<f64>, y0: &DVector<f64>, y1: &DVector<f64>, opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

/// Hairer's starting-step heuristic.
#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    rhs: &F,
    seg: usize,
    t: f64,
    y: &DVector<f64>,
    f0: &DVector<f64>,
    dir: f64,
    h_max: f64,
    opts: &OdeOptions,
) -> f64
where
    F: Fn(usize, f64, &DVector<f64>) -> DVector<f64>,
{
    let scale = y.map(|v| opts.abs_tol + opts.rel_tol * v.abs());
    let n = y.len().max(1) as f64;
    let norm = |v: &DVector<f64>| (v.component_div(&scale).norm_squared() / n).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(h_max);
    let y1 = y + f0 * (dir * h0);
    let f1 = rhs(seg, t + dir * h0, &y1);
    let d2 = norm(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(h_max)
}

/// Integrates `y' = rhs(seg, t, y)` from `t0` to `t1` (either direction).
///
/// `breakpoints` are absolute times where the right-hand side may be
/// non-smooth; steps end exactly on them and `seg` counts the breakpoints
/// at or before the lower end of the current piece, so a piecewise
/// right-hand side can select its active piece without ambiguity at the
/// interfaces.
pub fn integrate_ode<F>(
    rhs: F,
    t0: f64,
    y0: &DVector<f64>,
    t1: f64,
    breakpoints: &[f64],
    opts: &OdeOptions,
) -> Result<OdeSolution>
where
    F: Fn(usize, f64, &DVector<f64>) -> DVector<f64>,
{
    opts.validate()?;
    let mut sol = OdeSolution {
        times: vec![t0],
        states: vec![y0.clone()],
        steps: Vec::new(),
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();
    let (lo, hi) = (t0.min(t1), t0.max(t1));
    let mut marks: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    if dir < 0.0 {
        marks.reverse();
    }
    marks.push(t1);

    let mut t = t0;
    let mut y = y0.clone();
    let mut h_next: Option<f64> = None;
    let mut n_steps = 0usize;
    for &stop in &marks {
        let piece_lo = t.min(stop);
        let seg = breakpoints.iter().filter(|&&b| b <= piece_lo).count();
        let span = (stop - t).abs();
        let mut k1 = rhs(seg, t, &y);
        let mut h = match h_next {
            Some(h) => h.min(span),
            None => initial_step(&rhs, seg, t, &y, &k1, dir, span, opts),
        };
        loop {
            if n_steps >= opts.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("exceeded {} steps", opts.max_steps),
                });
            }
            let remaining = (stop - t).abs();
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            let hs = dir * h;
            let k2 = rhs(seg, t + C2 * hs, &(&y + &k1 * (hs * A21)));
            let k3 = rhs(seg, t + C3 * hs, &(&y + (&k1 * A31 + &k2 * A32) * hs));
            let k4 = rhs(
                seg,
                t + C4 * hs,
                &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * hs),
            );
            let k5 = rhs(
                seg,
                t + C5 * hs,
                &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * hs),
            );
            let t_new = if last { stop } else { t + hs };
            let k6 = rhs(
                seg,
                if last { stop } else { t + hs },
                &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * hs),
            );
            let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * hs;
            let k7 = rhs(seg, t_new, &y_new);
            let err = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * hs;
            let en = error_norm(&err, &y, &y_new, opts);
            n_steps += 1;
            if !en.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
                h *= MIN_FACTOR;
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::Integration {
                        t,
                        reason: "non-finite state".into(),
                    });
                }
                continue;
            }
            if en <= 1.0 {
                let r2 = &y_new - &y;
                let r3 = &k1 * hs - &r2;
                let r4 = &r2 - &k7 * hs - &r3;
                let r5 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * hs;
                sol.steps.push(DenseStep {
                    t0: t,
                    h: hs,
                    r: [y.clone(), r2, r3, r4, r5],
                });
                t = t_new;
                y = y_new;
                sol.times.push(t);
                sol.states.push(y.clone());
                let factor = if en == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * en.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                let proposed = h * factor;
                if last {
                    h_next = Some(proposed.max(h));
                    break;
                }
                h = proposed;
                k1 = k7;
            } else {
                h *= (SAFETY * en.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                if h < 1e-14 * (1.0 + t.abs()) {
                    return Err(Error::Integration {
                        t,
                        reason: "step size underflow".into(),
                    });
                }
            }
        }
    }
    Ok(sol)
}

/// Simulated truth trajectory over one span.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub terminal: DVector<f64>,
    dense: OdeSolution,
}

impl SimResult {
    pub fn span(&self) -> (f64, f64) {
        self.dense.span()
    }

    /// Dense state at any time in the span.
    pub fn state_at(&self, t: f64) -> Result<DVector<f64>> {
        if t == self.times[self.times.len() - 1] {
            return Ok(self.terminal.clone());
        }
        self.dense.eval(t)
    }
}

/// Reference control at `t`.
pub fn control_at(traj: &Trajectory, t: f64) -> Result<DVector<f64>> {
    traj.control_at(t)
}

/// Propagates `x' = f(x, u_ref(t), p_tilde, t)` over `span`, stepping
/// through the trajectory's interval boundaries.
pub fn integrate(
    ocp: &OcpDefinition,
    traj: &Trajectory,
    x0: &DVector<f64>,
    span: (f64, f64),
    p_tilde: &DVector<f64>,
    opts: &OdeOptions,
) -> Result<SimResult> {
    if x0.len() != ocp.n_states() {
        return Err(Error::DimensionMismatch {
            context: "simulation initial state",
            expected: ocp.n_states(),
            actual: x0.len(),
        });
    }
    if p_tilde.len() != ocp.n_params() {
        return Err(Error::DimensionMismatch {
            context: "simulation parameters",
            expected: ocp.n_params(),
            actual: p_tilde.len(),
        });
    }
    let (lo, hi) = traj.time_span();
    let slack = 1e-9 * (1.0 + hi.abs());
    if span.0 < lo - slack || span.1 > hi + slack || span.1 < span.0 {
        return Err(Error::InvalidArgument(format!(
            "simulation span [{}, {}] is not inside the trajectory span [{lo}, {hi}]",
            span.0, span.1
        )));
    }
    let breaks = traj.breakpoints();
    // The control polynomial can fail only outside its interval, which the
    // span check above rules out; a NaN would surface as an integration error.
    let control = |seg: usize, t: f64| {
        traj.control_in_segment(seg, t)
            .unwrap_or_else(|_| DVector::from_element(traj.n_controls(), f64::NAN))
    };
    let rhs = |seg: usize, t: f64, x: &DVector<f64>| ocp.dynamics(x, &control(seg, t), p_tilde, t);
    let dense = integrate_ode(rhs, span.0, x0, span.1, &breaks, opts)?;
    let controls = dense
        .times
        .iter()
        .map(|&t| traj.control_at(t.clamp(lo, hi)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimResult {
        times: dense.times.clone(),
        states: dense.states.clone(),
        controls,
        terminal: dense.final_state().clone(),
        dense,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn exponential_decay() {
        let sol = integrate_ode(
            |_, _, y| -y,
            0.0,
            &scalar(1.0),
            1.0,
            &[],
            &OdeOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(sol.final_state()[0], (-1.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let sol = integrate_ode(
            |_, _, y| y * 0.0,
            0.0,
            &scalar(0.7),
            3.0,
            &[1.0],
            &OdeOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.final_state()[0], 0.7);
    }

    #[test]
    fn forward_then_backward_returns() {
        let opts = OdeOptions::default();
        let rhs = |_: usize, _: f64, y: &DVector<f64>| DVector::from_vec(vec![y[1], -y[0]]);
        let y0 = DVector::from_vec(vec![1.0, 0.5]);
        let f = integrate_ode(rhs, 0.0, &y0, 5.0, &[], &opts).unwrap();
        let b = integrate_ode(rhs, 5.0, f.final_state(), 0.0, &[], &opts).unwrap();
        assert!((b.final_state() - &y0).amax() < 1e-7);
    }

    #[test]
    fn steps_land_on_breakpoints_with_segment_index() {
        let rhs = |seg: usize, _: f64, _: &DVector<f64>| scalar(seg as f64);
        let sol = integrate_ode(
            rhs,
            0.0,
            &scalar(0.0),
            3.0,
            &[1.0, 2.0],
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(sol.times.contains(&1.0) && sol.times.contains(&2.0));
        assert_relative_eq!(sol.final_state()[0], 0.0 + 1.0 + 2.0, epsilon = 1e-12);
    }

    #[test]
    fn dense_output_is_accurate() {
        let sol = integrate_ode(
            |_, _, y| y.clone(),
            0.0,
            &scalar(1.0),
            2.0,
            &[],
            &OdeOptions::default(),
        )
        .unwrap();
        for &t in &[0.123, 0.9, 1.77] {
            assert_relative_eq!(sol.eval(t).unwrap()[0], f64::exp(t), max_relative = 1e-8);
        }
        assert!(sol.eval(2.5).is_err());
    }

    #[test]
    fn tighter_tolerance_converges() {
        let run = |tol: f64| {
            let o = OdeOptions {
                abs_tol: tol,
                rel_tol: tol,
                ..OdeOptions::default()
            };
            integrate_ode(
                |_, t, y| scalar(-y[0] * y[0] * y[0] + t.sin()),
                0.0,
                &scalar(1.5),
                10.0,
                &[],
                &o,
            )
            .unwrap()
            .final_state()[0]
        };
        assert!((run(1e-8) - run(5e-9)).abs() < 1e-8);
    }

    #[test]
    fn invalid_tolerances_rejected() {
        let o = OdeOptions {
            abs_tol: 0.0,
            ..OdeOptions::default()
        };
        assert!(integrate_ode(|_, _, y| y.clone(), 0.0, &scalar(1.0), 1.0, &[], &o).is_err());
    }
}
