mod common;

use common::{scalar, setup, ALPHA};
use nalgebra::{DMatrix, DVector};
use radau_guidance::guidance::solve_reference;
use radau_guidance::ocp::example_problem;
use radau_guidance::sensitivity::propagate_sensitivity;
use radau_guidance::sim::{integrate, OdeOptions};

const DELTA: f64 = 1e-5;

fn control(t: f64) -> DVector<f64> {
    scalar(0.3 + 0.2 * (0.3 * t).sin())
}

fn terminal_state(alpha: f64, span: (f64, f64)) -> f64 {
    let (ocp, _) = example_problem(ALPHA).unwrap();
    let (x, _) = propagate_sensitivity(
        &ocp,
        control,
        &scalar(1.5),
        &DMatrix::zeros(1, 1),
        span,
        &scalar(alpha),
        &OdeOptions::default(),
    )
    .unwrap();
    x[0]
}

#[test]
fn propagated_sensitivity_matches_central_differences() {
    let (ocp, _) = example_problem(ALPHA).unwrap();
    for span in [(0.0, 1.0), (0.0, 5.0), (0.0, 50.0)] {
        let (_, s) = propagate_sensitivity(
            &ocp,
            control,
            &scalar(1.5),
            &DMatrix::zeros(1, 1),
            span,
            &scalar(ALPHA),
            &OdeOptions::default(),
        )
        .unwrap();
        let fd = (terminal_state(ALPHA + DELTA, span) - terminal_state(ALPHA - DELTA, span))
            / (2.0 * DELTA);
        let rel = (s[(0, 0)] - fd).abs() / fd.abs();
        assert!(rel < 1e-4, "span {span:?}: S = {} vs {fd}", s[(0, 0)]);
    }
}

#[test]
fn solved_sensitivity_matches_central_differences() {
    let st = setup(5.0, 0.01);
    let reference = solve_reference(&st, true).unwrap();
    let traj = reference.trajectory();
    let s_tf = traj.sensitivity_at(50.0).unwrap().unwrap()[(0, 0)];
    let x_tf = |a: f64| {
        integrate(
            &st.ocp,
            traj,
            &scalar(1.5),
            (0.0, 50.0),
            &scalar(a),
            &st.ode,
        )
        .unwrap()
        .terminal[0]
    };
    let fd = (x_tf(ALPHA + DELTA) - x_tf(ALPHA - DELTA)) / (2.0 * DELTA);
    assert!((s_tf - fd).abs() / fd.abs() < 1e-4, "S = {s_tf} vs {fd}");
}

#[test]
fn zero_weight_desensitized_solve_equals_plain_solve() {
    let st = setup(0.0, 0.01);
    let plain = solve_reference(&st, false).unwrap();
    let desens = solve_reference(&st, true).unwrap();
    for i in 0..=200 {
        let t = 0.25 * i as f64;
        let a = plain.trajectory().state_at(t).unwrap()[0];
        let b = desens.trajectory().state_at(t).unwrap()[0];
        assert!((a - b).abs() < 1e-8, "x at {t}");
        let a = plain.trajectory().control_at(t).unwrap()[0];
        let b = desens.trajectory().control_at(t).unwrap()[0];
        assert!((a - b).abs() < 1e-8, "u at {t}");
    }
    assert!((plain.base_objective - desens.base_objective).abs() < 1e-10);
}

#[test]
fn penalty_costs_base_objective() {
    let j0 = solve_reference(&setup(0.0, 0.01), true)
        .unwrap()
        .base_objective;
    let j10 = solve_reference(&setup(10.0, 0.01), true)
        .unwrap()
        .base_objective;
    assert!(j10 >= j0, "{j10} < {j0}");
}

#[test]
fn heavier_penalty_lowers_terminal_sensitivity() {
    let s_of = |beta: f64| {
        let r = solve_reference(&setup(beta, 0.02), true).unwrap();
        r.trajectory().sensitivity_at(50.0).unwrap().unwrap()[(0, 0)].abs()
    };
    let (s0, s_big) = (s_of(0.0), s_of(1e4));
    assert!(s_big < s0, "{s_big} >= {s0}");
}
