#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use radau_guidance::config::CampaignConfig;
use radau_guidance::guidance::MissionSetup;
use radau_guidance::nlp::NlpProblem;

pub const ALPHA: f64 = 2.0;

/// Default configuration at weights `(beta, q)`.
pub fn setup(beta: f64, q: f64) -> MissionSetup {
    CampaignConfig::default()
        .mission_setup_with(beta, q)
        .unwrap()
}

pub fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

/// `min 1/2 x' diag(1, 2, 3) x - x1  s.t.  x1 + x2 + x3 = 2`.
/// Stationarity `H x + g + lambda a = 0` with `a = (1, 1, 1)` gives
/// `x = (1 - l, -l/2, -l/3)`; the constraint then forces `l = -6/11`,
/// so `x = (17/11, 3/11, 2/11)`.
pub struct HandQp;

pub const HAND_QP_X: [f64; 3] = [17.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
pub const HAND_QP_LAMBDA: f64 = -6.0 / 11.0;

impl NlpProblem for HandQp {
    fn n_variables(&self) -> usize {
        3
    }
    fn n_constraints(&self) -> usize {
        1
    }
    fn constraint_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        (scalar(2.0), scalar(2.0))
    }
    fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * (z[0] * z[0] + 2.0 * z[1] * z[1] + 3.0 * z[2] * z[2]) - z[0]
    }
    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        scalar(z.sum())
    }
    fn objective_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![z[0] - 1.0, 2.0 * z[1], 3.0 * z[2]])
    }
    fn constraint_jacobian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 3, 1.0)
    }
    fn lagrangian_hessian(&self, _z: &DVector<f64>, _l: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 2.0, 3.0,
        ])))
    }
}

/// Monomial `t^k` and its derivative at `t`.
pub fn monomial(k: usize, t: f64) -> (f64, f64) {
    let v = t.powi(k as i32);
    let d = if k == 0 {
        0.0
    } else {
        k as f64 * t.powi(k as i32 - 1)
    };
    (v, d)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
