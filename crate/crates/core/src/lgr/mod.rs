//! Legendre-Gauss-Radau nodes, weights and differentiation matrices.
//!
//! The `n` collocation nodes of a Radau interval are `-1` together with the
//! `n - 1` interior roots of `P_{n-1} + P_n`. The state is approximated by a
//! Lagrange polynomial through those nodes plus the noncollocated end point
//! `+1`, so the differentiation matrix is `n x (n + 1)`.

mod interpolant;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

pub use interpolant::Interpolant;

use crate::error::{Error, Result};

const MAX_NEWTON_ITERATIONS: usize = 100;

/// Evaluates the Legendre polynomial `P_n` and its derivative at `tau`
/// using the three-term recurrence.
pub fn legendre_eval(n: usize, tau: f64) -> (f64, f64) {
    let (_, p, _, dp) = legendre_pair(n, tau);
    (p, dp)
}

/// Returns `(P_{n-1}, P_n, P'_{n-1}, P'_n)`; `P_{-1}` is taken as zero.
fn legendre_pair(n: usize, tau: f64) -> (f64, f64, f64, f64) {
    if n == 0 {
        return (0.0, 1.0, 0.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, tau);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * tau * p - kf * p_prev) / (kf + 1.0);
        let dp_next = (kf + 1.0) * p + tau * dp;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p_prev, p, dp_prev, dp)
}

/// `P_{n-1}(tau) + P_n(tau)` and its derivative.
fn radau_polynomial(n: usize, tau: f64) -> (f64, f64) {
    let (p_prev, p, dp_prev, dp) = legendre_pair(n, tau);
    (p_prev + p, dp_prev + dp)
}

/// Computes the `n` Legendre-Gauss-Radau nodes on `[-1, 1)`.
///
/// Interior nodes are found by Newton iteration with Maehly deflation,
/// started from the Chebyshev-Gauss-Radau points which interlace the
/// Legendre ones closely enough to land in the right basin.
pub fn lgr_nodes(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "a Radau interval needs at least one collocation node".into(),
        ));
    }
    let mut nodes = Vec::with_capacity(n);
    nodes.push(-1.0);
    let denom = (2 * n - 1) as f64;
    for j in 1..n {
        let mut tau = -(2.0 * PI * j as f64 / denom).cos();
        let mut converged = false;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let (q, dq) = radau_polynomial(n, tau);
            let deflation: f64 = nodes.iter().map(|&r| 1.0 / (tau - r)).sum();
            let step = q / (dq - q * deflation);
            tau -= step;
            if step.abs() <= 4.0 * f64::EPSILON * (1.0 + tau.abs()) {
                converged = true;
                break;
            }
        }
        let (q, dq) = radau_polynomial(n, tau);
        if !converged || q.abs() > 1e-14 * dq.abs().max(1.0) {
            return Err(Error::RootFinding { n });
        }
        nodes.push(tau);
    }
    let ordered = nodes.windows(2).all(|w| w[0] < w[1]);
    if !ordered || nodes[n - 1] >= 1.0 {
        return Err(Error::RootFinding { n });
    }
    Ok(nodes)
}

/// Radau quadrature weights for nodes produced by [`lgr_nodes`].
pub fn lgr_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let n2 = (n * n) as f64;
    nodes
        .iter()
        .enumerate()
        .map(|(i, &tau)| {
            if i == 0 {
                2.0 / n2
            } else {
                let (p_prev, _, _, _) = legendre_pair(n, tau);
                (1.0 - tau) / (n2 * p_prev * p_prev)
            }
        })
        .collect()
}

/// Barycentric weights `1 / prod_{k != j} (x_j - x_k)`, rescaled so the
/// largest magnitude is one (the interpolation formulas are invariant to a
/// common factor).
pub fn barycentric_weights(points: &[f64]) -> Result<Vec<f64>> {
    let mut weights = Vec::with_capacity(points.len());
    for (j, &xj) in points.iter().enumerate() {
        let mut prod = 1.0;
        for (k, &xk) in points.iter().enumerate() {
            if k != j {
                let diff = xj - xk;
                if diff == 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate support point {xj} at positions {k} and {j}"
                    )));
                }
                prod *= diff;
            }
        }
        weights.push(1.0 / prod);
    }
    let scale = weights.iter().fold(0.0_f64, |m, w| m.max(w.abs()));
    if scale > 0.0 && scale.is_finite() {
        weights.iter_mut().for_each(|w| *w /= scale);
    }
    Ok(weights)
}

/// Radau differentiation matrix: `D[i][j] = l_j'(nodes[i])` where `l_j` are
/// the Lagrange polynomials through `nodes` followed by `noncollocated`.
pub fn differentiation_matrix(nodes: &[f64], noncollocated: f64) -> Result<DMatrix<f64>> {
    let n = nodes.len();
    let mut support = nodes.to_vec();
    support.push(noncollocated);
    let lambda = barycentric_weights(&support)?;
    let mut d = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..=n {
            if i != j {
                let v = (lambda[j] / lambda[i]) / (support[i] - support[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    Ok(d)
}

/// Nodes, weights and differentiation matrix of one Radau interval on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct LgrBasisSet {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `n x (n + 1)`; the last column belongs to the noncollocated point `+1`.
    pub diff_matrix: DMatrix<f64>,
}

impl LgrBasisSet {
    pub fn new(n: usize) -> Result<Self> {
        let nodes = lgr_nodes(n)?;
        let weights = lgr_weights(&nodes);
        let diff_matrix = differentiation_matrix(&nodes, 1.0)?;
        Ok(Self {
            nodes,
            weights,
            diff_matrix,
        })
    }

    pub fn n_collocation(&self) -> usize {
        self.nodes.len()
    }

    pub fn noncollocated_node(&self) -> f64 {
        1.0
    }

    /// Collocation nodes followed by `+1`.
    pub fn support_points(&self) -> Vec<f64> {
        let mut s = self.nodes.clone();
        s.push(1.0);
        s
    }
}

static BASIS_CACHE: OnceLock<Mutex<HashMap<usize, Arc<LgrBasisSet>>>> = OnceLock::new();

/// Shared, lazily computed basis set for `n` collocation points.
pub fn lgr_basis(n: usize) -> Result<Arc<LgrBasisSet>> {
    let cache = BASIS_CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().expect("basis cache poisoned").get(&n) {
        return Ok(Arc::clone(b));
    }
    let fresh = Arc::new(LgrBasisSet::new(n)?);
    let mut guard = cache.lock().expect("basis cache poisoned");
    Ok(Arc::clone(guard.entry(n).or_insert(fresh)))
}
