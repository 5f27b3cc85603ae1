//! Equality-constrained QP by the null-space method, and a working-set loop
//! on top of it for two-sided inequality constraints.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Which bound of a constraint is held as an equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Equality,
    Lower,
    Upper,
}

pub(crate) struct QpSolution {
    pub step: DVector<f64>,
    /// Full-length multipliers; zero for constraints outside the working set.
    pub multipliers: DVector<f64>,
    pub working: Vec<Option<Side>>,
}

/// Orthogonal split of `R^n` into the row space of `a` (`y`) and its null
/// space (`z`), with `a = r1^T y^T`.
struct RangeNull {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    r1: DMatrix<f64>,
}

fn range_null(a: &DMatrix<f64>) -> Result<RangeNull> {
    let (w, n) = a.shape();
    if w > n {
        return Err(Error::InvalidArgument(format!(
            "{w} active constraints exceed {n} variables"
        )));
    }
    // Appending the identity makes the Householder Q square without having
    // to reflect zero columns.
    let mut stacked = DMatrix::zeros(n, w + n);
    stacked.columns_mut(0, w).copy_from(&a.transpose());
    stacked.columns_mut(w, n).fill_with_identity();
    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();
    let r1 = r.view((0, 0), (w, w)).into_owned();
    let scale = (0..w).fold(0.0_f64, |m, i| m.max(r1[(i, i)].abs()));
    if (0..w).any(|i| r1[(i, i)].abs() <= 1e-11 * scale.max(1e-300)) {
        return Err(Error::InvalidArgument(
            "active constraint gradients are linearly dependent".into(),
        ));
    }
    Ok(RangeNull {
        y: q.columns(0, w).into_owned(),
        z: q.columns(w, n - w).into_owned(),
        r1,
    })
}

/// Cholesky solve of a symmetric system whose matrix is first pushed into
/// the positive definite cone (eigenvalue reflection with a floor) when
/// the plain factorization fails.
fn solve_convexified(h: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let h = (&h + h.transpose()) * 0.5;
    if let Some(chol) = h.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let eig = h.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let floor = 1e-8 * top.max(1.0);
    let mut inv = DVector::zeros(rhs.len());
    let proj = eig.eigenvectors.transpose() * rhs;
    for i in 0..rhs.len() {
        inv[i] = proj[i] / eig.eigenvalues[i].abs().max(floor);
    }
    let step = &eig.eigenvectors * inv;
    if step.iter().all(|v| v.is_finite()) {
        Ok(step)
    } else {
        Err(Error::InvalidArgument(
            "reduced hessian is not finite".into(),
        ))
    }
}

/// Minimizes `g'p + p'Hp/2` subject to `a p + r = 0`. Returns the step and
/// the multipliers `lambda` with `g + H p + a' lambda = 0`.
pub(crate) fn solve_eqp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    r: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = g.len();
    if a.nrows() == 0 {
        let p = solve_convexified(h.clone(), &(-g))?;
        return Ok((p, DVector::zeros(0)));
    }
    let RangeNull { y, z, r1 } = range_null(a)?;
    let py = r1
        .transpose()
        .solve_lower_triangular(&(-r))
        .ok_or_else(|| Error::InvalidArgument("singular constraint factor".into()))?;
    let mut p = &y * py;
    if z.ncols() > 0 {
        let reduced = z.transpose() * h * &z;
        let rhs = -(z.transpose() * (g + h * &p));
        let pz = solve_convexified(reduced, &rhs)?;
        p += &z * pz;
    }
    debug_assert_eq!(p.len(), n);
    let lambda = r1
        .solve_upper_triangular(&(-(y.transpose() * (g + h * &p))))
        .ok_or_else(|| Error::InvalidArgument("singular constraint factor".into()))?;
    Ok((p, lambda))
}

/// Smallest `d` with `a d = -r`.
pub(crate) fn min_norm_correction(a: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() == 0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    let RangeNull { y, r1, .. } = range_null(a)?;
    let py = r1
        .transpose()
        .solve_lower_triangular(&(-r))
        .ok_or_else(|| Error::InvalidArgument("singular constraint factor".into()))?;
    Ok(y * py)
}

fn bound_tol(b: f64) -> f64 {
    1e-9 * (1.0 + b.abs())
}

/// Initial working set: equalities plus inequalities at or beyond a bound.
pub(crate) fn initial_working_set(
    c: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> Vec<Option<Side>> {
    (0..c.len())
        .map(|i| {
            if lower[i] == upper[i] {
                Some(Side::Equality)
            } else if upper[i].is_finite() && c[i] >= upper[i] - bound_tol(upper[i]) {
                Some(Side::Upper)
            } else if lower[i].is_finite() && c[i] <= lower[i] + bound_tol(lower[i]) {
                Some(Side::Lower)
            } else {
                None
            }
        })
        .collect()
}

fn target(side: Side, lower: f64, upper: f64) -> f64 {
    match side {
        Side::Upper => upper,
        Side::Lower | Side::Equality => lower,
    }
}

/// Rows of `jac` and residuals `c - bound` for the working set.
pub(crate) fn working_system(
    jac: &DMatrix<f64>,
    c: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    working: &[Option<Side>],
) -> (Vec<usize>, DMatrix<f64>, DVector<f64>) {
    let rows: Vec<usize> = (0..working.len())
        .filter(|&i| working[i].is_some())
        .collect();
    let mut a = DMatrix::zeros(rows.len(), jac.ncols());
    let mut r = DVector::zeros(rows.len());
    for (k, &i) in rows.iter().enumerate() {
        a.set_row(k, &jac.row(i));
        r[k] = c[i] - target(working[i].expect("row in working set"), lower[i], upper[i]);
    }
    (rows, a, r)
}

/// Solves the SQP subproblem
/// `min g'p + p'Hp/2  s.t.  lower <= c + J p <= upper`
/// by repeatedly solving equality QPs on a working set, dropping
/// constraints whose multipliers have the wrong sign and adding the most
/// violated linearized inequality.
pub(crate) fn solve_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    jac: &DMatrix<f64>,
    c: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    warm_working: Option<&[Option<Side>]>,
) -> Result<QpSolution> {
    let m = c.len();
    let mut working: Vec<Option<Side>> = match warm_working {
        Some(w) if w.len() == m => w.to_vec(),
        _ => initial_working_set(c, lower, upper),
    };
    let mut banned = vec![false; m];
    let max_rounds = 20 + 4 * m;
    for _ in 0..max_rounds {
        let (rows, a, r) = working_system(jac, c, lower, upper, &working);
        let (p, lambda_w) = match solve_eqp(h, g, &a, &r) {
            Ok(sol) => sol,
            Err(e) => {
                // Drop the most recently trusted inequality that makes the
                // active gradients dependent.
                match rows
                    .iter()
                    .rev()
                    .find(|&&i| working[i] != Some(Side::Equality))
                {
                    Some(&i) => {
                        working[i] = None;
                        banned[i] = true;
                        continue;
                    }
                    None => return Err(e),
                }
            }
        };
        let mut multipliers = DVector::zeros(m);
        for (k, &i) in rows.iter().enumerate() {
            multipliers[i] = lambda_w[k];
        }

        // Wrong-signed multiplier: the constraint wants to leave its bound.
        let scale = 1e-10 * (1.0 + lambda_w.amax());
        let worst_sign = rows
            .iter()
            .filter_map(|&i| {
                let wrong = match working[i] {
                    Some(Side::Upper) => -multipliers[i],
                    Some(Side::Lower) => multipliers[i],
                    _ => return None,
                };
                (wrong > scale).then_some((i, wrong))
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, _)) = worst_sign {
            working[i] = None;
            continue;
        }

        let lin = c + jac * &p;
        let worst_violation = (0..m)
            .filter(|&i| working[i].is_none() && !banned[i])
            .filter_map(|i| {
                let over = lin[i] - upper[i];
                let under = lower[i] - lin[i];
                if over > bound_tol(upper[i]) {
                    Some((i, over, Side::Upper))
                } else if under > bound_tol(lower[i]) {
                    Some((i, under, Side::Lower))
                } else {
                    None
                }
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match worst_violation {
            Some((i, _, side)) => working[i] = Some(side),
            None => {
                return Ok(QpSolution {
                    step: p,
                    multipliers,
                    working,
                })
            }
        }
    }
    Err(Error::InvalidArgument(
        "QP working-set iteration limit reached".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eqp_matches_hand_solved_kkt() {
        // min 1/2 (p0^2 + p1^2) s.t. p0 + p1 = 1 -> p = (1/2, 1/2), lambda = -1/2.
        let h = DMatrix::identity(2, 2);
        let g = DVector::zeros(2);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let r = DVector::from_element(1, -1.0);
        let (p, l) = solve_eqp(&h, &g, &a, &r).unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(p[1], 0.5, epsilon = 1e-14);
        assert_relative_eq!(l[0], -0.5, epsilon = 1e-14);
    }

    #[test]
    fn indefinite_reduced_hessian_is_convexified() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 2.0]));
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let a = DMatrix::zeros(0, 2);
        let (p, _) = solve_eqp(&h, &g, &a, &DVector::zeros(0)).unwrap();
        // descent direction for the model
        assert!(g.dot(&p) < 0.0);
    }

    #[test]
    fn inequality_becomes_active() {
        // min 1/2 |p - (2, 0)|^2 s.t. p0 <= 1
        let h = DMatrix::identity(2, 2);
        let g = DVector::from_vec(vec![-2.0, 0.0]);
        let jac = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let c = DVector::zeros(1);
        let lo = DVector::from_element(1, f64::NEG_INFINITY);
        let hi = DVector::from_element(1, 1.0);
        let sol = solve_qp(&h, &g, &jac, &c, &lo, &hi, None).unwrap();
        assert_relative_eq!(sol.step[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(sol.multipliers[0], 1.0, epsilon = 1e-12);
        assert_eq!(sol.working[0], Some(Side::Upper));
    }

    #[test]
    fn inactive_inequality_is_released() {
        // starts on the bound p0 >= 0 but the minimizer is interior at p0 = 1
        let h = DMatrix::identity(1, 1);
        let g = DVector::from_element(1, -1.0);
        let jac = DMatrix::identity(1, 1);
        let c = DVector::zeros(1);
        let lo = DVector::zeros(1);
        let hi = DVector::from_element(1, f64::INFINITY);
        let sol = solve_qp(&h, &g, &jac, &c, &lo, &hi, None).unwrap();
        assert_relative_eq!(sol.step[0], 1.0, epsilon = 1e-12);
        assert_eq!(sol.multipliers[0], 0.0);
    }

    #[test]
    fn min_norm_correction_projects() {
        let a = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let d = min_norm_correction(&a, &DVector::from_element(1, -5.0)).unwrap();
        assert_relative_eq!(d[0], 0.6, epsilon = 1e-14);
        assert_relative_eq!(d[1], 0.8, epsilon = 1e-14);
    }
}
