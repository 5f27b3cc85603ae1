//! Multiple-interval Radau transcription of a [`CollocationProblem`].
//!
//! Decision layout: the state at every support point (interfaces shared, so
//! `sum N_k + 1` points), then the control at every collocation point, then
//! `t_f` when it is free. Constraint layout: the defects of every collocation
//! point, the fixed initial state (if any), the boundary function, then the
//! path constraints at every collocation point.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lgr::{lgr_basis, Interpolant, LgrBasisSet};
use crate::nlp::{self, NlpProblem, NlpSolution, SolverOptions};
use crate::ocp::{FinalTime, OcpDefinition};
use crate::problem::CollocationProblem;
use crate::trajectory::{Segment, Trajectory};

/// Affine map from `tau in [-1, 1]` to `t in [t0, tf]`.
pub fn map_tau_to_time(tau: f64, t0: f64, tf: f64) -> f64 {
    0.5 * (tf - t0) * tau + 0.5 * (tf + t0)
}

/// Mesh intervals on `[-1, 1]` with one Radau basis per interval.
#[derive(Debug, Clone)]
pub struct Mesh {
    fractions: Vec<f64>,
    orders: Vec<usize>,
    t0: f64,
    tf: f64,
    bases: Vec<Arc<LgrBasisSet>>,
}

impl Mesh {
    /// `fractions` are the interval end points `-1 = T_0 < ... < T_K = 1`.
    pub fn new(t0: f64, tf: f64, fractions: Vec<f64>, orders: Vec<usize>) -> Result<Self> {
        if !(t0 < tf) {
            return Err(Error::InvalidArgument(format!(
                "mesh needs t0 < tf, got [{t0}, {tf}]"
            )));
        }
        if fractions.len() < 2 {
            return Err(Error::InvalidArgument(
                "mesh needs at least one interval".into(),
            ));
        }
        if fractions[0] != -1.0 || fractions[fractions.len() - 1] != 1.0 {
            return Err(Error::InvalidArgument(
                "mesh fractions must run from -1 to 1".into(),
            ));
        }
        if fractions.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "mesh fractions must be strictly increasing".into(),
            ));
        }
        if orders.len() != fractions.len() - 1 {
            return Err(Error::DimensionMismatch {
                context: "mesh orders",
                expected: fractions.len() - 1,
                actual: orders.len(),
            });
        }
        if orders.contains(&0) {
            return Err(Error::InvalidArgument(
                "collocation counts must be at least 1".into(),
            ));
        }
        let bases = orders
            .iter()
            .map(|&n| lgr_basis(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            fractions,
            orders,
            t0,
            tf,
            bases,
        })
    }

    pub fn uniform(t0: f64, tf: f64, k: usize, n: usize) -> Result<Self> {
        build_mesh(t0, tf, k, &[n])
    }

    /// Interval widths that grow geometrically by `ratio` from both ends
    /// toward the middle; `ratio = 1` is uniform.
    pub fn graded(t0: f64, tf: f64, k: usize, orders: &[usize], ratio: f64) -> Result<Self> {
        if !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grading ratio must be >= 1, got {ratio}"
            )));
        }
        let uniform = build_mesh(t0, tf, k, orders)?;
        let widths: Vec<f64> = (0..k)
            .map(|i| ratio.powi(i.min(k - 1 - i) as i32))
            .collect();
        let total: f64 = widths.iter().sum();
        let mut fractions = Vec::with_capacity(k + 1);
        fractions.push(-1.0);
        let mut acc = 0.0;
        for w in &widths[..k - 1] {
            acc += w;
            fractions.push(-1.0 + 2.0 * acc / total);
        }
        fractions.push(1.0);
        Self::new(t0, tf, fractions, uniform.orders)
    }

    /// Same fractions and orders on `[t_start, tf]`.
    pub fn remapped(&self, t_start: f64) -> Result<Self> {
        Self::new(
            t_start,
            self.tf,
            self.fractions.clone(),
            self.orders.clone(),
        )
    }

    /// Same fractions and orders on a new time domain.
    pub fn with_domain(&self, t0: f64, tf: f64) -> Result<Self> {
        Self::new(t0, tf, self.fractions.clone(), self.orders.clone())
    }

    pub fn n_intervals(&self) -> usize {
        self.orders.len()
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn time_domain(&self) -> (f64, f64) {
        (self.t0, self.tf)
    }

    pub fn basis(&self, k: usize) -> &LgrBasisSet {
        &self.bases[k]
    }

    pub fn n_collocation(&self) -> usize {
        self.orders.iter().sum()
    }

    /// First global support-point index of interval `k`.
    fn point_offset(&self, k: usize) -> usize {
        self.orders[..k].iter().sum()
    }

    /// Absolute time of fraction boundary `k` for the horizon `[t0, tf]`.
    fn boundary_time(&self, k: usize, t0: f64, tf: f64) -> f64 {
        if k == 0 {
            t0
        } else if k == self.n_intervals() {
            tf
        } else {
            map_tau_to_time(self.fractions[k], t0, tf)
        }
    }

    /// Absolute time of local `tau` in interval `k` for the horizon `[t0, tf]`.
    fn time_at(&self, k: usize, tau: f64, t0: f64, tf: f64) -> f64 {
        if tau == -1.0 {
            return self.boundary_time(k, t0, tf);
        }
        if tau == 1.0 {
            return self.boundary_time(k + 1, t0, tf);
        }
        let (a, b) = (self.fractions[k], self.fractions[k + 1]);
        map_tau_to_time(0.5 * (b - a) * tau + 0.5 * (b + a), t0, tf)
    }

    /// Half-width factor `((tf - t0)/2) ((T_k - T_{k-1})/2)`.
    fn half_width(&self, k: usize, t0: f64, tf: f64) -> f64 {
        0.5 * (tf - t0) * 0.5 * (self.fractions[k + 1] - self.fractions[k])
    }

    /// Absolute times of all support points for the mesh's own horizon.
    pub fn state_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_collocation() + 1);
        for k in 0..self.n_intervals() {
            for &tau in &self.bases[k].nodes {
                out.push(self.time_at(k, tau, self.t0, self.tf));
            }
        }
        out.push(self.tf);
        out
    }

    /// Absolute times of all collocation points for the mesh's own horizon.
    pub fn collocation_times(&self) -> Vec<f64> {
        let mut out = self.state_times();
        out.pop();
        out
    }

    /// Interval boundaries in absolute time.
    pub fn interval_times(&self) -> Vec<f64> {
        (0..=self.n_intervals())
            .map(|k| self.boundary_time(k, self.t0, self.tf))
            .collect()
    }
}

/// Uniform fractions; `orders` holds one count for every interval or a
/// single count shared by all.
pub fn build_mesh(t0: f64, tf: f64, k: usize, orders: &[usize]) -> Result<Mesh> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "mesh needs at least one interval".into(),
        ));
    }
    let orders = match orders.len() {
        1 => vec![orders[0]; k],
        len if len == k => orders.to_vec(),
        len => {
            return Err(Error::DimensionMismatch {
                context: "mesh orders",
                expected: k,
                actual: len,
            })
        }
    };
    let mut fractions: Vec<f64> = (0..=k).map(|i| -1.0 + 2.0 * i as f64 / k as f64).collect();
    fractions[k] = 1.0;
    Mesh::new(t0, tf, fractions, orders)
}

const GRADIENT_STEP: f64 = 6e-6;
const HESSIAN_STEP: f64 = 1e-4;

fn central_step(v: f64, base: f64) -> f64 {
    base * (1.0 + v.abs())
}

/// Central-difference Jacobian of a small vector function.
fn central_jacobian(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    v: &DVector<f64>,
    rows: usize,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, v.len());
    let mut probe = v.clone();
    for j in 0..v.len() {
        let h = central_step(v[j], GRADIENT_STEP);
        probe[j] = v[j] + h;
        let hi = f(&probe);
        probe[j] = v[j] - h;
        let lo = f(&probe);
        probe[j] = v[j];
        jac.set_column(j, &((hi - lo) / (2.0 * h)));
    }
    jac
}

fn central_gradient(f: impl Fn(&DVector<f64>) -> f64, v: &DVector<f64>) -> DVector<f64> {
    let mut probe = v.clone();
    DVector::from_iterator(
        v.len(),
        (0..v.len()).map(|j| {
            let h = central_step(v[j], GRADIENT_STEP);
            probe[j] = v[j] + h;
            let hi = f(&probe);
            probe[j] = v[j] - h;
            let lo = f(&probe);
            probe[j] = v[j];
            (hi - lo) / (2.0 * h)
        }),
    )
}

/// Second-order central-difference Hessian of a small scalar function.
fn central_hessian(f: impl Fn(&DVector<f64>) -> f64, v: &DVector<f64>) -> DMatrix<f64> {
    let d = v.len();
    let mut hess = DMatrix::zeros(d, d);
    let mut probe = v.clone();
    let f0 = f(v);
    let steps: Vec<f64> = v.iter().map(|&x| central_step(x, HESSIAN_STEP)).collect();
    for i in 0..d {
        let hi = steps[i];
        probe[i] = v[i] + hi;
        let fp = f(&probe);
        probe[i] = v[i] - hi;
        let fm = f(&probe);
        probe[i] = v[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut eval = |si: f64, sj: f64| {
                probe[i] = v[i] + si * hi;
                probe[j] = v[j] + sj * hj;
                let r = f(&probe);
                probe[i] = v[i];
                probe[j] = v[j];
                r
            };
            let val = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            hess[(i, j)] = val;
            hess[(j, i)] = val;
        }
    }
    hess
}

/// The NLP obtained by collocating `problem` on `mesh`.
pub struct Transcription<'a> {
    problem: &'a dyn CollocationProblem,
    mesh: Mesh,
    nx: usize,
    nu: usize,
    free_tf: Option<(f64, f64)>,
    fixed_x0: Option<DVector<f64>>,
    n_boundary: usize,
    n_path: usize,
}

impl<'a> Transcription<'a> {
    pub fn new(problem: &'a dyn CollocationProblem, mesh: Mesh) -> Result<Self> {
        let (t0, tf) = problem.time_domain();
        let (m0, mf) = mesh.time_domain();
        let tol = 1e-12 * (1.0 + tf.abs());
        if (m0 - t0).abs() > tol || (mf - tf).abs() > tol {
            return Err(Error::InvalidArgument(format!(
                "mesh horizon [{m0}, {mf}] differs from the problem horizon [{t0}, {tf}]"
            )));
        }
        let nx = problem.n_states();
        let fixed_x0 = problem.initial_state();
        if let Some(x0) = &fixed_x0 {
            if x0.len() != nx {
                return Err(Error::DimensionMismatch {
                    context: "initial state",
                    expected: nx,
                    actual: x0.len(),
                });
            }
        }
        let free_tf = match problem.final_time() {
            FinalTime::Fixed => None,
            FinalTime::Free { lower, upper } => Some((lower, upper)),
        };
        Ok(Self {
            nx,
            nu: problem.n_controls(),
            free_tf,
            fixed_x0,
            n_boundary: problem.n_boundary(),
            n_path: problem.n_path(),
            problem,
            mesh,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn n_state_points(&self) -> usize {
        self.mesh.n_collocation() + 1
    }

    pub fn n_defects(&self) -> usize {
        self.mesh.n_collocation() * self.nx
    }

    fn n_initial_rows(&self) -> usize {
        if self.fixed_x0.is_some() {
            self.nx
        } else {
            0
        }
    }

    fn state_offset(&self, point: usize) -> usize {
        point * self.nx
    }

    fn control_offset(&self, col: usize) -> usize {
        self.n_state_points() * self.nx + col * self.nu
    }

    fn tf_index(&self) -> Option<usize> {
        self.free_tf
            .map(|_| self.n_state_points() * self.nx + self.mesh.n_collocation() * self.nu)
    }

    fn horizon(&self, z: &DVector<f64>) -> (f64, f64) {
        let (t0, tf) = self.mesh.time_domain();
        match self.tf_index() {
            Some(i) => (t0, z[i]),
            None => (t0, tf),
        }
    }

    fn state(&self, z: &DVector<f64>, point: usize) -> DVector<f64> {
        z.rows(self.state_offset(point), self.nx).into_owned()
    }

    fn control(&self, z: &DVector<f64>, col: usize) -> DVector<f64> {
        z.rows(self.control_offset(col), self.nu).into_owned()
    }

    /// Collocation points as `(interval, local index, global index, time)`.
    fn points(&self, t0: f64, tf: f64) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.mesh.n_collocation());
        for k in 0..self.mesh.n_intervals() {
            let off = self.mesh.point_offset(k);
            for (i, &tau) in self.mesh.basis(k).nodes.iter().enumerate() {
                out.push((k, i, off + i, self.mesh.time_at(k, tau, t0, tf)));
            }
        }
        out
    }

    /// Stacks `(x, u)` of one collocation point.
    fn point_vector(&self, z: &DVector<f64>, global: usize) -> DVector<f64> {
        let mut v = DVector::zeros(self.nx + self.nu);
        v.rows_mut(0, self.nx).copy_from(&self.state(z, global));
        v.rows_mut(self.nx, self.nu)
            .copy_from(&self.control(z, global));
        v
    }

    fn split_point(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            v.rows(0, self.nx).into_owned(),
            v.rows(self.nx, self.nu).into_owned(),
        )
    }

    fn endpoint_vector(&self, z: &DVector<f64>) -> DVector<f64> {
        let last = self.n_state_points() - 1;
        let mut v = DVector::zeros(2 * self.nx);
        v.rows_mut(0, self.nx).copy_from(&self.state(z, 0));
        v.rows_mut(self.nx, self.nx).copy_from(&self.state(z, last));
        v
    }

    fn mayer(&self, ends: &DVector<f64>, t0: f64, tf: f64) -> f64 {
        let (x0, xf) = (
            ends.rows(0, self.nx).into_owned(),
            ends.rows(self.nx, self.nx).into_owned(),
        );
        self.problem.terminal_cost(&x0, t0, &xf, tf)
    }

    fn boundary(&self, ends: &DVector<f64>, t0: f64, tf: f64) -> DVector<f64> {
        let (x0, xf) = (
            ends.rows(0, self.nx).into_owned(),
            ends.rows(self.nx, self.nx).into_owned(),
        );
        self.problem.boundary_values(&x0, t0, &xf, tf)
    }

    /// Straight-line guess between the problem's guess end points, zero controls.
    pub fn initial_guess(&self) -> DVector<f64> {
        let (start, end) = self.problem.guess_endpoints();
        let (t0, tf) = self.mesh.time_domain();
        let mut z = DVector::zeros(self.n_variables());
        for (p, &t) in self.mesh.state_times().iter().enumerate() {
            let s = (t - t0) / (tf - t0);
            let x = &start * (1.0 - s) + &end * s;
            z.rows_mut(self.state_offset(p), self.nx).copy_from(&x);
        }
        if let Some(x0) = &self.fixed_x0 {
            z.rows_mut(0, self.nx).copy_from(x0);
        }
        if let Some(i) = self.tf_index() {
            z[i] = tf;
        }
        z
    }

    /// Samples `traj` onto this mesh. State components the trajectory does
    /// not carry keep their straight-line guess values.
    pub fn warm_start(&self, traj: &Trajectory) -> Result<DVector<f64>> {
        let mut z = self.initial_guess();
        let (lo, hi) = traj.time_span();
        let clamp = |t: f64| t.clamp(lo, hi);
        let carried = traj.segments()[0].state.dim().min(self.nx);
        for (p, &t) in self.mesh.state_times().iter().enumerate() {
            let x = traj.augmented_state_at(clamp(t))?;
            z.rows_mut(self.state_offset(p), carried)
                .copy_from(&x.rows(0, carried));
        }
        let nu = traj.n_controls().min(self.nu);
        for (c, &t) in self.mesh.collocation_times().iter().enumerate() {
            let u = traj.control_at(clamp(t))?;
            z.rows_mut(self.control_offset(c), nu)
                .copy_from(&u.rows(0, nu));
        }
        if let Some(x0) = &self.fixed_x0 {
            z.rows_mut(0, self.nx).copy_from(x0);
        }
        Ok(z)
    }

    /// Packs nodal samples (one row per support or collocation point).
    pub fn pack(
        &self,
        states: &DMatrix<f64>,
        controls: &DMatrix<f64>,
        tf: Option<f64>,
    ) -> Result<DVector<f64>> {
        if states.shape() != (self.n_state_points(), self.nx) {
            return Err(Error::DimensionMismatch {
                context: "packed states",
                expected: self.n_state_points() * self.nx,
                actual: states.len(),
            });
        }
        if controls.shape() != (self.mesh.n_collocation(), self.nu) {
            return Err(Error::DimensionMismatch {
                context: "packed controls",
                expected: self.mesh.n_collocation() * self.nu,
                actual: controls.len(),
            });
        }
        let mut z = DVector::zeros(self.n_variables());
        for p in 0..self.n_state_points() {
            z.rows_mut(self.state_offset(p), self.nx)
                .copy_from(&states.row(p).transpose());
        }
        for c in 0..self.mesh.n_collocation() {
            z.rows_mut(self.control_offset(c), self.nu)
                .copy_from(&controls.row(c).transpose());
        }
        if let Some(i) = self.tf_index() {
            z[i] = tf.unwrap_or(self.mesh.time_domain().1);
        }
        Ok(z)
    }

    /// Rebuilds the piecewise trajectory from a decision vector.
    pub fn extract_solution(&self, z: &DVector<f64>) -> Result<Trajectory> {
        if z.len() != self.n_variables() {
            return Err(Error::DimensionMismatch {
                context: "decision vector",
                expected: self.n_variables(),
                actual: z.len(),
            });
        }
        let (t0, tf) = self.horizon(z);
        let mut segments = Vec::with_capacity(self.mesh.n_intervals());
        for k in 0..self.mesh.n_intervals() {
            let basis = self.mesh.basis(k);
            let n = basis.n_collocation();
            let off = self.mesh.point_offset(k);
            let mut xs = DMatrix::zeros(n + 1, self.nx);
            for j in 0..=n {
                xs.set_row(j, &self.state(z, off + j).transpose());
            }
            let mut us = DMatrix::zeros(n, self.nu);
            for j in 0..n {
                us.set_row(j, &self.control(z, off + j).transpose());
            }
            segments.push(Segment {
                t_start: self.mesh.time_at(k, -1.0, t0, tf),
                t_end: self.mesh.time_at(k, 1.0, t0, tf),
                state: Interpolant::new(basis.support_points(), xs)?,
                control: Interpolant::new(basis.nodes.clone(), us)?.with_domain(-1.0, 1.0)?,
            });
        }
        Trajectory::new(
            segments,
            self.problem.n_base_states(),
            self.problem.n_sensitivity_params(),
            self.objective(z),
        )
    }
}

impl NlpProblem for Transcription<'_> {
    fn n_variables(&self) -> usize {
        self.n_state_points() * self.nx
            + self.mesh.n_collocation() * self.nu
            + usize::from(self.free_tf.is_some())
    }

    fn n_constraints(&self) -> usize {
        self.n_defects()
            + self.n_initial_rows()
            + self.n_boundary
            + self.mesh.n_collocation() * self.n_path
    }

    fn constraint_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        let m = self.n_constraints();
        let mut lo = DVector::zeros(m);
        let mut hi = DVector::zeros(m);
        let mut row = self.n_defects();
        if let Some(x0) = &self.fixed_x0 {
            lo.rows_mut(row, self.nx).copy_from(x0);
            hi.rows_mut(row, self.nx).copy_from(x0);
            row += self.nx;
        }
        let (bl, bh) = self.problem.boundary_bounds();
        lo.rows_mut(row, self.n_boundary).copy_from(&bl);
        hi.rows_mut(row, self.n_boundary).copy_from(&bh);
        row += self.n_boundary;
        let (pl, ph) = self.problem.path_bounds();
        for _ in 0..self.mesh.n_collocation() {
            lo.rows_mut(row, self.n_path).copy_from(&pl);
            hi.rows_mut(row, self.n_path).copy_from(&ph);
            row += self.n_path;
        }
        (lo, hi)
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        let (t0, tf) = self.horizon(z);
        let mut cost = self.mayer(&self.endpoint_vector(z), t0, tf);
        for (k, i, g, t) in self.points(t0, tf) {
            let w = self.mesh.basis(k).weights[i] * self.mesh.half_width(k, t0, tf);
            cost += w * self
                .problem
                .running_cost(&self.state(z, g), &self.control(z, g), t);
        }
        cost
    }

    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let (t0, tf) = self.horizon(z);
        let mut c = DVector::zeros(self.n_constraints());
        for k in 0..self.mesh.n_intervals() {
            let basis = self.mesh.basis(k);
            let off = self.mesh.point_offset(k);
            let h = self.mesh.half_width(k, t0, tf);
            for (i, &tau) in basis.nodes.iter().enumerate() {
                let g = off + i;
                let t = self.mesh.time_at(k, tau, t0, tf);
                let mut d = self
                    .problem
                    .dynamics(&self.state(z, g), &self.control(z, g), t)
                    * (-h);
                for j in 0..=basis.n_collocation() {
                    d.axpy(basis.diff_matrix[(i, j)], &self.state(z, off + j), 1.0);
                }
                c.rows_mut(g * self.nx, self.nx).copy_from(&d);
            }
        }
        let mut row = self.n_defects();
        if self.fixed_x0.is_some() {
            c.rows_mut(row, self.nx).copy_from(&self.state(z, 0));
            row += self.nx;
        }
        let ends = self.endpoint_vector(z);
        c.rows_mut(row, self.n_boundary)
            .copy_from(&self.boundary(&ends, t0, tf));
        row += self.n_boundary;
        if self.n_path > 0 {
            for (_, _, g, t) in self.points(t0, tf) {
                let v = self
                    .problem
                    .path_values(&self.state(z, g), &self.control(z, g), t);
                c.rows_mut(row + g * self.n_path, self.n_path).copy_from(&v);
            }
        }
        c
    }

    fn objective_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let (t0, tf) = self.horizon(z);
        let mut grad = DVector::zeros(self.n_variables());
        let last = self.state_offset(self.n_state_points() - 1);
        let ends = self.endpoint_vector(z);
        let ge = central_gradient(|v| self.mayer(v, t0, tf), &ends);
        let mut head = grad.rows_mut(0, self.nx);
        head += ge.rows(0, self.nx);
        let mut tail = grad.rows_mut(last, self.nx);
        tail += ge.rows(self.nx, self.nx);
        for (k, i, g, t) in self.points(t0, tf) {
            let w = self.mesh.basis(k).weights[i] * self.mesh.half_width(k, t0, tf);
            let v = self.point_vector(z, g);
            let gl = central_gradient(
                |v| {
                    let (x, u) = self.split_point(v);
                    self.problem.running_cost(&x, &u, t)
                },
                &v,
            ) * w;
            let mut xs = grad.rows_mut(self.state_offset(g), self.nx);
            xs += gl.rows(0, self.nx);
            let mut us = grad.rows_mut(self.control_offset(g), self.nu);
            us += gl.rows(self.nx, self.nu);
        }
        if let Some(i) = self.tf_index() {
            let h = central_step(z[i], GRADIENT_STEP);
            let mut probe = z.clone();
            probe[i] = z[i] + h;
            let hi = self.objective(&probe);
            probe[i] = z[i] - h;
            grad[i] = (hi - self.objective(&probe)) / (2.0 * h);
        }
        grad
    }

    fn constraint_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (t0, tf) = self.horizon(z);
        let mut jac = DMatrix::zeros(self.n_constraints(), self.n_variables());
        let nx = self.nx;
        for k in 0..self.mesh.n_intervals() {
            let basis = self.mesh.basis(k);
            let off = self.mesh.point_offset(k);
            let h = self.mesh.half_width(k, t0, tf);
            for (i, &tau) in basis.nodes.iter().enumerate() {
                let g = off + i;
                let row = g * nx;
                for j in 0..=basis.n_collocation() {
                    let d = basis.diff_matrix[(i, j)];
                    let col = self.state_offset(off + j);
                    for r in 0..nx {
                        jac[(row + r, col + r)] += d;
                    }
                }
                let t = self.mesh.time_at(k, tau, t0, tf);
                let fj = central_jacobian(
                    |v| {
                        let (x, u) = self.split_point(v);
                        self.problem.dynamics(&x, &u, t)
                    },
                    &self.point_vector(z, g),
                    nx,
                ) * (-h);
                let mut xs = jac.view_mut((row, self.state_offset(g)), (nx, nx));
                xs += fj.columns(0, nx);
                let mut us = jac.view_mut((row, self.control_offset(g)), (nx, self.nu));
                us += fj.columns(nx, self.nu);
            }
        }
        let mut row = self.n_defects();
        if self.fixed_x0.is_some() {
            for r in 0..nx {
                jac[(row + r, r)] = 1.0;
            }
            row += nx;
        }
        if self.n_boundary > 0 {
            let ends = self.endpoint_vector(z);
            let bj = central_jacobian(|v| self.boundary(v, t0, tf), &ends, self.n_boundary);
            let last = self.state_offset(self.n_state_points() - 1);
            let mut a = jac.view_mut((row, 0), (self.n_boundary, nx));
            a += bj.columns(0, nx);
            let mut b = jac.view_mut((row, last), (self.n_boundary, nx));
            b += bj.columns(nx, nx);
        }
        row += self.n_boundary;
        if self.n_path > 0 {
            for (_, _, g, t) in self.points(t0, tf) {
                let pj = central_jacobian(
                    |v| {
                        let (x, u) = self.split_point(v);
                        self.problem.path_values(&x, &u, t)
                    },
                    &self.point_vector(z, g),
                    self.n_path,
                );
                let r0 = row + g * self.n_path;
                let mut xs = jac.view_mut((r0, self.state_offset(g)), (self.n_path, nx));
                xs += pj.columns(0, nx);
                let mut us = jac.view_mut((r0, self.control_offset(g)), (self.n_path, self.nu));
                us += pj.columns(nx, self.nu);
            }
        }
        if let Some(i) = self.tf_index() {
            let h = central_step(z[i], GRADIENT_STEP);
            let mut probe = z.clone();
            probe[i] = z[i] + h;
            let hi = self.constraints(&probe);
            probe[i] = z[i] - h;
            jac.set_column(i, &((hi - self.constraints(&probe)) / (2.0 * h)));
        }
        jac
    }

    /// Block-diagonal Hessian assembled point by point; the differentiation
    /// terms are linear and contribute nothing. Free final time falls back
    /// to quasi-Newton.
    fn lagrangian_hessian(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> Option<DMatrix<f64>> {
        if self.free_tf.is_some() {
            return None;
        }
        let (t0, tf) = self.horizon(z);
        let nx = self.nx;
        let mut hess = DMatrix::zeros(self.n_variables(), self.n_variables());
        let path_row = self.n_defects() + self.n_initial_rows() + self.n_boundary;
        for (k, i, g, t) in self.points(t0, tf) {
            let h = self.mesh.half_width(k, t0, tf);
            let w = self.mesh.basis(k).weights[i] * h;
            let lam = lambda.rows(g * nx, nx).into_owned();
            let lam_path = lambda
                .rows(path_row + g * self.n_path, self.n_path)
                .into_owned();
            let phi = |v: &DVector<f64>| {
                let (x, u) = self.split_point(v);
                let mut s = w * self.problem.running_cost(&x, &u, t)
                    - h * lam.dot(&self.problem.dynamics(&x, &u, t));
                if self.n_path > 0 {
                    s += lam_path.dot(&self.problem.path_values(&x, &u, t));
                }
                s
            };
            let hp = central_hessian(phi, &self.point_vector(z, g));
            let idx: Vec<usize> = (0..nx)
                .map(|r| self.state_offset(g) + r)
                .chain((0..self.nu).map(|r| self.control_offset(g) + r))
                .collect();
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    hess[(ia, ib)] += hp[(a, b)];
                }
            }
        }
        let brow = self.n_defects() + self.n_initial_rows();
        let lam_b = lambda.rows(brow, self.n_boundary).into_owned();
        let psi = |v: &DVector<f64>| {
            let mut s = self.mayer(v, t0, tf);
            if self.n_boundary > 0 {
                s += lam_b.dot(&self.boundary(v, t0, tf));
            }
            s
        };
        let he = central_hessian(psi, &self.endpoint_vector(z));
        let last = self.state_offset(self.n_state_points() - 1);
        let idx: Vec<usize> = (0..nx).chain((0..nx).map(|r| last + r)).collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                hess[(ia, ib)] += he[(a, b)];
            }
        }
        Some(hess)
    }
}

/// A solved transcription.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub trajectory: Trajectory,
    pub mesh: Mesh,
    pub nlp: NlpSolution,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.nlp.converged()
    }

    pub fn iterations(&self) -> usize {
        self.nlp.iterations
    }
}

/// Transcribes and solves, warm-starting from `guess` when given. A
/// non-converged solve is returned, not raised; see
/// [`NlpSolution::into_converged`].
pub fn solve_ocp(
    problem: &dyn CollocationProblem,
    mesh: &Mesh,
    guess: Option<&Trajectory>,
    opts: &SolverOptions,
) -> Result<SolveOutcome> {
    let tr = Transcription::new(problem, mesh.clone())?;
    let z0 = match guess {
        Some(traj) => tr.warm_start(traj)?,
        None => tr.initial_guess(),
    };
    let sol = nlp::solve(&tr, &z0, opts)?;
    let trajectory = tr.extract_solution(&sol.x)?;
    Ok(SolveOutcome {
        trajectory,
        mesh: mesh.clone(),
        nlp: sol,
    })
}

/// The unaugmented Bolza cost of `traj` evaluated with the quadrature of
/// `mesh` (whose nodes the trajectory must have been solved on).
pub fn base_objective(ocp: &OcpDefinition, traj: &Trajectory, mesh: &Mesh) -> Result<f64> {
    let (t0, tf) = traj.time_span();
    let mut cost = ocp.terminal_cost(&traj.initial_state(), t0, &traj.final_state(), tf);
    for k in 0..mesh.n_intervals() {
        let basis = mesh.basis(k);
        let seg = traj.segments().get(k).ok_or_else(|| {
            Error::InvalidArgument("trajectory and mesh interval counts differ".into())
        })?;
        let h = mesh.half_width(k, t0, tf);
        for (i, &tau) in basis.nodes.iter().enumerate() {
            let xa = seg.state.eval(tau)?;
            let x = xa.rows(0, ocp.n_states()).into_owned();
            let u = seg.control.eval(tau)?;
            cost += h * basis.weights[i] * ocp.running_cost(&x, &u, mesh.time_at(k, tau, t0, tf));
        }
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::example_problem;
    use crate::sensitivity::augment;
    use approx::assert_relative_eq;

    #[test]
    fn time_map_examples() {
        assert_eq!(map_tau_to_time(-1.0, 0.0, 50.0), 0.0);
        assert_eq!(map_tau_to_time(1.0, 0.0, 50.0), 50.0);
        assert_eq!(map_tau_to_time(0.0, 10.0, 50.0), 30.0);
    }

    #[test]
    fn mesh_examples() {
        let m = build_mesh(0.0, 50.0, 1, &[5]).unwrap();
        assert_eq!(m.fractions(), &[-1.0, 1.0]);
        let m = build_mesh(0.0, 50.0, 4, &[5]).unwrap();
        assert_eq!(m.fractions(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        let m = build_mesh(0.0, 50.0, 2, &[3, 7]).unwrap();
        assert_eq!(m.orders(), &[3, 7]);
        assert!(build_mesh(0.0, 50.0, 0, &[3]).is_err());
        assert!(build_mesh(0.0, 50.0, 2, &[3, 0]).is_err());
        assert!(build_mesh(0.0, 50.0, 3, &[3, 4]).is_err());
        assert!(Mesh::new(0.0, 1.0, vec![-1.0, 0.5, 0.2, 1.0], vec![2, 2, 2]).is_err());
    }

    #[test]
    fn graded_mesh_is_symmetric_and_clustered() {
        let m = Mesh::graded(0.0, 50.0, 6, &[4], 2.0).unwrap();
        let f = m.fractions();
        assert_relative_eq!(f[1] - f[0], 2.0 / 14.0, epsilon = 1e-15);
        assert_relative_eq!(f[3], 0.0, epsilon = 1e-15);
        assert_relative_eq!(f[6] - f[5], f[1] - f[0], epsilon = 1e-15);
        assert_eq!(
            Mesh::graded(0.0, 50.0, 4, &[3], 1.0).unwrap().fractions(),
            &[-1.0, -0.5, 0.0, 0.5, 1.0]
        );
        assert!(Mesh::graded(0.0, 50.0, 4, &[3], 0.5).is_err());
    }

    #[test]
    fn remapped_mesh_spans_new_horizon() {
        let m = build_mesh(0.0, 50.0, 4, &[5])
            .unwrap()
            .remapped(12.0)
            .unwrap();
        let times = m.state_times();
        assert_eq!(times[0], 12.0);
        assert_eq!(times[times.len() - 1], 50.0);
    }

    #[test]
    fn example_layout_counts() {
        let (ocp, w) = example_problem(2.0).unwrap();
        let aug = augment(&ocp, &w.spec(5.0, 0.01), DMatrix::zeros(1, 1)).unwrap();
        let tr = Transcription::new(&aug, build_mesh(0.0, 50.0, 1, &[3]).unwrap()).unwrap();
        assert_eq!(tr.n_variables(), 4 * 2 + 3);
        assert_eq!(tr.n_defects(), 3 * 2);
    }

    #[test]
    fn guess_is_linear_and_satisfies_initial_state() {
        let (ocp, _) = example_problem(2.0).unwrap();
        let tr = Transcription::new(&ocp, build_mesh(0.0, 50.0, 4, &[4]).unwrap()).unwrap();
        let z = tr.initial_guess();
        let times = tr.mesh().state_times();
        for (p, t) in times.iter().enumerate() {
            assert_relative_eq!(z[p], 1.5 - 0.5 * t / 50.0, epsilon = 1e-14);
        }
        let c = tr.constraints(&z);
        assert_eq!(c[tr.n_defects()], 1.5);
        assert_eq!(c[tr.n_defects() + 1], 1.0);
    }

    #[test]
    fn structured_derivatives_match_central_differences() {
        let (ocp, w) = example_problem(2.0).unwrap();
        let aug = augment(&ocp, &w.spec(5.0, 0.01), DMatrix::zeros(1, 1)).unwrap();
        let tr = Transcription::new(&aug, build_mesh(0.0, 50.0, 3, &[2, 3, 4]).unwrap()).unwrap();
        let z = tr.initial_guess().map(|v| v + 0.1)
            + DVector::from_fn(tr.n_variables(), |i, _| 0.01 * (i as f64).sin());
        let g = tr.objective_gradient(&z);
        let gf = central_gradient(|v| tr.objective(v), &z);
        let e = (g - gf).amax();
        assert!(e < 1e-7, "{e}");
        let j = tr.constraint_jacobian(&z);
        let jf = central_jacobian(|v| tr.constraints(v), &z, tr.n_constraints());
        let e = (j - jf).amax();
        assert!(e < 1e-7, "{e}");
    }

    #[test]
    fn constant_state_satisfies_zero_dynamics() {
        let ocp = OcpDefinition::builder(2, 1, 0)
            .dynamics(|_x, _u, _p, _t| DVector::zeros(2))
            .running_cost(|_x, _u, _t| 0.0)
            .time_domain(0.0, 3.0)
            .build()
            .unwrap();
        let tr = Transcription::new(&ocp, build_mesh(0.0, 3.0, 3, &[2, 4, 3]).unwrap()).unwrap();
        let states = DMatrix::from_fn(tr.n_state_points(), 2, |_, c| 0.3 + c as f64);
        let controls = DMatrix::from_element(tr.mesh().n_collocation(), 1, 7.0);
        let z = tr.pack(&states, &controls, None).unwrap();
        assert!(tr.constraints(&z).rows(0, tr.n_defects()).amax() < 1e-12);
        let traj = tr.extract_solution(&z).unwrap();
        assert_relative_eq!(traj.state_at(1.234).unwrap()[1], 1.3, epsilon = 1e-14);
        assert_relative_eq!(traj.control_at(2.5).unwrap()[0], 7.0, epsilon = 1e-13);
    }
}
