//! The continuous-time view that transcription works from.

use nalgebra::DVector;

use crate::ocp::{FinalTime, OcpDefinition};

/// A Bolza problem with parameters already fixed, as seen by the
/// collocation layer. Implemented by [`OcpDefinition`] (at its nominal
/// parameters) and by the sensitivity-augmented problem.
pub trait CollocationProblem: Send + Sync {
    fn n_states(&self) -> usize;
    fn n_controls(&self) -> usize;
    fn time_domain(&self) -> (f64, f64);

    fn final_time(&self) -> FinalTime {
        FinalTime::Fixed
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64>;
    fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64;
    fn terminal_cost(&self, x0: &DVector<f64>, t0: f64, xf: &DVector<f64>, tf: f64) -> f64;

    /// Fixed initial state, if any.
    fn initial_state(&self) -> Option<DVector<f64>>;

    fn n_boundary(&self) -> usize {
        0
    }

    fn boundary_values(
        &self,
        _x0: &DVector<f64>,
        _t0: f64,
        _xf: &DVector<f64>,
        _tf: f64,
    ) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn boundary_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(0), DVector::zeros(0))
    }

    fn n_path(&self) -> usize {
        0
    }

    fn path_values(&self, _x: &DVector<f64>, _u: &DVector<f64>, _t: f64) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn path_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(0), DVector::zeros(0))
    }

    /// Leading state components that belong to the physical model; the
    /// rest, if any, are the column-major sensitivity matrix.
    fn n_base_states(&self) -> usize {
        self.n_states()
    }

    /// Column count of the sensitivity block (zero without one).
    fn n_sensitivity_params(&self) -> usize {
        0
    }

    /// Start and end states for a straight-line initial guess.
    fn guess_endpoints(&self) -> (DVector<f64>, DVector<f64>) {
        let start = self
            .initial_state()
            .unwrap_or_else(|| DVector::zeros(self.n_states()));
        (start.clone(), start)
    }
}

impl CollocationProblem for OcpDefinition {
    fn n_states(&self) -> usize {
        OcpDefinition::n_states(self)
    }

    fn n_controls(&self) -> usize {
        OcpDefinition::n_controls(self)
    }

    fn time_domain(&self) -> (f64, f64) {
        OcpDefinition::time_domain(self)
    }

    fn final_time(&self) -> FinalTime {
        OcpDefinition::final_time(self)
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        OcpDefinition::dynamics(self, x, u, self.nominal_params(), t)
    }

    fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> f64 {
        OcpDefinition::running_cost(self, x, u, t)
    }

    fn terminal_cost(&self, x0: &DVector<f64>, t0: f64, xf: &DVector<f64>, tf: f64) -> f64 {
        OcpDefinition::terminal_cost(self, x0, t0, xf, tf)
    }

    fn initial_state(&self) -> Option<DVector<f64>> {
        OcpDefinition::initial_state(self).cloned()
    }

    fn n_boundary(&self) -> usize {
        self.boundary().map_or(0, |b| b.len())
    }

    fn boundary_values(
        &self,
        x0: &DVector<f64>,
        t0: f64,
        xf: &DVector<f64>,
        tf: f64,
    ) -> DVector<f64> {
        self.boundary()
            .map_or_else(|| DVector::zeros(0), |b| (b.func)(x0, t0, xf, tf))
    }

    fn boundary_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        self.boundary().map_or_else(
            || (DVector::zeros(0), DVector::zeros(0)),
            |b| (b.lower.clone(), b.upper.clone()),
        )
    }

    fn n_path(&self) -> usize {
        self.path_constraints().map_or(0, |c| c.len())
    }

    fn path_values(&self, x: &DVector<f64>, u: &DVector<f64>, t: f64) -> DVector<f64> {
        self.path_constraints()
            .map_or_else(|| DVector::zeros(0), |c| (c.func)(x, u, t))
    }

    fn path_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        self.path_constraints().map_or_else(
            || (DVector::zeros(0), DVector::zeros(0)),
            |c| (c.lower.clone(), c.upper.clone()),
        )
    }

    fn guess_endpoints(&self) -> (DVector<f64>, DVector<f64>) {
        let n = OcpDefinition::n_states(self);
        let start = OcpDefinition::initial_state(self)
            .cloned()
            .unwrap_or_else(|| DVector::zeros(n));
        let end = self
            .final_state_guess()
            .cloned()
            .unwrap_or_else(|| start.clone());
        (start, end)
    }
}
