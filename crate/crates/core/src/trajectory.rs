//! Solved trajectories: piecewise barycentric interpolants over mesh intervals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lgr::Interpolant;
use crate::sensitivity::unvec;

const SPAN_SLACK: f64 = 1e-9;

/// One mesh interval of a solved trajectory, in its local `tau in [-1, 1]`.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    /// State over the `N + 1` support points.
    pub state: Interpolant,
    /// Control over the `N` collocation points, evaluable on all of `[-1, 1]`.
    pub control: Interpolant,
}

impl Segment {
    pub fn local_tau(&self, t: f64) -> f64 {
        let tau = (2.0 * t - (self.t_start + self.t_end)) / (self.t_end - self.t_start);
        tau.clamp(-1.0, 1.0)
    }

    pub fn time_of(&self, tau: f64) -> f64 {
        0.5 * (self.t_end - self.t_start) * tau + 0.5 * (self.t_end + self.t_start)
    }
}

/// Raw nodal samples with absolute times.
#[derive(Debug, Clone)]
pub struct Samples {
    /// Every state support point, interfaces listed once.
    pub state_times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Every collocation point.
    pub control_times: Vec<f64>,
    pub controls: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    segments: Vec<Segment>,
    n_base_states: usize,
    n_params: usize,
    /// Objective value of the problem that produced the trajectory.
    pub objective: f64,
}

impl Trajectory {
    pub fn new(
        segments: Vec<Segment>,
        n_base_states: usize,
        n_params: usize,
        objective: f64,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument(
                "trajectory needs at least one segment".into(),
            ));
        }
        for w in segments.windows(2) {
            if w[0].t_end != w[1].t_start {
                return Err(Error::InvalidArgument(
                    "trajectory segments are not contiguous".into(),
                ));
            }
        }
        let dim = segments[0].state.dim();
        if dim != n_base_states + n_base_states * n_params {
            return Err(Error::DimensionMismatch {
                context: "trajectory state",
                expected: n_base_states + n_base_states * n_params,
                actual: dim,
            });
        }
        Ok(Self {
            segments,
            n_base_states,
            n_params,
            objective,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn time_span(&self) -> (f64, f64) {
        (
            self.segments[0].t_start,
            self.segments[self.segments.len() - 1].t_end,
        )
    }

    /// Interior interval boundaries in absolute time.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments[1..].iter().map(|s| s.t_start).collect()
    }

    pub fn n_base_states(&self) -> usize {
        self.n_base_states
    }

    /// Sensitivity column count; zero for a trajectory without sensitivity.
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn has_sensitivity(&self) -> bool {
        self.n_params > 0
    }

    pub fn n_controls(&self) -> usize {
        self.segments[0].control.dim()
    }

    fn check_span(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.time_span();
        let slack = SPAN_SLACK * (1.0 + hi.abs().max(lo.abs()));
        if t >= lo - slack && t <= hi + slack {
            Ok(())
        } else {
            Err(Error::Extrapolation { at: t, lo, hi })
        }
    }

    /// Interval containing `t`; an interface belongs to the later interval.
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        self.check_span(t)?;
        let k = self.segments.partition_point(|s| s.t_start <= t);
        Ok(k.saturating_sub(1))
    }

    /// Full (possibly augmented) state.
    pub fn augmented_state_at(&self, t: f64) -> Result<DVector<f64>> {
        let seg = &self.segments[self.segment_index(t)?];
        seg.state.eval(seg.local_tau(t))
    }

    pub fn state_at(&self, t: f64) -> Result<DVector<f64>> {
        Ok(self
            .augmented_state_at(t)?
            .rows(0, self.n_base_states)
            .into_owned())
    }

    pub fn control_at(&self, t: f64) -> Result<DVector<f64>> {
        self.control_in_segment(self.segment_index(t)?, t)
    }

    /// Control from interval `k`'s polynomial, used by integrators so that a
    /// step ending on an interface keeps evaluating the interval it started in.
    pub fn control_in_segment(&self, k: usize, t: f64) -> Result<DVector<f64>> {
        self.check_span(t)?;
        let seg = self
            .segments
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("segment {k} out of range")))?;
        let slack = SPAN_SLACK * (1.0 + seg.t_end.abs());
        if t < seg.t_start - slack || t > seg.t_end + slack {
            return Err(Error::Extrapolation {
                at: t,
                lo: seg.t_start,
                hi: seg.t_end,
            });
        }
        seg.control.eval(seg.local_tau(t))
    }

    /// `S(t)` as an `n x m` matrix, when the trajectory carries one.
    pub fn sensitivity_at(&self, t: f64) -> Result<Option<DMatrix<f64>>> {
        if !self.has_sensitivity() {
            return Ok(None);
        }
        let xa = self.augmented_state_at(t)?;
        let n = self.n_base_states;
        Ok(Some(unvec(&xa.as_slice()[n..], n, self.n_params)))
    }

    pub fn initial_state(&self) -> DVector<f64> {
        let s = &self.segments[0];
        s.state
            .values()
            .row(0)
            .transpose()
            .rows(0, self.n_base_states)
            .into_owned()
    }

    pub fn final_state(&self) -> DVector<f64> {
        let s = &self.segments[self.segments.len() - 1];
        let v = s.state.values();
        v.row(v.nrows() - 1)
            .transpose()
            .rows(0, self.n_base_states)
            .into_owned()
    }

    pub fn samples(&self) -> Samples {
        let mut out = Samples {
            state_times: Vec::new(),
            states: Vec::new(),
            control_times: Vec::new(),
            controls: Vec::new(),
        };
        let last = self.segments.len() - 1;
        for (k, seg) in self.segments.iter().enumerate() {
            let nodes = seg.state.nodes();
            let take = if k == last {
                nodes.len()
            } else {
                nodes.len() - 1
            };
            for (j, &tau) in nodes.iter().enumerate().take(take) {
                let t = if j == nodes.len() - 1 {
                    seg.t_end
                } else {
                    seg.time_of(tau)
                };
                out.state_times.push(t);
                out.states.push(seg.state.values().row(j).transpose());
            }
            for (j, &tau) in seg.control.nodes().iter().enumerate() {
                let t = if j == 0 {
                    seg.t_start
                } else {
                    seg.time_of(tau)
                };
                out.control_times.push(t);
                out.controls.push(seg.control.values().row(j).transpose());
            }
        }
        out
    }
}
