use nalgebra::{DMatrix, DVector};

use super::barycentric_weights;
use crate::error::{Error, Result};

const DOMAIN_SLACK: f64 = 1e-12;
const NODE_SNAP: f64 = 4.0 * f64::EPSILON;

/// Vector-valued barycentric Lagrange interpolant.
///
/// `values` holds one row per node and one column per component. The
/// evaluation domain defaults to the node hull; it can be widened to a
/// whole mesh interval for control interpolants whose last node sits
/// short of the interval end.
#[derive(Debug, Clone)]
pub struct Interpolant {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: DMatrix<f64>,
    domain: (f64, f64),
}

impl Interpolant {
    pub fn new(nodes: Vec<f64>, values: DMatrix<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "interpolant needs at least one node".into(),
            ));
        }
        if values.nrows() != nodes.len() {
            return Err(Error::DimensionMismatch {
                context: "interpolant values",
                expected: nodes.len(),
                actual: values.nrows(),
            });
        }
        let weights = barycentric_weights(&nodes)?;
        let lo = nodes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            nodes,
            weights,
            values,
            domain: (lo, hi),
        })
    }

    /// Widens the admissible evaluation range; it must contain every node.
    pub fn with_domain(mut self, lo: f64, hi: f64) -> Result<Self> {
        if lo > self.domain.0 || hi < self.domain.1 {
            return Err(Error::InvalidArgument(format!(
                "domain [{lo}, {hi}] does not cover the nodes [{}, {}]",
                self.domain.0, self.domain.1
            )));
        }
        self.domain = (lo, hi);
        Ok(self)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn eval(&self, tau: f64) -> Result<DVector<f64>> {
        let (lo, hi) = self.domain;
        if !(tau >= lo - DOMAIN_SLACK && tau <= hi + DOMAIN_SLACK) {
            return Err(Error::Extrapolation { at: tau, lo, hi });
        }
        // Snap round-off-close points (e.g. node times mapped back from
        // absolute time) onto the node.
        if let Some(k) = self
            .nodes
            .iter()
            .position(|&x| (x - tau).abs() <= NODE_SNAP * (1.0 + x.abs()))
        {
            return Ok(self.values.row(k).transpose());
        }
        let mut numer = DVector::zeros(self.dim());
        let mut denom = 0.0;
        for (k, (&x, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let c = w / (tau - x);
            denom += c;
            numer.axpy(c, &self.values.row(k).transpose(), 1.0);
        }
        Ok(numer / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lgr::lgr_nodes;

    fn column(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(values.len(), 1, values)
    }

    #[test]
    fn constant_values() {
        let p = Interpolant::new(vec![-1.0, 1.0], column(&[3.0, 3.0])).unwrap();
        assert_eq!(p.eval(0.0).unwrap()[0], 3.0);
    }

    #[test]
    fn reproduces_quadratic() {
        let p = Interpolant::new(vec![-1.0, 0.0, 1.0], column(&[1.0, 0.0, 1.0])).unwrap();
        assert!((p.eval(0.5).unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn approximates_sine_on_radau_support() {
        let mut nodes = lgr_nodes(5).unwrap();
        nodes.push(1.0);
        let vals: Vec<f64> = nodes.iter().map(|t| t.sin()).collect();
        let p = Interpolant::new(nodes, column(&vals)).unwrap();
        assert!((p.eval(0.2).unwrap()[0] - 0.2_f64.sin()).abs() < 1e-4);
    }

    #[test]
    fn node_values_are_exact() {
        let nodes = lgr_nodes(6).unwrap();
        let vals = DMatrix::from_fn(6, 2, |i, j| (i as f64 + 0.1).powi(j as i32 + 1) * 1.37);
        let p = Interpolant::new(nodes.clone(), vals.clone()).unwrap();
        for (i, &t) in nodes.iter().enumerate() {
            let v = p.eval(t).unwrap();
            assert_eq!(v[0], vals[(i, 0)]);
            assert_eq!(v[1], vals[(i, 1)]);
        }
    }

    #[test]
    fn refuses_to_extrapolate() {
        let p = Interpolant::new(vec![-1.0, 0.5], column(&[0.0, 1.0])).unwrap();
        assert!(matches!(p.eval(0.6), Err(Error::Extrapolation { .. })));
        assert!(p.eval(0.5 + 1e-13).is_ok());
        let wide = p.with_domain(-1.0, 1.0).unwrap();
        assert!((wide.eval(1.0).unwrap()[0] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn mismatched_values_rejected() {
        assert!(Interpolant::new(vec![0.0, 1.0], column(&[1.0])).is_err());
    }
}
