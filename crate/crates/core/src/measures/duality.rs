//! Lower bounds on d1 from 1-Lipschitz test functions (l1 geometry).

use super::{l1_distance, EmpiricalMeasure};
use crate::error::{Error, Result};

/// A map R^d -> R that is 1-Lipschitz for the l1 norm by construction.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// x -> a.x + b with max |a_i| <= 1.
    Affine { coef: Vec<f64>, offset: f64 },
    /// x -> x_k.
    Coordinate(usize),
    /// x -> ||x - p||_1.
    DistanceTo(Vec<f64>),
}

impl TestFunction {
    pub fn affine(coef: Vec<f64>, offset: f64) -> Result<Self> {
        if coef.iter().any(|a| !(a.abs() <= 1.0)) {
            return Err(Error::Domain(
                "affine test function needs coefficients with |a_i| <= 1".into(),
            ));
        }
        Ok(Self::Affine { coef, offset })
    }

    fn dim_ok(&self, d: usize) -> bool {
        match self {
            Self::Affine { coef, .. } => coef.len() == d,
            Self::Coordinate(k) => *k < d,
            Self::DistanceTo(p) => p.len() == d,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Affine { coef, offset } => {
                coef.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + offset
            }
            Self::Coordinate(k) => x[*k],
            Self::DistanceTo(p) => l1_distance(x, p),
        }
    }
}

/// max over test functions of |mean psi(x) - mean psi(y)|; never exceeds d1.
pub fn duality_lower_bound(
    x: &EmpiricalMeasure,
    y: &EmpiricalMeasure,
    test_fns: &[TestFunction],
) -> Result<f64> {
    if test_fns.is_empty() {
        return Err(Error::Empty("test-function list".into()));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(x.dim(), y.dim()));
    }
    let mut best: f64 = 0.0;
    for f in test_fns {
        if !f.dim_ok(x.dim()) {
            return Err(Error::Domain(format!(
                "test function does not act on R^{}",
                x.dim()
            )));
        }
        let mx = x.rows().map(|p| f.eval(p)).sum::<f64>() / x.len() as f64;
        let my = y.rows().map(|p| f.eval(p)).sum::<f64>() / y.len() as f64;
        best = best.max((mx - my).abs());
    }
    Ok(best)
}
