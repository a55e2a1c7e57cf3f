use std::fmt;
use std::sync::Arc;

use super::kform::{central_jacobian, fd_step, norm2, Field};
use crate::error::{Error, Result};

/// A vector field on R^m with an optional exact jacobian
/// (row-major, `J[i][j] = ∂X_i/∂x_j`).
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    eval: Field,
    jacobian: Option<Field>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField").field("dim", &self.dim).finish()
    }
}

impl VectorField {
    pub fn new(dim: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        VectorField { dim, eval: Arc::new(f), jacobian: None }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// E(x) = Σ x_i ∂x_i.
    pub fn euler(dim: usize) -> Self {
        VectorField::new(dim, |x| Ok(x.to_vec())).with_jacobian(move |_| {
            let mut j = vec![0.0; dim * dim];
            for i in 0..dim {
                j[i * dim + i] = 1.0;
            }
            Ok(j)
        })
    }

    pub fn constant(v: Vec<f64>) -> Self {
        let dim = v.len();
        VectorField::new(dim, move |_| Ok(v.clone())).with_jacobian(move |_| Ok(vec![0.0; dim * dim]))
    }

    /// The coordinate field ∂x_i (zero-based).
    pub fn coordinate(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self::constant(v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let v = (self.eval)(x)?;
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { point: x.to_vec(), what: "vector field".into() });
        }
        Ok(v)
    }

    pub fn has_exact_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn exact_jacobian(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        self.jacobian.as_ref().map(|j| j(x))
    }
}

/// A smooth map R^m → R^m with its jacobian `J[i][j] = ∂φ_i/∂x_j`, either
/// supplied exactly or obtained by central differences.
#[derive(Clone)]
pub struct SmoothMap {
    dim: usize,
    eval: Field,
    jacobian: Field,
    exact: bool,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap").field("dim", &self.dim).field("exact", &self.exact).finish()
    }
}

impl SmoothMap {
    pub fn new(
        dim: usize,
        f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
        jac: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        SmoothMap { dim, eval: Arc::new(f), jacobian: Arc::new(jac), exact: true }
    }

    /// Map whose jacobian is taken by central differences.
    pub fn with_fd_jacobian(dim: usize, f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        let f: Field = Arc::new(f);
        let g = f.clone();
        SmoothMap {
            dim,
            eval: f,
            jacobian: Arc::new(move |x| central_jacobian(&|p| g(p), x, fd_step(x))),
            exact: false,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaling(dim, 1.0)
    }

    pub fn scaling(dim: usize, s: f64) -> Self {
        SmoothMap::new(
            dim,
            move |x| Ok(x.iter().map(|v| s * v).collect()),
            move |_| {
                let mut j = vec![0.0; dim * dim];
                for i in 0..dim {
                    j[i * dim + i] = s;
                }
                Ok(j)
            },
        )
    }

    /// `outer ∘ inner`, with the chain-rule jacobian.
    pub fn compose(outer: &SmoothMap, inner: &SmoothMap) -> Result<SmoothMap> {
        if outer.dim != inner.dim {
            return Err(Error::DimensionMismatch { expected: outer.dim, got: inner.dim });
        }
        let dim = outer.dim;
        let (o1, i1) = (outer.clone(), inner.clone());
        let (o2, i2) = (outer.clone(), inner.clone());
        Ok(SmoothMap {
            dim,
            eval: Arc::new(move |x| o1.eval(&i1.eval(x)?)),
            jacobian: Arc::new(move |x| {
                let y = i2.eval(x)?;
                let (jo, ji) = (o2.jacobian(&y)?, i2.jacobian(x)?);
                let mut out = vec![0.0; dim * dim];
                for r in 0..dim {
                    for c in 0..dim {
                        out[r * dim + c] = (0..dim).map(|k| jo[r * dim + k] * ji[k * dim + c]).sum();
                    }
                }
                Ok(out)
            }),
            exact: outer.exact && inner.exact,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let y = (self.eval)(x)?;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { point: x.to_vec(), what: "map value".into() });
        }
        Ok(y)
    }

    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let j = (self.jacobian)(x)?;
        if !j.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { point: x.to_vec(), what: "map jacobian".into() });
        }
        Ok(j)
    }

    /// Largest relative discrepancy between the stored jacobian and central
    /// differences of the map over `points`.
    pub fn check_jacobian(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in points {
            let exact = self.jacobian(x)?;
            let fd = central_jacobian(&|p| self.eval(p), x, fd_step(x))?;
            let scale = norm2(&exact).max(1.0);
            let err = exact.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err / scale);
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_chain_rule() {
        let twist = SmoothMap::new(
            2,
            |x| Ok(vec![x[0] + x[1] * x[1], x[1]]),
            |x| Ok(vec![1.0, 2.0 * x[1], 0.0, 1.0]),
        );
        let c = SmoothMap::compose(&twist, &SmoothMap::scaling(2, 3.0)).unwrap();
        assert!(c.check_jacobian(&[vec![0.3, -0.7], vec![1.0, 2.0]]).unwrap() < 1e-7);
        assert_eq!(c.eval(&[1.0, 1.0]).unwrap(), vec![12.0, 3.0]);
    }

    #[test]
    fn wrong_jacobian_is_detected() {
        let bad = SmoothMap::new(1, |x| Ok(vec![x[0] * x[0]]), |_| Ok(vec![1.0]));
        assert!(bad.check_jacobian(&[vec![2.0]]).unwrap() > 0.5);
    }
}
