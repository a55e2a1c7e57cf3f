//! Gauss–Legendre quadrature with optional adaptive bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes: usize,
    pub adaptive: bool,
    pub max_depth: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { nodes: 32, adaptive: false, max_depth: 16, rel_tol: 1e-10 }
    }
}

impl QuadratureSpec {
    pub fn adaptive() -> Self {
        QuadratureSpec { adaptive: true, ..Self::default() }
    }
}

/// Nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("Gauss-Legendre needs at least 2 nodes, got {n}")));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = nf * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(GaussLegendre { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Fixed rule on [a, b] for a vector-valued integrand of length `len`.
    pub fn integrate(&self, a: f64, b: f64, len: usize, f: &mut dyn FnMut(f64) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let (half, mid) = (0.5 * (b - a), 0.5 * (a + b));
        let mut acc = vec![0.0; len];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x)?;
            for (s, y) in acc.iter_mut().zip(&v) {
                *s += w * y;
            }
        }
        acc.iter_mut().for_each(|s| *s *= half);
        Ok(acc)
    }
}

/// A prepared rule following a [`QuadratureSpec`].
#[derive(Debug, Clone)]
pub struct Quadrature {
    spec: QuadratureSpec,
    rule: GaussLegendre,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

impl Quadrature {
    pub fn new(spec: QuadratureSpec) -> Result<Self> {
        if !(spec.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("quadrature rel_tol must be positive".into()));
        }
        Ok(Quadrature { spec, rule: GaussLegendre::new(spec.nodes)? })
    }

    pub fn spec(&self) -> QuadratureSpec {
        self.spec
    }

    pub fn integrate(&self, a: f64, b: f64, len: usize, mut f: impl FnMut(f64) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let whole = self.rule.integrate(a, b, len, &mut f)?;
        if !self.spec.adaptive {
            return Ok(whole);
        }
        let scale = max_abs(&whole);
        self.refine(a, b, whole, scale, 0, &mut f)
    }

    fn refine(
        &self,
        a: f64,
        b: f64,
        whole: Vec<f64>,
        scale: f64,
        depth: usize,
        f: &mut dyn FnMut(f64) -> Result<Vec<f64>>,
    ) -> Result<Vec<f64>> {
        let m = 0.5 * (a + b);
        let left = self.rule.integrate(a, m, whole.len(), f)?;
        let right = self.rule.integrate(m, b, whole.len(), f)?;
        let split: Vec<f64> = left.iter().zip(&right).map(|(l, r)| l + r).collect();
        let err = split.iter().zip(&whole).map(|(s, w)| (s - w).abs()).fold(0.0, f64::max);
        let scale = scale.max(max_abs(&split));
        if err <= self.spec.rel_tol * scale || err <= f64::EPSILON * 16.0 * scale.max(f64::MIN_POSITIVE) {
            return Ok(split);
        }
        if depth >= self.spec.max_depth {
            return Err(Error::QuadratureDivergence { depth, estimate: max_abs(&split), error: err });
        }
        let l = self.refine(a, m, left, scale, depth + 1, f)?;
        let r = self.refine(m, b, right, scale, depth + 1, f)?;
        Ok(l.iter().zip(&r).map(|(p, q)| p + q).collect())
    }

    pub fn integrate_scalar(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
        Ok(self.integrate(a, b, 1, |s| Ok(vec![f(s)?]))?[0])
    }
}

/// Composite Simpson weights on `n` equally spaced nodes (n odd) over [a, b].
pub fn simpson_weights(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidParameter(format!("Simpson rule needs an odd node count >= 3, got {n}")));
    }
    let h = (b - a) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| {
            let c = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_match_known_values() {
        let g = GaussLegendre::new(2).unwrap();
        assert!((g.nodes()[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let g = GaussLegendre::new(3).unwrap();
        assert!((g.nodes()[2] - 0.6f64.sqrt()).abs() < 1e-15);
        assert!((g.weights()[1] - 8.0 / 9.0).abs() < 1e-15);
        let g = GaussLegendre::new(32).unwrap();
        assert!((g.weights().iter().sum::<f64>() - 2.0).abs() < 1e-13);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exact_for_polynomials_and_smooth_functions() {
        let q = Quadrature::new(QuadratureSpec::default()).unwrap();
        let v = q.integrate_scalar(0.0, 1.0, |s| Ok(s.powi(40))).unwrap();
        assert!((v - 1.0 / 41.0).abs() < 1e-15);
        let v = q.integrate_scalar(0.0, 3.0, |s| Ok(s.sin())).unwrap();
        assert!((v - (1.0 - 3f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn adaptive_refines_and_diverges() {
        let q = Quadrature::new(QuadratureSpec { nodes: 4, ..QuadratureSpec::adaptive() }).unwrap();
        let v = q.integrate_scalar(0.0, 1.0, |s| Ok(s.sqrt())).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
        let shallow = Quadrature::new(QuadratureSpec { nodes: 2, max_depth: 1, ..QuadratureSpec::adaptive() }).unwrap();
        assert!(matches!(
            shallow.integrate_scalar(0.0, 1.0, |s| Ok(1.0 / (s + 1e-6))),
            Err(Error::QuadratureDivergence { .. })
        ));
    }

    #[test]
    fn simpson() {
        let w = simpson_weights(0.0, 1.0, 33).unwrap();
        let v: f64 = w.iter().enumerate().map(|(i, w)| w * (i as f64 / 32.0).powi(3)).sum();
        assert!((v - 0.25).abs() < 1e-15);
        assert!(simpson_weights(0.0, 1.0, 4).is_err());
    }
}
