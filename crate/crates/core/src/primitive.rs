//! Right inverses of the exterior derivative: the radial primitive on R^m and
//! the fiber-integration primitive on product charts, plus the arc-length
//! bound built from the radial primitive.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::basis::{binomial, interior_table, Basis};
use crate::forms::kform::norm2;
use crate::forms::ops::{exterior_derivative, DerivativeScheme, DEFAULT_TOL_SINGULAR};
use crate::forms::{KForm, TimeForm};
use crate::norms::{pointwise_inverse_norm, pointwise_norm, Norm, SphereSampler};
use crate::quadrature::{Quadrature, QuadratureSpec};

type Table = Arc<Vec<(usize, usize, usize, f64)>>;

/// `∫_0^1 s^{k-1} a(sx)(x, ·) ds` for a coefficient function `a`.
fn ray_integral(
    quad: &Quadrature,
    table: &Table,
    k: usize,
    n: usize,
    a: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
) -> Result<Vec<f64>> {
    quad.integrate(0.0, 1.0, n, |s| {
        let sx: Vec<f64> = x.iter().map(|v| s * v).collect();
        let c = a(&sx)?;
        let w = s.powi(k as i32 - 1);
        let mut r = vec![0.0; n];
        for &(it, is, i, sign) in table.iter() {
            r[it] += w * sign * x[i] * c[is];
        }
        Ok(r)
    })
}

/// Jacobian of [`ray_integral`], differentiating under the integral:
/// `∂_j (Ia)_J = ∫ s^{k-1} [a_{jJ}(sx) + s Σ_i x_i ∂_j a_{iJ}(sx)] ds`.
#[allow(clippy::too_many_arguments)]
fn ray_integral_jacobian(
    quad: &Quadrature,
    table: &Table,
    dim: usize,
    k: usize,
    n: usize,
    a: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    ja: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
) -> Result<Vec<f64>> {
    quad.integrate(0.0, 1.0, n * dim, |s| {
        let sx: Vec<f64> = x.iter().map(|v| s * v).collect();
        let (c, g) = (a(&sx)?, ja(&sx)?);
        let w = s.powi(k as i32 - 1);
        let mut r = vec![0.0; n * dim];
        for &(it, is, i, sign) in table.iter() {
            r[it * dim + i] += w * sign * c[is];
            for j in 0..dim {
                r[it * dim + j] += w * sign * x[i] * s * g[is * dim + j];
            }
        }
        Ok(r)
    })
}

fn radial_setup(dim: usize, k: usize, excluded: Option<f64>, q: QuadratureSpec) -> Result<(Arc<Quadrature>, Table, usize)> {
    if k == 0 {
        return Err(Error::InvalidDegree { degree: 0, op: "radial primitive" });
    }
    if excluded.is_some() {
        return Err(Error::SingularRay { point: vec![0.0; dim] });
    }
    Ok((Arc::new(Quadrature::new(q)?), Arc::new(interior_table(dim, k)), binomial(dim, k - 1)))
}

/// Radial primitive `(Ia)(x) = ∫_0^1 s^{k-1} a(sx)(x, ·, …, ·) ds`.
///
/// For k = 2 this is `∫_0^1 E(sx) ⌟ a(sx) ds` with E the Euler field.
pub fn euler_primitive(a: &KForm, q: QuadratureSpec) -> Result<KForm> {
    let (dim, k) = (a.dim(), a.degree());
    let (quad, table, n) = radial_setup(dim, k, a.excluded_radius(), q)?;
    let (a1, q1, t1) = (a.clone(), quad.clone(), table.clone());
    let mut out = KForm::new(dim, k - 1, move |x| ray_integral(&q1, &t1, k, n, &|p| a1.raw_coeff()(p), x))?;
    if a.has_exact_jacobian() {
        let a2 = a.clone();
        out = out.with_jacobian(move |x| {
            let jac = a2.raw_jacobian().expect("checked");
            ray_integral_jacobian(&quad, &table, dim, k, n, &|p| a2.raw_coeff()(p), &|p| jac(p), x)
        });
    }
    Ok(out)
}

/// Radial primitive of every member of a family, `σ_t = I(a_t)`.
pub fn euler_primitive_family(a: &TimeForm, q: QuadratureSpec) -> Result<TimeForm> {
    let (dim, k) = (a.dim(), a.degree());
    let (quad, table, n) = radial_setup(dim, k, a.excluded_radius(), q)?;
    let (a1, q1, t1) = (a.clone(), quad.clone(), table.clone());
    let mut out = TimeForm::new(dim, k - 1, move |t, x| {
        let at = a1.at(t);
        ray_integral(&q1, &t1, k, n, &|p| at.eval(p), x)
    })?;
    if a.has_exact_jacobian() {
        let a2 = a.clone();
        out = out.with_jacobian(move |t, x| {
            let at = a2.at(t);
            ray_integral_jacobian(&quad, &table, dim, k, n, &|p| at.eval(p), &|p| at.exact_jacobian(p).expect("checked"), x)
        });
    }
    Ok(out)
}

/// Tolerance of the post-hoc check `|a - d(Ia)|` in [`cylinder_primitive`].
pub const SLICE_RESIDUAL_TOL: f64 = 1e-6;

/// Fiber-integration primitive on a chart `N × J` whose last coordinate is the
/// interval coordinate r:
/// `(Ia)(y, r) = ∫_{r0}^r ∂_s ⌟ a(y, s) ds + base(y)`.
///
/// `base` lives on the slice (dimension m-1, degree k-1) and is pulled back by
/// the projection. After construction `a - d(Ia)` is probed; a nonzero
/// residual means the slice restriction of `a` needs a primitive and is
/// reported as [`Error::MissingSlicePrimitive`].
pub fn cylinder_primitive(a: &KForm, r0: f64, base: Option<&KForm>, q: QuadratureSpec) -> Result<KForm> {
    let probes = default_probes(a.dim(), r0);
    cylinder_primitive_with_probes(a, r0, base, q, &probes)
}

fn default_probes(dim: usize, r0: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for (j, dr) in [(usize::MAX, 0.5), (0, 1.0), (1, -0.75), (2, 1.5)] {
        let mut p = vec![0.25; dim];
        if j < dim - 1 {
            p[j] = -0.6;
        }
        p[dim - 1] = r0 + dr;
        out.push(p);
    }
    out
}

pub fn cylinder_primitive_with_probes(
    a: &KForm,
    r0: f64,
    base: Option<&KForm>,
    q: QuadratureSpec,
    probes: &[Vec<f64>],
) -> Result<KForm> {
    let (dim, k) = (a.dim(), a.degree());
    if k == 0 {
        return Err(Error::InvalidDegree { degree: 0, op: "fiber primitive" });
    }
    if dim < 2 {
        return Err(Error::InvalidParameter("product chart needs dim >= 2".into()));
    }
    if let Some(b) = base {
        if b.dim() != dim - 1 {
            return Err(Error::DimensionMismatch { expected: dim - 1, got: b.dim() });
        }
        if b.degree() != k - 1 {
            return Err(Error::InvalidDegree { degree: b.degree(), op: "slice primitive" });
        }
    }
    let rax = dim - 1;
    let quad = Arc::new(Quadrature::new(q)?);
    // ∂_r ⌟ a in the full basis
    let table: Arc<Vec<_>> = Arc::new(interior_table(dim, k).into_iter().filter(|e| e.2 == rax).collect());
    let n = binomial(dim, k - 1);
    // slice basis index -> full basis index
    let full = Basis::new(dim, k - 1);
    let lift: Arc<Vec<usize>> = Arc::new(Basis::new(dim - 1, k - 1).iter().map(|j| full.rank(j).expect("slice index")).collect());

    let contract = {
        let (a, table) = (a.clone(), table.clone());
        move |p: &[f64]| -> Result<Vec<f64>> {
            let c = a.raw_coeff()(p)?;
            let mut r = vec![0.0; n];
            for &(it, is, _, sign) in table.iter() {
                r[it] += sign * c[is];
            }
            Ok(r)
        }
    };
    let contract = Arc::new(contract);

    let (c1, q1, base1, lift1) = (contract.clone(), quad.clone(), base.cloned(), lift.clone());
    let mut prim = KForm::new(dim, k - 1, move |x| {
        let mut p = x.to_vec();
        let mut v = q1.integrate(r0, x[rax], n, |s| {
            p[rax] = s;
            c1(&p)
        })?;
        if let Some(b) = &base1 {
            let bv = b.eval(&x[..rax])?;
            for (i, &t) in lift1.iter().enumerate() {
                v[t] += bv[i];
            }
        }
        Ok(v)
    })?;

    let base_exact = base.map_or(true, |b| b.has_exact_jacobian());
    if a.has_exact_jacobian() && base_exact {
        let (a2, base2) = (a.clone(), base.cloned());
        prim = prim.with_jacobian(move |x| {
            let jac = a2.raw_jacobian().expect("checked");
            let mut p = x.to_vec();
            let mut g = quad.integrate(r0, x[rax], n * dim, |s| {
                p[rax] = s;
                let ga = jac(&p)?;
                let mut r = vec![0.0; n * dim];
                for &(it, is, _, sign) in table.iter() {
                    for j in 0..rax {
                        r[it * dim + j] += sign * ga[is * dim + j];
                    }
                }
                Ok(r)
            })?;
            let at_r = contract(x)?;
            for (it, v) in at_r.iter().enumerate() {
                g[it * dim + rax] = *v;
            }
            if let Some(b) = &base2 {
                let gb = b.exact_jacobian(&x[..rax]).expect("checked")?;
                for (i, &t) in lift.iter().enumerate() {
                    for j in 0..rax {
                        g[t * dim + j] += gb[i * rax + j];
                    }
                }
            }
            Ok(g)
        });
    }

    if k < dim {
        let d = exterior_derivative(&prim, DerivativeScheme::Auto)?;
        for x in probes {
            let (want, got) = match (a.eval(x), d.eval(x)) {
                (Ok(w), Ok(g)) => (w, g),
                (Err(Error::ExcludedPoint { .. }), _) | (_, Err(Error::ExcludedPoint { .. })) => continue,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
            let scale = want.iter().map(|v| v.abs()).fold(1.0, f64::max);
            let residual = want.iter().zip(&got).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / scale;
            if residual > SLICE_RESIDUAL_TOL {
                return Err(Error::MissingSlicePrimitive { point: x.clone(), residual });
            }
        }
    }
    Ok(prim)
}

/// Sampling of the ball used by [`naive_length_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSampling {
    /// Number of concentric spheres at radii `R·j/shells`, j = 1..shells.
    pub shells: usize,
    /// Number of equally spaced values of s in [0, 1], endpoints included.
    pub s_levels: usize,
}

impl Default for BallSampling {
    fn default() -> Self {
        BallSampling { shells: 8, s_levels: 9 }
    }
}

/// Sampled value of `∫_0^1 sup_{|x|≤R, s∈[0,1]} s|x| |ω_t⁻¹(x)| |ω̇_t(sx)| dt`.
///
/// The norm should dominate the Euclidean operator norm for the result to
/// bound arc lengths; both the ℓ¹ row-sum norm of an antisymmetric matrix and
/// the Frobenius norm do.
pub fn naive_length_bound(
    omega: &TimeForm,
    radius: f64,
    sampler: &SphereSampler,
    q: QuadratureSpec,
    ball: BallSampling,
    norm: Norm,
) -> Result<f64> {
    if omega.degree() != 2 {
        return Err(Error::InvalidDegree { degree: omega.degree(), op: "length bound" });
    }
    if sampler.dim() != omega.dim() {
        return Err(Error::DimensionMismatch { expected: omega.dim(), got: sampler.dim() });
    }
    if !(radius > 0.0) || ball.shells == 0 || ball.s_levels < 2 {
        return Err(Error::InvalidParameter("length bound needs radius > 0, shells >= 1, s_levels >= 2".into()));
    }
    let dot = omega.time_derivative();
    let points: Vec<Vec<f64>> = (1..=ball.shells)
        .flat_map(|j| sampler.points(radius * j as f64 / ball.shells as f64))
        .collect();
    let quad = Quadrature::new(q)?;
    quad.integrate_scalar(0.0, 1.0, |t| {
        let (w, wd) = (omega.at(t), dot.at(t));
        let vals: Vec<Result<f64>> = points
            .par_iter()
            .map(|x| {
                let mut best: f64 = 0.0;
                for i in 0..ball.s_levels {
                    let s = i as f64 / (ball.s_levels - 1) as f64;
                    let sx: Vec<f64> = x.iter().map(|v| s * v).collect();
                    best = best.max(s * pointwise_norm(&wd, &sx, norm)?);
                }
                if best == 0.0 {
                    return Ok(0.0);
                }
                let inv = pointwise_inverse_norm(&w, x, norm, DEFAULT_TOL_SINGULAR)
                    .map_err(|e| match e {
                        Error::SingularForm { point, sigma_min, .. } => Error::SingularForm { point, t: Some(t), sigma_min },
                        other => other,
                    })?;
                Ok(norm2(x) * inv * best)
            })
            .collect();
        let mut sup: f64 = 0.0;
        for v in vals {
            sup = sup.max(v?);
        }
        Ok(sup)
    })
}
