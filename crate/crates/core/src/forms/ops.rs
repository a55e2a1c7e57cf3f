//! Wedge product, exterior derivative, interior product, pullback and the
//! inverse of a nondegenerate 2-form.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::basis::{binomial, derivative_table, interior_table, wedge_table, Basis};
use super::fields::{SmoothMap, VectorField};
use super::kform::{max_excluded, KForm};
use crate::dsl::expr::{build, diff, Var};
use crate::error::{Error, Result};

/// How partial derivatives are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeScheme {
    /// Symbolic or attached jacobian; an error if neither exists.
    Exact,
    /// Central differences with a fixed step.
    CentralFd(f64),
    /// Exact when available, else central differences with the default step.
    Auto,
}

/// Default threshold on the smallest singular value below which a 2-form is
/// treated as degenerate.
pub const DEFAULT_TOL_SINGULAR: f64 = 1e-9;

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        Err(Error::DimensionMismatch { expected: a, got: b })
    } else {
        Ok(())
    }
}

pub fn wedge(a: &KForm, b: &KForm) -> Result<KForm> {
    same_dim(a.dim(), b.dim())?;
    let (dim, ka, kb) = (a.dim(), a.degree(), b.degree());
    if ka + kb > dim {
        return Err(Error::DegreeOverflow { degree: ka + kb, dim });
    }
    let table = Arc::new(wedge_table(dim, ka, kb));
    let n = binomial(dim, ka + kb);
    let excluded = max_excluded(a.excluded_radius(), b.excluded_radius());

    if let (Some((sa, ta)), Some((sb, tb))) = (a.symbolic(), b.symbolic()) {
        if ta == tb {
            let mut terms: Vec<Vec<_>> = vec![Vec::new(); n];
            for &(it, ia, ib, sign) in table.iter() {
                let p = build::mul(sa.exprs()[ia].clone(), sb.exprs()[ib].clone());
                terms[it].push(build::mul(build::num(sign), p));
            }
            let exprs = terms.into_iter().map(build::sum).collect();
            let k = KForm::from_exprs(dim, ka + kb, exprs, ta)?;
            return Ok(match excluded {
                Some(r) => k.with_excluded_ball(r),
                None => k,
            });
        }
    }

    let (a1, b1, t1) = (a.clone(), b.clone(), table.clone());
    let mut out = KForm::new(dim, ka + kb, move |x| {
        let (va, vb) = (a1.raw_coeff()(x)?, b1.raw_coeff()(x)?);
        let mut c = vec![0.0; n];
        for &(it, ia, ib, sign) in t1.iter() {
            c[it] += sign * va[ia] * vb[ib];
        }
        Ok(c)
    })?;
    if let (Some(ja), Some(jb)) = (a.raw_jacobian().cloned(), b.raw_jacobian().cloned()) {
        let (a2, b2, t2) = (a.clone(), b.clone(), table);
        out = out.with_jacobian(move |x| {
            let (va, vb) = (a2.raw_coeff()(x)?, b2.raw_coeff()(x)?);
            let (ga, gb) = (ja(x)?, jb(x)?);
            let mut g = vec![0.0; n * dim];
            for &(it, ia, ib, sign) in t2.iter() {
                for j in 0..dim {
                    g[it * dim + j] += sign * (ga[ia * dim + j] * vb[ib] + va[ia] * gb[ib * dim + j]);
                }
            }
            Ok(g)
        });
    }
    Ok(match excluded {
        Some(r) => out.with_excluded_ball(r),
        None => out,
    })
}

pub fn exterior_derivative(a: &KForm, scheme: DerivativeScheme) -> Result<KForm> {
    let (dim, k) = (a.dim(), a.degree());
    if k >= dim {
        return Err(Error::DegreeOverflow { degree: k + 1, dim });
    }
    let table = Arc::new(derivative_table(dim, k));
    let n = binomial(dim, k + 1);

    if matches!(scheme, DerivativeScheme::Exact | DerivativeScheme::Auto) {
        if let Some((sym, t)) = a.symbolic() {
            let mut terms: Vec<Vec<_>> = vec![Vec::new(); n];
            for &(it, is, axis, sign) in table.iter() {
                terms[it].push(build::mul(build::num(sign), diff(&sym.exprs()[is], Var::X(axis))));
            }
            let d = KForm::from_exprs(dim, k + 1, terms.into_iter().map(build::sum).collect(), t)?;
            return Ok(match a.excluded_radius() {
                Some(r) => d.with_excluded_ball(r),
                None => d,
            });
        }
    }
    let assemble = move |g: &[f64]| {
        let mut c = vec![0.0; n];
        for &(it, is, axis, sign) in table.iter() {
            c[it] += sign * g[is * dim + axis];
        }
        c
    };
    let a1 = a.clone();
    let d = match scheme {
        DerivativeScheme::Exact => {
            if !a.has_exact_jacobian() {
                return Err(Error::MissingJacobian);
            }
            KForm::new(dim, k + 1, move |x| Ok(assemble(&a1.exact_jacobian(x).unwrap()?)))?
        }
        DerivativeScheme::CentralFd(h) => KForm::new(dim, k + 1, move |x| Ok(assemble(&a1.fd_jacobian(x, Some(h))?)))?,
        DerivativeScheme::Auto => KForm::new(dim, k + 1, move |x| Ok(assemble(&a1.jacobian(x)?)))?,
    };
    Ok(match a.excluded_radius() {
        Some(r) => d.with_excluded_ball(r),
        None => d,
    })
}

/// `X ⌟ a`, contraction in the first slot.
pub fn interior_product(field: &VectorField, a: &KForm) -> Result<KForm> {
    same_dim(a.dim(), field.dim())?;
    let (dim, k) = (a.dim(), a.degree());
    if k == 0 {
        return Err(Error::InvalidDegree { degree: 0, op: "interior product" });
    }
    let table = Arc::new(interior_table(dim, k));
    let n = binomial(dim, k - 1);
    let (f1, a1, t1) = (field.clone(), a.clone(), table.clone());
    let mut out = KForm::new(dim, k - 1, move |x| {
        let (v, c) = (f1.eval(x)?, a1.raw_coeff()(x)?);
        let mut r = vec![0.0; n];
        for &(it, is, i, sign) in t1.iter() {
            r[it] += sign * v[i] * c[is];
        }
        Ok(r)
    })?;
    if field.has_exact_jacobian() && a.has_exact_jacobian() {
        let (f2, a2) = (field.clone(), a.clone());
        out = out.with_jacobian(move |x| {
            let (v, c) = (f2.eval(x)?, a2.raw_coeff()(x)?);
            let (gv, gc) = (f2.exact_jacobian(x).unwrap()?, a2.raw_jacobian().unwrap()(x)?);
            let mut g = vec![0.0; n * dim];
            for &(it, is, i, sign) in table.iter() {
                for j in 0..dim {
                    g[it * dim + j] += sign * (gv[i * dim + j] * c[is] + v[i] * gc[is * dim + j]);
                }
            }
            Ok(g)
        });
    }
    Ok(match a.excluded_radius() {
        Some(r) => out.with_excluded_ball(r),
        None => out,
    })
}

fn small_det(m: &mut [f64], k: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..k {
        let p = (c..k).max_by(|&i, &j| m[i * k + c].abs().total_cmp(&m[j * k + c].abs())).unwrap();
        if m[p * k + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for j in 0..k {
                m.swap(p * k + j, c * k + j);
            }
            det = -det;
        }
        let piv = m[c * k + c];
        det *= piv;
        for r in (c + 1)..k {
            let f = m[r * k + c] / piv;
            for j in c..k {
                m[r * k + j] -= f * m[c * k + j];
            }
        }
    }
    det
}

/// Pullback of `a` at `x` given `φ(x)` values `a(φ(x))` and the jacobian of φ
/// at `x`: `(φ*a)_I = Σ_J a_J det(Jφ[J, I])`.
pub fn pullback_coeffs(basis: &Basis, values: &[f64], jac: &[f64]) -> Vec<f64> {
    let (dim, k) = (basis.dim(), basis.degree());
    let mut out = vec![0.0; basis.len()];
    let mut minor = vec![0.0; k * k];
    for (ii, cols) in basis.iter().enumerate() {
        let mut acc = 0.0;
        for (jj, rows) in basis.iter().enumerate() {
            if values[jj] == 0.0 {
                continue;
            }
            for (r, &row) in rows.iter().enumerate() {
                for (c, &col) in cols.iter().enumerate() {
                    minor[r * k + c] = jac[row * dim + col];
                }
            }
            acc += values[jj] * small_det(&mut minor, k);
        }
        out[ii] = acc;
    }
    out
}

/// `(φ*a)(x)(v_1, …, v_k) = a(φ(x))(Jv_1, …, Jv_k)`.
pub fn pullback(map: &SmoothMap, a: &KForm) -> Result<KForm> {
    same_dim(a.dim(), map.dim())?;
    let (dim, k) = (a.dim(), a.degree());
    let basis = Arc::new(Basis::new(dim, k));
    let (m1, a1) = (map.clone(), a.clone());
    KForm::new(dim, k, move |x| {
        let y = m1.eval(x)?;
        let values = a1.eval(&y)?;
        let jac = m1.jacobian(x)?;
        Ok(pullback_coeffs(&basis, &values, &jac))
    })
}

pub fn smallest_singular_value(w: &DMatrix<f64>) -> f64 {
    w.clone().singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Inverse of the antisymmetric coefficient matrix, after a degeneracy check
/// on the smallest singular value.
pub fn invert_two_form_matrix(w: DMatrix<f64>, tol_singular: f64, x: &[f64], t: Option<f64>) -> Result<DMatrix<f64>> {
    let sigma_min = smallest_singular_value(&w);
    if !(sigma_min >= tol_singular) {
        return Err(Error::SingularForm { point: x.to_vec(), t, sigma_min });
    }
    w.try_inverse().ok_or(Error::SingularForm { point: x.to_vec(), t, sigma_min })
}

/// Matrix of the bivector ω⁻¹ at `x`: the inverse `W⁻¹` of the coefficient
/// matrix `W_ij = ω(e_i, e_j)`.
///
/// Sign convention: with `(X⌟ω)_j = Σ_i X_i W_ij`, the vector `X = W⁻¹σ`
/// solves `X⌟ω = -σ`.
pub fn two_form_inverse(a: &KForm, x: &[f64], tol_singular: f64) -> Result<DMatrix<f64>> {
    if a.degree() != 2 {
        return Err(Error::InvalidDegree { degree: a.degree(), op: "two-form inverse" });
    }
    if a.dim() % 2 != 0 {
        return Err(Error::InvalidParameter(format!("2-form on odd dimension {} is never invertible", a.dim())));
    }
    invert_two_form_matrix(a.matrix(x)?, tol_singular, x, None)
}

/// Residual `|W W⁻¹ - I|_max`, used by the invariant tests.
pub fn inverse_residual(w: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    let n = w.nrows();
    let p = w * inv;
    (p - DMatrix::<f64>::identity(n, n)).iter().map(|v| v.abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dx(dim: usize, axes: &[usize]) -> KForm {
        KForm::basis_form(dim, axes).unwrap()
    }

    #[test]
    fn wedge_basics() {
        let d1 = dx(4, &[0]);
        assert!(wedge(&d1, &d1).unwrap().eval(&[0.0; 4]).unwrap().iter().all(|v| *v == 0.0));
        let s = dx(4, &[1]).add(&dx(4, &[2])).unwrap();
        let w = wedge(&d1, &s).unwrap().eval(&[0.0; 4]).unwrap();
        assert_eq!(w, vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

        let a = KForm::from_fn(4, 1, |x| vec![0.0, x[0], 0.0, 0.0]).unwrap();
        let b = KForm::from_fn(4, 1, |x| vec![0.0, 0.0, 0.0, x[2]]).unwrap();
        let w = wedge(&a, &b).unwrap().eval(&[1.0, 0.0, 2.0, 0.0]).unwrap();
        let basis = Basis::new(4, 2);
        assert_eq!(w[basis.rank(&[1, 3]).unwrap()], 2.0);
        assert_eq!(w.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn wedge_errors() {
        let a = dx(3, &[0, 1]);
        assert!(matches!(wedge(&a, &a), Err(Error::DegreeOverflow { .. })));
        assert!(matches!(wedge(&dx(3, &[0]), &dx(4, &[0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn derivative_examples() {
        let a = KForm::from_exprs(4, 1, vec![build::num(0.0), build::x(0), build::num(0.0), build::num(0.0)], 0.0).unwrap();
        let d = exterior_derivative(&a, DerivativeScheme::Exact).unwrap();
        assert_eq!(d.eval(&[3.0, 1.0, 2.0, 5.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let c = KForm::constant(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let dc = exterior_derivative(&c, DerivativeScheme::Exact).unwrap();
        assert!(dc.eval(&[0.1, 0.2, 0.3, 0.4]).unwrap().iter().all(|v| *v == 0.0));

        // d(½(x1 dx2 − x2 dx1)) = dx1∧dx2, exactly and by central differences.
        let half = KForm::from_fn(4, 1, |x| vec![-0.5 * x[1], 0.5 * x[0], 0.0, 0.0]).unwrap();
        let fd = exterior_derivative(&half, DerivativeScheme::CentralFd(1e-5)).unwrap();
        let v = fd.eval(&[0.3, -2.0, 1.0, 4.0]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-9 && v[1..].iter().all(|c| c.abs() < 1e-9));
        assert!(matches!(exterior_derivative(&half, DerivativeScheme::Exact), Err(Error::MissingJacobian)));
    }

    #[test]
    fn interior_examples() {
        let w = dx(4, &[0, 1]);
        let e1 = VectorField::coordinate(4, 0);
        assert_eq!(interior_product(&e1, &w).unwrap().eval(&[0.0; 4]).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        let e2 = VectorField::coordinate(4, 1);
        assert_eq!(interior_product(&e2, &w).unwrap().eval(&[0.0; 4]).unwrap(), vec![-1.0, 0.0, 0.0, 0.0]);
        let e = VectorField::euler(4);
        let (a, b) = (1.5, -0.5);
        assert_eq!(interior_product(&e, &w).unwrap().eval(&[a, b, 0.0, 0.0]).unwrap(), vec![-b, a, 0.0, 0.0]);
        assert!(matches!(
            interior_product(&e, &KForm::constant(4, 0, vec![1.0]).unwrap()),
            Err(Error::InvalidDegree { .. })
        ));
    }

    #[test]
    fn pullback_examples() {
        let w = dx(4, &[0, 1]);
        let scaled = pullback(&SmoothMap::scaling(4, 3.0), &w).unwrap();
        assert_eq!(scaled.eval(&[1.0, 2.0, 3.0, 4.0]).unwrap()[0], 9.0);
        let same = pullback(&SmoothMap::identity(4), &w).unwrap();
        assert_eq!(same.eval(&[1.0, 2.0, 3.0, 4.0]).unwrap(), w.eval(&[0.0; 4]).unwrap());
    }

    #[test]
    fn inverse_examples() {
        let w0 = KForm::constant(4, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let inv = two_form_inverse(&w0, &[0.0; 4], DEFAULT_TOL_SINGULAR).unwrap();
        assert_eq!(inv[(0, 1)], -1.0);
        assert_eq!(inv[(1, 0)], 1.0);
        assert_eq!(inv[(2, 3)], -1.0);
        let shrink = KForm::constant(4, 2, vec![2.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let inv = two_form_inverse(&shrink, &[0.0; 4], DEFAULT_TOL_SINGULAR).unwrap();
        assert_eq!(inv[(0, 1)], -0.5);
        assert_eq!(inv[(1, 0)], 0.5);
        let degenerate = dx(4, &[0, 1]);
        assert!(matches!(two_form_inverse(&degenerate, &[0.0; 4], DEFAULT_TOL_SINGULAR), Err(Error::SingularForm { .. })));
        assert!(matches!(two_form_inverse(&dx(3, &[0, 1]), &[0.0; 3], 1e-9), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn determinant_helper() {
        let mut m = vec![0.0, 2.0, 1.0, 3.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        assert!((small_det(&mut m, 3) - (-4.0)).abs() < 1e-14);
    }
}
