//! Differential form fields on R^m and their one-parameter families.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;

use super::basis::{binomial, Basis};
use crate::dsl::expr::{build, diff, Node, Var};
use crate::error::{Error, Result};

pub type Field = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type TimeField = Arc<dyn Fn(f64, &[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// Central-difference step used for spatial derivatives at `x`.
pub fn fd_step(x: &[f64]) -> f64 {
    1e-6 * norm2(x).max(1.0)
}

/// Default step for time derivatives by central differences.
pub const TIME_FD_STEP: f64 = 1e-6;

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Central-difference jacobian of a vector-valued map, row-major
/// `[output][axis]`.
pub fn central_jacobian(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let m = x.len();
    let mut xp = x.to_vec();
    let mut cols = Vec::with_capacity(m);
    for j in 0..m {
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        cols.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let n = cols.first().map_or(0, |c| c.len());
    let mut out = vec![0.0; n * m];
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            out[i * m + j] = *v;
        }
    }
    Ok(out)
}

/// Union of two excluded balls centred at the origin.
pub(crate) fn max_excluded(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(p), Some(q)) => Some(p.max(q)),
        (p, q) => p.or(q),
    }
}

fn check_finite(v: &[f64], x: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { point: x.to_vec(), what: what.to_string() })
    }
}

/// Coefficients given as expressions in `t, x1..xm`, with lazily built
/// spatial and time derivatives.
pub struct SymbolicCoeffs {
    dim: usize,
    exprs: Vec<Node>,
    jac: OnceLock<Vec<Node>>,
    dt: OnceLock<Arc<SymbolicCoeffs>>,
}

impl fmt::Debug for SymbolicCoeffs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolicCoeffs").field("dim", &self.dim).field("len", &self.exprs.len()).finish()
    }
}

impl SymbolicCoeffs {
    pub fn new(dim: usize, exprs: Vec<Node>) -> Result<Self> {
        if let Some(e) = exprs.iter().find(|e| e.spatial_extent() > dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: e.spatial_extent() });
        }
        Ok(SymbolicCoeffs { dim, exprs, jac: OnceLock::new(), dt: OnceLock::new() })
    }

    pub fn exprs(&self) -> &[Node] {
        &self.exprs
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.exprs.iter().map(|e| e.eval(t, x)).collect()
    }

    /// Row-major `[coeff][axis]` spatial partial derivatives.
    pub fn jacobian_exprs(&self) -> &[Node] {
        self.jac.get_or_init(|| {
            self.exprs
                .iter()
                .flat_map(|e| (0..self.dim).map(move |j| diff(e, Var::X(j))))
                .collect()
        })
    }

    pub fn jacobian(&self, t: f64, x: &[f64]) -> Vec<f64> {
        self.jacobian_exprs().iter().map(|e| e.eval(t, x)).collect()
    }

    pub fn time_derivative(&self) -> Arc<SymbolicCoeffs> {
        self.dt
            .get_or_init(|| {
                Arc::new(SymbolicCoeffs {
                    dim: self.dim,
                    exprs: self.exprs.iter().map(|e| diff(e, Var::T)).collect(),
                    jac: OnceLock::new(),
                    dt: OnceLock::new(),
                })
            })
            .clone()
    }
}

/// A degree-k form field on R^m: a point maps to its C(m,k) coefficients in
/// lexicographic multi-index order.
#[derive(Clone)]
pub struct KForm {
    dim: usize,
    degree: usize,
    coeff: Field,
    jacobian: Option<Field>,
    symbolic: Option<(Arc<SymbolicCoeffs>, f64)>,
    excluded_radius: Option<f64>,
}

impl fmt::Debug for KForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KForm")
            .field("dim", &self.dim)
            .field("degree", &self.degree)
            .field("exact_jacobian", &self.jacobian.is_some())
            .field("symbolic", &self.symbolic.is_some())
            .finish()
    }
}

fn check_shape(dim: usize, degree: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if degree > dim {
        return Err(Error::DegreeOverflow { degree, dim });
    }
    Ok(())
}

impl KForm {
    pub fn new(
        dim: usize,
        degree: usize,
        f: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Result<Self> {
        check_shape(dim, degree)?;
        Ok(KForm { dim, degree, coeff: Arc::new(f), jacobian: None, symbolic: None, excluded_radius: None })
    }

    /// Like [`KForm::new`] for infallible coefficient maps.
    pub fn from_fn(
        dim: usize,
        degree: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(dim, degree, move |x| Ok(f(x)))
    }

    /// Attach an exact jacobian, row-major `[coeff][axis]`.
    pub fn with_jacobian(mut self, j: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    /// Declare the closed ball `|x| <= radius` as excluded (singular set).
    pub fn with_excluded_ball(mut self, radius: f64) -> Self {
        self.excluded_radius = Some(radius);
        self
    }

    pub fn from_symbolic(dim: usize, degree: usize, sym: Arc<SymbolicCoeffs>, t: f64) -> Result<Self> {
        check_shape(dim, degree)?;
        let n = binomial(dim, degree);
        if sym.exprs().len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sym.exprs().len() });
        }
        let (s1, s2) = (sym.clone(), sym.clone());
        Ok(KForm {
            dim,
            degree,
            coeff: Arc::new(move |x| Ok(s1.eval(t, x))),
            jacobian: Some(Arc::new(move |x| Ok(s2.jacobian(t, x)))),
            symbolic: Some((sym, t)),
            excluded_radius: None,
        })
    }

    pub fn from_exprs(dim: usize, degree: usize, exprs: Vec<Node>, t: f64) -> Result<Self> {
        Self::from_symbolic(dim, degree, Arc::new(SymbolicCoeffs::new(dim, exprs)?), t)
    }

    pub fn constant(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        Self::from_exprs(dim, degree, coeffs.into_iter().map(build::num).collect(), 0.0)
    }

    pub fn zero(dim: usize, degree: usize) -> Result<Self> {
        Self::constant(dim, degree, vec![0.0; binomial(dim, degree)])
    }

    /// Constant basis form `dx_{i1} ∧ … ∧ dx_{ik}` (zero-based, any order).
    pub fn basis_form(dim: usize, axes: &[usize]) -> Result<Self> {
        let mut sorted = axes.to_vec();
        let basis = Basis::new(dim, axes.len());
        let mut c = vec![0.0; basis.len()];
        if let Some(sign) = super::basis::sort_with_sign(&mut sorted) {
            let r = basis
                .rank(&sorted)
                .ok_or_else(|| Error::Index(format!("axes {axes:?} out of range for dimension {dim}")))?;
            c[r] = sign;
        }
        Self::constant(dim, axes.len(), c)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        binomial(self.dim, self.degree)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn excluded_radius(&self) -> Option<f64> {
        self.excluded_radius
    }

    pub fn symbolic(&self) -> Option<(&Arc<SymbolicCoeffs>, f64)> {
        self.symbolic.as_ref().map(|(s, t)| (s, *t))
    }

    pub fn has_exact_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if let Some(r) = self.excluded_radius {
            if norm2(x) <= r {
                return Err(Error::ExcludedPoint { point: x.to_vec() });
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let v = (self.coeff)(x)?;
        if v.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: v.len() });
        }
        check_finite(&v, x, "form coefficient")?;
        Ok(v)
    }

    /// Exact jacobian if one is attached.
    pub fn exact_jacobian(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        self.jacobian.as_ref().map(|j| {
            self.check_point(x)?;
            let v = j(x)?;
            check_finite(&v, x, "form jacobian")?;
            Ok(v)
        })
    }

    /// Central-difference jacobian with step `h` (default [`fd_step`]).
    pub fn fd_jacobian(&self, x: &[f64], h: Option<f64>) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let h = h.unwrap_or_else(|| fd_step(x));
        let v = central_jacobian(&|p| self.eval(p), x, h)?;
        check_finite(&v, x, "finite-difference jacobian")?;
        Ok(v)
    }

    /// Exact jacobian when available, central differences otherwise.
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.exact_jacobian(x) {
            Some(j) => j,
            None => self.fd_jacobian(x, None),
        }
    }

    /// Antisymmetric coefficient matrix `W_ij = a(e_i, e_j)` of a 2-form.
    pub fn matrix(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        if self.degree != 2 {
            return Err(Error::InvalidDegree { degree: self.degree, op: "coefficient matrix" });
        }
        Ok(two_form_matrix(self.dim, &self.eval(x)?))
    }

    /// `Σ c_i a_i` of forms with matching shape.
    pub fn linear_combination(terms: &[(f64, &KForm)]) -> Result<KForm> {
        let first = terms.first().ok_or_else(|| Error::InvalidParameter("empty combination".into()))?.1;
        let (dim, degree) = (first.dim, first.degree);
        for (_, f) in terms {
            if f.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.dim });
            }
            if f.degree != degree {
                return Err(Error::InvalidDegree { degree: f.degree, op: "linear combination" });
            }
        }
        let excluded = terms.iter().filter_map(|(_, f)| f.excluded_radius).reduce(f64::max);
        let t0 = first.symbolic.as_ref().map(|(_, t)| *t);
        let all_symbolic = terms.iter().all(|(_, f)| f.symbolic.as_ref().map(|(_, t)| Some(*t)) == Some(t0));
        let mut out = if all_symbolic {
            let n = binomial(dim, degree);
            let exprs = (0..n)
                .map(|i| {
                    build::sum(terms.iter().map(|(c, f)| {
                        build::mul(build::num(*c), f.symbolic.as_ref().unwrap().0.exprs()[i].clone())
                    }))
                })
                .collect();
            KForm::from_exprs(dim, degree, exprs, t0.unwrap_or(0.0))?
        } else {
            let parts: Vec<(f64, KForm)> = terms.iter().map(|(c, f)| (*c, (*f).clone())).collect();
            let jac_parts = parts.clone();
            let mut k = KForm::new(dim, degree, move |x| {
                let mut acc = vec![0.0; binomial(dim, degree)];
                for (c, f) in &parts {
                    for (a, v) in acc.iter_mut().zip((f.coeff)(x)?) {
                        *a += c * v;
                    }
                }
                Ok(acc)
            })?;
            if terms.iter().all(|(_, f)| f.jacobian.is_some()) {
                k = k.with_jacobian(move |x| {
                    let mut acc = vec![0.0; binomial(dim, degree) * dim];
                    for (c, f) in &jac_parts {
                        for (a, v) in acc.iter_mut().zip((f.jacobian.as_ref().unwrap())(x)?) {
                            *a += c * v;
                        }
                    }
                    Ok(acc)
                });
            }
            k
        };
        out.excluded_radius = excluded;
        Ok(out)
    }

    pub fn add(&self, other: &KForm) -> Result<KForm> {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    pub fn sub(&self, other: &KForm) -> Result<KForm> {
        Self::linear_combination(&[(1.0, self), (-1.0, other)])
    }

    pub fn scale(&self, s: f64) -> Result<KForm> {
        Self::linear_combination(&[(s, self)])
    }

    pub(crate) fn raw_coeff(&self) -> &Field {
        &self.coeff
    }

    pub(crate) fn raw_jacobian(&self) -> Option<&Field> {
        self.jacobian.as_ref()
    }
}

pub fn two_form_matrix(dim: usize, coeffs: &[f64]) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(dim, dim);
    let mut r = 0;
    for i in 0..dim {
        for j in (i + 1)..dim {
            w[(i, j)] = coeffs[r];
            w[(j, i)] = -coeffs[r];
            r += 1;
        }
    }
    w
}

pub fn matrix_to_two_form(w: &DMatrix<f64>) -> Vec<f64> {
    let m = w.nrows();
    let mut out = Vec::with_capacity(binomial(m, 2));
    for i in 0..m {
        for j in (i + 1)..m {
            out.push(w[(i, j)]);
        }
    }
    out
}

/// A one-parameter family of k-forms over `t ∈ [0, 1]`.
#[derive(Clone)]
pub struct TimeForm {
    dim: usize,
    degree: usize,
    coeff: TimeField,
    jacobian: Option<TimeField>,
    dot: Option<Arc<TimeForm>>,
    symbolic: Option<Arc<SymbolicCoeffs>>,
    excluded_radius: Option<f64>,
    time_step: f64,
}

impl fmt::Debug for TimeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeForm")
            .field("dim", &self.dim)
            .field("degree", &self.degree)
            .field("symbolic", &self.symbolic.is_some())
            .field("explicit_derivative", &self.dot.is_some())
            .finish()
    }
}

impl TimeForm {
    pub fn new(
        dim: usize,
        degree: usize,
        f: impl Fn(f64, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Result<Self> {
        check_shape(dim, degree)?;
        Ok(TimeForm {
            dim,
            degree,
            coeff: Arc::new(f),
            jacobian: None,
            dot: None,
            symbolic: None,
            excluded_radius: None,
            time_step: TIME_FD_STEP,
        })
    }

    pub fn with_jacobian(mut self, j: impl Fn(f64, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn with_time_derivative(mut self, dot: TimeForm) -> Self {
        self.dot = Some(Arc::new(dot));
        self
    }

    pub fn with_excluded_ball(mut self, radius: f64) -> Self {
        self.excluded_radius = Some(radius);
        self
    }

    /// Step for central differences in t when no derivative is supplied.
    pub fn with_time_step(mut self, h: f64) -> Self {
        self.time_step = h;
        self
    }

    pub fn from_symbolic(dim: usize, degree: usize, sym: Arc<SymbolicCoeffs>) -> Result<Self> {
        check_shape(dim, degree)?;
        let n = binomial(dim, degree);
        if sym.exprs().len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sym.exprs().len() });
        }
        let (s1, s2) = (sym.clone(), sym.clone());
        Ok(TimeForm {
            dim,
            degree,
            coeff: Arc::new(move |t, x| Ok(s1.eval(t, x))),
            jacobian: Some(Arc::new(move |t, x| Ok(s2.jacobian(t, x)))),
            dot: None,
            symbolic: Some(sym),
            excluded_radius: None,
            time_step: TIME_FD_STEP,
        })
    }

    pub fn from_exprs(dim: usize, degree: usize, exprs: Vec<Node>) -> Result<Self> {
        Self::from_symbolic(dim, degree, Arc::new(SymbolicCoeffs::new(dim, exprs)?))
    }

    /// The constant family `ω_t = ω`.
    pub fn constant_in_time(form: &KForm) -> Result<Self> {
        Self::affine(form, &KForm::zero(form.dim, form.degree)?)
    }

    /// `ω_t = base + t·slope`, with derivative `slope`.
    pub fn affine(base: &KForm, slope: &KForm) -> Result<Self> {
        if base.dim != slope.dim {
            return Err(Error::DimensionMismatch { expected: base.dim, got: slope.dim });
        }
        if base.degree != slope.degree {
            return Err(Error::InvalidDegree { degree: slope.degree, op: "affine family" });
        }
        let (b, s) = (base.clone(), slope.clone());
        let mut fam = TimeForm::new(base.dim, base.degree, move |t, x| {
            let (bv, sv) = (b.eval(x)?, s.eval(x)?);
            Ok(bv.iter().zip(&sv).map(|(p, q)| p + t * q).collect())
        })?;
        if base.has_exact_jacobian() && slope.has_exact_jacobian() {
            let (b, s) = (base.clone(), slope.clone());
            fam = fam.with_jacobian(move |t, x| {
                let (bj, sj) = (b.exact_jacobian(x).unwrap()?, s.exact_jacobian(x).unwrap()?);
                Ok(bj.iter().zip(&sj).map(|(p, q)| p + t * q).collect())
            });
        }
        let s = slope.clone();
        let mut dot = TimeForm::new(base.dim, base.degree, move |_, x| s.eval(x))?;
        if slope.has_exact_jacobian() {
            let s = slope.clone();
            dot = dot.with_jacobian(move |_, x| s.exact_jacobian(x).unwrap());
        }
        let zero = KForm::zero(base.dim, base.degree)?;
        dot = dot.with_time_derivative(TimeForm::new(base.dim, base.degree, move |_, x| zero.eval(x))?);
        fam.excluded_radius = max_excluded(base.excluded_radius, slope.excluded_radius);
        dot.excluded_radius = slope.excluded_radius;
        Ok(fam.with_time_derivative(dot))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        binomial(self.dim, self.degree)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn symbolic(&self) -> Option<&Arc<SymbolicCoeffs>> {
        self.symbolic.as_ref()
    }

    pub fn excluded_radius(&self) -> Option<f64> {
        self.excluded_radius
    }

    pub fn has_exact_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// True when ω̇ is known symbolically or was supplied explicitly.
    pub fn has_explicit_derivative(&self) -> bool {
        self.symbolic.is_some() || self.dot.is_some()
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.at(t).eval(x)
    }

    /// The form `ω_t` at a fixed time.
    pub fn at(&self, t: f64) -> KForm {
        if let Some(sym) = &self.symbolic {
            let mut k = KForm::from_symbolic(self.dim, self.degree, sym.clone(), t).expect("validated shape");
            k.excluded_radius = self.excluded_radius;
            return k;
        }
        let c = self.coeff.clone();
        let mut k = KForm {
            dim: self.dim,
            degree: self.degree,
            coeff: Arc::new(move |x| c(t, x)),
            jacobian: None,
            symbolic: None,
            excluded_radius: self.excluded_radius,
        };
        if let Some(j) = &self.jacobian {
            let j = j.clone();
            k.jacobian = Some(Arc::new(move |x| j(t, x)));
        }
        k
    }

    /// ω̇: symbolic when available, then an explicitly supplied derivative,
    /// then central differences in t.
    pub fn time_derivative(&self) -> TimeForm {
        if let Some(sym) = &self.symbolic {
            let mut d = TimeForm::from_symbolic(self.dim, self.degree, sym.time_derivative()).expect("validated shape");
            d.excluded_radius = self.excluded_radius;
            return d;
        }
        if let Some(dot) = &self.dot {
            return (**dot).clone();
        }
        let (c, h) = (self.coeff.clone(), self.time_step);
        let mut d = TimeForm {
            dim: self.dim,
            degree: self.degree,
            coeff: Arc::new(move |t, x| {
                let (p, m) = (c(t + h, x)?, c(t - h, x)?);
                Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            }),
            jacobian: None,
            dot: None,
            symbolic: None,
            excluded_radius: self.excluded_radius,
            time_step: self.time_step,
        };
        if let Some(j) = &self.jacobian {
            let j = j.clone();
            d.jacobian = Some(Arc::new(move |t, x| {
                let (p, m) = (j(t + h, x)?, j(t - h, x)?);
                Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect())
            }));
        }
        d
    }
}
