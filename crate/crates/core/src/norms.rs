//! Pointwise norms of forms and bivectors, and their suprema over spheres.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::kform::{norm2, two_form_matrix};
use crate::forms::ops::{invert_two_form_matrix, DEFAULT_TOL_SINGULAR};
use crate::forms::KForm;

pub const DEFAULT_SAMPLE_COUNT: usize = 4096;
pub const DEFAULT_SEED: u64 = 0x5eed_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub seed: u64,
    pub count: usize,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec { seed: DEFAULT_SEED, count: DEFAULT_SAMPLE_COUNT }
    }
}

impl SamplerSpec {
    pub fn new(seed: u64, count: usize) -> Self {
        SamplerSpec { seed, count }
    }

    /// Same seed, count doubled `level` times.
    pub fn refined(&self, level: u32) -> Self {
        SamplerSpec { seed: self.seed, count: self.count << level }
    }
}

/// Deterministic points on the unit sphere S^{m-1}.
///
/// A Kronecker sequence with the generalized golden ratio, shifted by a seeded
/// random offset, is mapped to Gaussians by Box–Muller and normalized.
#[derive(Debug, Clone)]
pub struct SphereSampler {
    dim: usize,
    spec: SamplerSpec,
    directions: Vec<Vec<f64>>,
}

fn golden(d: usize) -> f64 {
    // root of x^{d+1} = x + 1
    let mut x: f64 = 2.0;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

impl SphereSampler {
    pub fn new(dim: usize, spec: SamplerSpec) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("sphere sampler needs dim >= 1".into()));
        }
        if spec.count < 2 {
            return Err(Error::InvalidParameter(format!("sample count {} < 2", spec.count)));
        }
        let pairs = dim.div_ceil(2);
        let d = 2 * pairs;
        let g = golden(d);
        let alpha: Vec<f64> = (1..=d).map(|j| g.powi(-(j as i32)).fract()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let shift: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let directions = (0..spec.count)
            .into_par_iter()
            .map(|i| {
                let n = (i + 1) as f64;
                let u: Vec<f64> = (0..d).map(|j| (shift[j] + n * alpha[j]).fract()).collect();
                let mut g = Vec::with_capacity(d);
                for p in 0..pairs {
                    let (u1, u2) = (1.0 - u[2 * p], u[2 * p + 1]);
                    let rad = (-2.0 * u1.max(f64::MIN_POSITIVE).ln()).sqrt();
                    let ang = std::f64::consts::TAU * u2;
                    g.push(rad * ang.cos());
                    g.push(rad * ang.sin());
                }
                g.truncate(dim);
                let n = norm2(&g);
                if n > 0.0 {
                    g.iter_mut().for_each(|v| *v /= n);
                } else {
                    g[0] = 1.0;
                }
                g
            })
            .collect();
        Ok(SphereSampler { dim, spec, directions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spec(&self) -> SamplerSpec {
        self.spec
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn points(&self, radius: f64) -> Vec<Vec<f64>> {
        self.directions.iter().map(|d| d.iter().map(|v| radius * v).collect()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Maximum absolute row sum of the coefficient matrix; `Σ|a_i|` for
    /// 1-forms.
    #[default]
    L1Operator,
    L2Frobenius,
}

/// Radial coordinate and metric used when measuring on spheres.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    /// `r = |x|` and the Euclidean metric.
    #[default]
    Euclidean,
    /// `r = log|x|` and the metric `|x|^{-2} g_euc`, which is the product
    /// metric on `S^{m-1} × R`.
    Cylindrical,
}

impl Chart {
    /// Euclidean radius of the sphere with radial coordinate `r`.
    pub fn euclidean_radius(&self, r: f64) -> f64 {
        match self {
            Chart::Euclidean => r,
            Chart::Cylindrical => r.exp(),
        }
    }

    pub fn radial_coordinate(&self, x: &[f64]) -> f64 {
        match self {
            Chart::Euclidean => norm2(x),
            Chart::Cylindrical => norm2(x).ln(),
        }
    }

    /// Factor converting a Euclidean pointwise norm at `x` into this chart's
    /// metric: `|x|^weight` for cylinders, with weight k on k-forms and -2 on
    /// bivectors.
    pub fn conformal_factor(&self, x: &[f64], weight: i32) -> f64 {
        match self {
            Chart::Euclidean => 1.0,
            Chart::Cylindrical => norm2(x).powi(weight),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Norm {
    pub kind: NormKind,
    pub chart: Chart,
}

impl Norm {
    pub fn l1() -> Self {
        Norm::default()
    }

    pub fn frobenius() -> Self {
        Norm { kind: NormKind::L2Frobenius, chart: Chart::Euclidean }
    }

    pub fn in_chart(mut self, chart: Chart) -> Self {
        self.chart = chart;
        self
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Euclidean pointwise norm of a k-form from its coefficients.
pub fn form_norm(dim: usize, degree: usize, coeffs: &[f64], kind: NormKind) -> f64 {
    match (kind, degree) {
        (_, 0) => coeffs.first().map_or(0.0, |c| c.abs()),
        (NormKind::L1Operator, 2) => matrix_norm(&two_form_matrix(dim, coeffs), kind),
        (NormKind::L1Operator, _) => coeffs.iter().map(|c| c.abs()).sum(),
        (NormKind::L2Frobenius, k) => (factorial(k) * coeffs.iter().map(|c| c * c).sum::<f64>()).sqrt(),
    }
}

pub fn matrix_norm(m: &DMatrix<f64>, kind: NormKind) -> f64 {
    match kind {
        NormKind::L1Operator => m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max),
        NormKind::L2Frobenius => m.norm(),
    }
}

/// Pointwise norm of a form at `x` in the given norm and chart.
pub fn pointwise_norm(a: &KForm, x: &[f64], norm: Norm) -> Result<f64> {
    let c = a.eval(x)?;
    Ok(form_norm(a.dim(), a.degree(), &c, norm.kind) * norm.chart.conformal_factor(x, a.degree() as i32))
}

/// Pointwise norm of the bivector ω⁻¹ at `x`.
pub fn pointwise_inverse_norm(w: &KForm, x: &[f64], norm: Norm, tol_singular: f64) -> Result<f64> {
    let inv = invert_two_form_matrix(w.matrix(x)?, tol_singular, x, None)?;
    Ok(matrix_norm(&inv, norm.kind) * norm.chart.conformal_factor(x, -2))
}

/// Maximum of `f` over the sampled sphere of radial coordinate `r`.
///
/// Evaluation runs in parallel; the result and any error (the first one in
/// sample order) do not depend on the schedule.
pub fn sup_on_sphere(
    r: f64,
    sampler: &SphereSampler,
    chart: Chart,
    f: impl Fn(&[f64]) -> Result<f64> + Sync,
) -> Result<f64> {
    if chart == Chart::Euclidean && !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("sphere radius {r} must be positive")));
    }
    let radius = chart.euclidean_radius(r);
    let values: Vec<Result<f64>> = sampler
        .directions()
        .par_iter()
        .map(|d| {
            let x: Vec<f64> = d.iter().map(|v| radius * v).collect();
            f(&x)
        })
        .collect();
    let mut best: f64 = 0.0;
    for v in values {
        best = best.max(v?);
    }
    Ok(best)
}

fn check_sampler(dim: usize, sampler: &SphereSampler) -> Result<()> {
    if sampler.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: sampler.dim() });
    }
    Ok(())
}

pub fn sup_norm_on_sphere(a: &KForm, r: f64, sampler: &SphereSampler, norm: Norm) -> Result<f64> {
    check_sampler(a.dim(), sampler)?;
    sup_on_sphere(r, sampler, norm.chart, |x| pointwise_norm(a, x, norm))
}

pub fn sup_inverse_norm_on_sphere(w: &KForm, r: f64, sampler: &SphereSampler, norm: Norm) -> Result<f64> {
    check_sampler(w.dim(), sampler)?;
    if w.degree() != 2 {
        return Err(Error::InvalidDegree { degree: w.degree(), op: "inverse norm" });
    }
    sup_on_sphere(r, sampler, norm.chart, |x| pointwise_inverse_norm(w, x, norm, DEFAULT_TOL_SINGULAR))
}

/// Sampled sup norms over a grid of radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub norm_kind: NormKind,
    pub chart: Chart,
    pub sampler: SamplerSpec,
}

fn check_grid(radii: &[f64]) -> Result<()> {
    if radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("radii must be strictly increasing".into()));
    }
    Ok(())
}

pub fn norm_profile(a: &KForm, radii: &[f64], sampler: &SphereSampler, norm: Norm) -> Result<NormProfile> {
    check_grid(radii)?;
    let values = radii.iter().map(|&r| sup_norm_on_sphere(a, r, sampler, norm)).collect::<Result<_>>()?;
    Ok(NormProfile { radii: radii.to_vec(), values, norm_kind: norm.kind, chart: norm.chart, sampler: sampler.spec() })
}

pub fn inverse_norm_profile(w: &KForm, radii: &[f64], sampler: &SphereSampler, norm: Norm) -> Result<NormProfile> {
    check_grid(radii)?;
    let values = radii.iter().map(|&r| sup_inverse_norm_on_sphere(w, r, sampler, norm)).collect::<Result<_>>()?;
    Ok(NormProfile { radii: radii.to_vec(), values, norm_kind: norm.kind, chart: norm.chart, sampler: sampler.spec() })
}
