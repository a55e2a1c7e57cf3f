//! Moser vector fields, their flows with transported jacobians, and numerical
//! certification of `φ_t*ω_t = ω_0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::kform::{central_jacobian, fd_step, norm2, TimeField};
use crate::forms::ops::{exterior_derivative, invert_two_form_matrix, DerivativeScheme, DEFAULT_TOL_SINGULAR};
use crate::forms::TimeForm;
use crate::norms::{matrix_norm, NormKind};

type Jet = Arc<dyn Fn(f64, &[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync>;

/// A time-dependent vector field, optionally with an exact spatial jacobian
/// (row-major `[component][axis]`).
#[derive(Clone)]
pub struct TimeVectorField {
    dim: usize,
    eval: TimeField,
    jet: Option<Jet>,
}

impl fmt::Debug for TimeVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeVectorField").field("dim", &self.dim).field("exact_jacobian", &self.jet.is_some()).finish()
    }
}

impl TimeVectorField {
    pub fn new(dim: usize, f: impl Fn(f64, &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static) -> Self {
        TimeVectorField { dim, eval: Arc::new(f), jet: None }
    }

    /// Attach a function returning the value and the jacobian together.
    pub fn with_jet(mut self, j: impl Fn(f64, &[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Send + Sync + 'static) -> Self {
        self.jet = Some(Arc::new(j));
        self
    }

    pub fn zero(dim: usize) -> Self {
        TimeVectorField::new(dim, move |_, _| Ok(vec![0.0; dim])).with_jet(move |_, _| Ok((vec![0.0; dim], vec![0.0; dim * dim])))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_exact_jacobian(&self) -> bool {
        self.jet.is_some()
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let v = (self.eval)(t, x)?;
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { point: x.to_vec(), what: format!("vector field at t={t}") });
        }
        Ok(v)
    }

    /// Value and jacobian, exact when available, else central differences.
    pub fn eval_with_jacobian(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (v, j) = match &self.jet {
            Some(jet) => jet(t, x)?,
            None => (self.eval(t, x)?, central_jacobian(&|p| self.eval(t, p), x, fd_step(x))?),
        };
        if !v.iter().chain(&j).all(|c| c.is_finite()) {
            return Err(Error::NonFinite { point: x.to_vec(), what: format!("vector field jet at t={t}") });
        }
        Ok((v, j))
    }
}

fn check_family(omega: &TimeForm, sigma: &TimeForm) -> Result<()> {
    if omega.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: omega.dim(), got: sigma.dim() });
    }
    if omega.degree() != 2 {
        return Err(Error::InvalidDegree { degree: omega.degree(), op: "Moser field (omega)" });
    }
    if sigma.degree() != 1 {
        return Err(Error::InvalidDegree { degree: sigma.degree(), op: "Moser field (sigma)" });
    }
    if omega.dim() % 2 != 0 {
        return Err(Error::InvalidParameter(format!("symplectic forms need even dimension, got {}", omega.dim())));
    }
    Ok(())
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::SingularForm { point, sigma_min, .. } => Error::SingularForm { point, t: Some(t), sigma_min },
        other => other,
    }
}

/// `X_t = ω_t⁻¹σ_t`, the solution of `σ_t + X_t ⌟ ω_t = 0`.
///
/// With exact jacobians on both families, `DX = W⁻¹(∂σ - ∂W·X)`.
pub fn build_moser_field(omega: &TimeForm, sigma: &TimeForm) -> Result<TimeVectorField> {
    check_family(omega, sigma)?;
    let dim = omega.dim();
    let (w1, s1) = (omega.clone(), sigma.clone());
    let solve = move |t: f64, x: &[f64]| -> Result<(DMatrix<f64>, Vec<f64>)> {
        let (w, s) = (w1.at(t), s1.at(t));
        let inv = invert_two_form_matrix(w.matrix(x)?, DEFAULT_TOL_SINGULAR, x, Some(t)).map_err(|e| with_time(e, t))?;
        let x_vec = &inv * DVector::from_column_slice(&s.eval(x)?);
        Ok((inv, x_vec.as_slice().to_vec()))
    };
    let solve = Arc::new(solve);
    let s2 = solve.clone();
    let mut field = TimeVectorField::new(dim, move |t, x| Ok(s2(t, x)?.1));
    if omega.has_exact_jacobian() && sigma.has_exact_jacobian() {
        let (w2, sg2) = (omega.clone(), sigma.clone());
        let basis = crate::forms::Basis::new(dim, 2);
        field = field.with_jet(move |t, x| {
            let (inv, v) = solve(t, x)?;
            let gw = w2.at(t).exact_jacobian(x).expect("checked")?;
            let gs = sg2.at(t).exact_jacobian(x).expect("checked")?;
            let mut jac = vec![0.0; dim * dim];
            let mut rhs = DVector::zeros(dim);
            for k in 0..dim {
                for i in 0..dim {
                    rhs[i] = gs[i * dim + k];
                }
                for (c, idx) in basis.iter().enumerate() {
                    let d = gw[c * dim + k];
                    if d != 0.0 {
                        let (i, j) = (idx[0], idx[1]);
                        rhs[i] -= d * v[j];
                        rhs[j] += d * v[i];
                    }
                }
                let col = &inv * &rhs;
                for i in 0..dim {
                    jac[i * dim + k] = col[i];
                }
            }
            Ok((v, jac))
        });
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub escape_radius: f64,
    pub min_step: f64,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec { rel_tol: 1e-9, abs_tol: 1e-11, max_steps: 200_000, escape_radius: 1e6, min_step: 1e-12 }
    }
}

impl IntegratorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("integrator tolerances must be positive".into()));
        }
        if !(self.escape_radius > 0.0) || !(self.min_step > 0.0) || self.max_steps == 0 {
            return Err(Error::InvalidParameter("escape_radius, min_step and max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Both tolerances divided by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        IntegratorSpec { rel_tol: self.rel_tol / factor, abs_tol: self.abs_tol / factor, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStatus {
    Completed,
    Escaped,
    StepUnderflow,
}

/// One integral curve with its transported jacobian, recorded at the stop
/// times actually reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    /// Row-major m×m matrices.
    pub jacobians: Vec<Vec<f64>>,
    /// Arc length accumulated up to each recorded time.
    pub arc_lengths: Vec<f64>,
    pub arc_length: f64,
    pub status: FlowStatus,
    pub steps: usize,
    pub rejected: usize,
    pub last_time: f64,
    pub last_point: Vec<f64>,
    pub message: Option<String>,
}

impl FlowRecord {
    pub fn endpoint(&self) -> &[f64] {
        &self.last_point
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Right-hand side of the augmented system `(x, J, s)`:
/// `x' = X`, `J' = DX·J`, `s' = |X|`.
fn augmented_rhs(field: &TimeVectorField, t: f64, y: &[f64], m: usize) -> Result<Vec<f64>> {
    let x = &y[..m];
    let (v, dx) = field.eval_with_jacobian(t, x)?;
    let j = &y[m..m + m * m];
    let mut out = vec![0.0; y.len()];
    out[..m].copy_from_slice(&v);
    for r in 0..m {
        for c in 0..m {
            out[m + r * m + c] = (0..m).map(|k| dx[r * m + k] * j[k * m + c]).sum();
        }
    }
    out[m + m * m] = norm2(&v);
    Ok(out)
}

fn stop_grid(stop_times: &[f64]) -> Result<Vec<f64>> {
    let mut s: Vec<f64> = stop_times.to_vec();
    if s.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParameter("stop times must lie in [0, 1]".into()));
    }
    s.push(0.0);
    s.sort_by(f64::total_cmp);
    s.dedup();
    Ok(s)
}

/// Integrate `x' = X(t, x)` from `x0` at t = 0 up to the last stop time
/// (1 if none are given beyond 0), landing exactly on every stop time.
pub fn integrate_flow(field: &TimeVectorField, x0: &[f64], spec: &IntegratorSpec, stop_times: &[f64]) -> Result<FlowRecord> {
    spec.validate()?;
    let m = field.dim();
    if x0.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: x0.len() });
    }
    let mut stops = stop_grid(stop_times)?;
    if stops.len() == 1 {
        stops.push(1.0);
    }
    let n = m + m * m + 1;
    let mut y = vec![0.0; n];
    y[..m].copy_from_slice(x0);
    for i in 0..m {
        y[m + i * m + i] = 1.0;
    }
    let mut rec = FlowRecord {
        times: vec![0.0],
        points: vec![x0.to_vec()],
        jacobians: vec![y[m..m + m * m].to_vec()],
        arc_lengths: vec![0.0],
        arc_length: 0.0,
        status: FlowStatus::Completed,
        steps: 0,
        rejected: 0,
        last_time: 0.0,
        last_point: x0.to_vec(),
        message: None,
    };
    let t_end = *stops.last().unwrap();
    if t_end == 0.0 {
        return Ok(rec);
    }

    let mut t = 0.0;
    let mut h = (t_end * 1e-2).max(spec.min_step);
    let mut k1: Option<Vec<f64>> = None;
    let mut next = 1;
    let mut k: Vec<Vec<f64>> = vec![Vec::new(); 7];
    let mut stage = vec![0.0; n];

    'outer: while next < stops.len() {
        if rec.steps + rec.rejected >= spec.max_steps {
            rec.status = FlowStatus::StepUnderflow;
            rec.message = Some(format!("max_steps {} exhausted", spec.max_steps));
            break;
        }
        let target = stops[next];
        let landing = t + h >= target - 1e-15 * target.max(1.0);
        let h_try = if landing { target - t } else { h };

        let k0 = match &k1 {
            Some(v) => v.clone(),
            None => match augmented_rhs(field, t, &y, m) {
                Ok(v) => v,
                Err(e) => {
                    rec.status = FlowStatus::StepUnderflow;
                    rec.message = Some(e.to_string());
                    break;
                }
            },
        };
        k[0] = k0;
        let mut failed = None;
        for s in 1..7 {
            for i in 0..n {
                stage[i] = y[i] + h_try * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            match augmented_rhs(field, t + C[s] * h_try, &stage, m) {
                Ok(v) => k[s] = v,
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failed {
            rec.rejected += 1;
            h = 0.25 * h_try;
            if h < spec.min_step {
                rec.status = FlowStatus::StepUnderflow;
                rec.message = Some(e.to_string());
                break 'outer;
            }
            k1 = Some(k[0].clone());
            continue;
        }
        // stage holds the 5th-order solution (row 7 of A equals the weights)
        let mut err = 0.0;
        for i in 0..n {
            let e: f64 = h_try * (0..7).map(|j| E[j] * k[j][i]).sum::<f64>();
            let sc = spec.abs_tol + spec.rel_tol * y[i].abs().max(stage[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 {
            t = if landing { target } else { t + h_try };
            y.copy_from_slice(&stage);
            rec.steps += 1;
            k1 = Some(k[6].clone());
            if !landing || factor > 1.0 {
                h = h_try * factor;
            }
            if landing {
                rec.times.push(t);
                rec.points.push(y[..m].to_vec());
                rec.jacobians.push(y[m..m + m * m].to_vec());
                rec.arc_lengths.push(y[n - 1]);
                next += 1;
            }
            rec.last_time = t;
            rec.last_point = y[..m].to_vec();
            rec.arc_length = y[n - 1];
            if norm2(&y[..m]) > spec.escape_radius {
                rec.status = FlowStatus::Escaped;
                rec.message = Some(format!("|x| exceeded {:e} at t={t}", spec.escape_radius));
                break;
            }
        } else {
            rec.rejected += 1;
            h = h_try * factor;
            k1 = Some(k[0].clone());
        }
        if h < spec.min_step {
            rec.status = FlowStatus::StepUnderflow;
            rec.message = Some(format!("step {h:e} below min_step at t={t}"));
            break;
        }
    }
    Ok(rec)
}

fn det(m: usize, j: &[f64]) -> f64 {
    DMatrix::from_row_slice(m, m, j).determinant()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub tol: f64,
    pub integrator: IntegratorSpec,
    pub norm_kind: NormKind,
    /// Relative tolerance of the `dσ = ω̇` probe.
    pub probe_tol: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings { tol: 1e-6, integrator: IntegratorSpec::default(), norm_kind: NormKind::L1Operator, probe_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub max_arc_length: f64,
    pub completed: usize,
    pub escaped: usize,
    pub step_underflow: usize,
    pub min_det_jacobian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `residuals[p][i]` at point p and time i; `None` where the flow stopped
    /// before that time.
    pub residuals: Vec<Vec<Option<f64>>>,
    pub max_residual: f64,
    pub tol: f64,
    pub norm_kind: NormKind,
    pub pass: bool,
    pub statuses: Vec<FlowStatus>,
    pub arc_lengths: Vec<f64>,
    pub flows: FlowSummary,
}

/// Check `dσ_t = ω̇_t` at the given points and times.
pub fn check_primitive(omega: &TimeForm, sigma: &TimeForm, points: &[Vec<f64>], times: &[f64], rel_tol: f64) -> Result<()> {
    check_family(omega, sigma)?;
    let dot = omega.time_derivative();
    for &t in times {
        let (wd, ds) = (dot.at(t), exterior_derivative(&sigma.at(t), DerivativeScheme::Auto)?);
        let bad: Vec<Result<Option<Error>>> = points
            .par_iter()
            .map(|x| {
                let (a, b) = (wd.eval(x)?, ds.eval(x)?);
                let scale = a.iter().map(|v| v.abs()).fold(1.0, f64::max);
                let residual = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                Ok((residual > rel_tol * scale).then(|| Error::PrimitiveMismatch { point: x.clone(), t, residual }))
            })
            .collect();
        for r in bad {
            if let Some(e) = r? {
                return Err(e);
            }
        }
    }
    Ok(())
}

/// Flow the Moser field from every sample point and compare
/// `(φ_t*ω_t)(x) = J^T W_t(φ_t(x)) J` with `ω_0(x)` at each grid time.
pub fn verify_strong_isotopy(
    omega: &TimeForm,
    sigma: &TimeForm,
    points: &[Vec<f64>],
    times: &[f64],
    settings: &VerifySettings,
) -> Result<VerificationReport> {
    check_family(omega, sigma)?;
    settings.integrator.validate()?;
    let m = omega.dim();
    if let Some(p) = points.iter().find(|p| p.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: p.len() });
    }
    check_primitive(omega, sigma, points, &[0.0, 0.5, 1.0], settings.probe_tol)?;
    let field = build_moser_field(omega, sigma)?;
    let grid = stop_grid(times)?;
    let w0 = omega.at(0.0);

    let per_point: Vec<Result<(FlowRecord, Vec<Option<f64>>)>> = points
        .par_iter()
        .map(|x| {
            let flow = integrate_flow(&field, x, &settings.integrator, &grid)?;
            let base = w0.matrix(x)?;
            let mut res = vec![None; grid.len()];
            for (i, &t) in flow.times.iter().enumerate() {
                let slot = grid.iter().position(|&g| g == t).expect("stop time on grid");
                let j = DMatrix::from_row_slice(m, m, &flow.jacobians[i]);
                let w = omega.at(t).matrix(&flow.points[i])?;
                let pulled = j.transpose() * w * &j;
                res[slot] = Some(matrix_norm(&(pulled - &base), settings.norm_kind));
            }
            Ok((flow, res))
        })
        .collect();

    let mut residuals = Vec::with_capacity(points.len());
    let mut statuses = Vec::with_capacity(points.len());
    let mut arc_lengths = Vec::with_capacity(points.len());
    let mut summary = FlowSummary { max_arc_length: 0.0, completed: 0, escaped: 0, step_underflow: 0, min_det_jacobian: f64::INFINITY };
    let mut max_residual: f64 = 0.0;
    let mut missing = false;
    for r in per_point {
        let (flow, res) = r?;
        for v in &res {
            match v {
                Some(v) => max_residual = max_residual.max(*v),
                None => missing = true,
            }
        }
        for j in &flow.jacobians {
            summary.min_det_jacobian = summary.min_det_jacobian.min(det(m, j));
        }
        summary.max_arc_length = summary.max_arc_length.max(flow.arc_length);
        match flow.status {
            FlowStatus::Completed => summary.completed += 1,
            FlowStatus::Escaped => summary.escaped += 1,
            FlowStatus::StepUnderflow => summary.step_underflow += 1,
        }
        statuses.push(flow.status);
        arc_lengths.push(flow.arc_length);
        residuals.push(res);
    }
    let pass = !missing && summary.escaped == 0 && summary.step_underflow == 0 && max_residual <= settings.tol;
    Ok(VerificationReport {
        points: points.to_vec(),
        times: grid,
        residuals,
        max_residual,
        tol: settings.tol,
        norm_kind: settings.norm_kind,
        pass,
        statuses,
        arc_lengths,
        flows: summary,
    })
}
