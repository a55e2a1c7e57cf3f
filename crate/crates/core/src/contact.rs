//! Contact forms: Reeb fields, the contact Moser field and numerical Gray
//! stability `φ_t*θ_t = f_t θ_0`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::kform::norm2;
use crate::forms::{wedge, KForm, TimeForm};
use crate::moser::{integrate_flow, FlowStatus, IntegratorSpec, TimeVectorField};

/// Threshold on `|θ ∧ (dθ)^n|` below which a form is not contact.
pub const CONTACT_VOLUME_TOL: f64 = 1e-9;

/// Coefficients of θ and the matrix `W_ij = dθ(e_i, e_j) = ∂_i θ_j - ∂_j θ_i`.
fn theta_and_dtheta(theta: &KForm, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = theta.dim();
    let a = theta.eval(x)?;
    let g = theta.jacobian(x)?;
    let w = DMatrix::from_fn(m, m, |i, j| g[j * m + i] - g[i * m + j]);
    Ok((a, w))
}

/// Top coefficient of `θ ∧ (dθ)^n` at `x`.
pub fn contact_volume(theta: &KForm, x: &[f64]) -> Result<f64> {
    let m = theta.dim();
    if theta.degree() != 1 || m % 2 == 0 {
        return Err(Error::InvalidParameter(format!("contact forms are 1-forms in odd dimension, got degree {} in dim {m}", theta.degree())));
    }
    let (a, w) = theta_and_dtheta(theta, x)?;
    let dt = KForm::constant(m, 2, crate::forms::kform::matrix_to_two_form(&w))?;
    let mut acc = KForm::constant(m, 1, a)?;
    for _ in 0..(m - 1) / 2 {
        acc = wedge(&acc, &dt)?;
    }
    Ok(acc.eval(&vec![0.0; m])?[0])
}

fn bordered(a: &[f64], w: &DMatrix<f64>) -> DMatrix<f64> {
    let m = a.len();
    let mut b = DMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        for j in 0..m {
            b[(i, j)] = w[(j, i)];
        }
        b[(i, m)] = a[i];
        b[(m, i)] = a[i];
    }
    b
}

fn solve_bordered(a: &[f64], w: &DMatrix<f64>, rhs: DVector<f64>, x: &[f64]) -> Result<DVector<f64>> {
    bordered(a, w).lu().solve(&rhs).filter(|v| v.iter().all(|c| c.is_finite())).ok_or_else(|| Error::NotContact {
        point: x.to_vec(),
        volume: 0.0,
    })
}

fn check_contact(theta: &KForm, x: &[f64]) -> Result<()> {
    let volume = contact_volume(theta, x)?;
    if !(volume.abs() >= CONTACT_VOLUME_TOL) {
        return Err(Error::NotContact { point: x.to_vec(), volume });
    }
    Ok(())
}

/// The Reeb field: `θ(R) = 1`, `R ⌟ dθ = 0`.
pub fn reeb_field(theta: &KForm, x: &[f64]) -> Result<Vec<f64>> {
    check_contact(theta, x)?;
    let m = theta.dim();
    let (a, w) = theta_and_dtheta(theta, x)?;
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    let sol = solve_bordered(&a, &w, rhs, x)?;
    Ok(sol.as_slice()[..m].to_vec())
}

/// A path of contact forms θ_t on an odd-dimensional chart.
#[derive(Debug, Clone)]
pub struct ContactFamily {
    theta: TimeForm,
    dot: TimeForm,
}

impl ContactFamily {
    /// Validates the contact condition at the probes for t ∈ {0, ½, 1}.
    pub fn new(theta: TimeForm, probes: &[Vec<f64>]) -> Result<Self> {
        if theta.degree() != 1 {
            return Err(Error::InvalidDegree { degree: theta.degree(), op: "contact family" });
        }
        if theta.dim() % 2 == 0 {
            return Err(Error::InvalidParameter(format!("contact forms need odd dimension, got {}", theta.dim())));
        }
        for t in [0.0, 0.5, 1.0] {
            let th = theta.at(t);
            for x in probes {
                check_contact(&th, x)?;
            }
        }
        let dot = theta.time_derivative();
        Ok(ContactFamily { theta, dot })
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn theta(&self) -> &TimeForm {
        &self.theta
    }

    /// `X_t ∈ ker θ_t` and `h_t = θ̇_t(R_t)` at `(t, x)`.
    ///
    /// The bordered system `[[W^T, θ], [θ^T, 0]] [X; ν] = [-θ̇; 0]` gives
    /// `X ⌟ dθ = -θ̇ + h θ` with `ν = -h`.
    pub fn moser_and_h(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let m = self.dim();
        let th = self.theta.at(t);
        check_contact(&th, x)?;
        let (a, w) = theta_and_dtheta(&th, x)?;
        let d = self.dot.eval(t, x)?;
        let mut rhs = DVector::zeros(m + 1);
        for i in 0..m {
            rhs[i] = -d[i];
        }
        let sol = solve_bordered(&a, &w, rhs, x)?;
        Ok((sol.as_slice()[..m].to_vec(), -sol[m]))
    }
}

pub fn contact_moser_field(fam: &ContactFamily) -> TimeVectorField {
    let f = fam.clone();
    TimeVectorField::new(fam.dim(), move |t, x| Ok(f.moser_and_h(t, x)?.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraySettings {
    pub tol: f64,
    pub integrator: IntegratorSpec,
    /// Compare `d/dt log f_t` with `h_t ∘ φ_t` at interior grid times.
    pub h_check: bool,
    pub h_tol: f64,
    /// Half-width of the central difference in t.
    pub h_delta: f64,
}

impl Default for GraySettings {
    fn default() -> Self {
        GraySettings { tol: 1e-6, integrator: IntegratorSpec::default(), h_check: true, h_tol: 1e-4, h_delta: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayReport {
    pub points: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    /// `|φ_t*θ_t - f_t θ_0|` per point and time.
    pub residuals: Vec<Vec<Option<f64>>>,
    /// `f_t = ⟨φ_t*θ_t, θ_0⟩ / ⟨θ_0, θ_0⟩`.
    pub factors: Vec<Vec<Option<f64>>>,
    pub max_residual: f64,
    pub min_factor: f64,
    pub h_check_max_error: Option<f64>,
    pub tol: f64,
    pub h_tol: f64,
    pub statuses: Vec<FlowStatus>,
    pub pass: bool,
}

struct PointResult {
    residuals: Vec<Option<f64>>,
    factors: Vec<Option<f64>>,
    h_error: Option<f64>,
    status: FlowStatus,
}

pub fn verify_contact_isotopy(fam: &ContactFamily, points: &[Vec<f64>], times: &[f64], settings: &GraySettings) -> Result<GrayReport> {
    settings.integrator.validate()?;
    let m = fam.dim();
    if let Some(p) = points.iter().find(|p| p.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: p.len() });
    }
    let mut grid: Vec<f64> = times.to_vec();
    grid.push(0.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParameter("times must lie in [0, 1]".into()));
    }
    let delta = settings.h_delta;
    let interior: Vec<f64> = grid.iter().copied().filter(|&t| t - delta > 0.0 && t + delta < 1.0).collect();
    let mut stops = grid.clone();
    if settings.h_check {
        for &t in &interior {
            stops.push(t - delta);
            stops.push(t + delta);
        }
    }
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let field = contact_moser_field(fam);
    let theta0 = fam.theta.at(0.0);
    let per_point: Vec<Result<PointResult>> = points
        .par_iter()
        .map(|x| {
            let flow = integrate_flow(&field, x, &settings.integrator, &stops)?;
            let base = theta0.eval(x)?;
            let bb: f64 = base.iter().map(|v| v * v).sum();
            let factor_at = |i: usize| -> Result<(f64, f64)> {
                let t = flow.times[i];
                let th = fam.theta.eval(t, &flow.points[i])?;
                let j = &flow.jacobians[i];
                let pulled: Vec<f64> = (0..m).map(|a| (0..m).map(|k| th[k] * j[k * m + a]).sum()).collect();
                let f = pulled.iter().zip(&base).map(|(p, q)| p * q).sum::<f64>() / bb;
                let resid: Vec<f64> = pulled.iter().zip(&base).map(|(p, q)| p - f * q).collect();
                Ok((f, norm2(&resid)))
            };
            let mut residuals = vec![None; grid.len()];
            let mut factors = vec![None; grid.len()];
            let mut by_time = std::collections::HashMap::new();
            for i in 0..flow.times.len() {
                let (f, r) = factor_at(i)?;
                by_time.insert(flow.times[i].to_bits(), (i, f));
                if let Some(slot) = grid.iter().position(|&g| g == flow.times[i]) {
                    residuals[slot] = Some(r);
                    factors[slot] = Some(f);
                }
            }
            let mut h_error: Option<f64> = None;
            if settings.h_check {
                for &t in &interior {
                    let (lo, mid, hi) = (
                        by_time.get(&(t - delta).to_bits()),
                        by_time.get(&t.to_bits()),
                        by_time.get(&(t + delta).to_bits()),
                    );
                    if let (Some(&(_, fl)), Some(&(im, _)), Some(&(_, fh))) = (lo, mid, hi) {
                        if fl > 0.0 && fh > 0.0 {
                            let dlog = (fh.ln() - fl.ln()) / (2.0 * delta);
                            let (_, h) = fam.moser_and_h(t, &flow.points[im])?;
                            let e = (dlog - h).abs();
                            h_error = Some(h_error.map_or(e, |v| v.max(e)));
                        }
                    }
                }
            }
            Ok(PointResult { residuals, factors, h_error, status: flow.status })
        })
        .collect();

    let mut report = GrayReport {
        points: points.to_vec(),
        times: grid,
        residuals: Vec::new(),
        factors: Vec::new(),
        max_residual: 0.0,
        min_factor: f64::INFINITY,
        h_check_max_error: None,
        tol: settings.tol,
        h_tol: settings.h_tol,
        statuses: Vec::new(),
        pass: true,
    };
    for r in per_point {
        let r = r?;
        for (res, f) in r.residuals.iter().zip(&r.factors) {
            match (res, f) {
                (Some(res), Some(f)) => {
                    report.max_residual = report.max_residual.max(*res);
                    report.min_factor = report.min_factor.min(*f);
                }
                _ => report.pass = false,
            }
        }
        if let Some(e) = r.h_error {
            report.h_check_max_error = Some(report.h_check_max_error.map_or(e, |v: f64| v.max(e)));
        }
        if r.status != FlowStatus::Completed {
            report.pass = false;
        }
        report.statuses.push(r.status);
        report.residuals.push(r.residuals);
        report.factors.push(r.factors);
    }
    report.pass &= report.max_residual <= settings.tol && report.min_factor > 0.0;
    if settings.h_check {
        report.pass &= report.h_check_max_error.map_or(true, |e| e <= settings.h_tol);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::load_form_spec;

    fn standard() -> KForm {
        // dz - y dx with (x, y, z) = axes 1, 2, 3
        load_form_spec(r#"{"dim":3,"degree":1,"terms":[{"coeff":"-x2","index":[1]},{"coeff":"1","index":[3]}]}"#)
            .unwrap()
            .at(0.0)
    }

    #[test]
    fn reeb_of_standard_form() {
        let th = standard();
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0]] {
            let r = reeb_field(&th, &x).unwrap();
            assert!(r[0].abs() < 1e-15 && r[1].abs() < 1e-15 && (r[2] - 1.0).abs() < 1e-15);
        }
        let scaled = th.scale(4.0).unwrap();
        let r = reeb_field(&scaled, &[1.0, 1.0, 1.0]).unwrap();
        assert!((r[2] - 0.25).abs() < 1e-15);
        let dx = KForm::basis_form(3, &[0]).unwrap();
        assert!(matches!(reeb_field(&dx, &[0.0; 3]), Err(Error::NotContact { .. })));
    }

    #[test]
    fn volume_sign() {
        // (dz - y dx) ∧ (dx ∧ dy) = dx∧dy∧dz
        assert_eq!(contact_volume(&standard(), &[0.3, 0.2, 0.1]).unwrap(), 1.0);
    }
}
