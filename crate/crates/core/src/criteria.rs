//! Log-variation functional, growth fits, the linear-family criterion and the
//! straight-path pseudometric bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::ops::{exterior_derivative, smallest_singular_value, DerivativeScheme, DEFAULT_TOL_SINGULAR};
use crate::forms::{KForm, TimeForm};
use crate::norms::{sup_inverse_norm_on_sphere, sup_norm_on_sphere, Chart, Norm, NormKind, SamplerSpec, SphereSampler};
use crate::quadrature::simpson_weights;

pub const DEFAULT_R_MAX: f64 = 64.0;
pub const DEFAULT_T_NODES: usize = 33;

/// Grid of `count` values from `min` to `max`, linearly or geometrically
/// spaced.
pub fn grid(min: f64, max: f64, count: usize, log: bool) -> Result<Vec<f64>> {
    if count == 0 || !min.is_finite() || !max.is_finite() {
        return Err(Error::InvalidParameter("grid needs finite bounds and count >= 1".into()));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    if !(max > min) {
        return Err(Error::InvalidParameter(format!("grid max {max} must exceed min {min}")));
    }
    if log && !(min > 0.0) {
        return Err(Error::InvalidParameter("log grid needs a positive minimum".into()));
    }
    let n = (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                max
            } else if log {
                min * (max / min).powf(i as f64 / n)
            } else {
                min + (max - min) * i as f64 / n
            }
        })
        .collect())
}

/// Radii, truncation and norm used by the log-variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogVarConfig {
    pub radii: Vec<f64>,
    pub r_max: f64,
    pub norm: Norm,
}

impl LogVarConfig {
    pub fn new(radii: Vec<f64>) -> Self {
        LogVarConfig { radii, r_max: DEFAULT_R_MAX, norm: Norm::default() }
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_r_max(mut self, r_max: f64) -> Self {
        self.r_max = r_max;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidParameter("empty radius grid".into()));
        }
        if self.radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("radii must be strictly increasing".into()));
        }
        if self.radii[0] < 1.0 || *self.radii.last().unwrap() > self.r_max {
            return Err(Error::InvalidParameter(format!(
                "radius grid must lie in [1, R_max = {}]",
                self.r_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogVarRow {
    pub t: Option<f64>,
    pub r: f64,
    pub norm_inv: f64,
    pub norm_beta: f64,
    pub product: f64,
    /// `r⁻¹ ‖ω⁻¹‖_r ‖β‖_r`
    pub logvar_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSlice {
    pub t: f64,
    pub log_variation: f64,
    pub argmax_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogVarReport {
    pub r_grid: Vec<f64>,
    /// The sup over r ≥ 1 is taken over the grid only, truncated here.
    pub r_max: f64,
    pub norm_kind: NormKind,
    pub chart: Chart,
    pub sampler: SamplerSpec,
    pub rows: Vec<LogVarRow>,
    pub per_t: Vec<TimeSlice>,
    /// Maximum logvar_term over all rows.
    pub sup: f64,
    /// Simpson quadrature of the per-t log-variation, for families.
    pub total: Option<f64>,
}

fn rows_at(w: &KForm, beta: &KForm, t: Option<f64>, sampler: &SphereSampler, cfg: &LogVarConfig) -> Result<Vec<LogVarRow>> {
    cfg.radii
        .iter()
        .map(|&r| {
            let norm_beta = sup_norm_on_sphere(beta, r, sampler, cfg.norm)?;
            let norm_inv = sup_inverse_norm_on_sphere(w, r, sampler, cfg.norm).map_err(|e| match e {
                Error::SingularForm { point, sigma_min, .. } => Error::SingularForm { point, t, sigma_min },
                other => other,
            })?;
            let product = norm_inv * norm_beta;
            Ok(LogVarRow { t, r, norm_inv, norm_beta, product, logvar_term: product / r })
        })
        .collect()
}

fn slice(t: f64, rows: &[LogVarRow]) -> TimeSlice {
    let best = rows.iter().fold(None::<&LogVarRow>, |acc, row| match acc {
        Some(a) if a.logvar_term >= row.logvar_term => Some(a),
        _ => Some(row),
    });
    let best = best.expect("nonempty grid");
    TimeSlice { t, log_variation: best.logvar_term, argmax_r: best.r }
}

/// `sup_{r in grid} r⁻¹ ‖ω⁻¹‖_r ‖β‖_r`.
pub fn log_variation(omega: &KForm, beta: &KForm, sampler: &SphereSampler, cfg: &LogVarConfig) -> Result<LogVarReport> {
    cfg.validate()?;
    if beta.degree() != 2 {
        return Err(Error::InvalidDegree { degree: beta.degree(), op: "log-variation (beta)" });
    }
    let rows = rows_at(omega, beta, None, sampler, cfg)?;
    let s = slice(0.0, &rows);
    Ok(LogVarReport {
        r_grid: cfg.radii.clone(),
        r_max: cfg.r_max,
        norm_kind: cfg.norm.kind,
        chart: cfg.norm.chart,
        sampler: sampler.spec(),
        sup: s.log_variation,
        rows,
        per_t: vec![s],
        total: None,
    })
}

/// `∫_0^1 LogVar(ω_t, ω̇_t) dt` by composite Simpson on `t_nodes` points.
pub fn total_log_variation(omega: &TimeForm, sampler: &SphereSampler, cfg: &LogVarConfig, t_nodes: usize) -> Result<LogVarReport> {
    cfg.validate()?;
    let weights = simpson_weights(0.0, 1.0, t_nodes)?;
    let dot = omega.time_derivative();
    let mut rows = Vec::new();
    let mut per_t = Vec::with_capacity(t_nodes);
    for i in 0..t_nodes {
        let t = i as f64 / (t_nodes - 1) as f64;
        let r = rows_at(&omega.at(t), &dot.at(t), Some(t), sampler, cfg)?;
        per_t.push(slice(t, &r));
        rows.extend(r);
    }
    // Summing sorted terms makes the total independent of the direction in
    // which the path is traversed.
    let mut terms: Vec<f64> = per_t.iter().zip(&weights).map(|(s, w)| w * s.log_variation).collect();
    terms.sort_by(f64::total_cmp);
    let total = terms.iter().sum();
    let sup = rows.iter().map(|r| r.logvar_term).fold(0.0, f64::max);
    Ok(LogVarReport {
        r_grid: cfg.radii.clone(),
        r_max: cfg.r_max,
        norm_kind: cfg.norm.kind,
        chart: cfg.norm.chart,
        sampler: sampler.spec(),
        rows,
        per_t,
        sup,
        total: Some(total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthModel {
    #[serde(rename = "linear_Cr")]
    LinearCr,
    #[serde(rename = "log_Clogr")]
    LogClogr,
    #[serde(rename = "power_rp")]
    PowerRp,
}

impl GrowthModel {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthModel::LinearCr => "linear_Cr",
            GrowthModel::LogClogr => "log_Clogr",
            GrowthModel::PowerRp => "power_rp",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "linear_Cr" | "linear" => Ok(GrowthModel::LinearCr),
            "log_Clogr" | "log" => Ok(GrowthModel::LogClogr),
            "power_rp" | "power" => Ok(GrowthModel::PowerRp),
            other => Err(Error::InvalidParameter(format!("unknown growth model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub model: GrowthModel,
    pub window: (f64, f64),
    /// Least-squares constant (the prefactor C for power_rp).
    pub constant: f64,
    /// Fitted exponent, power_rp only.
    pub exponent: Option<f64>,
    /// RMS residual: of log-values for power_rp, relative otherwise.
    pub residual: f64,
    /// Constant making the model exact at the window start.
    pub anchor_constant: f64,
    /// Smallest constant bounding the whole window.
    pub envelope_constant: f64,
    /// `v(r) / (anchor_constant · f(r))` per radius.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
}

/// Fit `v(r) ≈ C f(r)` (or `C r^p`) by least squares on the given window.
pub fn check_growth(radii: &[f64], values: &[f64], model: GrowthModel) -> Result<GrowthFit> {
    if radii.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: radii.len(), got: values.len() });
    }
    if radii.len() < 4 {
        return Err(Error::DegenerateFit(format!("need at least 4 radii, got {}", radii.len())));
    }
    let (rmin, rmax) = radii.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    if !(rmax > rmin) {
        return Err(Error::DegenerateFit("all radii are equal".into()));
    }
    let f = |r: f64| match model {
        GrowthModel::LinearCr => r,
        GrowthModel::LogClogr => r.ln(),
        GrowthModel::PowerRp => 1.0,
    };
    let (constant, exponent, residual, shape): (f64, Option<f64>, f64, Box<dyn Fn(f64) -> f64>) = match model {
        GrowthModel::PowerRp => {
            if values.iter().any(|v| !(*v > 0.0)) || radii.iter().any(|r| !(*r > 0.0)) {
                return Err(Error::DegenerateFit("power fit needs positive radii and values".into()));
            }
            let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
            let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
            let (slope, icept) = least_squares_line(&xs, &ys);
            let res = (xs.iter().zip(&ys).map(|(x, y)| (y - icept - slope * x).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
            (icept.exp(), Some(slope), res, Box::new(move |r: f64| r.powf(slope)))
        }
        _ => {
            let fs: Vec<f64> = radii.iter().map(|&r| f(r)).collect();
            if fs.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::DegenerateFit(format!("{} model needs f(r) > 0 on the window", model.name())));
            }
            let c = fs.iter().zip(values).map(|(a, v)| a * v).sum::<f64>() / fs.iter().map(|a| a * a).sum::<f64>();
            let res = (fs.iter().zip(values).map(|(a, v)| ((v - c * a) / v.abs().max(f64::MIN_POSITIVE)).powi(2)).sum::<f64>()
                / fs.len() as f64)
                .sqrt();
            (c, None, res, Box::new(f))
        }
    };
    let start = radii.iter().position(|&r| r == rmin).unwrap();
    let anchor = values[start] / shape(rmin);
    let envelope = radii.iter().zip(values).map(|(&r, v)| v / shape(r)).fold(0.0, f64::max);
    let ratios: Vec<f64> = radii.iter().zip(values).map(|(&r, v)| v / (anchor * shape(r))).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(GrowthFit {
        model,
        window: (rmin, rmax),
        constant,
        exponent,
        residual,
        anchor_constant: anchor,
        envelope_constant: envelope,
        ratios,
        max_ratio,
    })
}

/// Ordinary least squares `y ≈ icept + slope·x`, returning `(slope, icept)`.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Log-log slope of `values` against `radii`.
pub fn log_log_slope(radii: &[f64], values: &[f64]) -> Result<f64> {
    Ok(check_growth(radii, values, GrowthModel::PowerRp)?.exponent.expect("power fit"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusProduct {
    pub r: f64,
    pub norm_inv: f64,
    pub norm_dsigma: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFamilyCheck {
    /// `sup_r ‖ω⁻¹‖_r ‖dσ‖_r` over the grid.
    pub a: f64,
    pub verdict: bool,
    /// `A/(1-A)`, only when A < 1.
    pub total_bound: Option<f64>,
    /// Whether `ω + t dσ` stayed nondegenerate at all sampled (t, x).
    pub nondegenerate: bool,
    pub min_singular_value: f64,
    pub per_radius: Vec<RadiusProduct>,
}

/// Criterion for the family `ω + t dσ`.
pub fn linear_family_check(
    omega: &KForm,
    sigma: &KForm,
    radii: &[f64],
    sampler: &SphereSampler,
    norm: Norm,
    t_levels: usize,
) -> Result<LinearFamilyCheck> {
    if radii.is_empty() || t_levels < 2 {
        return Err(Error::InvalidParameter("need radii and at least 2 time levels".into()));
    }
    let ds = exterior_derivative(sigma, DerivativeScheme::Auto)?;
    let mut per_radius = Vec::with_capacity(radii.len());
    for &r in radii {
        let norm_inv = sup_inverse_norm_on_sphere(omega, r, sampler, norm)?;
        let norm_dsigma = sup_norm_on_sphere(&ds, r, sampler, norm)?;
        per_radius.push(RadiusProduct { r, norm_inv, norm_dsigma, product: norm_inv * norm_dsigma });
    }
    let a = per_radius.iter().map(|p| p.product).fold(0.0, f64::max);
    let verdict = a < 1.0;
    let mut min_sv = f64::INFINITY;
    for i in 0..t_levels {
        let t = i as f64 / (t_levels - 1) as f64;
        let wt = KForm::linear_combination(&[(1.0, omega), (t, &ds)])?;
        for &r in radii {
            let radius = norm.chart.euclidean_radius(r);
            let svs: Vec<Result<f64>> =
                sampler.points(radius).par_iter().map(|x| Ok(smallest_singular_value(&wt.matrix(x)?))).collect();
            for v in svs {
                min_sv = min_sv.min(v?);
            }
        }
    }
    Ok(LinearFamilyCheck {
        a,
        verdict,
        total_bound: verdict.then(|| a / (1.0 - a)),
        nondegenerate: min_sv >= DEFAULT_TOL_SINGULAR,
        min_singular_value: min_sv,
        per_radius,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudometricBound {
    /// `None` when the straight path degenerates somewhere on the samples.
    pub value: Option<f64>,
    pub degenerate_at: Option<(f64, Vec<f64>)>,
    pub report: Option<LogVarReport>,
}

impl PseudometricBound {
    pub fn is_infinite(&self) -> bool {
        self.value.is_none()
    }
}

/// The straight path `(1-t)ω_a + tω_b` as a family with derivative `ω_b - ω_a`.
pub fn straight_path(a: &KForm, b: &KForm) -> Result<TimeForm> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if a.degree() != 2 || b.degree() != 2 {
        return Err(Error::InvalidDegree { degree: a.degree().max(b.degree()), op: "straight path" });
    }
    let (a1, b1) = (a.clone(), b.clone());
    let path = TimeForm::new(a.dim(), 2, move |t, x| {
        let (va, vb) = (a1.eval(x)?, b1.eval(x)?);
        Ok(va.iter().zip(&vb).map(|(p, q)| (1.0 - t) * p + t * q).collect())
    })?;
    let (a2, b2) = (a.clone(), b.clone());
    let dot = TimeForm::new(a.dim(), 2, move |_, x| {
        let (va, vb) = (a2.eval(x)?, b2.eval(x)?);
        Ok(va.iter().zip(&vb).map(|(p, q)| q - p).collect())
    })?;
    Ok(path.with_time_derivative(dot))
}

/// Upper bound for the pseudometric from the straight path between two forms.
pub fn pseudometric_upper_bound(a: &KForm, b: &KForm, sampler: &SphereSampler, cfg: &LogVarConfig) -> Result<PseudometricBound> {
    let path = straight_path(a, b)?;
    match total_log_variation(&path, sampler, cfg, DEFAULT_T_NODES) {
        Ok(report) => Ok(PseudometricBound { value: report.total, degenerate_at: None, report: Some(report) }),
        Err(Error::SingularForm { point, t, .. }) => {
            Ok(PseudometricBound { value: None, degenerate_at: Some((t.unwrap_or(f64::NAN), point)), report: None })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn omega0() -> KForm {
        KForm::constant(4, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn sampler() -> SphereSampler {
        SphereSampler::new(4, SamplerSpec::new(11, 64)).unwrap()
    }

    #[test]
    fn grids() {
        let g = grid(1.0, 8.0, 4, true).unwrap();
        assert!(g.iter().zip([1.0, 2.0, 4.0, 8.0]).all(|(a, b)| (a - b).abs() < 1e-14));
        assert_eq!(grid(0.0, 1.0, 3, false).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(grid(0.0, 1.0, 3, true).is_err());
    }

    #[test]
    fn constant_forms() {
        let cfg = LogVarConfig::new(vec![1.0, 2.0, 4.0, 8.0]);
        let r = log_variation(&omega0(), &KForm::basis_form(4, &[0, 1]).unwrap(), &sampler(), &cfg).unwrap();
        assert_eq!(r.sup, 1.0);
        assert_eq!(r.per_t[0].argmax_r, 1.0);
        let z = log_variation(&omega0(), &KForm::zero(4, 2).unwrap(), &sampler(), &cfg).unwrap();
        assert_eq!(z.sup, 0.0);
        let fam = TimeForm::constant_in_time(&omega0()).unwrap();
        assert_eq!(total_log_variation(&fam, &sampler(), &cfg, 33).unwrap().total, Some(0.0));
        assert!(log_variation(&omega0(), &omega0(), &sampler(), &LogVarConfig::new(vec![0.5, 2.0])).is_err());
    }

    #[test]
    fn pseudometric_of_rescaling() {
        let cfg = LogVarConfig::new(vec![1.0, 2.0, 4.0]);
        let two = omega0().scale(2.0).unwrap();
        let d = pseudometric_upper_bound(&omega0(), &two, &sampler(), &cfg).unwrap();
        assert!((d.value.unwrap() - 2f64.ln()).abs() < 1e-6);
        let back = pseudometric_upper_bound(&two, &omega0(), &sampler(), &cfg).unwrap();
        assert_eq!(d.value, back.value);
        let same = pseudometric_upper_bound(&omega0(), &omega0(), &sampler(), &cfg).unwrap();
        assert_eq!(same.value, Some(0.0));
        let flip = omega0().scale(-1.0).unwrap();
        assert!(pseudometric_upper_bound(&omega0(), &flip, &sampler(), &cfg).unwrap().is_infinite());
    }

    #[test]
    fn growth_models() {
        let r = [1.0, 2.0, 4.0, 8.0];
        let fit = check_growth(&r, &[3.0; 4], GrowthModel::LinearCr).unwrap();
        assert_eq!(fit.anchor_constant, 3.0);
        assert!(fit.ratios.iter().skip(1).all(|x| *x <= 1.0));
        let p = check_growth(&r, &r.map(|x| 2.0 * x.powf(1.5)), GrowthModel::PowerRp).unwrap();
        assert!((p.exponent.unwrap() - 1.5).abs() < 1e-12 && (p.constant - 2.0).abs() < 1e-12);
        assert!(check_growth(&[2.0; 4], &[1.0; 4], GrowthModel::LinearCr).is_err());
        assert!(check_growth(&r[..3], &[1.0; 3], GrowthModel::LinearCr).is_err());
        assert!(check_growth(&r, &[1.0; 4], GrowthModel::LogClogr).is_err());
    }

    #[test]
    fn linear_family_verdicts() {
        let sigma = KForm::zero(4, 1).unwrap();
        let c = linear_family_check(&omega0(), &sigma, &[1.0, 2.0], &sampler(), Norm::l1(), 5).unwrap();
        assert_eq!((c.a, c.verdict, c.total_bound), (0.0, true, Some(0.0)));
        let big = KForm::from_fn(4, 1, |x| vec![0.0, 1.2 * x[0], 0.0, 0.0]).unwrap();
        let c = linear_family_check(&omega0(), &big, &[1.0, 2.0], &sampler(), Norm::l1(), 5).unwrap();
        assert!(!c.verdict && c.total_bound.is_none());
    }
}
