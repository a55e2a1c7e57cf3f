use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::criteria::{
    grid, least_squares_line, linear_family_check, log_log_slope, total_log_variation, LogVarConfig, DEFAULT_T_NODES,
};
use crate::error::{Error, Result};
use crate::forms::kform::norm2;
use crate::moser::{build_moser_field, integrate_flow, verify_strong_isotopy, FlowStatus, IntegratorSpec, VerifySettings};
use crate::norms::{
    inverse_norm_profile, norm_profile, pointwise_inverse_norm, pointwise_norm, Chart, Norm, SamplerSpec, SphereSampler,
};
use crate::primitive::{naive_length_bound, BallSampling};
use crate::quadrature::QuadratureSpec;
use crate::forms::DEFAULT_TOL_SINGULAR;

use super::{load_case, CaseParams, CheckResult, Expectation, GalleryCase, Region};

/// Knobs for [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub params: CaseParams,
    /// Sphere samples for norm bounds and slope fits.
    pub sampler: SamplerSpec,
    /// Sphere samples per radius for log-variation sweeps and length bounds,
    /// which evaluate many (t, r) pairs.
    pub sweep_samples: usize,
    /// Number of flow start points; case default when unset.
    pub points: Option<usize>,
    pub point_seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            params: CaseParams::default(),
            sampler: SamplerSpec::default(),
            sweep_samples: 512,
            points: None,
            point_seed: 7,
        }
    }
}

impl SuiteOptions {
    fn sweep_sampler(&self, dim: usize) -> Result<SphereSampler> {
        SphereSampler::new(dim, SamplerSpec::new(self.sampler.seed, self.sweep_samples))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub case: String,
    pub params: BTreeMap<String, f64>,
    pub region: Region,
    pub chart: Chart,
    pub expectations: Vec<Expectation>,
    pub self_test: Vec<CheckResult>,
    pub checks: Vec<CheckResult>,
    /// Profiles, fits and verification reports keyed by file stem.
    pub artifacts: BTreeMap<String, Value>,
    pub pass: bool,
}

type Outcome = (Vec<CheckResult>, BTreeMap<String, Value>);

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Run the full check suite of a registered case.
pub fn run_suite(name: &str, opts: &SuiteOptions) -> Result<SuiteReport> {
    let case = load_case(name, &opts.params)?;
    let (checks, artifacts) = match name {
        "product" => product_suite(&case, opts)?,
        "radial_pullback" => radial_suite(&case, opts)?,
        "liouville_rotation" => liouville_suite(&case, opts)?,
        "shrinking" => shrinking_suite(&case, opts)?,
        "inversion_chart" => inversion_suite(&case, opts)?,
        _ => unreachable!("load_case validated the name"),
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        case: case.name.into(),
        params: case.params.clone(),
        region: case.region,
        chart: case.chart,
        expectations: case.expectations.clone(),
        self_test: case.self_test.clone(),
        checks,
        artifacts,
        pass,
    })
}

/// Flows from `points` and the largest arc length reached.
fn max_arc_length(case: &GalleryCase, points: &[Vec<f64>]) -> Result<f64> {
    let sigma = case.sigma.as_ref().ok_or_else(|| Error::InvalidParameter(format!("case `{}` has no σ", case.name)))?;
    let field = build_moser_field(&case.omega, sigma)?;
    let mut best: f64 = 0.0;
    for x in points {
        let flow = integrate_flow(&field, x, &IntegratorSpec::default(), &[1.0])?;
        if flow.status != FlowStatus::Completed {
            return Err(Error::InvalidParameter(format!("flow from {x:?} stopped: {:?}", flow.status)));
        }
        best = best.max(flow.arc_length);
    }
    Ok(best)
}

fn length_bound_check(case: &GalleryCase, opts: &SuiteOptions) -> Result<(CheckResult, Value)> {
    let pts = Region::Ball { radius: 1.0 }.sample(case.dim, opts.points.unwrap_or(50), opts.point_seed + 1)?;
    let arc = max_arc_length(case, &pts)?;
    let bound = naive_length_bound(
        &case.omega,
        1.0,
        &opts.sweep_sampler(case.dim)?,
        QuadratureSpec::default(),
        BallSampling::default(),
        Norm::l1(),
    )?;
    Ok((
        CheckResult::at_most("arc_length_bound", arc, bound, "longest flow line from the unit ball against the length bound"),
        json!({ "max_arc_length": arc, "bound": bound, "radius": 1.0 }),
    ))
}

fn verification(case: &GalleryCase, count: usize, tol: f64, opts: &SuiteOptions) -> Result<(Vec<CheckResult>, Value)> {
    let pts = case.region.sample(case.dim, opts.points.unwrap_or(count), opts.point_seed)?;
    let times = grid(0.0, 1.0, 11, false)?;
    let settings = VerifySettings { tol, ..VerifySettings::default() };
    let sigma = case.sigma.as_ref().expect("case with σ");
    let rep = verify_strong_isotopy(&case.omega, sigma, &pts, &times, &settings)?;
    let checks = vec![
        CheckResult::at_most("isotopy_residual", rep.max_residual, tol, "max |φ_t*ω_t − ω_0| over points and times"),
        CheckResult::flag(
            "flows_complete",
            rep.flows.completed == pts.len(),
            format!("{} completed, {} escaped, {} underflow", rep.flows.completed, rep.flows.escaped, rep.flows.step_underflow),
        ),
    ];
    Ok((checks, to_value(&rep)))
}

fn shrinking_suite(case: &GalleryCase, opts: &SuiteOptions) -> Result<Outcome> {
    let mut artifacts = BTreeMap::new();
    let (mut checks, rep) = verification(case, 100, 1e-6, opts)?;
    artifacts.insert("verification".into(), rep);

    let field = build_moser_field(&case.omega, case.sigma.as_ref().expect("σ"))?;
    let h = 0.5f64.sqrt();
    let flow = integrate_flow(&field, &[1.0, 1.0, 1.0, 1.0], &IntegratorSpec::default(), &[1.0])?;
    let err = flow.endpoint().iter().zip([h, h, 1.0, 1.0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    checks.push(CheckResult::at_most("endpoint", err, 1e-8, "φ_1(1,1,1,1) against (2^{-1/2}, 2^{-1/2}, 1, 1)"));
    let arc = integrate_flow(&field, &[1.0, 1.0, 0.0, 0.0], &IntegratorSpec::default(), &[1.0])?;
    let expected = 2f64.sqrt() * (1.0 - h);
    checks.push(CheckResult::within("arc_length", arc.arc_length, expected, 1e-8, "flow line from (1,1,0,0)"));
    artifacts.insert("flow_endpoint".into(), to_value(&flow));

    let (c, v) = length_bound_check(case, opts)?;
    checks.push(c);
    artifacts.insert("length_bound".into(), v);
    Ok((checks, artifacts))
}

fn product_suite(case: &GalleryCase, opts: &SuiteOptions) -> Result<Outcome> {
    let mut artifacts = BTreeMap::new();
    let (mut checks, rep) = verification(case, 50, 1e-6, opts)?;
    artifacts.insert("verification".into(), rep);
    let pts = case.region.sample(case.dim, 1000, opts.point_seed + 2)?;
    let mut min_sv = f64::INFINITY;
    for t in [0.0, 0.5, 1.0] {
        let w = case.omega.at(t);
        for x in &pts {
            min_sv = min_sv.min(crate::forms::smallest_singular_value(&w.matrix(x)?));
        }
    }
    checks.push(CheckResult::at_least("nondegenerate", min_sv, DEFAULT_TOL_SINGULAR, "smallest singular value over the sampled ball"));
    let (c, v) = length_bound_check(case, opts)?;
    checks.push(c);
    artifacts.insert("length_bound".into(), v);
    Ok((checks, artifacts))
}

/// Radii at which the closed-form bounds of the radial pullback are checked.
pub const RADIAL_BOUND_RADII: [f64; 4] = [1.2, 2.0, 4.0, 8.0];

fn radial_suite(case: &GalleryCase, opts: &SuiteOptions) -> Result<Outcome> {
    let (p, c) = (case.params["p"], case.params["c"]);
    let (w, s, ds) = (case.part("omega")?, case.part("sigma")?, case.part("d_sigma")?);
    let sampler = SphereSampler::new(4, opts.sampler)?;
    let norm = Norm::l1();
    let mut checks = Vec::new();
    let mut artifacts = BTreeMap::new();

    let inv = inverse_norm_profile(w, &RADIAL_BOUND_RADII, &sampler, norm)?;
    let dsp = norm_profile(ds, &RADIAL_BOUND_RADII, &sampler, norm)?;
    let inv_ratio = inv
        .radii
        .iter()
        .zip(&inv.values)
        .map(|(r, v)| v / ((2.0 - 1.0 / p) * r.powf(2.0 - 2.0 * p)))
        .fold(0.0, f64::max);
    let ds_ratio = dsp
        .radii
        .iter()
        .zip(&dsp.values)
        .map(|(r, v)| v / (c * p / (2.0 * p - 1.0) * r.powf(2.0 * p - 2.0)))
        .fold(0.0, f64::max);
    checks.push(CheckResult::at_most("inverse_bound", inv_ratio, 1.001, "max over r of ‖ω⁻¹‖_r / ((2 − 1/p) r^{2−2p})"));
    checks.push(CheckResult::at_most("dsigma_bound", ds_ratio, 1.001, "max over r of ‖dσ‖_r / (cp/(2p−1) r^{2p−2})"));
    artifacts.insert("inverse_profile".into(), to_value(&inv));
    artifacts.insert("dsigma_profile".into(), to_value(&dsp));

    let pts = Region::Ball { radius: 8.0 }.sample(4, 1000, opts.point_seed + 3)?;
    let mut worst: f64 = 0.0;
    for x in &pts {
        worst = worst.max(pointwise_inverse_norm(w, x, norm, DEFAULT_TOL_SINGULAR)? * pointwise_norm(ds, x, norm)?);
    }
    checks.push(CheckResult::at_most("pointwise_product", worst, c, "max |ω⁻¹(x)||dσ(x)| over 1000 points in the ball of radius 8"));

    let lin = linear_family_check(w, s, &grid(1.0, 8.0, 15, true)?, &sampler, norm, 5)?;
    checks.push(CheckResult::at_most("linear_family_a", lin.a, 1.0 - f64::EPSILON, "A = sup_r ‖ω⁻¹‖_r ‖dσ‖_r"));
    checks.push(CheckResult::at_most(
        "linear_family_total_bound",
        lin.total_bound.unwrap_or(f64::INFINITY),
        c / (1.0 - c),
        "A/(1 − A) against c/(1 − c)",
    ));
    checks.push(CheckResult::flag("nondegenerate", lin.nondegenerate, format!("min singular value {:e}", lin.min_singular_value)));
    artifacts.insert("linear_family".into(), to_value(&lin));

    let cfg = LogVarConfig::new(grid(1.0, 8.0, 8, true)?).with_r_max(8.0).with_norm(norm);
    let lv = total_log_variation(&case.omega, &opts.sweep_sampler(4)?, &cfg, DEFAULT_T_NODES)?;
    checks.push(CheckResult::at_most(
        "total_log_variation",
        lv.total.unwrap_or(f64::INFINITY),
        c / (1.0 - c),
        "total log-variation of ω + t dσ on 1 ≤ r ≤ 8",
    ));
    artifacts.insert("log_variation".into(), to_value(&lv));

    let (v, rep) = verification(case, 50, 1e-5, opts)?;
    checks.extend(v);
    artifacts.insert("verification".into(), rep);
    Ok((checks, artifacts))
}

/// Cylinder radii of the slope fits on the rotated Liouville end.
pub fn liouville_fit_radii() -> Vec<f64> {
    grid(2.0, 6.0, 9, false).expect("static grid")
}

/// Truncation radii of the log-variation sweep.
pub const LIOUVILLE_SWEEP: [f64; 3] = [2.0, 4.0, 6.0];

fn liouville_suite(case: &GalleryCase, opts: &SuiteOptions) -> Result<Outcome> {
    let p = case.params["p"];
    let norm = Norm::l1().in_chart(Chart::Cylindrical);
    let sampler = SphereSampler::new(4, opts.sampler)?;
    let radii = liouville_fit_radii();
    let (w, wd) = (case.omega.at(0.5), case.omega.time_derivative().at(0.5));
    let inv = inverse_norm_profile(&w, &radii, &sampler, norm)?;
    let dot = norm_profile(&wd, &radii, &sampler, norm)?;
    let product: Vec<f64> = inv.values.iter().zip(&dot.values).map(|(a, b)| a * b).collect();
    let slope = log_log_slope(&radii, &product)?;
    let mut checks = vec![CheckResult::within(
        "product_exponent",
        slope,
        p,
        0.1 * p,
        "log-log slope of ‖ω_t⁻¹‖_r‖ω̇_t‖_r over r ∈ [2, 6] at t = ½",
    )];
    let logs: Vec<f64> = inv.values.iter().map(|v| v.ln()).collect();
    let (decay, _) = least_squares_line(&radii, &logs);
    checks.push(CheckResult::within("inverse_decay_rate", decay, -1.0, 0.1, "slope of log‖ω_t⁻¹‖_r against r at t = ½"));

    let sweep_sampler = opts.sweep_sampler(4)?;
    let mut totals = Vec::new();
    let mut reports = Vec::new();
    for &r_max in &LIOUVILLE_SWEEP {
        let cfg = LogVarConfig::new(grid(1.0, r_max, (2.0 * r_max) as usize - 1, false)?).with_r_max(r_max).with_norm(norm);
        let rep = total_log_variation(&case.omega, &sweep_sampler, &cfg, DEFAULT_T_NODES)?;
        totals.push(rep.total.expect("family total"));
        reports.push(rep);
    }
    let increasing = totals.windows(2).all(|w| w[1] > w[0]);
    checks.push(CheckResult::flag("total_increasing", increasing, format!("totals {totals:?} at R_max {LIOUVILLE_SWEEP:?}")));
    let xs: Vec<f64> = LIOUVILLE_SWEEP.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = totals.iter().map(|v| v.ln()).collect();
    let (divergence, _) = least_squares_line(&xs, &ys);
    checks.push(CheckResult::within(
        "divergence_exponent",
        divergence,
        p,
        0.1 * p,
        "log-log slope of the total log-variation against R_max",
    ));

    let artifacts = BTreeMap::from([
        ("inverse_profile".to_string(), to_value(&inv)),
        ("dot_profile".to_string(), to_value(&dot)),
        (
            "product_fit".to_string(),
            json!({ "radii": radii, "product": product, "exponent": slope, "inverse_decay_rate": decay, "t": 0.5 }),
        ),
        ("sweep".to_string(), json!({ "r_max": LIOUVILLE_SWEEP, "totals": totals, "exponent": divergence })),
        ("log_variation".to_string(), to_value(&reports)),
    ]);
    Ok((checks, artifacts))
}

/// Exterior radii of the decay fits in the inversion chart.
pub fn inversion_fit_radii() -> Vec<f64> {
    grid(2.0, 32.0, 5, true).expect("static grid")
}

fn inversion_suite(case: &GalleryCase, opts: &SuiteOptions) -> Result<Outcome> {
    let map = case.map.as_ref().expect("inversion map");
    let pts = Region::Annulus { inner: 0.1, outer: 10.0 }.sample(4, 1000, opts.point_seed + 4)?;
    let mut worst: f64 = 0.0;
    for x in &pts {
        let back = map.eval(&map.eval(x)?)?;
        worst = worst.max(back.iter().zip(x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / norm2(x));
    }
    let mut checks = vec![CheckResult::at_most("involution", worst, 1e-12, "|ι(ι(x)) − x|/|x| over 1000 points")];
    let sampler = SphereSampler::new(4, opts.sampler)?;
    let radii = inversion_fit_radii();
    let dot = norm_profile(case.part("omega_dot_exterior")?, &radii, &sampler, Norm::l1())?;
    let inv = inverse_norm_profile(&case.omega.at(0.5), &radii, &sampler, Norm::l1())?;
    let (s_dot, s_inv) = (log_log_slope(&radii, &dot.values)?, log_log_slope(&radii, &inv.values)?);
    checks.push(CheckResult::within("dot_decay_exponent", s_dot, -4.0, 0.2, "log-log slope of the moved ω̇"));
    checks.push(CheckResult::within("inverse_growth_exponent", s_inv, 4.0, 0.2, "log-log slope of the moved ω⁻¹ at t = ½"));
    let artifacts = BTreeMap::from([
        ("dot_profile".to_string(), to_value(&dot)),
        ("inverse_profile".to_string(), to_value(&inv)),
    ]);
    Ok((checks, artifacts))
}
