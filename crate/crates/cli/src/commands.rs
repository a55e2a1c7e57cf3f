use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use moser_core::contact::{verify_contact_isotopy, ContactFamily, GraySettings};
use moser_core::criteria::{grid, least_squares_line, log_variation, total_log_variation, LogVarConfig, LogVarReport, DEFAULT_T_NODES};
use moser_core::forms::TimeForm;
use moser_core::gallery::{run_suite, Region, SuiteOptions};
use moser_core::moser::{build_moser_field, integrate_flow, verify_strong_isotopy, FlowRecord, FlowStatus, VerifySettings};
use moser_core::norms::{inverse_norm_profile, norm_profile, NormProfile, SamplerSpec, SphereSampler};
use moser_core::primitive::euler_primitive_family;
use moser_core::quadrature::QuadratureSpec;
use moser_core::report::{format_float, logvar_csv, profile_csv, to_json, write_atomic};

use crate::source::{load, Source};
use crate::{
    parse_grid, CaseArgs, CliError, CliResult, Format, GridSpec, IntegratorArgs, NormArgs, OutputArgs, PointArgs, SamplingArgs,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Spacing {
    Linear,
    Log,
}

fn expand(g: GridSpec, spacing: Spacing) -> CliResult<Vec<f64>> {
    Ok(grid(g.min, g.max, g.count, matches!(spacing, Spacing::Log))?)
}

fn emit(out: &OutputArgs, json: String, csv: Option<String>) -> CliResult<()> {
    let body = match out.format {
        Format::Json => json,
        Format::Csv => csv.ok_or_else(|| CliError::Usage("CSV output is not available for this command".into()))?,
    };
    match &out.out {
        Some(p) => write_atomic(p, body.as_bytes())?,
        None => print!("{body}"),
    }
    Ok(())
}

fn sampler(dim: usize, s: &SamplingArgs) -> CliResult<SphereSampler> {
    Ok(SphereSampler::new(dim, SamplerSpec::new(s.seed, s.samples))?)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Args)]
pub struct NormsArgs {
    /// Form spec or gallery reference.
    #[arg(long)]
    spec: PathBuf,
    /// Radius grid `min:max:count`.
    #[arg(long, value_parser = parse_grid)]
    r: GridSpec,
    #[arg(long, value_enum, default_value = "linear")]
    r_spacing: Spacing,
    /// Time at which a family is measured.
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    /// Measure the bivector ω⁻¹ instead of the form.
    #[arg(long)]
    inverse: bool,
    /// Compare against the closed-form bounds of the radial pullback case.
    #[arg(long)]
    check_bound: bool,
    #[command(flatten)]
    case: CaseArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[command(flatten)]
    norm: NormArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Serialize)]
struct BoundCheck {
    bound: String,
    values: Vec<f64>,
    ratios: Vec<f64>,
    slack: f64,
    pass: bool,
}

#[derive(Serialize)]
struct NormsReport {
    inverse: bool,
    t: f64,
    profile: NormProfile,
    bound: Option<BoundCheck>,
}

/// Bound of the radial pullback case for the given part, and whether it
/// applies to the inverse.
fn radial_bound(src: &Source) -> CliResult<(String, bool, Box<dyn Fn(f64) -> f64>)> {
    let case = src.case.as_ref().filter(|c| c.name == "radial_pullback");
    let (case, part) = match (case, &src.part) {
        (Some(c), Some((name, _))) => (c, name.as_str()),
        _ => return Err(usage("--check-bound needs a radial_pullback gallery reference with part omega or d_sigma")),
    };
    let (p, c) = (case.params["p"], case.params["c"]);
    match part {
        "omega" => Ok(("(2 - 1/p) r^(2-2p)".into(), true, Box::new(move |r: f64| (2.0 - 1.0 / p) * r.powf(2.0 - 2.0 * p)))),
        "d_sigma" => Ok(("cp/(2p-1) r^(2p-2)".into(), false, Box::new(move |r: f64| c * p / (2.0 * p - 1.0) * r.powf(2.0 * p - 2.0)))),
        other => Err(usage(format!("no closed-form bound for part `{other}`"))),
    }
}

pub fn norms(a: NormsArgs) -> CliResult<bool> {
    let src = load(&a.spec, &a.case.params())?;
    let radii = expand(a.r, a.r_spacing)?;
    let bound = if a.check_bound {
        if radii[0] < 1.2 {
            return Err(usage("the radial pullback bounds hold for r >= 1.2"));
        }
        Some(radial_bound(&src)?)
    } else {
        None
    };
    let inverse = a.inverse || bound.as_ref().is_some_and(|b| b.1);
    let form = src.form_at(a.t);
    let norm = a.norm.resolve(src.case.as_ref().map(|c| c.chart));
    let smp = sampler(form.dim(), &a.sampling)?;
    let profile = if inverse {
        inverse_norm_profile(&form, &radii, &smp, norm)?
    } else {
        norm_profile(&form, &radii, &smp, norm)?
    };
    const SLACK: f64 = 1.001;
    let bound = bound.map(|(name, _, f)| {
        let values: Vec<f64> = radii.iter().map(|&r| f(r)).collect();
        let ratios: Vec<f64> = profile.values.iter().zip(&values).map(|(v, b)| v / b).collect();
        let pass = ratios.iter().all(|q| *q <= SLACK);
        BoundCheck { bound: name, values, ratios, slack: SLACK, pass }
    });
    let pass = bound.as_ref().map_or(true, |b| b.pass);
    let mut csv = match &bound {
        Some(_) => String::from("r,value,bound\n"),
        None => String::from("r,value\n"),
    };
    for (i, (r, v)) in profile.radii.iter().zip(&profile.values).enumerate() {
        match &bound {
            Some(b) => writeln!(csv, "{},{},{}", format_float(*r), format_float(*v), format_float(b.values[i])),
            None => writeln!(csv, "{},{}", format_float(*r), format_float(*v)),
        }
        .expect("write to String");
    }
    let json = to_json("norm_profile", &NormsReport { inverse, t: a.t, profile, bound })?;
    emit(&a.output, json, Some(csv))?;
    Ok(pass)
}

#[derive(Args)]
pub struct LogvarArgs {
    /// Form (with --beta) or family spec, or gallery reference.
    #[arg(long)]
    spec: PathBuf,
    /// Perturbation β; computes LogVar(ω_t, β) at the time --t.
    #[arg(long)]
    beta: Option<PathBuf>,
    /// Radius grid `min:max:count`.
    #[arg(long, value_parser = parse_grid)]
    r: GridSpec,
    #[arg(long, value_enum, default_value = "linear")]
    r_spacing: Spacing,
    /// Truncation radius; the grid maximum when omitted.
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_T_NODES)]
    t_nodes: usize,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    /// Comma-separated truncation radii; each run uses the grid's min and count.
    #[arg(long, value_parser = crate::parse_list)]
    sweep: Option<Vec<f64>>,
    #[command(flatten)]
    case: CaseArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[command(flatten)]
    norm: NormArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Serialize)]
struct Sweep {
    r_max: Vec<f64>,
    totals: Vec<f64>,
    strictly_increasing: bool,
    /// Least-squares slope of log total against log R_max.
    exponent: Option<f64>,
    reports: Vec<LogVarReport>,
}

pub fn logvar(a: LogvarArgs) -> CliResult<bool> {
    let params = a.case.params();
    let src = load(&a.spec, &params)?;
    let norm = a.norm.resolve(src.case.as_ref().map(|c| c.chart));
    let smp = sampler(src.family.dim(), &a.sampling)?;
    let radii = expand(a.r, a.r_spacing)?;
    let cfg = LogVarConfig::new(radii.clone()).with_r_max(a.r_max.unwrap_or(a.r.max)).with_norm(norm);

    if let Some(beta) = &a.beta {
        let b = load(beta, &params)?;
        let rep = log_variation(&src.form_at(a.t), &b.form_at(a.t), &smp, &cfg)?;
        emit(&a.output, to_json("log_variation", &rep)?, Some(logvar_csv(&rep)?))?;
        return Ok(true);
    }
    if src.part.is_some() {
        return Err(usage("a single form needs --beta; give a family for the total log-variation"));
    }
    let Some(sweep) = &a.sweep else {
        let rep = total_log_variation(&src.family, &smp, &cfg, a.t_nodes)?;
        emit(&a.output, to_json("log_variation", &rep)?, Some(logvar_csv(&rep)?))?;
        return Ok(true);
    };
    let mut reports = Vec::new();
    for &r_max in sweep {
        let g = GridSpec { max: r_max, ..a.r };
        let cfg = LogVarConfig::new(expand(g, a.r_spacing)?).with_r_max(r_max).with_norm(norm);
        reports.push(total_log_variation(&src.family, &smp, &cfg, a.t_nodes)?);
    }
    let totals: Vec<f64> = reports.iter().map(|r| r.total.expect("family total")).collect();
    let strictly_increasing = totals.windows(2).all(|w| w[1] > w[0]);
    let exponent = (sweep.len() >= 2 && totals.iter().all(|v| *v > 0.0)).then(|| {
        let xs: Vec<f64> = sweep.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = totals.iter().map(|v| v.ln()).collect();
        least_squares_line(&xs, &ys).0
    });
    let mut csv = String::from("r_max,total\n");
    for (r, v) in sweep.iter().zip(&totals) {
        writeln!(csv, "{},{}", format_float(*r), format_float(*v)).expect("write to String");
    }
    let report = Sweep { r_max: sweep.clone(), totals, strictly_increasing, exponent, reports };
    emit(&a.output, to_json("log_variation_sweep", &report)?, Some(csv))?;
    Ok(true)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrimitiveChoice {
    /// Radial primitive of ω̇_t.
    Euler,
}

#[derive(Args)]
pub struct FamilyArgs {
    /// Family spec or gallery reference.
    #[arg(long)]
    spec: PathBuf,
    /// Primitive σ_t of ω̇_t as a 1-form spec.
    #[arg(long, conflicts_with = "primitive")]
    sigma: Option<PathBuf>,
    #[arg(long, value_enum)]
    primitive: Option<PrimitiveChoice>,
    /// Time grid `min:max:count`.
    #[arg(long, value_parser = parse_grid, default_value = "0:1:11")]
    times: GridSpec,
    #[command(flatten)]
    points: PointArgs,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[command(flatten)]
    case: CaseArgs,
}

struct Prepared {
    src: Source,
    sigma: TimeForm,
    times: Vec<f64>,
    points: Vec<Vec<f64>>,
}

fn resolve_points(p: &PointArgs, dim: usize, region: Region, count: usize) -> CliResult<Vec<Vec<f64>>> {
    if !p.from.is_empty() {
        if let Some(x) = p.from.iter().find(|x| x.len() != dim) {
            return Err(usage(format!("start point {x:?} has {} coordinates, expected {dim}", x.len())));
        }
        return Ok(p.from.clone());
    }
    let region = match (p.radius, p.annulus) {
        (Some(radius), _) => Region::Ball { radius },
        (None, Some((inner, outer))) => Region::Annulus { inner, outer },
        (None, None) => region,
    };
    Ok(region.sample(dim, p.points.unwrap_or(count), p.point_seed)?)
}

fn prepare(f: &FamilyArgs, count: usize) -> CliResult<Prepared> {
    let params = f.case.params();
    let src = load(&f.spec, &params)?;
    if src.part.is_some() {
        return Err(usage("flows need a family, not a single part"));
    }
    let sigma = match (&f.sigma, f.primitive) {
        (Some(path), _) => load(path, &params)?.family,
        (None, Some(PrimitiveChoice::Euler)) => euler_primitive_family(&src.family.time_derivative(), QuadratureSpec::default())?,
        (None, None) => src
            .sigma()
            .cloned()
            .ok_or_else(|| usage("give --sigma or --primitive euler for a family without a known primitive"))?,
    };
    let times = grid(f.times.min, f.times.max, f.times.count, false)?;
    let region = src.case.as_ref().map_or(Region::Ball { radius: 1.0 }, |c| c.region);
    let points = resolve_points(&f.points, src.family.dim(), region, count)?;
    Ok(Prepared { src, sigma, times, points })
}

#[derive(Args)]
pub struct FlowArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Serialize)]
struct FlowsReport {
    all_completed: bool,
    records: Vec<FlowRecord>,
}

pub fn flow(a: FlowArgs) -> CliResult<bool> {
    let prep = prepare(&a.family, 10)?;
    let field = build_moser_field(&prep.src.family, &prep.sigma)?;
    let spec = a.family.integrator.spec();
    let records = prep
        .points
        .iter()
        .map(|x| integrate_flow(&field, x, &spec, &prep.times))
        .collect::<moser_core::Result<Vec<_>>>()?;
    let all_completed = records.iter().all(|r| r.status == FlowStatus::Completed);
    let mut csv = String::from("point,t");
    for i in 0..prep.src.family.dim() {
        write!(csv, ",x{}", i + 1).expect("write to String");
    }
    csv.push_str(",arc_length\n");
    for (k, rec) in records.iter().enumerate() {
        for (i, t) in rec.times.iter().enumerate() {
            write!(csv, "{k},{}", format_float(*t)).expect("write to String");
            for v in &rec.points[i] {
                write!(csv, ",{}", format_float(*v)).expect("write to String");
            }
            writeln!(csv, ",{}", format_float(rec.arc_lengths[i])).expect("write to String");
        }
    }
    emit(&a.output, to_json("flows", &FlowsReport { all_completed, records })?, Some(csv))?;
    Ok(all_completed)
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    family: FamilyArgs,
    /// Residual tolerance of φ_t*ω_t = ω_0.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Relative tolerance of the dσ = ω̇ probe.
    #[arg(long, default_value_t = 1e-5)]
    probe_tol: f64,
    #[command(flatten)]
    norm: NormArgs,
    #[command(flatten)]
    output: OutputArgs,
}

fn residual_csv(residuals: &[Vec<Option<f64>>], times: &[f64], extra: Option<&[Vec<Option<f64>>]>) -> String {
    let mut csv = String::from(if extra.is_some() { "point,t,residual,factor\n" } else { "point,t,residual\n" });
    for (k, row) in residuals.iter().enumerate() {
        for (i, r) in row.iter().enumerate() {
            write!(csv, "{k},{},{}", format_float(times[i]), r.map(format_float).unwrap_or_default()).expect("write to String");
            if let Some(e) = extra {
                write!(csv, ",{}", e[k][i].map(format_float).unwrap_or_default()).expect("write to String");
            }
            csv.push('\n');
        }
    }
    csv
}

pub fn verify(a: VerifyArgs) -> CliResult<bool> {
    let prep = prepare(&a.family, 50)?;
    let settings = VerifySettings {
        tol: a.tol,
        integrator: a.family.integrator.spec(),
        norm_kind: a.norm.resolve(None).kind,
        probe_tol: a.probe_tol,
    };
    let rep = verify_strong_isotopy(&prep.src.family, &prep.sigma, &prep.points, &prep.times, &settings)?;
    let csv = residual_csv(&rep.residuals, &rep.times, None);
    emit(&a.output, to_json("verification", &rep)?, Some(csv))?;
    Ok(rep.pass)
}

#[derive(Args)]
pub struct ContactArgs {
    /// Family of contact 1-forms.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_parser = parse_grid, default_value = "0:1:11")]
    times: GridSpec,
    #[command(flatten)]
    points: PointArgs,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1e-4)]
    h_tol: f64,
    /// Skip the finite-difference cross-check of h_t.
    #[arg(long)]
    no_h_check: bool,
    #[command(flatten)]
    integrator: IntegratorArgs,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn contact_verify(a: ContactArgs) -> CliResult<bool> {
    let src = load(&a.spec, &Default::default())?;
    let points = resolve_points(&a.points, src.family.dim(), Region::Ball { radius: 1.0 }, 50)?;
    let fam = ContactFamily::new(src.family, &points)?;
    let times = grid(a.times.min, a.times.max, a.times.count, false)?;
    let settings = GraySettings {
        tol: a.tol,
        integrator: a.integrator.spec(),
        h_check: !a.no_h_check,
        h_tol: a.h_tol,
        ..GraySettings::default()
    };
    let rep = verify_contact_isotopy(&fam, &points, &times, &settings)?;
    let csv = residual_csv(&rep.residuals, &rep.times, Some(&rep.factors));
    emit(&a.output, to_json("contact_verification", &rep)?, Some(csv))?;
    Ok(rep.pass)
}

#[derive(Args)]
pub struct ExampleArgs {
    /// Case name: product, radial_pullback, liouville_rotation, shrinking, inversion_chart.
    name: String,
    /// Bundle directory; `<name>-report` when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    case: CaseArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Sphere samples per radius for sweeps and length bounds.
    #[arg(long, default_value_t = SuiteOptions::default().sweep_samples)]
    sweep_samples: usize,
    /// Number of flow start points; case default when omitted.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, default_value_t = SuiteOptions::default().point_seed)]
    point_seed: u64,
}

#[derive(Serialize)]
struct Summary<'a> {
    case: &'a str,
    pass: bool,
    params: &'a BTreeMap<String, f64>,
    region: Region,
    chart: moser_core::norms::Chart,
    self_test: &'a [moser_core::gallery::CheckResult],
    checks: &'a [moser_core::gallery::CheckResult],
    expectations: &'a [moser_core::gallery::Expectation],
    files: Vec<String>,
}

pub fn example(a: ExampleArgs) -> CliResult<bool> {
    let opts = SuiteOptions {
        params: a.case.params(),
        sampler: SamplerSpec::new(a.sampling.seed, a.sampling.samples),
        sweep_samples: a.sweep_samples,
        points: a.points,
        point_seed: a.point_seed,
    };
    let rep = run_suite(&a.name, &opts)?;
    let dir = a.out.unwrap_or_else(|| PathBuf::from(format!("{}-report", a.name)));
    std::fs::create_dir_all(&dir).map_err(moser_core::Error::from)?;
    let mut files = Vec::new();
    for (key, value) in &rep.artifacts {
        let name = format!("{key}.json");
        write_atomic(&dir.join(&name), to_json(key, value)?.as_bytes())?;
        files.push(name);
        if key.ends_with("_profile") {
            if let Ok(p) = serde_json::from_value::<NormProfile>(value.clone()) {
                let name = format!("{key}.csv");
                write_atomic(&dir.join(&name), profile_csv(&p)?.as_bytes())?;
                files.push(name);
            }
        }
        let logvars = serde_json::from_value::<LogVarReport>(value.clone())
            .map(|r| vec![r])
            .or_else(|_| serde_json::from_value::<Vec<LogVarReport>>(value.clone()));
        if let Ok(list) = logvars {
            for (i, r) in list.iter().enumerate() {
                let name = if list.len() == 1 { format!("{key}.csv") } else { format!("{key}_{i}.csv") };
                write_atomic(&dir.join(&name), logvar_csv(r)?.as_bytes())?;
                files.push(name);
            }
        }
    }
    files.sort();
    let summary = Summary {
        case: &rep.case,
        pass: rep.pass,
        params: &rep.params,
        region: rep.region,
        chart: rep.chart,
        self_test: &rep.self_test,
        checks: &rep.checks,
        expectations: &rep.expectations,
        files,
    };
    write_atomic(&dir.join("summary.json"), to_json("example_summary", &summary)?.as_bytes())?;
    for c in &rep.checks {
        let target = c.target.map(|t| format!(" target {t}")).unwrap_or_default();
        println!(
            "{:<28} {}  value {:.6e}  limit {:.3e}{target}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.value,
            c.limit
        );
    }
    println!("{} {} -> {}", rep.case, if rep.pass { "PASS" } else { "FAIL" }, dir.display());
    Ok(rep.pass)
}
