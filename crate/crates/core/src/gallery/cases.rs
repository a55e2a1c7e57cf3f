use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dsl::expr::build;
use crate::dsl::{parse_expr, Node};
use crate::error::{Error, Result};
use crate::forms::basis::Basis;
use crate::forms::kform::{central_jacobian, fd_step, norm2};
use crate::forms::ops::pullback_coeffs;
use crate::forms::{exterior_derivative, pullback, smallest_singular_value, DerivativeScheme, KForm, SmoothMap, TimeForm};
use crate::moser::check_primitive;
use crate::norms::Chart;
use crate::primitive::euler_primitive_family;
use crate::quadrature::QuadratureSpec;

use super::{expect, rel_diff, CheckResult, GalleryCase, Region};

pub const DEFAULT_PRODUCT_PROFILE: &str = "sqrt(x1^2 + x2^2 + 1 + t^2)";

const PROBES4: [[f64; 4]; 6] = [
    [0.3, -0.2, 0.5, 0.1],
    [1.1, 0.4, -0.3, 0.2],
    [-0.7, 1.3, 0.9, -1.6],
    [2.0, 0.0, 0.0, 0.0],
    [2.5, -3.1, 1.7, 4.2],
    [-5.0, 2.0, 6.0, -1.0],
];

fn probes(dim: usize) -> Vec<Vec<f64>> {
    PROBES4.iter().map(|p| (0..dim).map(|i| p[i % 4] * (1.0 + 0.1 * (i / 4) as f64)).collect()).collect()
}

fn jacobian_check(name: &str, form: &KForm, points: &[Vec<f64>]) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for x in points {
        let exact = form.exact_jacobian(x).ok_or(Error::MissingJacobian)??;
        let fd = form.fd_jacobian(x, None)?;
        worst = worst.max(rel_diff(&exact, &fd));
    }
    Ok(CheckResult::at_most(name, worst, 1e-6, "exact jacobian against central differences"))
}

fn min_singular_value(form: &KForm, points: &[Vec<f64>]) -> Result<f64> {
    let mut m = f64::INFINITY;
    for x in points {
        m = m.min(smallest_singular_value(&form.matrix(x)?));
    }
    Ok(m)
}

/// `ω_t = a_1 f(t, x_1, y_1) dx_1∧dy_1 + Σ_{i≥2} a_i dx_i∧dy_i` on R^{2n} in
/// coordinates `(x_1, y_1, …, x_n, y_n)`, with `f = √(x_1²+y_1²+1+t²)` by
/// default. σ_t is the radial primitive of ω̇_t.
pub fn case_product(n: usize, a: &[f64], profile: Option<&str>) -> Result<GalleryCase> {
    if n == 0 || a.len() != n {
        return Err(Error::InvalidParameter(format!("need n >= 1 and {n} coefficients, got {}", a.len())));
    }
    if let Some(i) = a.iter().position(|v| *v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("coefficient a{} must be finite and nonzero", i + 1)));
    }
    let dim = 2 * n;
    let src = profile.unwrap_or(DEFAULT_PRODUCT_PROFILE);
    let f = parse_expr(src, dim)?;
    if f.spatial_extent() > 2 {
        return Err(Error::InvalidParameter(format!(
            "profile `{src}` may depend on t, x1, x2 only, otherwise the family is not closed"
        )));
    }
    let basis = Basis::new(dim, 2);
    let mut exprs: Vec<Node> = vec![build::num(0.0); basis.len()];
    exprs[0] = build::mul(build::num(a[0]), f.clone());
    for (i, &ai) in a.iter().enumerate().skip(1) {
        exprs[basis.rank(&[2 * i, 2 * i + 1]).expect("pair")] = build::num(ai);
    }
    let omega = TimeForm::from_exprs(dim, 2, exprs)?;
    let sigma = euler_primitive_family(&omega.time_derivative(), QuadratureSpec::default())?;

    let pts = probes(dim);
    let mut self_test = Vec::new();
    let reference = |t: f64, x: &[f64]| -> (f64, f64) {
        if profile.is_none() {
            let s = (x[0] * x[0] + x[1] * x[1] + 1.0 + t * t).sqrt();
            (a[0] * s, a[0] * t / s)
        } else {
            (a[0] * f.eval(t, x), f64::NAN)
        }
    };
    let mut worst: f64 = 0.0;
    let mut worst_dot: f64 = 0.0;
    let dot = omega.time_derivative();
    let zero = vec![0.0; dim];
    for t in [0.0, 0.5, 1.0] {
        for x in pts.iter().chain(std::iter::once(&zero)) {
            let (w, wd) = (omega.eval(t, x)?, dot.eval(t, x)?);
            let (rw, rwd) = reference(t, x);
            worst = worst.max((w[0] - rw).abs());
            if profile.is_none() {
                worst_dot = worst_dot.max((wd[0] - rwd).abs());
            }
            for (i, &ai) in a.iter().enumerate().skip(1) {
                worst = worst.max((w[basis.rank(&[2 * i, 2 * i + 1]).unwrap()] - ai).abs());
            }
        }
    }
    self_test.push(CheckResult::at_most("coefficients", worst, 1e-12, "ω_t against the displayed product formula"));
    if profile.is_none() {
        self_test.push(CheckResult::at_most("time_derivative", worst_dot, 1e-12, "symbolic ω̇_t against a1·t/√(x1²+y1²+1+t²)"));
        let origin = omega.eval(0.0, &zero)?[0];
        self_test.push(CheckResult::within("origin_value", origin, a[0], 1e-15, "ω_0 at x = 0 on dx1∧dy1"));
    }
    self_test.push(CheckResult::flag(
        "primitive",
        check_primitive(&omega, &sigma, &pts, &[0.0, 0.5, 1.0], 1e-8).is_ok(),
        "dσ_t = ω̇_t at probe points",
    ));
    let mut min_sv = f64::INFINITY;
    for t in [0.0, 0.5, 1.0] {
        min_sv = min_sv.min(min_singular_value(&omega.at(t), &pts)?);
    }
    self_test.push(CheckResult::at_least("nondegenerate", min_sv, 1e-9, "smallest singular value at probes"));

    let mut params = BTreeMap::from([("n".to_string(), n as f64)]);
    for (i, v) in a.iter().enumerate() {
        params.insert(format!("a{}", i + 1), *v);
    }
    GalleryCase {
        name: "product",
        dim,
        params,
        omega,
        sigma: Some(sigma),
        region: Region::Ball { radius: 3.0 },
        chart: Chart::Euclidean,
        excluded_radius: None,
        expectations: vec![
            expect("symplectic", "ω_t is symplectic because f is bounded away from zero"),
            expect("isotopy", "the Moser flow pulls ω_t back to ω_0 on the sampled ball"),
        ],
        parts: BTreeMap::new(),
        map: None,
        self_test,
    }
    .finish()
}

/// Quintic smoothstep and its first two derivatives in u, clamped to [0, 1].
fn smoothstep5(u: f64) -> [f64; 3] {
    if u <= 0.0 {
        [0.0; 3]
    } else if u >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        let u2 = u * u;
        [u2 * u * (10.0 - 15.0 * u + 6.0 * u2), 30.0 * u2 * (1.0 - u).powi(2), 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)]
    }
}

/// Cubic smoothstep on r ∈ [½, 1] and its r-derivatives; the slope peaks at 3.
fn cutoff(r: f64) -> [f64; 3] {
    let u = 2.0 * (r - 0.5);
    if u <= 0.0 {
        [0.0; 3]
    } else if u >= 1.0 {
        [1.0, 0.0, 0.0]
    } else {
        [u * u * (3.0 - 2.0 * u), 2.0 * 6.0 * u * (1.0 - u), 4.0 * (6.0 - 12.0 * u)]
    }
}

const BLEND_START: f64 = 1.0;
const BLEND_WIDTH: f64 = 0.2;

/// ψ = φ(r)/r: 1 on r ≤ 1, r^{p-1} on r ≥ 1.2, blended in between. Returns
/// ψ, ψ', ψ''.
fn psi(p: f64, r: f64) -> [f64; 3] {
    if r <= BLEND_START {
        return [1.0, 0.0, 0.0];
    }
    let q = [r.powf(p - 1.0), (p - 1.0) * r.powf(p - 2.0), (p - 1.0) * (p - 2.0) * r.powf(p - 3.0)];
    if r >= BLEND_START + BLEND_WIDTH {
        return q;
    }
    let s = smoothstep5((r - BLEND_START) / BLEND_WIDTH);
    let (s1, s2) = (s[1] / BLEND_WIDTH, s[2] / (BLEND_WIDTH * BLEND_WIDTH));
    [1.0 + s[0] * (q[0] - 1.0), s1 * (q[0] - 1.0) + s[0] * q[1], s2 * (q[0] - 1.0) + 2.0 * s1 * q[1] + s[0] * q[2]]
}

/// The six quadratic polynomials multiplying B, and their gradients.
fn radial_quadratics(x: &[f64]) -> ([f64; 6], [[f64; 4]; 6]) {
    let (a, b, c, d) = (x[0], x[1], x[2], x[3]);
    let q1 = b * c - a * d;
    let q2 = a * c + b * d;
    (
        [a * a + b * b, q1, q2, -q2, q1, c * c + d * d],
        [
            [2.0 * a, 2.0 * b, 0.0, 0.0],
            [-d, c, b, -a],
            [c, d, a, b],
            [-c, -d, -a, -b],
            [-d, c, b, -a],
            [0.0, 0.0, 2.0 * c, 2.0 * d],
        ],
    )
}

const DIAG: [f64; 6] = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0];

fn radial_omega(p: f64, x: &[f64]) -> Vec<f64> {
    let r = norm2(x);
    let [s, s1, _] = psi(p, r);
    let a = s * s;
    let b = if r > BLEND_START { s * s1 / r } else { 0.0 };
    let (q, _) = radial_quadratics(x);
    (0..6).map(|i| DIAG[i] * a + b * q[i]).collect()
}

fn radial_omega_jacobian(p: f64, x: &[f64]) -> Vec<f64> {
    let r = norm2(x);
    let mut j = vec![0.0; 24];
    if r <= BLEND_START {
        return j;
    }
    let [s, s1, s2] = psi(p, r);
    let b = s * s1 / r;
    let da = 2.0 * s * s1;
    let db = (s1 * s1 + s * s2) / r - s * s1 / (r * r);
    let (q, dq) = radial_quadratics(x);
    for i in 0..6 {
        for k in 0..4 {
            j[i * 4 + k] = (DIAG[i] * da + db * q[i]) * x[k] / r + b * dq[i][k];
        }
    }
    j
}

/// `(K λ, d/dr, d²/dr²)` times the powers of r used by σ and dσ.
struct SigmaProfile {
    k: f64,
    p: f64,
}

impl SigmaProfile {
    /// g(r) = K λ r^{2p-1} and g'(r).
    fn g(&self, r: f64) -> (f64, f64) {
        let [l, l1, _] = cutoff(r);
        let e = 2.0 * self.p - 1.0;
        (self.k * l * r.powf(e), self.k * (l1 * r.powf(e) + e * l * r.powf(e - 1.0)))
    }

    /// G = g'/r and G'.
    fn big_g(&self, r: f64) -> (f64, f64) {
        let [l, l1, l2] = cutoff(r);
        let e = 2.0 * self.p - 1.0;
        let g = self.k * (l1 * r.powf(e - 1.0) + e * l * r.powf(e - 2.0));
        let dg = self.k
            * (l2 * r.powf(e - 1.0) + (e - 1.0) * l1 * r.powf(e - 2.0) + e * l1 * r.powf(e - 2.0) + e * (e - 2.0) * l * r.powf(e - 3.0));
        (g, dg)
    }
}

const PAIRS4: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Pullback of the standard form on R⁴ by `x ↦ (φ(r)/r) x`, with φ(r) = r
/// inside the unit ball and r^p beyond 1.2, and the family `ω + t dσ` for
/// `σ = (cp/(6(2p-1)²)) λ(r) r^{2p-1} Σ dx_i`.
pub fn case_radial_pullback(p: f64, c: f64) -> Result<GalleryCase> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("radial_pullback needs p > 1, got {p}")));
    }
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidParameter(format!("radial_pullback needs 0 < c < 1, got {c}")));
    }
    let omega = KForm::new(4, 2, move |x| Ok(radial_omega(p, x)))?.with_jacobian(move |x| Ok(radial_omega_jacobian(p, x)));
    let prof = Arc::new(SigmaProfile { k: c * p / (6.0 * (2.0 * p - 1.0).powi(2)), p });
    let pr = prof.clone();
    let sigma = KForm::new(4, 1, move |x| {
        let r = norm2(x);
        Ok(vec![if r > 0.5 { pr.g(r).0 } else { 0.0 }; 4])
    })?;
    let pr = prof.clone();
    let sigma = sigma.with_jacobian(move |x| {
        let r = norm2(x);
        let mut j = vec![0.0; 16];
        if r > 0.5 {
            let d = pr.g(r).1;
            for i in 0..4 {
                for k in 0..4 {
                    j[i * 4 + k] = d * x[k] / r;
                }
            }
        }
        Ok(j)
    });
    let pr = prof.clone();
    let dsigma = KForm::new(4, 2, move |x| {
        let r = norm2(x);
        let g = if r > 0.5 { pr.big_g(r).0 } else { 0.0 };
        Ok(PAIRS4.iter().map(|&(i, j)| g * (x[i] - x[j])).collect())
    })?;
    let pr = prof;
    let dsigma = dsigma.with_jacobian(move |x| {
        let r = norm2(x);
        let mut jac = vec![0.0; 24];
        if r > 0.5 {
            let (g, dg) = pr.big_g(r);
            for (row, &(i, j)) in PAIRS4.iter().enumerate() {
                for k in 0..4 {
                    let delta = (i == k) as i32 as f64 - (j == k) as i32 as f64;
                    jac[row * 4 + k] = dg * x[k] / r * (x[i] - x[j]) + g * delta;
                }
            }
        }
        Ok(jac)
    });
    let family = TimeForm::affine(&omega, &dsigma)?;
    let sigma_t = TimeForm::constant_in_time(&sigma)?;

    let mut pts = probes(4);
    pts.extend([vec![0.4, 0.3, -0.2, 0.1], vec![0.5, 0.6, 0.3, -0.2], vec![0.2, -1.0, 0.3, 0.4], vec![0.8, 0.7, -0.2, 0.1]]);
    let mut self_test = Vec::new();

    // independent evaluation: pull back the standard form through φ̂ with a
    // finite-difference jacobian
    let std_form = KForm::constant(4, 2, DIAG.to_vec())?;
    let phi_hat = SmoothMap::with_fd_jacobian(4, move |x| {
        let s = psi(p, norm2(x))[0];
        Ok(x.iter().map(|v| s * v).collect())
    });
    let pulled = pullback(&phi_hat, &std_form)?;
    let mut worst: f64 = 0.0;
    for x in &pts {
        worst = worst.max(rel_diff(&omega.eval(x)?, &pulled.eval(x)?));
    }
    self_test.push(CheckResult::at_most("pullback_formula", worst, 1e-7, "displayed A/B formula against φ̂*ω_0"));
    let probe = omega.eval(&[2.0, 0.0, 0.0, 0.0])?[0];
    self_test.push(CheckResult::within(
        "probe_value",
        probe,
        p * 4f64.powf(p - 1.0),
        1e-12 * p * 4f64.powf(p - 1.0),
        "A + B(x1²+x2²) at (2,0,0,0) equals p·4^{p-1}",
    ));
    let ds_auto = exterior_derivative(&sigma, DerivativeScheme::Exact)?;
    let mut worst: f64 = 0.0;
    for x in &pts {
        worst = worst.max(rel_diff(&dsigma.eval(x)?, &ds_auto.eval(x)?));
    }
    self_test.push(CheckResult::at_most("dsigma_formula", worst, 1e-12, "closed-form dσ against d applied to σ"));
    let dw = exterior_derivative(&omega, DerivativeScheme::Exact)?;
    let mut worst: f64 = 0.0;
    for x in &pts {
        worst = worst.max(rel_diff(&dw.eval(x)?, &[0.0; 4]));
    }
    self_test.push(CheckResult::at_most("closed", worst, 1e-9, "dω from the exact jacobian"));
    for (name, form) in [("omega_jacobian", &omega), ("sigma_jacobian", &sigma), ("dsigma_jacobian", &dsigma)] {
        self_test.push(jacobian_check(name, form, &pts)?);
    }

    let parts = BTreeMap::from([("omega", omega), ("sigma", sigma), ("d_sigma", dsigma)]);
    GalleryCase {
        name: "radial_pullback",
        dim: 4,
        params: BTreeMap::from([("p".to_string(), p), ("c".to_string(), c)]),
        omega: family,
        sigma: Some(sigma_t),
        region: Region::Annulus { inner: 1.0, outer: 4.0 },
        chart: Chart::Euclidean,
        excluded_radius: None,
        expectations: vec![
            expect("inverse_bound", "‖ω⁻¹‖_r ≤ (2 − 1/p) r^{2−2p} for r ≥ 1.2"),
            expect("dsigma_bound", "‖dσ‖_r ≤ cp/(2p−1) r^{2p−2} for r ≥ 1.2"),
            expect("pointwise_product", "|ω⁻¹(x)||dσ(x)| ≤ c, so ω + t dσ stays symplectic"),
            expect("total_bound", "total log-variation of ω + t dσ is at most c/(1−c)"),
        ],
        parts,
        map: None,
        self_test,
    }
    .finish()
}

/// Angle `t (log|x|)^p` of the rotation and its gradient coefficient
/// `t p (log|x|)^{p-1} / |x|²`.
fn rotation_angle(p: f64, t: f64, x: &[f64]) -> Result<(f64, f64)> {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    if n2 <= 1.0 {
        return Err(Error::ExcludedPoint { point: x.to_vec() });
    }
    let l = 0.5 * n2.ln();
    Ok((t * l.powf(p), t * p * l.powf(p - 1.0) / n2))
}

/// `φ_t`: rotation of the (x_1, y_1)-plane by the angle `t (log|x|)^p`,
/// defined for |x| > 1.
pub fn rotation_map(p: f64, t: f64) -> SmoothMap {
    SmoothMap::new(
        4,
        move |x| {
            let (th, _) = rotation_angle(p, t, x)?;
            let (s, c) = th.sin_cos();
            Ok(vec![c * x[0] - s * x[1], s * x[0] + c * x[1], x[2], x[3]])
        },
        move |x| {
            let (th, g) = rotation_angle(p, t, x)?;
            let (s, c) = th.sin_cos();
            let mut j = vec![0.0; 16];
            j[0] = c;
            j[1] = -s;
            j[4] = s;
            j[5] = c;
            j[10] = 1.0;
            j[15] = 1.0;
            let (u0, u1) = (-s * x[0] - c * x[1], c * x[0] - s * x[1]);
            for k in 0..4 {
                j[k] += u0 * g * x[k];
                j[4 + k] += u1 * g * x[k];
            }
            Ok(j)
        },
    )
}

/// `β = e^r f α_0` on R⁴∖{0} with r = log|x|, α_0 the standard contact form of
/// S³ pulled back through x ↦ x/|x| and f = 2x̂_1² + ŷ_1² + x̂_2² + ŷ_2².
fn liouville_primitive() -> Result<KForm> {
    let sq = |i: usize| build::pow(build::x(i), 2.0);
    let r2 = build::sum((0..4).map(sq));
    let num = build::sum([build::mul(build::num(2.0), sq(0)), sq(1), sq(2), sq(3)]);
    let g = build::div(num, build::mul(build::num(2.0), build::pow(r2, 1.5)));
    let coeffs = vec![
        build::neg(build::mul(g.clone(), build::x(1))),
        build::mul(g.clone(), build::x(0)),
        build::neg(build::mul(g.clone(), build::x(3))),
        build::mul(g, build::x(2)),
    ];
    KForm::from_exprs(4, 1, coeffs, 0.0)
}

/// `ω_t = φ_t*ω` for ω = dβ on the end |x| > 1, where φ_t rotates the
/// (x_1, y_1)-plane by `t (log|x|)^p`. Radii are cylinder coordinates
/// r = log|x|; ω̇_t is taken by central differences in t.
pub fn case_liouville_rotation(p: f64) -> Result<GalleryCase> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("liouville_rotation needs p >= 1, got {p}")));
    }
    let beta = liouville_primitive()?;
    let omega = exterior_derivative(&beta, DerivativeScheme::Exact)?.with_excluded_ball(1.0);
    let basis = Arc::new(Basis::new(4, 2));
    let w = omega.clone();
    let family = TimeForm::new(4, 2, move |t, x| {
        let map = rotation_map(p, t);
        let y = map.eval(x)?;
        Ok(pullback_coeffs(&basis, &w.eval(&y)?, &map.jacobian(x)?))
    })?
    .with_excluded_ball(1.0);

    let pts: Vec<Vec<f64>> = probes(4)
        .into_iter()
        .zip([3.0, 8.0, 20.0, 55.0, 150.0, 400.0])
        .map(|(x, target)| {
            let n = norm2(&x);
            x.iter().map(|v| v * target / n).collect()
        })
        .collect();
    let mut self_test = Vec::new();

    // β against an independent pullback of α_0 through x ↦ x/|x|
    let alpha0 = KForm::from_fn(4, 1, |x| vec![-0.5 * x[1], 0.5 * x[0], -0.5 * x[3], 0.5 * x[2]])?;
    let radial = SmoothMap::with_fd_jacobian(4, |x| {
        let n = norm2(x);
        Ok(x.iter().map(|v| v / n).collect())
    });
    let a0 = pullback(&radial, &alpha0)?;
    let mut worst: f64 = 0.0;
    for x in &pts {
        let n = norm2(x);
        let u: Vec<f64> = x.iter().map(|v| v / n).collect();
        let f = 2.0 * u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3];
        let expected: Vec<f64> = a0.eval(x)?.iter().map(|v| n * f * v).collect();
        let got = beta.eval(x)?;
        let scale = expected.iter().map(|v| v.abs()).fold(f64::MIN_POSITIVE, f64::max);
        worst = worst.max(got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);
    }
    self_test.push(CheckResult::at_most("primitive_formula", worst, 1e-7, "β against |x|·f·(x ↦ x/|x|)*α_0"));

    let mut worst: f64 = 0.0;
    let mut min_sv = f64::INFINITY;
    for t in [0.0, 0.5, 1.0] {
        let wt = family.at(t);
        let dw = exterior_derivative(&wt, DerivativeScheme::Auto)?;
        for x in &pts {
            let scale = wt.eval(x)?.iter().map(|v| v.abs()).fold(f64::MIN_POSITIVE, f64::max);
            worst = worst.max(dw.eval(x)?.iter().map(|v| v.abs()).fold(0.0, f64::max) / scale);
        }
        min_sv = min_sv.min(min_singular_value(&wt, &pts)?);
    }
    self_test.push(CheckResult::at_most("closed", worst, 1e-5, "dω_t by central differences, relative to |ω_t|"));
    self_test.push(CheckResult::at_least("nondegenerate", min_sv, 1e-9, "smallest singular value of ω_t at probes"));
    let mut worst: f64 = 0.0;
    for x in &pts {
        let map = rotation_map(p, 0.7);
        let fd = central_jacobian(&|y| map.eval(y), x, fd_step(x))?;
        worst = worst.max(rel_diff(&map.jacobian(x)?, &fd));
    }
    self_test.push(CheckResult::at_most("rotation_jacobian", worst, 1e-6, "exact jacobian of φ_t against central differences"));

    let parts = BTreeMap::from([("omega", omega), ("beta", beta)]);
    GalleryCase {
        name: "liouville_rotation",
        dim: 4,
        params: BTreeMap::from([("p".to_string(), p)]),
        omega: family,
        sigma: None,
        region: Region::Annulus { inner: 2f64.exp(), outer: 6f64.exp() },
        chart: Chart::Cylindrical,
        excluded_radius: Some(1.0),
        expectations: vec![
            expect("product_growth", "‖ω_t⁻¹‖_r ‖ω̇_t‖_r grows like r^p in the cylinder coordinate"),
            expect("inverse_decay", "‖ω_t⁻¹‖_r behaves like e^{−r}"),
            expect("divergence", "total log-variation increases without bound in R_max"),
        ],
        parts,
        map: Some(rotation_map(p, 0.5)),
        self_test,
    }
    .finish()
}

/// `ω_t = (1+t) dx_1∧dx_2 + dx_3∧dx_4` on R⁴ with σ_t the radial primitive of
/// ω̇; the flow is `x ↦ ((1+t)^{-1/2} x_1, (1+t)^{-1/2} x_2, x_3, x_4)`.
pub fn case_shrinking_form() -> Result<GalleryCase> {
    let mut exprs = vec![build::num(0.0); 6];
    exprs[0] = build::add(build::num(1.0), build::t());
    exprs[5] = build::num(1.0);
    let omega = TimeForm::from_exprs(4, 2, exprs)?;
    let sigma = euler_primitive_family(&omega.time_derivative(), QuadratureSpec::default())?;
    let pts = probes(4);
    let mut worst: f64 = 0.0;
    for x in &pts {
        worst = worst.max(rel_diff(&sigma.eval(0.3, x)?, &[-0.5 * x[1], 0.5 * x[0], 0.0, 0.0]));
    }
    let self_test = vec![
        CheckResult::at_most("sigma_closed_form", worst, 1e-13, "radial primitive equals ½(x1 dx2 − x2 dx1)"),
        CheckResult::flag(
            "primitive",
            check_primitive(&omega, &sigma, &pts, &[0.0, 0.5, 1.0], 1e-10).is_ok(),
            "dσ_t = ω̇_t at probe points",
        ),
    ];
    GalleryCase {
        name: "shrinking",
        dim: 4,
        params: BTreeMap::new(),
        omega,
        sigma: Some(sigma),
        region: Region::Ball { radius: 5.0 },
        chart: Chart::Euclidean,
        excluded_radius: None,
        expectations: vec![
            expect("endpoint", "φ_1(1,1,1,1) = (2^{-1/2}, 2^{-1/2}, 1, 1)"),
            expect("isotopy", "φ_t*ω_t = ω_0"),
            expect("arc_length", "the flow line from (1,1,0,0) has length √2(1 − 2^{-1/2})"),
        ],
        parts: BTreeMap::new(),
        map: None,
        self_test,
    }
    .finish()
}

/// The inversion `x ↦ x/|x|²` of R^m∖{0}, an involution exchanging the
/// punctured unit ball and the exterior of the unit sphere.
pub fn inversion_map(dim: usize) -> SmoothMap {
    let excluded = |x: &[f64]| -> Result<f64> {
        let n2: f64 = x.iter().map(|v| v * v).sum();
        if n2 == 0.0 {
            return Err(Error::ExcludedPoint { point: x.to_vec() });
        }
        Ok(n2)
    };
    SmoothMap::new(
        dim,
        move |x| {
            let n2 = excluded(x)?;
            Ok(x.iter().map(|v| v / n2).collect())
        },
        move |x| {
            let n2 = excluded(x)?;
            let mut j = vec![0.0; dim * dim];
            for i in 0..dim {
                for k in 0..dim {
                    let d = if i == k { n2 } else { 0.0 };
                    j[i * dim + k] = (d - 2.0 * x[i] * x[k]) / (n2 * n2);
                }
            }
            Ok(j)
        },
    )
}

/// Move a form on the punctured ball to the exterior chart |x̄| > 1.
pub fn to_exterior(a: &KForm) -> Result<KForm> {
    Ok(pullback(&inversion_map(a.dim()), a)?.with_excluded_ball(1.0))
}

/// Move a form on the exterior chart to the punctured ball.
pub fn to_ball(a: &KForm) -> Result<KForm> {
    Ok(pullback(&inversion_map(a.dim()), a)?.with_excluded_ball(0.0))
}

/// [`to_exterior`] for every member of a family, carrying ω̇ along.
pub fn to_exterior_family(a: &TimeForm) -> Result<TimeForm> {
    let move_family = |f: TimeForm| -> Result<TimeForm> {
        let (dim, k) = (f.dim(), f.degree());
        let basis = Arc::new(Basis::new(dim, k));
        let map = inversion_map(dim);
        Ok(TimeForm::new(dim, k, move |t, x| {
            let y = map.eval(x)?;
            Ok(pullback_coeffs(&basis, &f.eval(t, &y)?, &map.jacobian(x)?))
        })?
        .with_excluded_ball(1.0))
    };
    let dot = move_family(a.time_derivative())?;
    Ok(move_family(a.clone())?.with_time_derivative(dot))
}

/// The shrinking family on the unit ball moved to the exterior chart by the
/// inversion, with ω̇ = dx_1∧dx_2 on the ball side.
pub fn case_inversion_chart() -> Result<GalleryCase> {
    let map = inversion_map(4);
    let ball = case_shrinking_form()?;
    let omega = to_exterior_family(&ball.omega)?;
    let sigma = to_exterior_family(ball.sigma.as_ref().expect("shrinking has σ"))?;
    let dot_ball = KForm::basis_form(4, &[0, 1])?;
    let dot_ext = to_exterior(&dot_ball)?;

    let pts: Vec<Vec<f64>> = probes(4).into_iter().chain([vec![0.01, -0.02, 0.005, 0.03], vec![30.0, -12.0, 5.0, 70.0]]).collect();
    let mut worst: f64 = 0.0;
    for x in &pts {
        worst = worst.max(rel_diff(&map.eval(&map.eval(x)?)?, x));
    }
    let mut self_test = vec![CheckResult::at_most("involution", worst, 1e-12, "ι∘ι = id at probes")];
    let mut worst: f64 = 0.0;
    for x in &pts {
        let fd = central_jacobian(&|y| map.eval(y), x, fd_step(x))?;
        let exact = map.jacobian(x)?;
        let scale = exact.iter().map(|v| v.abs()).fold(f64::MIN_POSITIVE, f64::max);
        worst = worst.max(exact.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale);
    }
    self_test.push(CheckResult::at_most("jacobian", worst, 1e-6, "exact jacobian of ι against central differences"));
    let outside: Vec<Vec<f64>> = pts.iter().filter(|x| norm2(x) > 1.0).cloned().collect();
    self_test.push(CheckResult::flag(
        "primitive",
        check_primitive(&omega, &sigma, &outside, &[0.0, 0.5, 1.0], 1e-6).is_ok(),
        "the moved σ_t is still a primitive of the moved ω̇_t",
    ));

    GalleryCase {
        name: "inversion_chart",
        dim: 4,
        params: BTreeMap::new(),
        omega,
        sigma: Some(sigma),
        region: Region::Annulus { inner: 2.0, outer: 32.0 },
        chart: Chart::Euclidean,
        excluded_radius: Some(1.0),
        expectations: vec![
            expect("dot_decay", "the moved ω̇ is O(r⁻⁴)"),
            expect("inverse_growth", "the moved ω⁻¹ is O(r⁴)"),
        ],
        parts: BTreeMap::from([("omega_dot_ball", dot_ball), ("omega_dot_exterior", dot_ext)]),
        map: Some(map),
        self_test,
    }
    .finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_probes() {
        let c = case_product(2, &[1.0, 1.0], None).unwrap();
        assert_eq!(c.omega.eval(0.0, &[0.0; 4]).unwrap()[0], 1.0);
        let d = c.omega.time_derivative().eval(1.0, &[0.0; 4]).unwrap()[0];
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(case_product(2, &[1.0, 0.0], None).is_err());
        assert!(case_product(2, &[1.0, 2.0], Some("1 + x3^2")).is_err());
        assert!(case_product(3, &[2.0, -1.0, 0.5], Some("2 + sin(x1*t)")).is_ok());
    }

    #[test]
    fn radial_pullback_probe_and_bounds_on_parameters() {
        let c = case_radial_pullback(2.0, 0.5).unwrap();
        assert!((c.part("omega").unwrap().eval(&[2.0, 0.0, 0.0, 0.0]).unwrap()[0] - 8.0).abs() < 1e-12);
        assert!(case_radial_pullback(1.0, 0.5).is_err());
        assert!(case_radial_pullback(2.0, 1.0).is_err());
        for p in [1.5, 3.0] {
            case_radial_pullback(p, 0.9).unwrap();
        }
    }

    #[test]
    fn blend_is_smooth_at_the_seams() {
        for p in [1.5, 2.0, 3.0] {
            for r0 in [BLEND_START, BLEND_START + BLEND_WIDTH] {
                let (a, b) = (psi(p, r0 - 1e-9), psi(p, r0 + 1e-9));
                assert!((a[0] - b[0]).abs() < 1e-7 && (a[1] - b[1]).abs() < 1e-6 && (a[2] - b[2]).abs() < 1e-4);
            }
        }
        let s: Vec<f64> = (0..=1000).map(|i| cutoff(0.5 + i as f64 / 2000.0)[1]).collect();
        assert!((s.iter().copied().fold(0.0, f64::max) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn liouville_excludes_the_core() {
        let c = case_liouville_rotation(2.0).unwrap();
        assert!(matches!(c.omega.eval(0.5, &[0.5, 0.0, 0.0, 0.0]), Err(Error::ExcludedPoint { .. })));
        assert!(case_liouville_rotation(0.5).is_err());
    }

    #[test]
    fn inversion_rejects_origin() {
        let m = inversion_map(4);
        assert!(matches!(m.eval(&[0.0; 4]), Err(Error::ExcludedPoint { .. })));
        case_inversion_chart().unwrap();
        case_shrinking_form().unwrap();
    }
}
