use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use moser_core::dsl::expr::build;
use moser_core::dsl::expr::Func;
use moser_core::dsl::Node;
use moser_core::forms::{exterior_derivative, DerivativeScheme, KForm, TimeForm};
use moser_core::gallery::{case_shrinking_form, Region};
use moser_core::moser::{build_moser_field, integrate_flow, FlowStatus, IntegratorSpec, TimeVectorField};
use moser_core::norms::{form_norm, sup_norm_on_sphere, Norm, NormKind, SamplerSpec, SphereSampler};
use moser_core::primitive::euler_primitive;
use moser_core::quadrature::QuadratureSpec;

const DIM: usize = 4;

/// Random smooth coefficient: a cubic polynomial times a sine of a linear form.
fn random_coeff(rng: &mut ChaCha8Rng) -> Node {
    let mut terms = vec![build::num(rng.gen_range(-1.0..1.0))];
    for i in 0..DIM {
        terms.push(build::mul(build::num(rng.gen_range(-1.0..1.0)), build::x(i)));
        for j in i..DIM {
            let c = build::num(rng.gen_range(-0.5..0.5));
            terms.push(build::mul(c, build::mul(build::x(i), build::x(j))));
        }
    }
    let k = rng.gen_range(0..DIM);
    terms.push(build::mul(build::num(rng.gen_range(-0.2..0.2)), build::pow(build::x(k), 3.0)));
    let lin = build::sum((0..DIM).map(|i| build::mul(build::num(rng.gen_range(-0.5..0.5)), build::x(i))));
    build::add(build::sum(terms), build::call(Func::Sin, vec![lin]))
}

#[test]
fn euler_primitive_is_a_right_inverse_of_d() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let points = Region::Ball { radius: 3.0 }.sample(DIM, 50, 99).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let sigma = KForm::from_exprs(DIM, 1, (0..DIM).map(|_| random_coeff(&mut rng)).collect(), 0.0).unwrap();
        let exact = exterior_derivative(&sigma, DerivativeScheme::Exact).unwrap();
        let prim = euler_primitive(&exact, QuadratureSpec::default()).unwrap();
        let back = exterior_derivative(&prim, DerivativeScheme::Exact).unwrap();
        for x in &points {
            let (a, b) = (back.eval(x).unwrap(), exact.eval(x).unwrap());
            let diff: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
            worst = worst.max(form_norm(DIM, 2, &diff, NormKind::L1Operator));
        }
    }
    assert!(worst <= 1e-5, "worst |d(I dσ) - dσ| = {worst:e}");
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn refined_samplers_never_lower_the_sup() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = KForm::from_exprs(DIM, 2, (0..6).map(|_| random_coeff(&mut rng)).collect(), 0.0).unwrap();
    let base = SamplerSpec::new(17, 256);
    let mut last = 0.0;
    for level in 0..5 {
        let s = SphereSampler::new(DIM, base.refined(level)).unwrap();
        assert_eq!(&s.directions()[..256], SphereSampler::new(DIM, base).unwrap().directions());
        let v = sup_norm_on_sphere(&a, 2.0, &s, Norm::l1()).unwrap();
        assert!(v >= last);
        last = v;
    }
}

fn shifted(field: &TimeVectorField, t0: f64) -> TimeVectorField {
    let f = field.clone();
    let span = 1.0 - t0;
    TimeVectorField::new(field.dim(), move |t, x| Ok(f.eval(t0 + span * t, x)?.iter().map(|v| span * v).collect()))
}

fn product_family() -> (TimeForm, TimeForm) {
    let case = moser_core::gallery::case_product(2, &[1.0, 1.0], None).unwrap();
    let sigma = case.sigma.clone().unwrap();
    (case.omega, sigma)
}

#[test]
fn flows_compose() {
    let (omega, sigma) = product_family();
    let field = build_moser_field(&omega, &sigma).unwrap();
    let spec = IntegratorSpec::default().tightened(100.0);
    let starts = Region::Ball { radius: 2.0 }.sample(DIM, 5, 3).unwrap();
    for x in starts {
        let full = integrate_flow(&field, &x, &spec, &[0.4, 1.0]).unwrap();
        assert_eq!(full.status, FlowStatus::Completed);
        let rest = integrate_flow(&shifted(&field, 0.4), &full.points[1], &spec, &[1.0]).unwrap();
        let d: f64 = full.endpoint().iter().zip(rest.endpoint()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-9, "group property off by {d:e}");
    }
}

#[test]
fn transported_jacobian_matches_differences() {
    let (omega, sigma) = product_family();
    let field = build_moser_field(&omega, &sigma).unwrap();
    let spec = IntegratorSpec::default().tightened(1000.0);
    let x = vec![0.7, -0.4, 0.3, 1.1];
    let rec = integrate_flow(&field, &x, &spec, &[1.0]).unwrap();
    let jac = rec.jacobians.last().unwrap();
    let h = 1e-5;
    for j in 0..DIM {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[j] += h;
        xm[j] -= h;
        let p = integrate_flow(&field, &xp, &spec, &[1.0]).unwrap();
        let m = integrate_flow(&field, &xm, &spec, &[1.0]).unwrap();
        for i in 0..DIM {
            let fd = (p.endpoint()[i] - m.endpoint()[i]) / (2.0 * h);
            assert!((fd - jac[i * DIM + j]).abs() < 1e-6, "entry ({i},{j}): {fd} vs {}", jac[i * DIM + j]);
        }
    }
}

#[test]
fn tighter_tolerances_converge_to_the_closed_form() {
    let case = case_shrinking_form().unwrap();
    let field = build_moser_field(&case.omega, case.sigma.as_ref().unwrap()).unwrap();
    let x = [1.3, -0.8, 0.2, 0.5];
    let exact = [x[0] / 2f64.sqrt(), x[1] / 2f64.sqrt(), x[2], x[3]];
    let err = |spec: IntegratorSpec| {
        let rec = integrate_flow(&field, &x, &spec, &[1.0]).unwrap();
        rec.endpoint().iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let loose = IntegratorSpec { rel_tol: 1e-4, abs_tol: 1e-6, ..IntegratorSpec::default() };
    let errors: Vec<f64> = [1.0, 1e2, 1e4].iter().map(|f| err(loose.tightened(*f))).collect();
    assert!(errors[2] < errors[0], "{errors:?}");
    assert!(errors[2] < 1e-8, "{errors:?}");
}
