use proptest::prelude::*;

use moser_core::criteria::{log_variation, LogVarConfig};
use moser_core::dsl::expr::build;
use moser_core::dsl::Node;
use moser_core::forms::basis::Basis;
use moser_core::forms::kform::two_form_matrix;
use moser_core::forms::ops::inverse_residual;
use moser_core::forms::{
    exterior_derivative, interior_product, pullback, two_form_inverse, wedge, DerivativeScheme, KForm, SmoothMap, VectorField,
    DEFAULT_TOL_SINGULAR,
};
use moser_core::norms::{sup_norm_on_sphere, Norm, SamplerSpec, SphereSampler};

const DIM: usize = 4;

/// Monomials of total degree at most 2 in x1..x4.
fn monomials() -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for i in 0..DIM {
        out.push(vec![i]);
        for j in i..DIM {
            out.push(vec![i, j]);
        }
    }
    out
}

fn polynomial(coeffs: &[f64]) -> Node {
    build::sum(monomials().iter().zip(coeffs).map(|(m, &c)| {
        m.iter().fold(build::num(c), |acc, &i| build::mul(acc, build::x(i)))
    }))
}

fn coeff_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, monomials().len())
}

fn form_strategy(degree: usize) -> impl Strategy<Value = KForm> {
    let n = Basis::new(DIM, degree).len();
    prop::collection::vec(coeff_strategy(), n)
        .prop_map(move |cs| KForm::from_exprs(DIM, degree, cs.iter().map(|c| polynomial(c)).collect(), 0.0).unwrap())
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, DIM)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Linear map x ↦ Ax + b.
fn affine_map(a: Vec<f64>, b: Vec<f64>) -> SmoothMap {
    let a2 = a.clone();
    SmoothMap::new(
        DIM,
        move |x| Ok((0..DIM).map(|i| b[i] + (0..DIM).map(|j| a[i * DIM + j] * x[j]).sum::<f64>()).collect()),
        move |_| Ok(a2.clone()),
    )
}

fn quadratic_map(c: f64) -> SmoothMap {
    SmoothMap::new(
        DIM,
        move |x| Ok(vec![x[0] + c * x[1] * x[1], x[1], x[2] + c * x[0] * x[3], x[3]]),
        move |x| {
            let mut j = vec![0.0; DIM * DIM];
            for i in 0..DIM {
                j[i * DIM + i] = 1.0;
            }
            j[1] = 2.0 * c * x[1];
            j[2 * DIM] = c * x[3];
            j[2 * DIM + 3] = c * x[0];
            Ok(j)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn d_squared_vanishes(a in form_strategy(1), x in point()) {
        let dd = exterior_derivative(&exterior_derivative(&a, DerivativeScheme::Exact).unwrap(), DerivativeScheme::Exact).unwrap();
        let v = dd.eval(&x).unwrap();
        prop_assert!(v.iter().all(|c| c.abs() < 1e-10), "{v:?}");
    }

    #[test]
    fn d_squared_vanishes_with_differences(a in form_strategy(1), x in point()) {
        let da = exterior_derivative(&a, DerivativeScheme::Exact).unwrap();
        let dd = exterior_derivative(&da, DerivativeScheme::CentralFd(1e-5)).unwrap();
        prop_assert!(dd.eval(&x).unwrap().iter().all(|c| c.abs() < 1e-7));
    }

    #[test]
    fn wedge_is_graded_commutative(a in form_strategy(1), b in form_strategy(2), c in form_strategy(1), x in point()) {
        // deg 1 ∧ deg 2: sign +1; deg 1 ∧ deg 1: sign -1.
        let ab = wedge(&a, &b).unwrap().eval(&x).unwrap();
        let ba = wedge(&b, &a).unwrap().eval(&x).unwrap();
        prop_assert!(max_diff(&ab, &ba) < 1e-12);
        let ac = wedge(&a, &c).unwrap().eval(&x).unwrap();
        let ca: Vec<f64> = wedge(&c, &a).unwrap().eval(&x).unwrap().iter().map(|v| -v).collect();
        prop_assert!(max_diff(&ac, &ca) < 1e-12);
    }

    #[test]
    fn d_is_an_antiderivation(a in form_strategy(1), b in form_strategy(1), x in point()) {
        let d = |f: &KForm| exterior_derivative(f, DerivativeScheme::Auto).unwrap();
        let lhs = d(&wedge(&a, &b).unwrap()).eval(&x).unwrap();
        let rhs = wedge(&d(&a), &b).unwrap().sub(&wedge(&a, &d(&b)).unwrap()).unwrap().eval(&x).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-6);
    }

    #[test]
    fn pullback_is_functorial(
        a in form_strategy(2),
        m in prop::collection::vec(-1.0f64..1.0, DIM * DIM),
        b in prop::collection::vec(-1.0f64..1.0, DIM),
        c in -0.5f64..0.5,
        x in point(),
    ) {
        let phi = affine_map(m, b);
        let psi = quadratic_map(c);
        let comp = SmoothMap::compose(&psi, &phi).unwrap();
        let lhs = pullback(&comp, &a).unwrap().eval(&x).unwrap();
        let rhs = pullback(&phi, &pullback(&psi, &a).unwrap()).unwrap().eval(&x).unwrap();
        let scale = lhs.iter().map(|v| v.abs()).fold(1.0, f64::max);
        prop_assert!(max_diff(&lhs, &rhs) < 1e-12 * scale);
        // Pullback commutes with d.
        let d = |f: &KForm| exterior_derivative(f, DerivativeScheme::Auto).unwrap();
        let l = d(&pullback(&psi, &a).unwrap()).eval(&x).unwrap();
        let r = pullback(&psi, &d(&a)).unwrap().eval(&x).unwrap();
        prop_assert!(max_diff(&l, &r) < 1e-6 * scale);
    }

    #[test]
    fn interior_product_is_an_antiderivation(
        a in form_strategy(1),
        b in form_strategy(2),
        v in prop::collection::vec(-1.0f64..1.0, DIM),
        x in point(),
    ) {
        let field = VectorField::new(DIM, move |y| Ok(v.iter().zip(y).map(|(c, yi)| c + 0.5 * yi * yi).collect()));
        let i = |f: &KForm| interior_product(&field, f).unwrap();
        let lhs = i(&wedge(&a, &b).unwrap()).eval(&x).unwrap();
        let rhs = wedge(&i(&a), &b).unwrap().sub(&wedge(&a, &i(&b)).unwrap()).unwrap().eval(&x).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-11);
        // X ⌟ X ⌟ b = 0.
        prop_assert!(i(&i(&b)).eval(&x).unwrap().iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn two_form_inverse_identity(c in prop::collection::vec(-1.0f64..1.0, 6), x in point()) {
        // Adding the standard form keeps the sample away from degenerate forms.
        let mut coeffs = c.clone();
        coeffs[0] += 3.0;
        coeffs[5] += 3.0;
        let w = KForm::constant(DIM, 2, coeffs.clone()).unwrap();
        let inv = two_form_inverse(&w, &x, DEFAULT_TOL_SINGULAR).unwrap();
        let m = two_form_matrix(DIM, &coeffs);
        prop_assert!(inverse_residual(&m, &inv) < 1e-12);
        prop_assert!((&inv + inv.transpose()).amax() < 1e-12, "inverse of an antisymmetric matrix is antisymmetric");
    }

    #[test]
    fn log_variation_is_scale_invariant(
        w in prop::collection::vec(-1.0f64..1.0, 6),
        b in prop::collection::vec(-1.0f64..1.0, 6),
        lambda in 0.1f64..10.0,
    ) {
        let mut wc = w.clone();
        wc[0] += 3.0;
        wc[5] += 3.0;
        let sampler = SphereSampler::new(DIM, SamplerSpec::new(3, 64)).unwrap();
        let cfg = LogVarConfig::new(vec![1.0, 2.0, 4.0]).with_r_max(4.0);
        let run = |s: f64, sb: f64| {
            let w = KForm::constant(DIM, 2, wc.iter().map(|v| s * v).collect()).unwrap();
            let beta = KForm::constant(DIM, 2, b.iter().map(|v| sb * v).collect()).unwrap();
            log_variation(&w, &beta, &sampler, &cfg).unwrap().sup
        };
        let base = run(1.0, 1.0);
        prop_assert!((run(lambda, lambda) - base).abs() <= 1e-12 * base.max(1e-300));
        prop_assert!((run(1.0, lambda) - lambda * base).abs() <= 1e-12 * lambda * base.max(1e-300));
    }
}

#[test]
fn parallel_sup_norms_are_deterministic() {
    let a = KForm::from_exprs(DIM, 2, (0..6).map(|k| polynomial(&vec![0.1 * k as f64 + 0.3; monomials().len()])).collect(), 0.0)
        .unwrap();
    let sampler = SphereSampler::new(DIM, SamplerSpec::new(11, 4096)).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            [0.5, 1.0, 2.0].map(|r| sup_norm_on_sphere(&a, r, &sampler, Norm::l1()).unwrap().to_bits())
        })
    };
    let one = run(1);
    assert_eq!(one, run(2));
    assert_eq!(one, run(5));
}
