//! Worked examples wired to the engines.
//!
//! Each case is a family of forms with a known closed form, bound or
//! asymptotic. Constructors run a probe-point self-test and refuse to return
//! a case whose formulas disagree with an independent evaluation.

mod cases;
mod suites;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{KForm, SmoothMap, TimeForm};
use crate::norms::{Chart, SamplerSpec, SphereSampler};

pub use cases::{
    case_inversion_chart, case_liouville_rotation, case_product, case_radial_pullback, case_shrinking_form, inversion_map,
    rotation_map, to_ball, to_exterior, to_exterior_family, DEFAULT_PRODUCT_PROFILE,
};
pub use suites::{run_suite, SuiteOptions, SuiteReport};

/// Registry names, in the order the CLI lists them.
pub const CASE_NAMES: [&str; 5] = ["product", "radial_pullback", "liouville_rotation", "shrinking", "inversion_chart"];

/// Where a case's sample points are drawn from, in Euclidean coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Ball { radius: f64 },
    Annulus { inner: f64, outer: f64 },
}

impl Region {
    /// `count` points uniform in volume: directions from the sphere sampler,
    /// radii from a seeded ChaCha stream.
    pub fn sample(&self, dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let (inner, outer) = match *self {
            Region::Ball { radius } => (0.0, radius),
            Region::Annulus { inner, outer } => (inner, outer),
        };
        if !(inner >= 0.0 && outer > inner) {
            return Err(Error::InvalidParameter(format!("empty sampling region [{inner}, {outer}]")));
        }
        if count == 0 {
            return Ok(Vec::new());
        }
        let dirs = SphereSampler::new(dim, SamplerSpec::new(seed, count))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let d = dim as f64;
        let (lo, hi) = (inner.powf(d), outer.powf(d));
        Ok(dirs
            .directions()
            .iter()
            .map(|u| {
                let r = (lo + rng.gen::<f64>() * (hi - lo)).powf(1.0 / d);
                u.iter().map(|v| r * v).collect()
            })
            .collect())
    }
}

/// A statement the case is expected to satisfy, for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub name: String,
    pub statement: String,
}

fn expect(name: &str, statement: &str) -> Expectation {
    Expectation { name: name.into(), statement: statement.into() }
}

/// Outcome of one numerical check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    /// Upper or lower limit, or the allowed deviation when `target` is set.
    pub limit: f64,
    pub target: Option<f64>,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn at_most(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), value, limit, target: None, pass: value <= limit, detail: detail.into() }
    }

    pub fn at_least(name: &str, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), value, limit, target: None, pass: value >= limit, detail: detail.into() }
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            value,
            limit: tol,
            target: Some(target),
            pass: (value - target).abs() <= tol,
            detail: detail.into(),
        }
    }

    pub fn flag(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
            target: None,
            pass: ok,
            detail: detail.into(),
        }
    }
}

/// A worked example.
#[derive(Debug, Clone)]
pub struct GalleryCase {
    pub name: &'static str,
    pub dim: usize,
    pub params: BTreeMap<String, f64>,
    pub omega: TimeForm,
    pub sigma: Option<TimeForm>,
    pub region: Region,
    /// Chart in which radii and norms are meant.
    pub chart: Chart,
    /// Radius of the excluded core around the origin, if any.
    pub excluded_radius: Option<f64>,
    pub expectations: Vec<Expectation>,
    /// Named time-independent pieces (the base form, σ, dσ, ...).
    pub parts: BTreeMap<&'static str, KForm>,
    pub map: Option<SmoothMap>,
    pub self_test: Vec<CheckResult>,
}

impl GalleryCase {
    pub fn part(&self, name: &str) -> Result<&KForm> {
        self.parts.get(name).ok_or_else(|| Error::InvalidParameter(format!("case `{}` has no part `{name}`", self.name)))
    }

    fn finish(self) -> Result<Self> {
        if let Some(c) = self.self_test.iter().find(|c| !c.pass) {
            return Err(Error::SelfTest {
                case: self.name.into(),
                check: c.name.clone(),
                detail: format!("value {:e}, limit {:e}: {}", c.value, c.limit, c.detail),
            });
        }
        Ok(self)
    }
}

/// Parameters accepted by [`load_case`]; unset fields take case defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseParams {
    pub p: Option<f64>,
    pub c: Option<f64>,
    pub n: Option<usize>,
    pub a: Option<Vec<f64>>,
    pub profile: Option<String>,
}

/// Build a case by registry name.
pub fn load_case(name: &str, params: &CaseParams) -> Result<GalleryCase> {
    match name {
        "product" => {
            let n = params.n.unwrap_or_else(|| params.a.as_ref().map_or(2, |a| a.len()));
            let a = params.a.clone().unwrap_or_else(|| vec![1.0; n]);
            case_product(n, &a, params.profile.as_deref())
        }
        "radial_pullback" => case_radial_pullback(params.p.unwrap_or(2.0), params.c.unwrap_or(0.5)),
        "liouville_rotation" => case_liouville_rotation(params.p.unwrap_or(2.0)),
        "shrinking" => case_shrinking_form(),
        "inversion_chart" => case_inversion_chart(),
        other => Err(Error::InvalidParameter(format!(
            "unknown example `{other}`; known: {}",
            CASE_NAMES.join(", ")
        ))),
    }
}

/// Largest entrywise difference, relative to `max(1, |expected|_∞)`.
pub(crate) fn rel_diff(got: &[f64], expected: &[f64]) -> f64 {
    let scale = expected.iter().map(|v| v.abs()).fold(1.0, f64::max);
    got.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_sample_inside() {
        let pts = Region::Annulus { inner: 1.0, outer: 4.0 }.sample(4, 200, 3).unwrap();
        assert_eq!(pts.len(), 200);
        assert!(pts.iter().all(|x| {
            let r = crate::forms::kform::norm2(x);
            (1.0..=4.0).contains(&r)
        }));
        assert_eq!(pts, Region::Annulus { inner: 1.0, outer: 4.0 }.sample(4, 200, 3).unwrap());
        assert!(Region::Ball { radius: 0.0 }.sample(4, 10, 1).is_err());
    }

    #[test]
    fn unknown_name_is_a_user_error() {
        let e = load_case("nope", &CaseParams::default()).unwrap_err();
        assert!(e.is_user_error());
    }
}
