//! JSON form specifications.
//!
//! ```json
//! {"dim": 4, "degree": 2,
//!  "terms": [{"coeff": "sqrt(x1^2 + x2^2 + 1 + t^2)", "index": [1, 2]},
//!            {"coeff": "1", "index": [3, 4]}]}
//! ```
//!
//! Indices are 1-based. On R^{2n} with coordinates `(x_1, y_1, …, x_n, y_n)`
//! the coordinate `y_i` is axis `2i`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expr::{build, parse_expr, Node, Var};
use crate::forms::basis::{sort_with_sign, Basis};
use crate::forms::TimeForm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coeff: String,
    pub index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub dim: usize,
    pub degree: usize,
    pub terms: Vec<TermSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_dependent: Option<bool>,
    /// Accept non-increasing indices, correcting the sign by antisymmetry.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalize_indices: bool,
}

impl FormSpec {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    /// Coefficient expressions in lexicographic index order, duplicates summed.
    pub fn coefficient_exprs(&self) -> Result<Vec<Node>> {
        if self.dim == 0 {
            return Err(Error::Schema("dim must be at least 1".into()));
        }
        if self.degree > self.dim {
            return Err(Error::DegreeOverflow { degree: self.degree, dim: self.dim });
        }
        let basis = Basis::new(self.dim, self.degree);
        let mut acc: Vec<Vec<Node>> = vec![Vec::new(); basis.len()];
        for (n, term) in self.terms.iter().enumerate() {
            if term.index.len() != self.degree {
                return Err(Error::Index(format!(
                    "term {}: index {:?} has length {}, expected degree {}",
                    n + 1,
                    term.index,
                    term.index.len(),
                    self.degree
                )));
            }
            if let Some(&a) = term.index.iter().find(|&&a| a == 0 || a > self.dim) {
                return Err(Error::Index(format!("term {}: axis {a} out of range 1..={}", n + 1, self.dim)));
            }
            let expr = parse_expr(&term.coeff, self.dim).map_err(|e| match e {
                Error::Syntax { position, message } => {
                    Error::Syntax { position, message: format!("term {}: {message}", n + 1) }
                }
                other => other,
            })?;
            if self.time_dependent == Some(false) && expr.depends_on(Var::T) {
                return Err(Error::Schema(format!("term {}: uses t but time_dependent is false", n + 1)));
            }
            let mut axes: Vec<usize> = term.index.iter().map(|a| a - 1).collect();
            let increasing = axes.windows(2).all(|w| w[0] < w[1]);
            let sign = if increasing {
                1.0
            } else if self.normalize_indices {
                match sort_with_sign(&mut axes) {
                    Some(s) => s,
                    None => continue,
                }
            } else {
                return Err(Error::Index(format!(
                    "term {}: index {:?} is not strictly increasing",
                    n + 1,
                    term.index
                )));
            };
            let slot = basis.rank(&axes).expect("validated index");
            acc[slot].push(build::mul(build::num(sign), expr));
        }
        Ok(acc.into_iter().map(build::sum).collect())
    }

    pub fn to_time_form(&self) -> Result<TimeForm> {
        TimeForm::from_exprs(self.dim, self.degree, self.coefficient_exprs()?)
    }
}

pub fn load_form_spec(text: &str) -> Result<TimeForm> {
    FormSpec::parse(text)?.to_time_form()
}

pub fn load_form_spec_file(path: &Path) -> Result<TimeForm> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    load_form_spec(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMEGA0: &str = r#"{"dim":4,"degree":2,"terms":[{"coeff":"1","index":[1,2]},{"coeff":"1","index":[3,4]}]}"#;

    #[test]
    fn standard_form() {
        let w = load_form_spec(OMEGA0).unwrap();
        for t in [0.0, 0.5, 1.0] {
            assert_eq!(w.eval(t, &[0.3, 1.0, -2.0, 5.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        }
        assert!(w.time_derivative().eval(0.5, &[1.0; 4]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn product_family_probe() {
        let src = r#"{"dim":4,"degree":2,"terms":[
            {"coeff":"sqrt(x1^2 + x2^2 + 1 + t^2)","index":[1,2]},
            {"coeff":"1","index":[3,4]}]}"#;
        let w = load_form_spec(src).unwrap();
        let v = w.eval(0.0, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((v[0] - 3f64.sqrt()).abs() < 1e-15);
        let d = w.time_derivative().eval(1.0, &[0.0; 4]).unwrap();
        assert!((d[0] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn index_rules() {
        let bad = r#"{"dim":4,"degree":2,"terms":[{"coeff":"1","index":[2,1]}]}"#;
        assert!(matches!(load_form_spec(bad), Err(Error::Index(_))));
        let norm = r#"{"dim":4,"degree":2,"normalize_indices":true,"terms":[{"coeff":"1","index":[2,1]}]}"#;
        assert_eq!(load_form_spec(norm).unwrap().eval(0.0, &[0.0; 4]).unwrap()[0], -1.0);
        let out = r#"{"dim":4,"degree":2,"terms":[{"coeff":"1","index":[1,5]}]}"#;
        assert!(matches!(load_form_spec(out), Err(Error::Index(_))));
        let len = r#"{"dim":4,"degree":2,"terms":[{"coeff":"1","index":[1]}]}"#;
        assert!(matches!(load_form_spec(len), Err(Error::Index(_))));
    }

    #[test]
    fn duplicates_are_summed() {
        let src = r#"{"dim":2,"degree":1,"terms":[{"coeff":"x1","index":[1]},{"coeff":"2","index":[1]}]}"#;
        assert_eq!(load_form_spec(src).unwrap().eval(0.0, &[3.0, 0.0]).unwrap(), vec![5.0, 0.0]);
    }

    #[test]
    fn schema_and_syntax_errors() {
        assert!(matches!(load_form_spec(r#"{"dim":4}"#), Err(Error::Schema(_))));
        assert!(matches!(load_form_spec(r#"{"dim":4,"degree":2,"terms":[],"extra":1}"#), Err(Error::Schema(_))));
        let syn = r#"{"dim":2,"degree":1,"terms":[{"coeff":"x1 +* 2","index":[1]}]}"#;
        match load_form_spec(syn) {
            Err(Error::Syntax { position, message }) => {
                assert_eq!(position, 4);
                assert!(message.starts_with("term 1"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let unbound = r#"{"dim":2,"degree":1,"terms":[{"coeff":"x3","index":[1]}]}"#;
        assert!(matches!(load_form_spec(unbound), Err(Error::UnboundVariable { .. })));
        let frozen = r#"{"dim":2,"degree":1,"time_dependent":false,"terms":[{"coeff":"t","index":[1]}]}"#;
        assert!(matches!(load_form_spec(frozen), Err(Error::Schema(_))));
    }
}
