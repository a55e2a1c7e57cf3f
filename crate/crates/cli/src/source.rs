//! Input documents: DSL form specs, or references into the example gallery.

use std::path::Path;

use serde::Deserialize;

use moser_core::dsl::FormSpec;
use moser_core::forms::{KForm, TimeForm};
use moser_core::gallery::{load_case, CaseParams, GalleryCase};
use moser_core::{Error, Result};

/// `{"gallery": "radial_pullback", "part": "omega", "params": {"p": 2}}`
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GalleryRef {
    gallery: String,
    #[serde(default)]
    part: Option<String>,
    #[serde(default)]
    params: CaseParams,
}

pub struct Source {
    pub family: TimeForm,
    /// A named time-independent piece of a gallery case.
    pub part: Option<(String, KForm)>,
    pub case: Option<GalleryCase>,
}

impl Source {
    /// The form to measure at time `t`.
    pub fn form_at(&self, t: f64) -> KForm {
        match &self.part {
            Some((_, k)) => k.clone(),
            None => self.family.at(t),
        }
    }

    pub fn sigma(&self) -> Option<&TimeForm> {
        self.case.as_ref().and_then(|c| c.sigma.as_ref())
    }
}

fn merge(base: CaseParams, over: &CaseParams) -> CaseParams {
    CaseParams {
        p: over.p.or(base.p),
        c: over.c.or(base.c),
        n: over.n.or(base.n),
        a: over.a.clone().or(base.a),
        profile: over.profile.clone().or(base.profile),
    }
}

pub fn load(path: &Path, overrides: &CaseParams) -> Result<Source> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if value.get("gallery").is_none() {
        let spec = FormSpec::parse(&text).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
            other => other,
        })?;
        return Ok(Source { family: spec.to_time_form()?, part: None, case: None });
    }
    let r: GalleryRef = serde_json::from_value(value).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let case = load_case(&r.gallery, &merge(r.params, overrides))?;
    let part = match r.part {
        Some(name) => Some((name.clone(), case.part(&name)?.clone())),
        None => None,
    };
    Ok(Source { family: case.omega.clone(), part, case: Some(case) })
}
