//! Machine-readable reports: JSON with a schema version and fixed float
//! formatting, flat CSV projections, and atomic file writes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::criteria::LogVarReport;
use crate::error::{Error, Result};
use crate::norms::NormProfile;

pub const SCHEMA_VERSION: &str = "1";

/// Compact JSON whose floats always carry 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct FixedFloatFormatter;

impl Formatter for FixedFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_float(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// `d.dddddddddddddddde±x`, or an empty string for non-finite values.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: &'static str,
    kind: &'a str,
    data: &'a T,
}

/// Serialize `data` inside `{"schema_version", "kind", "data"}`.
pub fn to_json<T: Serialize>(kind: &str, data: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloatFormatter);
    Envelope { schema_version: SCHEMA_VERSION, kind, data }
        .serialize(&mut ser)
        .map_err(|e| Error::Io(format!("serializing {kind} report: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io_err)?;
    for r in rows {
        w.write_record(&r).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

/// One row per (t, r): `t,r,norm_inv,norm_beta,product,logvar_term`; t is
/// empty for a single form.
pub fn logvar_csv(report: &LogVarReport) -> Result<String> {
    csv_string(
        &["t", "r", "norm_inv", "norm_beta", "product", "logvar_term"],
        report.rows.iter().map(|row| {
            vec![
                row.t.map(format_float).unwrap_or_default(),
                format_float(row.r),
                format_float(row.norm_inv),
                format_float(row.norm_beta),
                format_float(row.product),
                format_float(row.logvar_term),
            ]
        }),
    )
}

/// `r,value` rows of a norm profile.
pub fn profile_csv(profile: &NormProfile) -> Result<String> {
    csv_string(
        &["r", "value"],
        profile.radii.iter().zip(&profile.values).map(|(r, v)| vec![format_float(*r), format_float(*v)]),
    )
}

/// Write through a temporary file in the same directory and rename it into
/// place, so readers never see a partial report.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::Io(format!("writing {}: {e}", path.display())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::LogVarRow;
    use crate::norms::{Chart, NormKind, SamplerSpec};

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(format_float(1.0), "1.0000000000000000e0");
        assert_eq!(format_float(-0.1), "-1.0000000000000001e-1");
        assert_eq!(format_float(f64::NAN), "");
        let s = to_json("test", &vec![0.5, f64::INFINITY]).unwrap();
        assert_eq!(s, "{\"schema_version\":\"1\",\"kind\":\"test\",\"data\":[5.0000000000000000e-1,null]}\n");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["data"][0].as_f64(), Some(0.5));
    }

    #[test]
    fn logvar_rows_project_to_csv() {
        let rep = LogVarReport {
            r_grid: vec![1.0],
            r_max: 1.0,
            norm_kind: NormKind::L1Operator,
            chart: Chart::Euclidean,
            sampler: SamplerSpec::default(),
            rows: vec![LogVarRow { t: None, r: 1.0, norm_inv: 1.0, norm_beta: 2.0, product: 2.0, logvar_term: 2.0 }],
            per_t: vec![],
            sup: 2.0,
            total: None,
        };
        let csv = logvar_csv(&rep).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,r,norm_inv,norm_beta,product,logvar_term"));
        assert!(lines.next().unwrap().starts_with(",1.0000000000000000e0,"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("moser-report-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
        assert!(write_atomic(&dir.join("missing").join("x"), b"").is_err());
    }
}
