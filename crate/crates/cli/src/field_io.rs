//! Plain-text field files: a grid header followed by one `re im` pair per
//! mode. Values are written in shortest round-trip form, so reading a file
//! back reproduces every bit.

use std::fmt::Write as _;
use std::path::Path;

use nlse_pdf::{Complex64, GridSpec};

use crate::error::{CliError, Result};

const MAGIC: &str = "# nlse-pdf field v1";

/// Grid header of a field file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldHeader {
    pub modes: usize,
    pub delta: f64,
    pub omega_min: f64,
    pub steps: usize,
    pub dz: f64,
}

impl FieldHeader {
    pub fn of(spec: &GridSpec) -> Self {
        Self {
            modes: spec.modes,
            delta: spec.delta,
            omega_min: spec.omega_min,
            steps: spec.steps,
            dz: spec.dz(),
        }
    }
}

pub fn format_field(spec: &GridSpec, field: &[Complex64]) -> String {
    let h = FieldHeader::of(spec);
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "modes {}", h.modes);
    let _ = writeln!(s, "delta {:e}", h.delta);
    let _ = writeln!(s, "omega_min {:e}", h.omega_min);
    let _ = writeln!(s, "steps {}", h.steps);
    let _ = writeln!(s, "dz {:e}", h.dz);
    for v in field {
        let _ = writeln!(s, "{:e} {:e}", v.re, v.im);
    }
    s
}

pub fn parse_field(text: &str) -> std::result::Result<(FieldHeader, Vec<Complex64>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(format!("missing `{MAGIC}` header"));
    }
    let mut key = |name: &str| -> std::result::Result<String, String> {
        let line = lines.next().ok_or_else(|| format!("missing `{name}`"))?;
        match line.split_once(' ') {
            Some((k, v)) if k == name => Ok(v.trim().to_owned()),
            _ => Err(format!("expected `{name}`, found `{line}`")),
        }
    };
    let num = |s: String| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    let int = |s: String| s.parse::<usize>().map_err(|e| format!("`{s}`: {e}"));
    let header = FieldHeader {
        modes: int(key("modes")?)?,
        delta: num(key("delta")?)?,
        omega_min: num(key("omega_min")?)?,
        steps: int(key("steps")?)?,
        dz: num(key("dz")?)?,
    };
    let values = lines
        .map(|l| {
            let mut it = l.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(re), Some(im), None) => Ok(Complex64::new(num(re.into())?, num(im.into())?)),
                _ => Err(format!("expected `re im`, found `{l}`")),
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.len() != header.modes {
        return Err(format!("header declares {} modes, file holds {}", header.modes, values.len()));
    }
    Ok((header, values))
}

pub fn write_field(path: &Path, spec: &GridSpec, field: &[Complex64]) -> Result<()> {
    std::fs::write(path, format_field(spec, field)).map_err(|e| CliError::io(path, e))
}

/// Read a field and insist that its header matches `spec` exactly.
pub fn read_field(path: &Path, spec: &GridSpec) -> Result<Vec<Complex64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let field_err = |reason: String| CliError::Field { path: path.to_owned(), reason };
    let (header, values) = parse_field(&text).map_err(field_err)?;
    let expect = FieldHeader::of(spec);
    if header != expect {
        return Err(field_err(format!("grid header {header:?} does not match the configured grid {expect:?}")));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = GridSpec::new(5, 7, 0.1 + 0.2, -std::f64::consts::PI, 1.0 / 3.0).unwrap();
        let field: Vec<Complex64> = (0..5)
            .map(|j| Complex64::new((j as f64 * 0.7).sin() / 3.0, -1e-300 * j as f64 + f64::EPSILON))
            .collect();
        let (h, back) = parse_field(&format_field(&spec, &field)).unwrap();
        assert_eq!(h, FieldHeader::of(&spec));
        for (a, b) in field.iter().zip(&back) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn rejects_malformed_files() {
        let spec = GridSpec::new(2, 1, 1.0, 0.0, 1.0).unwrap();
        let good = format_field(&spec, &[Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)]);
        assert!(parse_field(&good.replace("modes 2", "modes 3")).is_err());
        assert!(parse_field(&good.replace(MAGIC, "# other")).is_err());
        assert!(parse_field(&good.replace("3e0 4e0", "3e0")).is_err());
    }
}
