use std::path::Path;

use super::{write_atomic, IoError};
use crate::diffusion::{GradientEntry, GradientScheme, UnitDirection};

/// Largest accepted deviation of a weighted column's norm from 1. Columns
/// within it are renormalized.
pub const UNIT_TOLERANCE: f64 = 1e-3;

fn parse_row(line: &str, file: &'static str, line_no: usize) -> Result<Vec<f64>, IoError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| IoError::Parse { file, line: line_no, token: tok.to_string() })
        })
        .collect()
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty())
}

/// b-values, one whitespace-separated row (extra rows are appended).
pub fn parse_bval(text: &str) -> Result<Vec<f64>, IoError> {
    let mut out = Vec::new();
    for (n, line) in data_lines(text) {
        out.extend(parse_row(line, "bval", n)?);
    }
    Ok(out)
}

/// Three rows of x, y and z components; returns one `[x, y, z]` per column.
pub fn parse_bvec(text: &str) -> Result<Vec<[f64; 3]>, IoError> {
    let rows = data_lines(text).map(|(n, l)| parse_row(l, "bvec", n)).collect::<Result<Vec<_>, _>>()?;
    if rows.len() != 3 {
        return Err(IoError::BvecRowCount(rows.len()));
    }
    let cols = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != cols) {
        return Err(IoError::ColumnCountMismatch { bval: cols, bvec: r.len() });
    }
    Ok((0..cols).map(|i| [rows[0][i], rows[1][i], rows[2][i]]).collect())
}

/// Pairs b-values with direction columns.
///
/// Columns with `b > 0` must have unit norm within [`UNIT_TOLERANCE`]. A
/// `b = 0` column may be the zero vector; it then gets the x axis as a
/// placeholder direction, which never affects the signal.
pub fn scheme_from_columns(bvals: &[f64], bvecs: &[[f64; 3]]) -> Result<GradientScheme, IoError> {
    if bvals.len() != bvecs.len() {
        return Err(IoError::ColumnCountMismatch { bval: bvals.len(), bvec: bvecs.len() });
    }
    let mut entries = Vec::with_capacity(bvals.len());
    for (column, (&b, v)) in bvals.iter().zip(bvecs).enumerate() {
        let norm = v[0].hypot(v[1]).hypot(v[2]);
        let dir = if b > 0.0 {
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(IoError::NonUnitDirection { column, norm });
            }
            UnitDirection::new(v[0], v[1], v[2])?
        } else if norm == 0.0 {
            UnitDirection::x_axis()
        } else {
            UnitDirection::new(v[0], v[1], v[2])?
        };
        entries.push(GradientEntry { b, dir });
    }
    Ok(GradientScheme::new(entries)?)
}

pub fn format_bval(scheme: &GradientScheme) -> String {
    let vals: Vec<String> = scheme.entries().iter().map(|e| format!("{}", e.b)).collect();
    vals.join(" ") + "\n"
}

/// Three rows; `b = 0` columns are written as zeros.
pub fn format_bvec(scheme: &GradientScheme) -> String {
    let mut out = String::new();
    for axis in 0..3 {
        let row: Vec<String> = scheme
            .entries()
            .iter()
            .map(|e| if e.b > 0.0 { format!("{}", e.dir.to_array()[axis]) } else { "0".into() })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_scheme(bval_path: &Path, bvec_path: &Path) -> Result<GradientScheme, IoError> {
    let bval = std::fs::read_to_string(bval_path).map_err(|e| IoError::io(bval_path, e))?;
    let bvec = std::fs::read_to_string(bvec_path).map_err(|e| IoError::io(bvec_path, e))?;
    scheme_from_columns(&parse_bval(&bval)?, &parse_bvec(&bvec)?)
}

pub fn write_scheme(scheme: &GradientScheme, bval_path: &Path, bvec_path: &Path) -> Result<(), IoError> {
    write_atomic(bval_path, format_bval(scheme).as_bytes())?;
    write_atomic(bvec_path, format_bvec(scheme).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::single_shell_scheme;

    #[test]
    fn hand_readable_example() {
        let s = scheme_from_columns(&parse_bval("0 1000 1000").unwrap(), &parse_bvec("0 1 0\n0 0 1\n0 0 0\n").unwrap())
            .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.entries()[0].b, 0.0);
        assert_eq!(s.entries()[1].dir.to_array(), [1.0, 0.0, 0.0]);
        assert_eq!(s.entries()[2].dir.to_array(), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn generated_scheme_round_trips() {
        let s = single_shell_scheme(45, 1000.0, 3);
        let back = scheme_from_columns(&parse_bval(&format_bval(&s)).unwrap(), &parse_bvec(&format_bvec(&s)).unwrap())
            .unwrap();
        let err = s
            .entries()
            .iter()
            .zip(back.entries())
            .flat_map(|(a, b)| {
                let (da, db) = (a.dir.to_array(), b.dir.to_array());
                [(a.b - b.b).abs(), (da[0] - db[0]).abs(), (da[1] - db[1]).abs(), (da[2] - db[2]).abs()]
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn b0_columns_written_as_zeros() {
        let s = scheme_from_columns(&[0.0, 1000.0], &[[0.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(format_bvec(&s), "0 0\n0 0\n0 1\n");
        assert_eq!(format_bval(&s), "0 1000\n");
    }

    #[test]
    fn column_mismatch() {
        let e = scheme_from_columns(&[0.0, 1000.0, 1000.0], &parse_bvec("0 1 0 1\n0 0 1 0\n0 0 0 0").unwrap());
        assert_eq!(e.unwrap_err(), IoError::ColumnCountMismatch { bval: 3, bvec: 4 });
        assert!(matches!(parse_bvec("0 1\n0\n0 0"), Err(IoError::ColumnCountMismatch { .. })));
        assert_eq!(parse_bvec("0 1\n0 0").unwrap_err(), IoError::BvecRowCount(2));
    }

    #[test]
    fn unit_norm_tolerance() {
        let near = scheme_from_columns(&[1000.0], &[[1.0005, 0.0, 0.0]]).unwrap();
        assert_eq!(near.entries()[0].dir.to_array(), [1.0, 0.0, 0.0]);
        let far = scheme_from_columns(&[1000.0], &[[0.5, 0.0, 0.0]]).unwrap_err();
        assert_eq!(far, IoError::NonUnitDirection { column: 0, norm: 0.5 });
        assert!(matches!(
            scheme_from_columns(&[1000.0], &[[0.0; 3]]),
            Err(IoError::NonUnitDirection { column: 0, .. })
        ));
    }

    #[test]
    fn parse_errors_locate_the_token() {
        assert_eq!(
            parse_bval("0 1000\n\n10x0").unwrap_err(),
            IoError::Parse { file: "bval", line: 3, token: "10x0".into() }
        );
        assert!(matches!(parse_bval("nan"), Err(IoError::Parse { .. })));
        assert!(matches!(scheme_from_columns(&[-5.0], &[[1.0, 0.0, 0.0]]), Err(IoError::Scheme(_))));
    }
}
