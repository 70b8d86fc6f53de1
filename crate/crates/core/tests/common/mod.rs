#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dwiratio::io::{encode_nifti, format_bval, format_bvec, write_nifti_4d};
use dwiratio::phantom::single_shell_scheme;
use ndarray::Array3;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dwiratio"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("DWIRATIO_OUTPUT_DIR").output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A malformed input, the subcommand that reads it and the error name the
/// CLI must report.
pub struct BadCase {
    pub name: &'static str,
    pub args: Vec<String>,
    pub expected: &'static str,
}

fn small_volume() -> Vec<u8> {
    let v = Array3::from_shape_fn((4, 4, 2), |(x, y, z)| (x + y + z) as f64);
    encode_nifti(&v.into_dyn(), [2.0; 3]).unwrap()
}

fn put_i16(b: &mut [u8], off: usize, v: i16) {
    b[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

/// Writes at least a dozen malformed NIfTI and bval/bvec files into `dir`.
pub fn malformed_corpus(dir: &Path) -> Vec<BadCase> {
    let good = small_volume();
    let mut niftis: Vec<(&'static str, Vec<u8>, &'static str)> = Vec::new();

    let mut b = good.clone();
    b[344..348].copy_from_slice(b"n+2\0");
    niftis.push(("magic_n2", b, "BadMagic"));
    let mut b = good.clone();
    b[344..348].copy_from_slice(&[0, 0, 0, 0]);
    niftis.push(("magic_zero", b, "BadMagic"));
    let mut b = good.clone();
    put_i16(&mut b, 70, 4);
    put_i16(&mut b, 72, 16);
    niftis.push(("datatype_int16", b, "UnsupportedDatatype"));
    let mut b = good.clone();
    put_i16(&mut b, 70, 64);
    put_i16(&mut b, 72, 64);
    niftis.push(("datatype_float64", b, "UnsupportedDatatype"));
    niftis.push(("truncated_payload", good[..good.len() - 10].to_vec(), "TruncatedPayload"));
    niftis.push(("header_only", good[..352].to_vec(), "TruncatedPayload"));
    niftis.push(("truncated_header", good[..100].to_vec(), "TruncatedHeader"));
    niftis.push(("empty", Vec::new(), "TruncatedHeader"));
    let mut b = good.clone();
    b[0..4].copy_from_slice(&540i32.to_le_bytes());
    niftis.push(("sizeof_hdr_540", b, "BadHeaderSize"));
    let mut b = good.clone();
    put_i16(&mut b, 40, 7);
    niftis.push(("rank_7", b, "InvalidHeader"));
    let mut b = good.clone();
    put_i16(&mut b, 44, -3);
    niftis.push(("negative_dim", b, "InvalidHeader"));
    let mut b = good.clone();
    put_i16(&mut b, 72, 16);
    niftis.push(("bitpix_16", b, "InvalidHeader"));

    let mut cases = Vec::new();
    for (name, bytes, expected) in niftis {
        let p = dir.join(format!("{name}.nii"));
        std::fs::write(&p, bytes).unwrap();
        let out = dir.join(format!("{name}_out.nii"));
        cases.push(BadCase {
            name,
            args: vec!["downsample".into(), "--input".into(), s(&p), "--output".into(), s(&out)],
            expected,
        });
    }

    // A valid 7-frame series (b0 plus 6 directions) to pair with bad tables.
    let frames: Vec<_> = (0..7).map(|k| Array3::from_elem((2, 2, 2), 1.0 / (k + 1) as f64)).collect();
    let dwi = dir.join("series.nii");
    write_nifti_4d(&dwi, &frames, [2.0; 3]).unwrap();
    let scheme = single_shell_scheme(6, 1000.0, 0);
    let good_bval = format!("0 {}", format_bval(&scheme));
    let bvec = format_bvec(&scheme);
    let good_bvec: String = bvec.lines().map(|l| format!("0 {l}\n")).collect();

    let tables: Vec<(&'static str, String, String, &'static str)> = vec![
        ("bvec_extra_column", good_bval.clone(), good_bvec.lines().map(|l| format!("{l} 0\n")).collect(), "ColumnCountMismatch"),
        ("bval_short", "0 1000 1000\n".into(), good_bvec.clone(), "ColumnCountMismatch"),
        ("bvec_ragged", good_bval.clone(), {
            let mut rows: Vec<String> = good_bvec.lines().map(String::from).collect();
            rows[1].push_str(" 0.5");
            rows.join("\n")
        }, "ColumnCountMismatch"),
        ("bvec_two_rows", good_bval.clone(), good_bvec.lines().take(2).collect::<Vec<_>>().join("\n"), "BvecRowCount"),
        ("bvec_non_unit", good_bval.clone(), {
            let mut rows: Vec<Vec<String>> =
                good_bvec.lines().map(|l| l.split_whitespace().map(String::from).collect()).collect();
            rows[0][1] = "0.5".into();
            rows[1][1] = "0".into();
            rows[2][1] = "0".into();
            rows.iter().map(|r| r.join(" ")).collect::<Vec<_>>().join("\n")
        }, "NonUnitDirection"),
        ("bvec_zero_weighted", good_bval.clone(), {
            let mut rows: Vec<Vec<String>> =
                good_bvec.lines().map(|l| l.split_whitespace().map(String::from).collect()).collect();
            for r in rows.iter_mut() {
                r[2] = "0".into();
            }
            rows.iter().map(|r| r.join(" ")).collect::<Vec<_>>().join("\n")
        }, "NonUnitDirection"),
        ("bval_garbage", good_bval.replacen("1000", "1e3x", 1), good_bvec.clone(), "Parse"),
        ("bval_negative", good_bval.replacen("1000", "-1000", 1), good_bvec.clone(), "Scheme"),
    ];
    for (name, bval, bvec, expected) in tables {
        let pv = dir.join(format!("{name}.bval"));
        let pc = dir.join(format!("{name}.bvec"));
        std::fs::write(&pv, bval).unwrap();
        std::fs::write(&pc, bvec).unwrap();
        let out = dir.join(format!("{name}_tensors.nii"));
        cases.push(BadCase {
            name,
            args: vec![
                "fit".into(),
                "--dwi".into(),
                s(&dwi),
                "--bval".into(),
                s(&pv),
                "--bvec".into(),
                s(&pc),
                "--out".into(),
                s(&out),
            ],
            expected,
        });
    }
    cases
}

pub fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// FA of the (1.7e-3, 0.3e-3, 0.3e-3) spectrum from the closed form,
/// evaluated independently of the library.
pub fn analytic_ring_fa() -> f64 {
    let (l1, l2, l3) = (1.7e-3f64, 0.3e-3f64, 0.3e-3f64);
    let num = (l1 - l2).powi(2) + (l2 - l3).powi(2) + (l3 - l1).powi(2);
    let den = l1 * l1 + l2 * l2 + l3 * l3;
    (0.5f64).sqrt() * num.sqrt() / den.sqrt()
}
