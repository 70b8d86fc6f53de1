mod common;

use common::{run, s, stderr};
use dwiratio::io::{read_nifti, read_nifti_3d, read_scheme, RunConfig};
use dwiratio::phantom::{PhantomSpec, Tissue};

fn full_size_config(dir: &std::path::Path) -> std::path::PathBuf {
    let cfg = RunConfig { phantom: PhantomSpec::default(), ..RunConfig::default() };
    let p = dir.join("full.json");
    cfg.save(&p).unwrap();
    p
}

#[test]
fn render_fit_maps_recovers_white_matter_fa() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = full_size_config(dir.path());
    let d = dir.path();
    let o = run(&["--config", &s(&cfg), "render", "--noiseless", "--out", &s(d)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let dwi = read_nifti(&d.join("dwi.nii")).unwrap();
    assert_eq!(dwi.data.shape(), &[64, 64, 16, 46]);
    let scheme = read_scheme(&d.join("dwi.bval"), &d.join("dwi.bvec")).unwrap();
    assert_eq!(scheme.len(), 46);
    assert_eq!(scheme.entries()[0].b, 0.0);

    let tensors = d.join("fit.nii");
    let o = run(&[
        "fit",
        "--dwi",
        &s(&d.join("dwi.nii")),
        "--bval",
        &s(&d.join("dwi.bval")),
        "--bvec",
        &s(&d.join("dwi.bvec")),
        "--out",
        &s(&tensors),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let maps = d.join("maps");
    let o = run(&["maps", "--tensors", &s(&tensors), "--out", &s(&maps)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let fa = read_nifti_3d(&maps.join("fa.nii")).unwrap().0;
    let labels = read_nifti_3d(&d.join("labels.nii")).unwrap().0;
    let expected = common::analytic_ring_fa();
    let mut counted = 0;
    for (f, l) in fa.iter().zip(labels.iter()) {
        let l = *l as u8;
        if l == Tissue::Ring.label() || l == Tissue::BundleA.label() || l == Tissue::BundleB.label() {
            counted += 1;
            assert!((f - expected).abs() < 1e-6, "label {l}: fa {f}");
        } else {
            assert!(f.abs() < 1e-6, "isotropic label {l}: fa {f}");
        }
    }
    assert!(counted > 1000);
    for name in ["md.nii", "adc.nii"] {
        assert!(maps.join(name).exists());
    }
}

#[test]
fn downsample_halves_one_axis_and_scales_voxel_size() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&["phantom", "--dims", "18", "16", "4", "--out", &s(d)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = d.join("s0_low.nii");
    let o = run(&["downsample", "--input", &s(&d.join("s0.nii")), "--output", &s(&out), "--axis", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let low = read_nifti(&out).unwrap();
    assert_eq!(low.data.shape(), &[18, 8, 4]);
    assert_eq!(low.voxel_size, [2.0, 4.0, 2.0]);

    let o = run(&["downsample", "--input", &s(&d.join("tensors.nii")), "--output", &s(&out), "--factor", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_nifti(&out).unwrap().data.shape(), &[6, 16, 4, 6]);
}

#[test]
fn eval_reports_perfect_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&["render", "--dims", "16", "16", "4", "--out", &s(d)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b0 = s(&d.join("b0.nii"));
    let o = run(&["eval", "--pred", &b0, "--gt", &b0, "--b0", &b0]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["d_ratio_mean"], 0.0);
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["downsample", "--input", "a.nii"]).status.code(), Some(1));
    let o = run(&["downsample", "--input", "/nonexistent/a.nii", "--output", "/tmp/x.nii"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Io"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"sede\": 1}").unwrap();
    let o = run(&["--config", &s(&bad), "phantom", "--out", &s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Config"));
}

#[test]
fn output_directory_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let o = common::bin()
        .args(["phantom", "--dims", "16", "16", "4"])
        .current_dir(dir.path())
        .env("DWIRATIO_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("s0.nii").exists());
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn losscheck_passes() {
    let o = run(&["losscheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("PASS") && !text.contains("FAIL"));
}

#[test]
fn train_writes_log_params_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.dataset.field_count = 2;
    cfg.dataset.split = [0.5, 0.5];
    cfg.train.epochs = 1;
    let p = dir.path().join("c.json");
    cfg.save(&p).unwrap();
    let out = dir.path().join("run");
    let o = run(&["--config", &s(&p), "train", "--arm", "baseline", "--out", &s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("baseline.csv")).unwrap();
    assert!(csv.starts_with(dwiratio::io::LOG_CSV_HEADER));
    dwiratio::io::read_params(&out.join("baseline.params")).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("baseline_summary.json")).unwrap()).unwrap();
    assert!(v["metadata"].is_object());
}
