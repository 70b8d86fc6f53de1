//! Subcommand front end used by the `dwiratio` binary.
//!
//! Exit codes: 0 on success, 1 on usage errors (unknown subcommand or flag,
//! bad flag value), 2 on data errors (unreadable or malformed files,
//! invalid configs, failed gradient checks).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array3, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{
    adc, eigendecompose_sym3, fractional_anisotropy, mean_diffusivity, predict_attenuation, DiffusionTensor,
    GradientEntry, GradientScheme, TensorFitter, UnitDirection,
};
use crate::gradcheck::{loss_suites, network_suites};
use crate::io::{self, RunConfig};
use crate::losses::{psnr, ratio_distance, LossWeights};
use crate::phantom::{
    downsample_with, generate_phantom, make_dataset, render_dwis, AcquisitionSpec, DownsampleKernel, InPlaneAxis,
    NoiseModel, PhantomSpec, TensorField,
};
use crate::trainer::{compare_arms, train, ComparisonReport, RunSummary, TrainConfig};
use crate::Grid3;

/// Voxel size written for phantom volumes, in millimetres.
pub const PHANTOM_VOXEL_MM: [f64; 3] = [2.0, 2.0, 2.0];

#[derive(Debug, Parser)]
#[command(name = "dwiratio", version, about = "Diffusion MRI ratio-consistency workbench")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Master seed; overrides `seed` and `train.seed` of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Force a fixed reduction order during training.
    #[arg(long, global = true)]
    deterministic: bool,
    /// JSON run config; defaults apply to every missing key.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a tensor-field phantom and write tensors, s0 and labels.
    Phantom(PhantomArgs),
    /// Render DWI and b0 volumes plus bval/bvec files.
    Render(RenderArgs),
    /// Downsample a 3D or 4D volume along one in-plane axis.
    Downsample(DownsampleArgs),
    /// Train one arm on the configured phantom dataset.
    Train(TrainArgs),
    /// Train both arms for every configured seed and write the report.
    Compare(OutArgs),
    /// Fit a tensor per voxel of a DWI series.
    Fit(FitArgs),
    /// FA, MD and ADC maps from a tensor volume.
    Maps(MapsArgs),
    /// PSNR and d_ratio of predicted DWIs against ground truth.
    Eval(EvalArgs),
    /// Run every finite-difference gradient check.
    Losscheck,
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory; defaults to the config's (or the environment override).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[command(flatten)]
    out: OutArgs,
    /// Grid size, overriding the config.
    #[arg(long, num_args = 3, value_names = ["NX", "NY", "NZ"])]
    dims: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[command(flatten)]
    phantom: PhantomArgs,
    /// Render without noise.
    #[arg(long)]
    noiseless: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Box,
    Strided,
}

#[derive(Debug, Args)]
struct DownsampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// In-plane axis, 0 (x) or 1 (y).
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    axis: u8,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u16).range(1..))]
    factor: u16,
    #[arg(long, value_enum, default_value_t = KernelArg::Box)]
    kernel: KernelArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arm {
    Baseline,
    Ratio,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    out: OutArgs,
    /// `baseline` switches the ratio-log term off; `ratio` uses the config weights.
    #[arg(long, value_enum, default_value_t = Arm::Ratio)]
    arm: Arm,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// 4D DWI series (b = 0 frames included).
    #[arg(long)]
    dwi: PathBuf,
    #[arg(long)]
    bval: PathBuf,
    #[arg(long)]
    bvec: PathBuf,
    /// Output 4D tensor volume, frames dxx, dyy, dzz, dxy, dxz, dyz.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MapsArgs {
    #[arg(long)]
    tensors: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Gradient direction for the ADC map.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], default_values_t = [1.0, 0.0, 0.0], allow_negative_numbers = true)]
    direction: Vec<f64>,
    /// b-value for the ADC map.
    #[arg(long, default_value_t = 1000.0)]
    b: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predicted DWIs, 3D or 4D.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth DWIs, same shape as `pred`.
    #[arg(long)]
    gt: PathBuf,
    /// Ground-truth b0 volume.
    #[arg(long)]
    b0: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        CliError::Data(format!("{}: {e}", e.kind()))
    }
}

macro_rules! data_error_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error_from!(
    crate::diffusion::DiffusionError,
    crate::phantom::PhantomError,
    crate::trainer::TrainError,
    crate::losses::LossError,
    serde_json::Error
);

type CliResult = Result<(), CliError>;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if common.deterministic {
        cfg.train.deterministic = true;
    }
    Ok(cfg)
}

fn out_dir(args: &OutArgs, cfg: &RunConfig) -> PathBuf {
    args.out.clone().unwrap_or_else(|| cfg.resolved_output_dir())
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Phantom(a) => cmd_phantom(&cfg, &a),
        Command::Render(a) => cmd_render(&cfg, &a),
        Command::Downsample(a) => cmd_downsample(&a),
        Command::Train(a) => cmd_train(&cfg, &a),
        Command::Compare(a) => cmd_compare(&cfg, &a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Maps(a) => cmd_maps(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Losscheck => cmd_losscheck(cli.common.seed.unwrap_or(cfg.seed)),
    }
}

fn phantom_spec(cfg: &RunConfig, args: &PhantomArgs) -> Result<PhantomSpec, CliError> {
    let mut spec = cfg.phantom;
    if let Some(d) = &args.dims {
        spec.dims = [d[0], d[1], d[2]];
    }
    spec.validate()?;
    Ok(spec)
}

fn tensor_frames(tensors: &Array3<DiffusionTensor>) -> Vec<Grid3> {
    (0..6).map(|k| tensors.mapv(|t| t.components()[k])).collect()
}

fn write_field(dir: &Path, field: &TensorField) -> CliResult {
    io::write_nifti_4d(&dir.join("tensors.nii"), &tensor_frames(&field.tensors), PHANTOM_VOXEL_MM)?;
    io::write_nifti(&dir.join("s0.nii"), &field.s0, PHANTOM_VOXEL_MM)?;
    io::write_nifti(&dir.join("labels.nii"), &field.tissue_label.mapv(f64::from), PHANTOM_VOXEL_MM)?;
    Ok(())
}

fn cmd_phantom(cfg: &RunConfig, a: &PhantomArgs) -> CliResult {
    let spec = phantom_spec(cfg, a)?;
    let field = generate_phantom(&spec, cfg.seed)?;
    let dir = out_dir(&a.out, cfg);
    write_field(&dir, &field)?;
    println!("wrote phantom {:?} to {}", spec.dims, dir.display());
    Ok(())
}

fn cmd_render(cfg: &RunConfig, a: &RenderArgs) -> CliResult {
    let spec = phantom_spec(cfg, &a.phantom)?;
    let mut acq: AcquisitionSpec = cfg.acquisition.to_spec()?;
    if a.noiseless {
        acq.noise_model = NoiseModel::None;
        acq.noise_sigma = 0.0;
    }
    let field = generate_phantom(&spec, cfg.seed)?;
    let set = render_dwis(&field, &acq, cfg.seed)?;
    let dir = out_dir(&a.phantom.out, cfg);
    write_field(&dir, &field)?;

    // One averaged b = 0 frame first, then the weighted DWIs.
    let mut entries = vec![GradientEntry { b: 0.0, dir: UnitDirection::x_axis() }];
    entries.extend_from_slice(set.scheme.entries());
    let scheme = GradientScheme::new(entries)?;
    let mut frames = vec![set.b0.clone()];
    frames.extend(set.dwis.iter().cloned());
    io::write_nifti_4d(&dir.join("dwi.nii"), &frames, PHANTOM_VOXEL_MM)?;
    io::write_nifti(&dir.join("b0.nii"), &set.b0, PHANTOM_VOXEL_MM)?;
    io::write_scheme(&scheme, &dir.join("dwi.bval"), &dir.join("dwi.bvec"))?;
    println!("wrote {} DWIs and b0 to {}", set.dwis.len(), dir.display());
    Ok(())
}

fn cmd_downsample(a: &DownsampleArgs) -> CliResult {
    let vol = io::read_nifti(&a.input)?;
    let mut voxel = vol.voxel_size;
    let rank = vol.data.ndim();
    let axis = if a.axis == 0 { InPlaneAxis::X } else { InPlaneAxis::Y };
    let kernel = match a.kernel {
        KernelArg::Box => DownsampleKernel::BoxMean,
        KernelArg::Strided => DownsampleKernel::Strided,
    };
    let factor = a.factor as usize;
    let frames = vol
        .into_frames()?
        .iter()
        .map(|f| downsample_with(f, axis, factor, kernel))
        .collect::<Result<Vec<_>, _>>()?;
    voxel[axis.index()] *= factor as f64;
    if rank == 3 {
        io::write_nifti(&a.output, &frames[0], voxel)?;
    } else {
        io::write_nifti_4d(&a.output, &frames, voxel)?;
    }
    println!("wrote {} with voxel size {:?}", a.output.display(), voxel);
    Ok(())
}

fn build_dataset(cfg: &RunConfig) -> Result<crate::phantom::Dataset, CliError> {
    let acq = cfg.acquisition.to_spec()?;
    Ok(make_dataset(&cfg.dataset, &cfg.phantom, &acq, cfg.seed)?)
}

#[derive(Serialize)]
struct TrainReport<'a> {
    arm: &'a str,
    config: &'a TrainConfig,
    summary: RunSummary,
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs) -> CliResult {
    let dataset = build_dataset(cfg)?;
    let mut tc = cfg.train;
    if a.arm == Arm::Baseline {
        tc.weights = LossWeights { w_ratio_log: 0.0, ..tc.weights };
    }
    let (params, log) = train(&dataset, &tc)?;
    let summary = log.summary().ok_or_else(|| CliError::Data("no validation records".into()))?;
    let dir = out_dir(&a.out, cfg);
    let arm = if a.arm == Arm::Baseline { "baseline" } else { "ratio" };
    io::write_log_csv(&dir.join(format!("{arm}.csv")), &log)?;
    io::write_params(&dir.join(format!("{arm}.params")), &params)?;
    io::write_json(&dir.join(format!("{arm}_summary.json")), &TrainReport { arm, config: &tc, summary })?;
    println!(
        "{arm}: final PSNR {:.3} dB, converged d_ratio {:.6e} ({} records) -> {}",
        summary.final_psnr,
        summary.converged_d_ratio,
        log.records.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    baseline: RunSummary,
    ratio: RunSummary,
    d_ratio_difference_sign: i8,
    final_psnr_delta_db: f64,
}

#[derive(Serialize)]
struct CompareSummary {
    config: RunConfig,
    seeds: Vec<SeedSummary>,
    ratio_lower_d_ratio: usize,
    ratio_psnr_within_half_db: usize,
}

fn compare_summary(cfg: &RunConfig, report: &ComparisonReport) -> CompareSummary {
    CompareSummary {
        config: cfg.clone(),
        seeds: report
            .seeds
            .iter()
            .map(|s| SeedSummary {
                seed: s.seed,
                baseline: s.baseline.summary,
                ratio: s.ratio.summary,
                d_ratio_difference_sign: s.d_ratio_difference_sign,
                final_psnr_delta_db: s.final_psnr_delta_db,
            })
            .collect(),
        ratio_lower_d_ratio: report.ratio_lower_d_ratio,
        ratio_psnr_within_half_db: report.ratio_psnr_within_half_db,
    }
}

/// Writes `baseline.csv` and `ratio.csv` for the first seed, the same pair
/// under `seed_<n>/` for every seed, and `summary.json`.
fn write_comparison(dir: &Path, cfg: &RunConfig, report: &ComparisonReport) -> CliResult {
    for (i, s) in report.seeds.iter().enumerate() {
        let seed_dir = dir.join(format!("seed_{}", s.seed));
        io::write_log_csv(&seed_dir.join("baseline.csv"), &s.baseline.log)?;
        io::write_log_csv(&seed_dir.join("ratio.csv"), &s.ratio.log)?;
        if i == 0 {
            io::write_log_csv(&dir.join("baseline.csv"), &s.baseline.log)?;
            io::write_log_csv(&dir.join("ratio.csv"), &s.ratio.log)?;
        }
    }
    io::write_json(&dir.join("summary.json"), &compare_summary(cfg, report))?;
    Ok(())
}

fn cmd_compare(cfg: &RunConfig, a: &OutArgs) -> CliResult {
    if cfg.seeds.is_empty() {
        return Err(CliError::Data("config lists no seeds".into()));
    }
    let dataset = build_dataset(cfg)?;
    let report = compare_arms(&dataset, &cfg.train, &cfg.seeds)?;
    let dir = out_dir(a, cfg);
    write_comparison(&dir, cfg, &report)?;
    for s in &report.seeds {
        println!(
            "seed {}: d_ratio {:.6e} -> {:.6e}, final PSNR {:.3} -> {:.3} dB",
            s.seed,
            s.baseline.summary.converged_d_ratio,
            s.ratio.summary.converged_d_ratio,
            s.baseline.summary.final_psnr,
            s.ratio.summary.final_psnr
        );
    }
    println!(
        "ratio arm lower d_ratio in {}/{} seeds, PSNR within 0.5 dB in {}/{}",
        report.ratio_lower_d_ratio,
        report.seeds.len(),
        report.ratio_psnr_within_half_db,
        report.seeds.len()
    );
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> CliResult {
    let vol = io::read_nifti(&a.dwi)?;
    let voxel = vol.voxel_size;
    let frames = vol.into_frames()?;
    let scheme = io::read_scheme(&a.bval, &a.bvec)?;
    if scheme.len() != frames.len() {
        return Err(CliError::Data(format!(
            "{} has {} frames but the scheme has {} entries",
            a.dwi.display(),
            frames.len(),
            scheme.len()
        )));
    }
    let b0_idx: Vec<usize> = (0..scheme.len()).filter(|&i| scheme.entries()[i].b == 0.0).collect();
    let dwi_idx: Vec<usize> = (0..scheme.len()).filter(|&i| scheme.entries()[i].b > 0.0).collect();
    if b0_idx.is_empty() {
        return Err(CliError::Data("scheme has no b = 0 entry to use as s0".into()));
    }
    let fitter = TensorFitter::new(&scheme.weighted()?)?;
    let dims = frames[0].dim();
    let (nx, ny, nz) = dims;

    let voxels: Vec<(usize, usize, usize)> =
        (0..nz).flat_map(|z| (0..ny).flat_map(move |y| (0..nx).map(move |x| (x, y, z)))).collect();
    let fitted: Vec<DiffusionTensor> = voxels
        .par_iter()
        .map(|&(x, y, z)| {
            let s0 = b0_idx.iter().map(|&i| frames[i][[x, y, z]]).sum::<f64>() / b0_idx.len() as f64;
            if s0 <= 0.0 {
                return DiffusionTensor::ZERO;
            }
            let signals: Vec<f64> = dwi_idx.iter().map(|&i| frames[i][[x, y, z]]).collect();
            fitter.fit(&signals, s0).unwrap_or(DiffusionTensor::ZERO)
        })
        .collect();
    let mut tensors = Array3::from_elem(dims, DiffusionTensor::ZERO);
    for (&(x, y, z), t) in voxels.iter().zip(fitted) {
        tensors[[x, y, z]] = t;
    }
    io::write_nifti_4d(&a.out, &tensor_frames(&tensors), voxel)?;
    println!("fitted {} voxels -> {}", voxels.len(), a.out.display());
    Ok(())
}

fn read_tensors(path: &Path) -> Result<(Array3<DiffusionTensor>, [f64; 3]), CliError> {
    let vol = io::read_nifti(path)?;
    let voxel = vol.voxel_size;
    let frames = vol.into_frames()?;
    if frames.len() != 6 {
        return Err(CliError::Data(format!("{} has {} frames, expected 6 tensor components", path.display(), frames.len())));
    }
    let tensors = Array3::from_shape_fn(frames[0].dim(), |(x, y, z)| {
        DiffusionTensor::from_components(std::array::from_fn(|k| frames[k][[x, y, z]]))
    });
    Ok((tensors, voxel))
}

fn cmd_maps(a: &MapsArgs) -> CliResult {
    let dir = UnitDirection::new(a.direction[0], a.direction[1], a.direction[2])
        .map_err(|_| CliError::Usage("--direction must be a non-zero vector".into()))?;
    if !(a.b > 0.0 && a.b.is_finite()) {
        return Err(CliError::Usage(format!("--b must be positive, got {}", a.b)));
    }
    let (tensors, voxel) = read_tensors(&a.tensors)?;
    let eig = tensors.mapv(|t| eigendecompose_sym3(&t));
    let fa = eig.mapv(|e| fractional_anisotropy(&e));
    let md = eig.mapv(|e| mean_diffusivity(&e));
    let adc_map = tensors.mapv(|t| adc(predict_attenuation(&t, a.b, &dir), 1.0, a.b).unwrap_or(f64::NAN));
    if adc_map.iter().any(|v| !v.is_finite()) {
        return Err(CliError::Data("ADC is undefined for a tensor in the volume".into()));
    }
    io::write_nifti(&a.out.join("fa.nii"), &fa, voxel)?;
    io::write_nifti(&a.out.join("md.nii"), &md, voxel)?;
    io::write_nifti(&a.out.join("adc.nii"), &adc_map, voxel)?;
    println!("wrote fa.nii, md.nii, adc.nii to {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    slices: usize,
    psnr_mean: f64,
    d_ratio_mean: f64,
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    let pred = io::read_nifti(&a.pred)?.into_frames()?;
    let gt = io::read_nifti(&a.gt)?.into_frames()?;
    let (b0, _) = io::read_nifti_3d(&a.b0)?;
    if pred.len() != gt.len() || pred.iter().chain(&gt).any(|v| v.dim() != b0.dim()) {
        return Err(CliError::Data("pred, gt and b0 shapes differ".into()));
    }
    let mut psnrs = Vec::new();
    let mut ratios = Vec::new();
    for (p, g) in pred.iter().zip(&gt) {
        for z in 0..b0.len_of(Axis(2)) {
            let (ps, gs, bs) =
                (p.index_axis(Axis(2), z).to_owned(), g.index_axis(Axis(2), z).to_owned(), b0.index_axis(Axis(2), z).to_owned());
            psnrs.push(psnr(&ps, &gs)?);
            ratios.push(ratio_distance(&ps, &gs, &bs)?);
        }
    }
    let n = psnrs.len() as f64;
    let report = EvalReport {
        slices: psnrs.len(),
        psnr_mean: psnrs.iter().sum::<f64>() / n,
        d_ratio_mean: ratios.iter().sum::<f64>() / n,
    };
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_losscheck(seed: u64) -> CliResult {
    let reports: Vec<_> = loss_suites(seed).into_iter().chain(network_suites(seed)).collect();
    let mut failed = 0;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!("{status} {:<24} max rel err {:.3e} (tol {:.0e})", r.name, r.max_relative_error, r.tolerance);
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} gradient checks failed")));
    }
    Ok(())
}
