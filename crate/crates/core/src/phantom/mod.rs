//! Synthetic tensor-field phantoms, DWI rendering and low-resolution inputs.
//!
//! A phantom is a stack of axial slices, each containing an isotropic
//! CSF-like background, a gray-matter disc with a cortical band, a white
//! matter ring whose fibres run tangentially, and two straight crossing
//! bundles through the center. Class boundaries are hard: every voxel holds
//! exactly one class tensor.
//!
//! All randomness comes from ChaCha8 streams keyed by an explicit seed, so
//! phantoms, noise and datasets are reproducible across platforms.

mod dataset;
mod resample;
mod scheme;

pub use dataset::{make_dataset, normalization_scale, normalize_pair, Dataset, DatasetConfig, SlicePair, TrainingSample};
pub use resample::{bilinear_upsample, downsample_anisotropic, downsample_slice, downsample_with, DownsampleKernel, InPlaneAxis};
pub use scheme::{even_sphere_directions, single_shell_scheme};

use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{predict_attenuation, DiffusionTensor, GradientScheme};
use crate::Grid3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("invalid acquisition: {0}")]
    InvalidAcquisition(String),
    #[error("dimension {dim} along axis {axis} is not divisible by factor {factor}")]
    NonDivisibleDim { axis: usize, dim: usize, factor: usize },
    #[error("b0 has no positive intensity to normalize by")]
    DegenerateB0,
    #[error("invalid split {0:?}: fractions must be non-negative and sum to 1")]
    InvalidSplit([f64; 2]),
    #[error("slice dimension mismatch: {0}")]
    DimMismatch(String),
}

/// Tissue class of a phantom voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Tissue {
    Csf = 0,
    GrayMatter = 1,
    Ring = 2,
    BundleA = 3,
    BundleB = 4,
}

impl Tissue {
    pub fn label(self) -> u8 {
        self as u8
    }
}

/// Diffusivities in mm²/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueParams {
    pub csf_diffusivity: f64,
    pub gm_diffusivity: f64,
    pub wm_axial: f64,
    pub wm_radial: f64,
}

impl Default for TissueParams {
    fn default() -> Self {
        Self { csf_diffusivity: 3.0e-3, gm_diffusivity: 0.8e-3, wm_axial: 1.7e-3, wm_radial: 0.3e-3 }
    }
}

/// In-plane geometry. Fractions are relative to half the smaller in-plane
/// dimension; widths are in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryParams {
    pub brain_radius_fraction: f64,
    pub cortex_thickness_fraction: f64,
    pub ring_radius_fraction: f64,
    pub ring_width: f64,
    pub bundle_width: f64,
    pub bundle_extent_fraction: f64,
    pub bundle_angles_deg: [f64; 2],
    /// Maximum random displacement of the center, in voxels.
    pub center_jitter: f64,
    /// Maximum random change of the ring radius fraction.
    pub ring_jitter: f64,
    /// Maximum random rotation of the bundles, in degrees.
    pub angle_jitter_deg: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            brain_radius_fraction: 0.9,
            cortex_thickness_fraction: 0.15,
            ring_radius_fraction: 0.55,
            ring_width: 3.0,
            bundle_width: 3.0,
            bundle_extent_fraction: 0.35,
            bundle_angles_deg: [30.0, 120.0],
            center_jitter: 1.0,
            ring_jitter: 0.05,
            angle_jitter_deg: 10.0,
        }
    }
}

/// Normalized b0 intensity of each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct S0Levels {
    pub csf: f64,
    pub gray_matter: f64,
    pub white_matter: f64,
    /// Amplitude of the smooth multiplicative modulation (0.1 = ±10%).
    pub variation: f64,
}

impl Default for S0Levels {
    fn default() -> Self {
        Self { csf: 1.0, gray_matter: 0.8, white_matter: 0.65, variation: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default)]
    pub tissue: TissueParams,
    #[serde(default)]
    pub geometry: GeometryParams,
    #[serde(default)]
    pub s0: S0Levels,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [64, 64, 16],
            tissue: TissueParams::default(),
            geometry: GeometryParams::default(),
            s0: S0Levels::default(),
        }
    }
}

impl PhantomSpec {
    /// The small in-plane grid used for desk-scale training.
    pub fn desk() -> Self {
        Self {
            dims: [16, 16, 16],
            geometry: GeometryParams {
                ring_width: 2.0,
                bundle_width: 2.0,
                bundle_extent_fraction: 0.3,
                center_jitter: 0.5,
                ..GeometryParams::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::InvalidSpec(m));
        let [nx, ny, nz] = self.dims;
        if nx < 16 || ny < 16 || nz < 4 {
            return bad(format!("dims {:?} below the (16, 16, 4) minimum", self.dims));
        }
        let t = &self.tissue;
        for (name, d) in [
            ("csf_diffusivity", t.csf_diffusivity),
            ("gm_diffusivity", t.gm_diffusivity),
            ("wm_axial", t.wm_axial),
            ("wm_radial", t.wm_radial),
        ] {
            if !(d > 0.0 && d <= 4e-3) {
                return bad(format!("{name} = {d} outside (0, 4e-3]"));
            }
        }
        if t.wm_axial < t.wm_radial {
            return bad(format!("wm_axial {} < wm_radial {}", t.wm_axial, t.wm_radial));
        }
        let g = &self.geometry;
        for (name, f) in [
            ("brain_radius_fraction", g.brain_radius_fraction),
            ("cortex_thickness_fraction", g.cortex_thickness_fraction),
            ("ring_radius_fraction", g.ring_radius_fraction),
            ("bundle_extent_fraction", g.bundle_extent_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("{name} = {f} outside (0, 1]"));
            }
        }
        for (name, w) in [("ring_width", g.ring_width), ("bundle_width", g.bundle_width)] {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("{name} = {w} must be positive"));
            }
        }
        for (name, j) in [
            ("center_jitter", g.center_jitter),
            ("ring_jitter", g.ring_jitter),
            ("angle_jitter_deg", g.angle_jitter_deg),
        ] {
            if !(j >= 0.0 && j.is_finite()) {
                return bad(format!("{name} = {j} must be non-negative"));
            }
        }
        if g.ring_radius_fraction - g.ring_jitter <= 0.0 {
            return bad("ring jitter can push the ring radius to zero".into());
        }
        let s = &self.s0;
        for (name, v) in [("csf", s.csf), ("gray_matter", s.gray_matter), ("white_matter", s.white_matter)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("s0 level {name} = {v} must be non-negative"));
            }
        }
        if !(s.variation >= 0.0 && s.variation < 1.0) {
            return bad(format!("s0 variation {} outside [0, 1)", s.variation));
        }
        Ok(())
    }

    pub fn diffusion_tensor_for(&self, tissue: Tissue, fibre: [f64; 3]) -> DiffusionTensor {
        let t = &self.tissue;
        match tissue {
            Tissue::Csf => DiffusionTensor::isotropic(t.csf_diffusivity),
            Tissue::GrayMatter => DiffusionTensor::isotropic(t.gm_diffusivity),
            Tissue::Ring | Tissue::BundleA | Tissue::BundleB => {
                let extra = t.wm_axial - t.wm_radial;
                let [x, y, z] = fibre;
                DiffusionTensor {
                    dxx: t.wm_radial + extra * x * x,
                    dyy: t.wm_radial + extra * y * y,
                    dzz: t.wm_radial + extra * z * z,
                    dxy: extra * x * y,
                    dxz: extra * x * z,
                    dyz: extra * y * z,
                }
            }
        }
    }
}

/// Per-voxel tensors, b0 intensity and tissue label on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub tensors: Array3<DiffusionTensor>,
    pub s0: Grid3,
    pub tissue_label: Array3<u8>,
    /// Fibre direction per voxel; zero for isotropic classes.
    pub fibre: Array3<[f64; 3]>,
}

impl TensorField {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.s0.dim()
    }

    /// A field with one tensor and one b0 value everywhere.
    pub fn uniform(dims: (usize, usize, usize), tensor: DiffusionTensor, s0: f64) -> Self {
        Self {
            tensors: Array3::from_elem(dims, tensor),
            s0: Array3::from_elem(dims, s0),
            tissue_label: Array3::zeros(dims),
            fibre: Array3::from_elem(dims, [0.0; 3]),
        }
    }
}

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Layout {
    cx: f64,
    cy: f64,
    half: f64,
    ring_fraction: f64,
    bundle_dirs: [[f64; 2]; 2],
    phases: [f64; 4],
}

fn sample_layout(spec: &PhantomSpec, seed: u64) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = &spec.geometry;
    let [nx, ny, _] = spec.dims;
    let mut sym = |a: f64| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
    let cx = (nx as f64 - 1.0) / 2.0 + sym(g.center_jitter);
    let cy = (ny as f64 - 1.0) / 2.0 + sym(g.center_jitter);
    let ring_fraction = g.ring_radius_fraction + sym(g.ring_jitter);
    let mut bundle_dirs = [[0.0; 2]; 2];
    for (dir, base) in bundle_dirs.iter_mut().zip(g.bundle_angles_deg) {
        let a = (base + sym(g.angle_jitter_deg)).to_radians();
        *dir = [a.cos(), a.sin()];
    }
    let two_pi = std::f64::consts::TAU;
    let phases = [sym(two_pi), sym(two_pi), sym(two_pi), sym(two_pi)];
    Layout { cx, cy, half: nx.min(ny) as f64 / 2.0, ring_fraction, bundle_dirs, phases }
}

/// Builds a phantom deterministically from `(spec, seed)`.
///
/// The seed moves the center, ring radius and bundle angles within the
/// spec's jitter bounds and sets the phases of the s0 modulation.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<TensorField, PhantomError> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let layout = sample_layout(spec, seed);
    let g = &spec.geometry;
    let levels = &spec.s0;

    let mut field = TensorField {
        tensors: Array3::from_elem((nx, ny, nz), DiffusionTensor::ZERO),
        s0: Array3::zeros((nx, ny, nz)),
        tissue_label: Array3::zeros((nx, ny, nz)),
        fibre: Array3::from_elem((nx, ny, nz), [0.0; 3]),
    };

    for z in 0..nz {
        // Slices away from the middle are slightly smaller.
        let t = (z as f64 + 0.5) / nz as f64 - 0.5;
        let radius = layout.half * (1.0 - 0.6 * t * t);
        for y in 0..ny {
            for x in 0..nx {
                let dx = x as f64 - layout.cx;
                let dy = y as f64 - layout.cy;
                let r = (dx * dx + dy * dy).sqrt();
                let rho = r / radius;

                let mut tissue = Tissue::Csf;
                let mut fibre = [0.0; 3];
                if rho <= g.brain_radius_fraction {
                    tissue = Tissue::GrayMatter;
                    let ring_r = layout.ring_fraction * radius;
                    if (r - ring_r).abs() <= g.ring_width / 2.0 && r > 0.0 {
                        tissue = Tissue::Ring;
                        fibre = [-dy / r, dx / r, 0.0];
                    }
                    let extent = g.bundle_extent_fraction * radius;
                    for (k, u) in layout.bundle_dirs.iter().enumerate() {
                        let along = dx * u[0] + dy * u[1];
                        let across = (-dx * u[1] + dy * u[0]).abs();
                        if across <= g.bundle_width / 2.0 && along.abs() <= extent {
                            tissue = if k == 0 { Tissue::BundleA } else { Tissue::BundleB };
                            fibre = [u[0], u[1], 0.0];
                        }
                    }
                }
                let base = match tissue {
                    Tissue::Csf => levels.csf,
                    Tissue::GrayMatter => levels.gray_matter,
                    _ => levels.white_matter,
                };
                let p = &layout.phases;
                let tau = std::f64::consts::TAU;
                let modulation = 1.0
                    + levels.variation
                        * (tau * x as f64 / nx as f64 + p[0]).sin()
                        * (tau * y as f64 / ny as f64 + p[1]).cos()
                        * (0.5 + 0.5 * (tau * z as f64 / (2.0 * nz as f64) + p[2]).cos());

                field.tensors[[x, y, z]] = spec.diffusion_tensor_for(tissue, fibre);
                field.s0[[x, y, z]] = base * modulation;
                field.tissue_label[[x, y, z]] = tissue.label();
                field.fibre[[x, y, z]] = fibre;
            }
        }
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    None,
    Gaussian,
    Rician,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSpec {
    pub scheme: GradientScheme,
    pub noise_model: NoiseModel,
    /// Noise standard deviation as a fraction of the mean b0 intensity.
    pub noise_sigma: f64,
    pub b0_repeats: usize,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self {
            scheme: single_shell_scheme(45, 1000.0, 0),
            noise_model: NoiseModel::Rician,
            noise_sigma: 0.03,
            b0_repeats: 5,
        }
    }
}

impl AcquisitionSpec {
    pub fn noiseless(scheme: GradientScheme) -> Self {
        Self { scheme, noise_model: NoiseModel::None, noise_sigma: 0.0, b0_repeats: 5 }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(PhantomError::InvalidAcquisition(format!("noise_sigma {}", self.noise_sigma)));
        }
        if self.b0_repeats == 0 {
            return Err(PhantomError::InvalidAcquisition("b0_repeats must be at least 1".into()));
        }
        if self.scheme.weighted_count() == 0 {
            return Err(PhantomError::InvalidAcquisition("scheme has no b > 0 entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub acquisition: AcquisitionSpec,
    pub seed: u64,
}

/// Rendered b0 (averaged over repeats) and one DWI per `b > 0` entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DwiVolumeSet {
    pub b0: Grid3,
    pub dwis: Vec<Grid3>,
    /// The `b > 0` entries of the acquisition scheme, aligned with `dwis`.
    pub scheme: GradientScheme,
    pub provenance: Provenance,
}

impl DwiVolumeSet {
    /// Signals of one voxel across `dwis`.
    pub fn voxel_signals(&self, x: usize, y: usize, z: usize) -> Vec<f64> {
        self.dwis.iter().map(|v| v[[x, y, z]]).collect()
    }
}

fn add_noise(clean: &Grid3, model: NoiseModel, sigma: f64, seed: u64, stream: u64) -> Grid3 {
    if model == NoiseModel::None || sigma == 0.0 {
        return clean.clone();
    }
    let mut out = clean.clone();
    // One substream per (volume, slice); voxels drawn x-fastest within a slice.
    out.axis_iter_mut(Axis(2)).into_par_iter().enumerate().for_each(|(z, mut slice)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((stream << 24) | z as u64);
        for y in 0..slice.dim().1 {
            for x in 0..slice.dim().0 {
                let v = slice[[x, y]];
                let n1: f64 = rng.sample(StandardNormal);
                slice[[x, y]] = match model {
                    NoiseModel::Gaussian => v + sigma * n1,
                    NoiseModel::Rician => {
                        let n2: f64 = rng.sample(StandardNormal);
                        ((v + sigma * n1).powi(2) + (sigma * n2).powi(2)).sqrt()
                    }
                    NoiseModel::None => v,
                };
            }
        }
    });
    out
}

/// Renders every `b > 0` DWI and the repeat-averaged b0 from a tensor field.
pub fn render_dwis(field: &TensorField, acq: &AcquisitionSpec, seed: u64) -> Result<DwiVolumeSet, PhantomError> {
    acq.validate()?;
    let scheme = acq.scheme.weighted().map_err(|e| PhantomError::InvalidAcquisition(e.to_string()))?;
    let mean_s0 = field.s0.mean().unwrap_or(0.0);
    let sigma = acq.noise_sigma * mean_s0;

    // Incremental mean keeps identical repeats bit-exact.
    let mut b0 = field.s0.clone();
    for r in 0..acq.b0_repeats {
        let rep = add_noise(&field.s0, acq.noise_model, sigma, seed, r as u64);
        let k = (r + 1) as f64;
        if r == 0 {
            b0 = rep;
        } else {
            ndarray::Zip::from(&mut b0).and(&rep).for_each(|m, &v| *m += (v - *m) / k);
        }
    }

    let dwis: Vec<Grid3> = scheme
        .entries()
        .par_iter()
        .enumerate()
        .map(|(k, e)| {
            let mut clean = field.s0.clone();
            ndarray::Zip::from(&mut clean)
                .and(&field.tensors)
                .for_each(|s, d| *s *= predict_attenuation(d, e.b, &e.dir));
            add_noise(&clean, acq.noise_model, sigma, seed, (acq.b0_repeats + k) as u64)
        })
        .collect();

    Ok(DwiVolumeSet {
        b0,
        dwis,
        scheme,
        provenance: Provenance { acquisition: acq.clone(), seed },
    })
}
