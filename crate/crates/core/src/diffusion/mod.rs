//! Diffusion signal model, tensor fitting and scalar tensor metrics.
//!
//! Tensors are in mm²/s and b-values in s/mm², so `b · gᵀDg` is
//! dimensionless. The six unique tensor components are always ordered
//! `(dxx, dyy, dzz, dxy, dxz, dyz)`.

mod eigen;
mod fit;
mod metrics;

pub use eigen::{eigendecompose_sym3, EigenSystem};
pub use fit::{design_matrix, fit_tensor, TensorFitter, LOG_FLOOR};
pub use metrics::{adc, fractional_anisotropy, mean_diffusivity};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("direction vector has zero (or non-finite) length")]
    ZeroDirection,
    #[error("negative b-value {0}")]
    NegativeBValue(f64),
    #[error("gradient scheme is empty")]
    EmptyScheme,
    #[error("gradient scheme is rank deficient: {reason}")]
    RankDeficientScheme { reason: String },
    #[error("b0 intensity must be positive, got {0}")]
    NonPositiveS0(f64),
    #[error("expected {expected} signals, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-positive input to ADC: {name} = {value}")]
    NonPositiveInput { name: &'static str, value: f64 },
}

/// A unit-length gradient direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct UnitDirection {
    x: f64,
    y: f64,
    z: f64,
}

impl UnitDirection {
    /// Normalizes `(x, y, z)`. The zero vector is rejected.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, DiffusionError> {
        let norm = x.hypot(y).hypot(z);
        if !(norm.is_finite() && norm > 0.0) {
            return Err(DiffusionError::ZeroDirection);
        }
        Ok(Self { x: x / norm, y: y / norm, z: z / norm })
    }

    pub const fn x_axis() -> Self {
        Self { x: 1.0, y: 0.0, z: 0.0 }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitDirection) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }
}

impl TryFrom<[f64; 3]> for UnitDirection {
    type Error = DiffusionError;

    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<UnitDirection> for [f64; 3] {
    fn from(d: UnitDirection) -> Self {
        d.to_array()
    }
}

/// Symmetric 3x3 diffusion tensor stored as its six unique components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiffusionTensor {
    pub dxx: f64,
    pub dyy: f64,
    pub dzz: f64,
    pub dxy: f64,
    pub dxz: f64,
    pub dyz: f64,
}

impl DiffusionTensor {
    pub const ZERO: Self = Self { dxx: 0.0, dyy: 0.0, dzz: 0.0, dxy: 0.0, dxz: 0.0, dyz: 0.0 };

    pub fn isotropic(d: f64) -> Self {
        Self { dxx: d, dyy: d, dzz: d, ..Self::ZERO }
    }

    pub fn diagonal(dxx: f64, dyy: f64, dzz: f64) -> Self {
        Self { dxx, dyy, dzz, ..Self::ZERO }
    }

    /// Components in `(dxx, dyy, dzz, dxy, dxz, dyz)` order.
    pub fn from_components(c: [f64; 6]) -> Self {
        Self { dxx: c[0], dyy: c[1], dzz: c[2], dxy: c[3], dxz: c[4], dyz: c[5] }
    }

    pub fn components(&self) -> [f64; 6] {
        [self.dxx, self.dyy, self.dzz, self.dxy, self.dxz, self.dyz]
    }

    pub fn from_matrix(m: &[[f64; 3]; 3]) -> Self {
        Self {
            dxx: m[0][0],
            dyy: m[1][1],
            dzz: m[2][2],
            dxy: 0.5 * (m[0][1] + m[1][0]),
            dxz: 0.5 * (m[0][2] + m[2][0]),
            dyz: 0.5 * (m[1][2] + m[2][1]),
        }
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.dxx, self.dxy, self.dxz],
            [self.dxy, self.dyy, self.dyz],
            [self.dxz, self.dyz, self.dzz],
        ]
    }

    /// Builds `Σ λᵢ vᵢvᵢᵀ` from an eigen-pair list.
    pub fn from_eigen(pairs: &[(f64, [f64; 3]); 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (lambda, v) in pairs {
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += lambda * v[i] * v[j];
                }
            }
        }
        Self::from_matrix(&m)
    }

    /// The quadratic form `gᵀDg`.
    pub fn quadratic_form(&self, g: &UnitDirection) -> f64 {
        let (x, y, z) = (g.x, g.y, g.z);
        self.dxx * x * x
            + self.dyy * y * y
            + self.dzz * z * z
            + 2.0 * (self.dxy * x * y + self.dxz * x * z + self.dyz * y * z)
    }

    pub fn trace(&self) -> f64 {
        self.dxx + self.dyy + self.dzz
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.is_finite())
    }

    /// True when every eigenvalue is at least `-1e-12`.
    pub fn is_psd(&self) -> bool {
        let e = eigendecompose_sym3(self);
        e.lambda3 >= -1e-12
    }

    pub fn max_abs_diff(&self, other: &DiffusionTensor) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One acquisition: a b-value paired with its gradient direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientEntry {
    pub b: f64,
    pub dir: UnitDirection,
}

/// Ordered list of `(b, g)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GradientEntry>", into = "Vec<GradientEntry>")]
pub struct GradientScheme {
    entries: Vec<GradientEntry>,
}

impl GradientScheme {
    pub fn new(entries: Vec<GradientEntry>) -> Result<Self, DiffusionError> {
        if entries.is_empty() {
            return Err(DiffusionError::EmptyScheme);
        }
        if let Some(e) = entries.iter().find(|e| !(e.b >= 0.0 && e.b.is_finite())) {
            return Err(DiffusionError::NegativeBValue(e.b));
        }
        Ok(Self { entries })
    }

    /// Every direction at the same b-value.
    pub fn single_shell(b: f64, dirs: &[UnitDirection]) -> Result<Self, DiffusionError> {
        Self::new(dirs.iter().map(|&dir| GradientEntry { b, dir }).collect())
    }

    pub fn entries(&self) -> &[GradientEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn weighted_count(&self) -> usize {
        self.entries.iter().filter(|e| e.b > 0.0).count()
    }

    /// The sub-scheme of entries with `b > 0`, in order.
    pub fn weighted(&self) -> Result<Self, DiffusionError> {
        Self::new(self.entries.iter().copied().filter(|e| e.b > 0.0).collect())
    }
}

impl TryFrom<Vec<GradientEntry>> for GradientScheme {
    type Error = DiffusionError;

    fn try_from(entries: Vec<GradientEntry>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<GradientScheme> for Vec<GradientEntry> {
    fn from(s: GradientScheme) -> Self {
        s.entries
    }
}

/// `S/S0 = exp(-b · gᵀDg)`.
pub fn predict_attenuation(d: &DiffusionTensor, b: f64, g: &UnitDirection) -> f64 {
    (-b * d.quadratic_form(g)).exp()
}

/// Noiseless signals `s0 · exp(-bᵢ gᵢᵀDgᵢ)` for every scheme entry.
pub fn synthesize_signals(d: &DiffusionTensor, s0: f64, scheme: &GradientScheme) -> Vec<f64> {
    scheme
        .entries()
        .iter()
        .map(|e| s0 * predict_attenuation(d, e.b, &e.dir))
        .collect()
}
