use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::{
    bilinear_upsample, derive_seed, downsample_slice, generate_phantom, render_dwis, AcquisitionSpec,
    DownsampleKernel, InPlaneAxis, PhantomError, PhantomSpec,
};
use crate::Grid2;

/// Percentile of b0 used as the normalization scale.
pub const NORMALIZATION_PERCENTILE: f64 = 99.5;

/// A DWI slice with its b0 reference on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicePair {
    pub dwi: Grid2,
    pub b0: Grid2,
}

impl SlicePair {
    pub fn new(dwi: Grid2, b0: Grid2) -> Result<Self, PhantomError> {
        if dwi.dim() != b0.dim() {
            return Err(PhantomError::DimMismatch(format!("dwi {:?} vs b0 {:?}", dwi.dim(), b0.dim())));
        }
        if !dwi.iter().chain(b0.iter()).all(|v| v.is_finite()) {
            return Err(PhantomError::DimMismatch("non-finite value in slice pair".into()));
        }
        if b0.iter().any(|&v| v < 0.0) {
            return Err(PhantomError::DimMismatch("negative b0 value".into()));
        }
        Ok(Self { dwi, b0 })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.dwi.dim()
    }
}

/// Linear-interpolated percentile (the usual "linear" definition on order
/// statistics).
fn percentile(values: &mut [f64], pct: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

/// The 99.5th percentile of the given b0 intensities.
pub fn normalization_scale<'a>(b0: impl IntoIterator<Item = &'a f64>) -> Result<f64, PhantomError> {
    let mut v: Vec<f64> = b0.into_iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() || !v.iter().any(|&x| x > 0.0) {
        return Err(PhantomError::DegenerateB0);
    }
    let scale = percentile(&mut v, NORMALIZATION_PERCENTILE);
    if !(scale > 0.0) {
        return Err(PhantomError::DegenerateB0);
    }
    Ok(scale)
}

/// Divides every DWI slice and the b0 slice by the b0's 99.5th percentile.
///
/// Returns one pair per DWI slice and the scale; multiplying by the scale
/// inverts the normalization. Negative b0 samples (possible under gaussian
/// noise) are clamped to zero after scaling.
pub fn normalize_pair(dwi_slices: &[Grid2], b0: &Grid2) -> Result<(Vec<SlicePair>, f64), PhantomError> {
    let scale = normalization_scale(b0.iter())?;
    let b0n = b0.mapv(|v| (v / scale).max(0.0));
    let pairs = dwi_slices
        .iter()
        .map(|d| SlicePair::new(d / scale, b0n.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((pairs, scale))
}

/// One training example: low-resolution input restored to the target grid,
/// the ground-truth DWI and its b0 reference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: Grid2,
    pub gt_dwi: Grid2,
    pub gt_b0: Grid2,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<TrainingSample>,
    pub validation: Vec<TrainingSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub field_count: usize,
    /// Train and validation fractions of `field_count`.
    pub split: [f64; 2],
    pub downsample_axis: InPlaneAxis,
    pub downsample_factor: usize,
    #[serde(default)]
    pub kernel: DownsampleKernel,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            field_count: 8,
            split: [0.75, 0.25],
            downsample_axis: InPlaneAxis::X,
            downsample_factor: 2,
            kernel: DownsampleKernel::BoxMean,
        }
    }
}

impl DatasetConfig {
    /// Number of phantoms assigned to training.
    pub fn train_fields(&self) -> Result<usize, PhantomError> {
        let [a, b] = self.split;
        if !(a >= 0.0 && b >= 0.0 && ((a + b) - 1.0).abs() < 1e-9) {
            return Err(PhantomError::InvalidSplit(self.split));
        }
        Ok(((self.field_count as f64) * a).round() as usize)
    }
}

/// Retained slices: the upper half of the stack.
pub fn retained_slices(nz: usize) -> std::ops::Range<usize> {
    nz / 2..nz
}

/// Renders `field_count` phantoms and cuts them into training triples.
///
/// Phantom `i` uses child seeds of `seed`; the first `round(field_count ·
/// split[0])` phantoms go to training. Each phantom is normalized by its own
/// b0 volume scale. Samples are ordered phantom, then DWI, then slice.
pub fn make_dataset(
    cfg: &DatasetConfig,
    spec: &PhantomSpec,
    acq: &AcquisitionSpec,
    seed: u64,
) -> Result<Dataset, PhantomError> {
    let n_train = cfg.train_fields()?;
    spec.validate()?;
    acq.validate()?;
    let axis = cfg.downsample_axis;
    let factor = cfg.downsample_factor;
    let mut out = Dataset::default();

    for i in 0..cfg.field_count {
        let field = generate_phantom(spec, derive_seed(seed, 2 * i as u64))?;
        let set = render_dwis(&field, acq, derive_seed(seed, 2 * i as u64 + 1))?;
        let scale = normalization_scale(set.b0.iter())?;
        let nz = set.b0.len_of(Axis(2));
        let target = if i < n_train { &mut out.train } else { &mut out.validation };
        for dwi in &set.dwis {
            for z in retained_slices(nz) {
                let gt_dwi = dwi.index_axis(Axis(2), z).mapv(|v| v / scale);
                let gt_b0 = set.b0.index_axis(Axis(2), z).mapv(|v| (v / scale).max(0.0));
                let low = downsample_slice(&gt_dwi, axis, factor, cfg.kernel)?;
                let input = bilinear_upsample(&low, axis, factor);
                target.push(TrainingSample { input, gt_dwi, gt_b0 });
            }
        }
    }
    Ok(out)
}
