//! Losses and evaluation metrics on 2D slices.
//!
//! Each loss returns a [`LossValue`] carrying the scalar and its analytic
//! gradient with respect to the predicted image. The DWI/b0 ratio terms use
//! the ground-truth b0 as the shared reference, with [`RATIO_EPS`] added to
//! the denominator only.

mod dft;

pub use dft::{dft2d, dft2d_adjoint, dft2d_complex, idft2d};

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Grid2;

/// Stabilizer in the ratio denominators and the log clamp.
pub const RATIO_EPS: f64 = 1e-6;

/// Peak value for PSNR on normalized images.
pub const PSNR_PEAK: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("grid dimension mismatch: {name} is {actual:?}, expected {expected:?}")]
    DimMismatch { name: &'static str, expected: (usize, usize), actual: (usize, usize) },
    #[error("loss weight {name} must be non-negative and finite, got {value}")]
    InvalidWeight { name: &'static str, value: f64 },
}

/// A scalar loss and its gradient with respect to the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Grid2,
}

/// Weights of the composite loss `w_mse·MSE + w_fft·FFT + w_ratio_log·RatioLog`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_mse: f64,
    pub w_fft: f64,
    pub w_ratio_log: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_mse: 15.0, w_fft: 0.0025, w_ratio_log: 0.01 }
    }
}

impl LossWeights {
    /// The same weights with the ratio-log term switched off.
    pub fn baseline() -> Self {
        Self { w_ratio_log: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in
            [("w_mse", self.w_mse), ("w_fft", self.w_fft), ("w_ratio_log", self.w_ratio_log)]
        {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(LossError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }
}

/// The three terms of [`total_loss`] evaluated separately.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub mse: f64,
    pub fft: f64,
    pub ratio_log: f64,
}

fn check_dims(name: &'static str, expected: &Grid2, actual: &Grid2) -> Result<(), LossError> {
    if expected.dim() != actual.dim() {
        return Err(LossError::DimMismatch { name, expected: expected.dim(), actual: actual.dim() });
    }
    Ok(())
}

/// Mean squared error.
pub fn mse_loss(pred: &Grid2, gt: &Grid2) -> Result<LossValue, LossError> {
    check_dims("gt", pred, gt)?;
    let n = pred.len() as f64;
    let diff = pred - gt;
    let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let gradient = diff.mapv(|d| 2.0 * d / n);
    Ok(LossValue { value, gradient })
}

/// Mean over frequency bins of `|DFT(pred) - DFT(gt)|²`.
///
/// With the non-unitary DFT this equals `M·N · mse_loss`. The gradient is
/// taken through the adjoint transform: `(2/(MN)) · Re(Fᴴ(F pred - F gt))`.
pub fn fft_loss(pred: &Grid2, gt: &Grid2) -> Result<LossValue, LossError> {
    check_dims("gt", pred, gt)?;
    let n = pred.len() as f64;
    let spec_diff = dft2d(pred) - dft2d(gt);
    let value = spec_diff.iter().map(|c| c.norm_sqr()).sum::<f64>() / n;
    let back = dft2d_adjoint(&spec_diff);
    let gradient = back.mapv(|c| 2.0 * c.re / n);
    Ok(LossValue { value, gradient })
}

/// `d_ratio`: MSE between `pred/(b0+ε)` and `gt/(b0+ε)`.
pub fn ratio_distance(pred_dwi: &Grid2, gt_dwi: &Grid2, gt_b0: &Grid2) -> Result<f64, LossError> {
    check_dims("gt_dwi", pred_dwi, gt_dwi)?;
    check_dims("gt_b0", pred_dwi, gt_b0)?;
    let mut acc = 0.0;
    Zip::from(pred_dwi).and(gt_dwi).and(gt_b0).for_each(|&p, &g, &b0| {
        let denom = b0 + RATIO_EPS;
        let d = p / denom - g / denom;
        acc += d * d;
    });
    Ok(acc / pred_dwi.len() as f64)
}

fn clamped_ratio(dwi: f64, b0: f64) -> (f64, bool) {
    let r = dwi / (b0 + RATIO_EPS);
    if r < RATIO_EPS || r.is_nan() {
        (RATIO_EPS, true)
    } else {
        (r, false)
    }
}

/// MSE between log ratios, each ratio clamped below at [`RATIO_EPS`].
///
/// The gradient is `2·(ln r_pred - ln r_gt) / (N·pred)` and zero where the
/// prediction's clamp is active.
pub fn ratio_log_loss(pred_dwi: &Grid2, gt_dwi: &Grid2, gt_b0: &Grid2) -> Result<LossValue, LossError> {
    check_dims("gt_dwi", pred_dwi, gt_dwi)?;
    check_dims("gt_b0", pred_dwi, gt_b0)?;
    let n = pred_dwi.len() as f64;
    let mut value = 0.0;
    let mut gradient = Array2::zeros(pred_dwi.dim());
    Zip::from(&mut gradient)
        .and(pred_dwi)
        .and(gt_dwi)
        .and(gt_b0)
        .for_each(|grad, &p, &g, &b0| {
            let (rp, clamped) = clamped_ratio(p, b0);
            let (rg, _) = clamped_ratio(g, b0);
            let d = rp.ln() - rg.ln();
            value += d * d;
            *grad = if clamped { 0.0 } else { 2.0 * d / (n * p) };
        });
    Ok(LossValue { value: value / n, gradient })
}

/// Weighted sum of the MSE, frequency and ratio-log losses and their gradients.
pub fn total_loss(
    pred: &Grid2,
    gt_dwi: &Grid2,
    gt_b0: &Grid2,
    w: &LossWeights,
) -> Result<LossValue, LossError> {
    total_loss_with_components(pred, gt_dwi, gt_b0, w).map(|(lv, _)| lv)
}

/// [`total_loss`] plus the unweighted value of each term.
///
/// Terms with zero weight are still evaluated so their values can be logged.
pub fn total_loss_with_components(
    pred: &Grid2,
    gt_dwi: &Grid2,
    gt_b0: &Grid2,
    w: &LossWeights,
) -> Result<(LossValue, LossComponents), LossError> {
    w.validate()?;
    let mse = mse_loss(pred, gt_dwi)?;
    let fft = fft_loss(pred, gt_dwi)?;
    let ratio = ratio_log_loss(pred, gt_dwi, gt_b0)?;
    let value = w.w_mse * mse.value + w.w_fft * fft.value + w.w_ratio_log * ratio.value;
    let mut gradient = mse.gradient * w.w_mse;
    gradient.scaled_add(w.w_fft, &fft.gradient);
    if w.w_ratio_log != 0.0 {
        gradient.scaled_add(w.w_ratio_log, &ratio.gradient);
    }
    let components = LossComponents { total: value, mse: mse.value, fft: fft.value, ratio_log: ratio.value };
    Ok((LossValue { value, gradient }, components))
}

/// `10·log10(1 / mse)`; `+∞` when the images are identical.
pub fn psnr(pred: &Grid2, gt: &Grid2) -> Result<f64, LossError> {
    let mse = mse_loss(pred, gt)?.value;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PSNR_PEAK * PSNR_PEAK / mse).log10())
}
