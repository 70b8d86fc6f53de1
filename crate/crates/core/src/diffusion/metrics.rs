use super::{DiffusionError, EigenSystem};

/// Mean of the eigenvalues, i.e. `trace(D) / 3`.
pub fn mean_diffusivity(e: &EigenSystem) -> f64 {
    (e.lambda1 + e.lambda2 + e.lambda3) / 3.0
}

/// Fractional anisotropy; 0 for the all-zero spectrum.
pub fn fractional_anisotropy(e: &EigenSystem) -> f64 {
    let [l1, l2, l3] = e.eigenvalues();
    let denom = (l1 * l1 + l2 * l2 + l3 * l3).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    let spread = ((l1 - l2).powi(2) + (l2 - l3).powi(2) + (l3 - l1).powi(2)).sqrt();
    (std::f64::consts::FRAC_1_SQRT_2 * spread / denom).min(1.0)
}

/// Apparent diffusion coefficient along one direction: `-(1/b) ln(s/s0)`.
pub fn adc(s: f64, s0: f64, b: f64) -> Result<f64, DiffusionError> {
    for (name, value) in [("s", s), ("s0", s0), ("b", b)] {
        if !(value > 0.0) {
            return Err(DiffusionError::NonPositiveInput { name, value });
        }
    }
    Ok(-(s / s0).ln() / b)
}
