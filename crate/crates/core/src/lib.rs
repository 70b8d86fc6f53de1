//! Diffusion MRI ratio-consistency toolkit.
//!
//! The crate covers the whole desk-scale pipeline around the DWI/b0 ratio:
//!
//! - [`diffusion`]: Stejskal-Tanner signal model, log-linear tensor fitting,
//!   a Jacobi eigensolver for symmetric 3x3 tensors and the FA / MD / ADC maps.
//! - [`losses`]: pixel MSE, a frequency-domain loss, the ratio distance
//!   `d_ratio`, the ratio-log loss, the weighted composite loss and PSNR.
//!   Every loss returns its analytic gradient with respect to the prediction.
//! - [`phantom`]: synthetic tensor-field phantoms, noisy DWI rendering,
//!   anisotropic downsampling and dataset assembly.
//! - [`trainer`]: a three-layer residual convolutional refiner with explicit
//!   backpropagation, Adam, the step learning-rate schedule and the
//!   baseline-vs-ratio experiment harness.
//! - [`io`]: the NIfTI-1 float32 subset, FSL bval/bvec files, run configs,
//!   training logs and the parameter container.
//! - [`cli`]: subcommand dispatch used by the `dwiratio` binary.
//!
//! Runnable walkthroughs live in `examples/`, one per capability.

pub mod cli;
pub mod diffusion;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod phantom;
pub mod trainer;

/// 2D real image, indexed `[row, col]`.
pub type Grid2 = ndarray::Array2<f64>;
/// 3D real volume, indexed `[x, y, z]`.
pub type Grid3 = ndarray::Array3<f64>;
