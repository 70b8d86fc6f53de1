//! Central finite-difference gradient checks.
//!
//! Used by the `losscheck` subcommand to compare every analytic loss and
//! network gradient against numerical differentiation of the scalar value.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::losses::{fft_loss, mse_loss, ratio_log_loss, total_loss, LossWeights};
use crate::trainer::{backward, forward, init_network, ConvNetParams};
use crate::Grid2;

pub const LOSS_STEP: f64 = 1e-6;
pub const LOSS_TOLERANCE: f64 = 1e-5;
pub const NETWORK_STEP: f64 = 1e-6;
pub const NETWORK_TOLERANCE: f64 = 1e-4;

/// Central differences `(f(x + h eᵢ) - f(x - h eᵢ)) / 2h` for every entry.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest entrywise relative error.
///
/// Each entry is scaled by `max(|a|, |n|)`, floored at 1e-3 of the largest
/// analytic magnitude so near-zero entries are judged on an absolute scale.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let peak = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return 0.0;
    }
    let floor = 1e-3 * peak;
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub name: String,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

fn random_grid(rng: &mut ChaCha8Rng, dims: (usize, usize), lo: f64, hi: f64) -> Grid2 {
    Array2::from_shape_fn(dims, |_| rng.gen_range(lo..hi))
}

fn check_grid_loss(
    name: &str,
    pred: &Grid2,
    analytic: &Grid2,
    value: impl Fn(&Grid2) -> f64,
) -> GradCheckReport {
    let dims = pred.dim();
    let numeric = central_difference(
        |x| value(&Array2::from_shape_vec(dims, x.to_vec()).expect("same length")),
        pred.as_slice().expect("standard layout"),
        LOSS_STEP,
    );
    GradCheckReport {
        name: name.to_string(),
        max_relative_error: max_relative_error(analytic.as_slice().expect("standard layout"), &numeric),
        tolerance: LOSS_TOLERANCE,
    }
}

/// MSE, frequency, ratio-log and composite loss gradients on random 6x6
/// grids with entries in `[0.05, 1.0]`.
pub fn loss_suites(seed: u64) -> Vec<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = (6, 6);
    let pred = random_grid(&mut rng, dims, 0.05, 1.0);
    let gt = random_grid(&mut rng, dims, 0.05, 1.0);
    let b0 = random_grid(&mut rng, dims, 0.05, 1.0);
    let w = LossWeights::default();
    vec![
        check_grid_loss("mse_loss", &pred, &mse_loss(&pred, &gt).unwrap().gradient, |p| {
            mse_loss(p, &gt).unwrap().value
        }),
        check_grid_loss("fft_loss", &pred, &fft_loss(&pred, &gt).unwrap().gradient, |p| {
            fft_loss(p, &gt).unwrap().value
        }),
        check_grid_loss("ratio_log_loss", &pred, &ratio_log_loss(&pred, &gt, &b0).unwrap().gradient, |p| {
            ratio_log_loss(p, &gt, &b0).unwrap().value
        }),
        check_grid_loss("total_loss", &pred, &total_loss(&pred, &gt, &b0, &w).unwrap().gradient, |p| {
            total_loss(p, &gt, &b0, &w).unwrap().value
        }),
    ]
}

/// Every parameter tensor plus the input of the refiner, under the default
/// composite loss on a random 12x12 slice.
pub fn network_suites(seed: u64) -> Vec<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = (12, 12);
    let input = random_grid(&mut rng, dims, 0.05, 1.0);
    let gt = random_grid(&mut rng, dims, 0.05, 1.0);
    let b0 = random_grid(&mut rng, dims, 0.5, 1.0);
    let w = LossWeights::default();
    let mut params = init_network(seed);
    // Small biases so the bias gradients are exercised off the zero point.
    for l in params.layers.iter_mut() {
        l.bias.mapv_inplace(|_| rng.gen_range(-0.05..0.05));
    }

    let loss_at = |p: &ConvNetParams, x: &Grid2| {
        let (pred, _) = forward(p, x);
        total_loss(&pred, &gt, &b0, &w).unwrap().value
    };
    let (pred, cache) = forward(&params, &input);
    let upstream = total_loss(&pred, &gt, &b0, &w).unwrap().gradient;
    let grads = backward(&params, &cache, &upstream).expect("fresh cache");

    let names = params.shapes();
    let mut reports = Vec::new();
    for (k, (name, _)) in names.iter().enumerate() {
        let base = params.tensors()[k].to_vec();
        let numeric = central_difference(
            |x| {
                let mut p = params.clone();
                p.tensors_mut()[k].copy_from_slice(x);
                loss_at(&p, &input)
            },
            &base,
            NETWORK_STEP,
        );
        reports.push(GradCheckReport {
            name: format!("network.{name}"),
            max_relative_error: max_relative_error(grads.params.tensors()[k], &numeric),
            tolerance: NETWORK_TOLERANCE,
        });
    }
    let numeric = central_difference(
        |x| loss_at(&params, &Array2::from_shape_vec(dims, x.to_vec()).unwrap()),
        input.as_slice().unwrap(),
        NETWORK_STEP,
    );
    reports.push(GradCheckReport {
        name: "network.input".into(),
        max_relative_error: max_relative_error(grads.input.as_slice().unwrap(), &numeric),
        tolerance: NETWORK_TOLERANCE,
    });
    reports
}
