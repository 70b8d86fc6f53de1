//! Three-layer residual convolutional refiner.
//!
//! `pred = input + conv3(relu(conv2(relu(conv1(input)))))`, all kernels 3x3
//! with same-size output and edge-replicated padding. Convolutions run as
//! im2col followed by a matrix product.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::Grid2;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;
pub const HIDDEN_CHANNELS: usize = 16;

/// One 3x3 convolution. `weight` is `out × (in·9)` with column index
/// `in_channel·9 + ky·3 + kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            weight: Array2::zeros((out_channels, in_channels * TAPS)),
            bias: Array1::zeros(out_channels),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.ncols() / TAPS
    }

    pub fn out_channels(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }
}

/// Network parameters. The same shape doubles as the gradient and Adam
/// moment container.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetParams {
    pub layers: [ConvLayer; 3],
}

impl ConvNetParams {
    pub fn zeros() -> Self {
        Self {
            layers: [
                ConvLayer::zeros(1, HIDDEN_CHANNELS),
                ConvLayer::zeros(HIDDEN_CHANNELS, HIDDEN_CHANNELS),
                ConvLayer::zeros(HIDDEN_CHANNELS, 1),
            ],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            layers: other.layers.clone().map(|l| ConvLayer {
                weight: Array2::zeros(l.weight.dim()),
                bias: Array1::zeros(l.bias.dim()),
            }),
        }
    }

    /// Names and shapes of the six parameter tensors, in storage order.
    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::with_capacity(6);
        for (i, l) in self.layers.iter().enumerate() {
            out.push((
                format!("layer{}.weight", i + 1),
                vec![l.out_channels(), l.in_channels(), KERNEL, KERNEL],
            ));
            out.push((format!("layer{}.bias", i + 1), vec![l.bias.len()]));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers
            .iter()
            .zip(&other.layers)
            .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.dim() == b.bias.dim())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, scale: f64, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            l.weight *= s;
            l.bias *= s;
        }
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// He-style uniform initialization: weights in `±sqrt(6 / fan_in)`, zero
/// biases. Layers are filled in order from one ChaCha8 stream.
pub fn init_network(seed: u64) -> ConvNetParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ConvNetParams::zeros();
    for layer in params.layers.iter_mut() {
        let bound = he_uniform_bound(layer.fan_in());
        layer.weight.mapv_inplace(|_| rng.gen_range(-bound..bound));
    }
    params
}

pub fn he_uniform_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    dims: (usize, usize),
    fingerprint: u64,
    cols: [Array2<f64>; 3],
    pre_activations: [Array2<f64>; 2],
}

impl ForwardCache {
    pub fn dims(&self) -> (usize, usize) {
        self.dims
    }
}

fn clamp_index(i: usize, offset: isize, n: usize) -> usize {
    (i as isize + offset).clamp(0, n as isize - 1) as usize
}

/// `channels × (h·w)` to `(channels·9) × (h·w)` with edge replication.
fn im2col(x: &Array2<f64>, h: usize, w: usize) -> Array2<f64> {
    let channels = x.nrows();
    let hw = h * w;
    let mut col = Array2::zeros((channels * TAPS, hw));
    let src = x.as_slice().expect("standard layout");
    let dst = col.as_slice_mut().expect("standard layout");
    for c in 0..channels {
        let plane = &src[c * hw..(c + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut dst[(c * TAPS + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = clamp_index(y, ky as isize - 1, h);
                    for xx in 0..w {
                        let sx = clamp_index(xx, kx as isize - 1, w);
                        row[y * w + xx] = plane[sy * w + sx];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-add back onto the channel planes.
fn col2im(col: &Array2<f64>, channels: usize, h: usize, w: usize) -> Array2<f64> {
    let hw = h * w;
    let mut x = Array2::zeros((channels, hw));
    let src = col.as_slice().expect("standard layout");
    let dst = x.as_slice_mut().expect("standard layout");
    for c in 0..channels {
        let plane = &mut dst[c * hw..(c + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &src[(c * TAPS + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = clamp_index(y, ky as isize - 1, h);
                    for xx in 0..w {
                        let sx = clamp_index(xx, kx as isize - 1, w);
                        plane[sy * w + sx] += row[y * w + xx];
                    }
                }
            }
        }
    }
    x
}

fn conv(layer: &ConvLayer, col: &Array2<f64>) -> Array2<f64> {
    let mut out = layer.weight.dot(col);
    for (mut row, b) in out.axis_iter_mut(Axis(0)).zip(layer.bias.iter()) {
        row += *b;
    }
    out
}

/// Runs the network; `input` is already on the target grid.
pub fn forward(params: &ConvNetParams, input: &Grid2) -> (Grid2, ForwardCache) {
    let (h, w) = input.dim();
    let x0 = input
        .to_owned()
        .into_shape_with_order((1, h * w))
        .expect("contiguous input");
    let col1 = im2col(&x0, h, w);
    let z1 = conv(&params.layers[0], &col1);
    let a1 = z1.mapv(|v| v.max(0.0));
    let col2 = im2col(&a1, h, w);
    let z2 = conv(&params.layers[1], &col2);
    let a2 = z2.mapv(|v| v.max(0.0));
    let col3 = im2col(&a2, h, w);
    let z3 = conv(&params.layers[2], &col3);
    let residual = z3.into_shape_with_order((h, w)).expect("single output channel");
    let pred = input + &residual;
    let cache = ForwardCache {
        dims: (h, w),
        fingerprint: params.fingerprint(),
        cols: [col1, col2, col3],
        pre_activations: [z1, z2],
    };
    (pred, cache)
}

/// Gradients of a scalar loss with respect to every parameter and the input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ConvNetParams,
    pub input: Grid2,
}

/// Backpropagates `loss_gradient = ∂L/∂pred` through the cached pass.
pub fn backward(params: &ConvNetParams, cache: &ForwardCache, loss_gradient: &Grid2) -> Result<Gradients, TrainError> {
    if cache.fingerprint != params.fingerprint() {
        return Err(TrainError::StaleCache);
    }
    if loss_gradient.dim() != cache.dims {
        return Err(TrainError::ShapeMismatch(format!(
            "loss gradient {:?} vs cached forward {:?}",
            loss_gradient.dim(),
            cache.dims
        )));
    }
    let (h, w) = cache.dims;
    let mut grads = ConvNetParams::zeros_like(params);

    let mut upstream = loss_gradient
        .to_owned()
        .into_shape_with_order((1, h * w))
        .expect("contiguous gradient");
    for k in (0..3).rev() {
        let layer = &params.layers[k];
        let col = &cache.cols[k];
        grads.layers[k].weight = upstream.dot(&col.t());
        grads.layers[k].bias = upstream.sum_axis(Axis(1));
        let dcol = layer.weight.t().dot(&upstream);
        let mut dx = col2im(&dcol, layer.in_channels(), h, w);
        if k > 0 {
            ndarray::Zip::from(&mut dx)
                .and(&cache.pre_activations[k - 1])
                .for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
        }
        upstream = dx;
    }
    let conv_path = upstream.into_shape_with_order((h, w)).expect("single input channel");
    let input = loss_gradient + &conv_path;
    Ok(Gradients { params: grads, input })
}
