//! Non-unitary 2D discrete Fourier transform.
//!
//! Power-of-two axes use an iterative radix-2 FFT; any other length falls
//! back to the direct O(n²) sum. Grids here are at most a few hundred
//! samples per side.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    /// Kernel `exp(-2πi km/n)`.
    Forward,
    /// Kernel `exp(+2πi km/n)`, no scaling.
    Adjoint,
}

/// `X[u,v] = Σ x[m,n] exp(-2πi(um/M + vn/N))`.
pub fn dft2d(img: &Array2<f64>) -> Array2<Complex64> {
    let mut out = img.mapv(|x| Complex64::new(x, 0.0));
    transform2d(&mut out, Direction::Forward);
    out
}

/// Complex input version of [`dft2d`].
pub fn dft2d_complex(data: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = data.clone();
    transform2d(&mut out, Direction::Forward);
    out
}

/// The adjoint (conjugate transpose) of [`dft2d`]: unscaled inverse kernel.
pub fn dft2d_adjoint(spec: &Array2<Complex64>) -> Array2<Complex64> {
    let mut out = spec.clone();
    transform2d(&mut out, Direction::Adjoint);
    out
}

/// Inverse transform: `dft2d_adjoint / (M·N)`.
pub fn idft2d(spec: &Array2<Complex64>) -> Array2<Complex64> {
    let n = spec.len() as f64;
    let mut out = dft2d_adjoint(spec);
    out.mapv_inplace(|c| c / n);
    out
}

fn transform2d(data: &mut Array2<Complex64>, dir: Direction) {
    let mut scratch = Vec::new();
    for axis in [Axis(1), Axis(0)] {
        for mut lane in data.lanes_mut(axis) {
            scratch.clear();
            scratch.extend(lane.iter().copied());
            transform1d(&mut scratch, dir);
            for (dst, src) in lane.iter_mut().zip(&scratch) {
                *dst = *src;
            }
        }
    }
}

fn transform1d(buf: &mut Vec<Complex64>, dir: Direction) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        fft_radix2(buf, dir);
    } else {
        *buf = direct(buf, dir);
    }
}

fn sign(dir: Direction) -> f64 {
    match dir {
        Direction::Forward => -1.0,
        Direction::Adjoint => 1.0,
    }
}

fn direct(x: &[Complex64], dir: Direction) -> Vec<Complex64> {
    let n = x.len();
    let s = sign(dir);
    let twiddles: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, s * 2.0 * PI * k as f64 / n as f64))
        .collect();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(m, v)| v * twiddles[(k * m) % n])
                .sum()
        })
        .collect()
}

fn fft_radix2(buf: &mut [Complex64], dir: Direction) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let s = sign(dir);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = Complex64::from_polar(1.0, s * 2.0 * PI / len as f64);
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..half {
                // Recompute every 16 twiddles to bound drift.
                if k % 16 == 0 {
                    w = Complex64::from_polar(1.0, s * 2.0 * PI * k as f64 / len as f64);
                }
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
                w *= step;
            }
        }
        len <<= 1;
    }
}
