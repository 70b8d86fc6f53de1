use ndarray::{concatenate, Array, Array2, ArrayView, Axis, Dimension, RemoveAxis};
use serde::{Deserialize, Serialize};

use super::PhantomError;
use crate::{Grid2, Grid3};

/// In-plane axis of a `[x, y, z]` volume or `[x, y]` slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub enum InPlaneAxis {
    X = 0,
    Y = 1,
}

impl InPlaneAxis {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl TryFrom<usize> for InPlaneAxis {
    type Error = String;

    fn try_from(v: usize) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Self::X),
            1 => Ok(Self::Y),
            other => Err(format!("in-plane axis must be 0 or 1, got {other}")),
        }
    }
}

impl From<InPlaneAxis> for usize {
    fn from(a: InPlaneAxis) -> Self {
        a.index()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownsampleKernel {
    /// Mean of each run of `factor` samples.
    #[default]
    BoxMean,
    /// Keep every `factor`-th sample, no prefilter.
    Strided,
}

fn reduce<D>(vol: ArrayView<'_, f64, D>, axis: usize, factor: usize, kernel: DownsampleKernel) -> Result<Array<f64, D>, PhantomError>
where
    D: Dimension + RemoveAxis,
{
    let dim = vol.len_of(Axis(axis));
    if factor == 0 || dim % factor != 0 {
        return Err(PhantomError::NonDivisibleDim { axis, dim, factor });
    }
    if factor == 1 {
        return Ok(vol.to_owned());
    }
    let parts: Vec<Array<f64, D>> = vol
        .axis_chunks_iter(Axis(axis), factor)
        .map(|chunk| match kernel {
            DownsampleKernel::BoxMean => {
                let mut acc = chunk.index_axis(Axis(axis), 0).to_owned();
                for k in 1..factor {
                    acc += &chunk.index_axis(Axis(axis), k);
                }
                (acc / factor as f64).insert_axis(Axis(axis)).into_dimensionality::<D>().expect("same rank")
            }
            DownsampleKernel::Strided => chunk
                .index_axis(Axis(axis), 0)
                .to_owned()
                .insert_axis(Axis(axis))
                .into_dimensionality::<D>()
                .expect("same rank"),
        })
        .collect();
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    Ok(concatenate(Axis(axis), &views).expect("chunks share every other axis"))
}

/// Box-mean downsampling along one in-plane axis of a volume.
pub fn downsample_anisotropic(vol: &Grid3, axis: InPlaneAxis, factor: usize) -> Result<Grid3, PhantomError> {
    downsample_with(vol, axis, factor, DownsampleKernel::BoxMean)
}

pub fn downsample_with(
    vol: &Grid3,
    axis: InPlaneAxis,
    factor: usize,
    kernel: DownsampleKernel,
) -> Result<Grid3, PhantomError> {
    reduce(vol.view(), axis.index(), factor, kernel)
}

/// Slice counterpart of [`downsample_with`].
pub fn downsample_slice(
    slice: &Grid2,
    axis: InPlaneAxis,
    factor: usize,
    kernel: DownsampleKernel,
) -> Result<Grid2, PhantomError> {
    reduce(slice.view(), axis.index(), factor, kernel)
}

/// Linear interpolation along `axis` onto a grid `factor` times finer.
///
/// Output sample `j` sits at input coordinate `(j + 0.5)/factor - 0.5`
/// (pixel-center alignment); coordinates outside the input are clamped to
/// the edge samples.
pub fn bilinear_upsample(slice: &Grid2, axis: InPlaneAxis, factor: usize) -> Grid2 {
    let factor = factor.max(1);
    if factor == 1 {
        return slice.clone();
    }
    let (rows, cols) = slice.dim();
    let n = if axis == InPlaneAxis::X { rows } else { cols };
    let out_n = n * factor;
    let taps: Vec<(usize, usize, f64)> = (0..out_n)
        .map(|j| {
            let pos = ((j as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect();
    match axis {
        InPlaneAxis::X => Array2::from_shape_fn((out_n, cols), |(i, c)| {
            let (lo, hi, t) = taps[i];
            slice[[lo, c]] + t * (slice[[hi, c]] - slice[[lo, c]])
        }),
        InPlaneAxis::Y => Array2::from_shape_fn((rows, out_n), |(r, j)| {
            let (lo, hi, t) = taps[j];
            slice[[r, lo]] + t * (slice[[r, hi]] - slice[[r, lo]])
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use proptest::prelude::*;

    #[test]
    fn box_mean_examples() {
        let line = Array3::from_shape_vec((4, 1, 1), vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let d = downsample_anisotropic(&line, InPlaneAxis::X, 2).unwrap();
        assert_eq!(d.iter().copied().collect::<Vec<_>>(), vec![1.0, 5.0]);
        assert_eq!(downsample_anisotropic(&line, InPlaneAxis::X, 1).unwrap(), line);

        let c = Array3::from_elem((8, 6, 3), 0.4);
        let d = downsample_anisotropic(&c, InPlaneAxis::Y, 2).unwrap();
        assert_eq!(d.dim(), (8, 3, 3));
        assert!(d.iter().all(|&v| v == 0.4));
    }

    #[test]
    fn strided_keeps_first_of_each_run() {
        let s = array![[0.0, 1.0, 2.0, 3.0]];
        let d = downsample_slice(&s, InPlaneAxis::Y, 2, DownsampleKernel::Strided).unwrap();
        assert_eq!(d, array![[0.0, 2.0]]);
    }

    #[test]
    fn non_divisible_dim() {
        let v = Array3::<f64>::zeros((5, 4, 2));
        assert_eq!(
            downsample_anisotropic(&v, InPlaneAxis::X, 2),
            Err(PhantomError::NonDivisibleDim { axis: 0, dim: 5, factor: 2 })
        );
    }

    #[test]
    fn upsample_examples() {
        let s = array![[1.0, 3.0]];
        assert_eq!(bilinear_upsample(&s, InPlaneAxis::Y, 2), array![[1.0, 1.5, 2.5, 3.0]]);
        let c = Array2::from_elem((3, 5), 0.25);
        let u = bilinear_upsample(&c, InPlaneAxis::X, 2);
        assert_eq!(u.dim(), (6, 5));
        assert!(u.iter().all(|&v| v == 0.25));
        assert_eq!(bilinear_upsample(&s, InPlaneAxis::X, 1), s);
    }

    #[test]
    fn axis_from_usize() {
        assert_eq!(InPlaneAxis::try_from(1), Ok(InPlaneAxis::Y));
        assert!(InPlaneAxis::try_from(2).is_err());
    }

    proptest! {
        #[test]
        fn box_mean_preserves_volume_mean(
            vals in proptest::collection::vec(-10.0f64..10.0, 4 * 6 * 3),
            axis in 0usize..2,
        ) {
            let v = Array3::from_shape_vec((4, 6, 3), vals).unwrap();
            let axis = InPlaneAxis::try_from(axis).unwrap();
            let d = downsample_anisotropic(&v, axis, 2).unwrap();
            prop_assert!((d.mean().unwrap() - v.mean().unwrap()).abs() < 1e-12);
        }

        #[test]
        fn constant_survives_down_then_up(c in -5.0f64..5.0, axis in 0usize..2) {
            let axis = InPlaneAxis::try_from(axis).unwrap();
            let s = Array2::from_elem((8, 8), c);
            let d = downsample_slice(&s, axis, 2, DownsampleKernel::BoxMean).unwrap();
            let u = bilinear_upsample(&d, axis, 2);
            prop_assert!(u.iter().all(|&v| v == c));
        }
    }
}
