//! Builds a phantom, renders noisy DWIs, downsamples one slice and restores
//! it to the target grid, then assembles the desk-scale training dataset.

use dwiratio::phantom::{
    bilinear_upsample, downsample_slice, generate_phantom, make_dataset, render_dwis, AcquisitionSpec,
    DatasetConfig, DownsampleKernel, InPlaneAxis, PhantomSpec,
};
use dwiratio::losses::psnr;
use ndarray::Axis;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = PhantomSpec::default();
    let field = generate_phantom(&spec, 3)?;
    let mut counts = [0usize; 5];
    for &l in field.tissue_label.iter() {
        counts[l as usize] += 1;
    }
    println!("phantom {:?}, voxels per label (csf, gm, ring, bundle a, bundle b): {counts:?}", spec.dims);

    let acq = AcquisitionSpec::default();
    let set = render_dwis(&field, &acq, 3)?;
    println!("rendered {} DWIs, b0 mean {:.3}", set.dwis.len(), set.b0.mean().unwrap_or(0.0));

    let slice = set.dwis[0].index_axis(Axis(2), 12).to_owned();
    let peak = slice.iter().cloned().fold(0.0, f64::max);
    let slice = slice.mapv(|v| v / peak);
    for kernel in [DownsampleKernel::BoxMean, DownsampleKernel::Strided] {
        let low = downsample_slice(&slice, InPlaneAxis::X, 2, kernel)?;
        let back = bilinear_upsample(&low, InPlaneAxis::X, 2);
        println!("{kernel:?}: low-res {:?}, bilinear PSNR {:.2} dB", low.dim(), psnr(&back, &slice)?);
    }

    let ds = make_dataset(&DatasetConfig::default(), &PhantomSpec::desk(), &acq, 0)?;
    println!("desk dataset: {} training and {} validation triples", ds.train.len(), ds.validation.len());
    Ok(())
}
