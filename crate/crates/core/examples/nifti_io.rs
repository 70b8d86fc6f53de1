//! Writes and reads back a NIfTI volume and a bval/bvec pair, then shows
//! the named error produced by a corrupted header.

use dwiratio::io::{decode_nifti, encode_nifti, read_nifti_3d, read_scheme, write_nifti, write_scheme};
use dwiratio::phantom::single_shell_scheme;
use ndarray::Array3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("dwiratio_nifti_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    let vol = Array3::from_shape_fn((8, 6, 4), |(x, y, z)| (x + 10 * y + 100 * z) as f64 * 0.5);
    let path = dir.join("volume.nii");
    write_nifti(&path, &vol, [1.5, 1.5, 3.0])?;
    let (back, voxel) = read_nifti_3d(&path)?;
    println!("{} bytes, dims {:?}, voxel {voxel:?}, exact {}", std::fs::metadata(&path)?.len(), back.dim(), back == vol);

    let scheme = single_shell_scheme(12, 1000.0, 0);
    write_scheme(&scheme, &dir.join("dwi.bval"), &dir.join("dwi.bvec"))?;
    let parsed = read_scheme(&dir.join("dwi.bval"), &dir.join("dwi.bvec"))?;
    let max_dev = parsed
        .entries()
        .iter()
        .zip(scheme.entries())
        .map(|(a, b)| (a.dir.dot(&b.dir) - 1.0).abs().max((a.b - b.b).abs()))
        .fold(0.0, f64::max);
    println!("bval/bvec round trip: {} entries, max deviation {max_dev:.1e}", parsed.len());

    let mut bytes = encode_nifti(&vol.into_dyn(), [1.0; 3])?;
    bytes[70] = 64;
    match decode_nifti(&bytes) {
        Ok(_) => println!("unexpectedly decoded"),
        Err(e) => println!("corrupted datatype -> {}: {e}", e.kind()),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
