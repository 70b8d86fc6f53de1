//! Single-file NIfTI-1 volumes restricted to little-endian float32 payloads.

use std::path::Path;

use ndarray::{Array4, ArrayD, IxDyn, ShapeBuilder};

use super::{write_atomic, IoError};
use crate::Grid3;

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
pub const DATATYPE_FLOAT32: i16 = 16;
pub const MAGIC: &[u8; 4] = b"n+1\0";

const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_XYZT_UNITS: usize = 123;
const OFF_QFORM_CODE: usize = 252;
const OFF_SFORM_CODE: usize = 254;
const OFF_SROW_X: usize = 280;
const OFF_MAGIC: usize = 344;

/// A decoded volume: shape `[nx, ny, nz]` or `[nx, ny, nz, nt]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiVolume {
    pub data: ArrayD<f64>,
    /// Voxel size in millimetres along x, y, z.
    pub voxel_size: [f64; 3],
}

impl NiftiVolume {
    pub fn into_3d(self) -> Result<(Grid3, [f64; 3]), IoError> {
        let shape = self.data.shape().to_vec();
        let data = self
            .data
            .into_dimensionality()
            .map_err(|_| IoError::InvalidHeader { field: "dim", detail: format!("expected a 3D volume, got shape {shape:?}") })?;
        Ok((data, self.voxel_size))
    }

    /// Splits a 4D volume along its last axis; a 3D volume yields itself.
    pub fn into_frames(self) -> Result<Vec<Grid3>, IoError> {
        match self.data.ndim() {
            3 => Ok(vec![self.into_3d()?.0]),
            4 => {
                let v: Array4<f64> = self.data.into_dimensionality().expect("ndim checked");
                Ok(v.axis_iter(ndarray::Axis(3)).map(|f| f.to_owned()).collect())
            }
            n => Err(IoError::InvalidHeader { field: "dim", detail: format!("unsupported rank {n}") }),
        }
    }
}

fn put_i16(buf: &mut [u8], off: usize, v: i16) {
    buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(buf: &mut [u8], off: usize, v: f32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn get_i16(buf: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([buf[off], buf[off + 1]])
}

fn get_i32(buf: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(buf[off..off + 4].try_into().expect("4 bytes"))
}

fn get_f32(buf: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(buf[off..off + 4].try_into().expect("4 bytes"))
}

fn encode_header(shape: &[usize], voxel_size: [f64; 3]) -> Result<Vec<u8>, IoError> {
    let mut h = vec![0u8; VOX_OFFSET];
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    put_i16(&mut h, OFF_DIM, shape.len() as i16);
    for (i, &n) in shape.iter().enumerate() {
        let n = i16::try_from(n)
            .map_err(|_| IoError::InvalidHeader { field: "dim", detail: format!("extent {n} exceeds i16") })?;
        put_i16(&mut h, OFF_DIM + 2 * (i + 1), n);
    }
    for i in shape.len() + 1..8 {
        put_i16(&mut h, OFF_DIM + 2 * i, 1);
    }
    put_i16(&mut h, OFF_DATATYPE, DATATYPE_FLOAT32);
    put_i16(&mut h, OFF_BITPIX, 32);
    put_f32(&mut h, OFF_PIXDIM, 1.0);
    for (i, &s) in voxel_size.iter().enumerate() {
        put_f32(&mut h, OFF_PIXDIM + 4 * (i + 1), s as f32);
    }
    put_f32(&mut h, OFF_PIXDIM + 16, 1.0);
    put_f32(&mut h, OFF_VOX_OFFSET, VOX_OFFSET as f32);
    put_f32(&mut h, OFF_SCL_SLOPE, 1.0);
    // Millimetres, no time unit.
    h[OFF_XYZT_UNITS] = 2;
    // Scanner-anatomical sform carrying the voxel size on the diagonal.
    put_i16(&mut h, OFF_QFORM_CODE, 0);
    put_i16(&mut h, OFF_SFORM_CODE, 1);
    for (row, &s) in voxel_size.iter().enumerate() {
        put_f32(&mut h, OFF_SROW_X + 16 * row + 4 * row, s as f32);
    }
    h[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC);
    Ok(h)
}

/// Encodes a 3D or 4D volume (x fastest) into file bytes.
pub fn encode(data: &ArrayD<f64>, voxel_size: [f64; 3]) -> Result<Vec<u8>, IoError> {
    if !(3..=4).contains(&data.ndim()) {
        return Err(IoError::InvalidHeader { field: "dim", detail: format!("unsupported rank {}", data.ndim()) });
    }
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(IoError::NonFinite(*v));
    }
    if voxel_size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(IoError::InvalidHeader { field: "pixdim", detail: format!("voxel size {voxel_size:?}") });
    }
    let mut out = encode_header(data.shape(), voxel_size)?;
    out.reserve(data.len() * 4);
    // Fortran order puts x fastest.
    for v in data.t().iter() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Decodes file bytes, validating the header fields this subset relies on.
pub fn decode(bytes: &[u8]) -> Result<NiftiVolume, IoError> {
    if bytes.len() < HEADER_SIZE {
        return Err(IoError::TruncatedHeader { actual: bytes.len() });
    }
    let sizeof_hdr = get_i32(bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        return Err(IoError::BadHeaderSize(sizeof_hdr));
    }
    let magic = &bytes[OFF_MAGIC..OFF_MAGIC + 4];
    if magic != MAGIC {
        return Err(IoError::BadMagic(magic.to_vec()));
    }
    let datatype = get_i16(bytes, OFF_DATATYPE);
    let bitpix = get_i16(bytes, OFF_BITPIX);
    if datatype != DATATYPE_FLOAT32 {
        return Err(IoError::UnsupportedDatatype(datatype));
    }
    if bitpix != 32 {
        return Err(IoError::InvalidHeader { field: "bitpix", detail: format!("{bitpix} for float32") });
    }
    let rank = get_i16(bytes, OFF_DIM);
    if !(3..=4).contains(&rank) {
        return Err(IoError::InvalidHeader { field: "dim[0]", detail: format!("rank {rank}, expected 3 or 4") });
    }
    let mut shape = Vec::with_capacity(rank as usize);
    for i in 1..=rank as usize {
        let n = get_i16(bytes, OFF_DIM + 2 * i);
        if n < 1 {
            return Err(IoError::InvalidHeader { field: "dim", detail: format!("dim[{i}] = {n}") });
        }
        shape.push(n as usize);
    }
    let vox_offset = get_f32(bytes, OFF_VOX_OFFSET);
    if !(vox_offset >= VOX_OFFSET as f32 && vox_offset.fract() == 0.0) {
        return Err(IoError::InvalidHeader { field: "vox_offset", detail: format!("{vox_offset}") });
    }
    let slope = get_f32(bytes, OFF_SCL_SLOPE);
    if !(slope == 0.0 || slope == 1.0) {
        return Err(IoError::InvalidHeader { field: "scl_slope", detail: format!("{slope}, only unscaled data is supported") });
    }
    let mut voxel_size = [0.0; 3];
    for (i, s) in voxel_size.iter_mut().enumerate() {
        *s = get_f32(bytes, OFF_PIXDIM + 4 * (i + 1)) as f64;
    }

    let count: usize = shape.iter().product();
    let start = vox_offset as usize;
    let expected = count * 4;
    let available = bytes.len().saturating_sub(start);
    if available < expected {
        return Err(IoError::TruncatedPayload { expected, actual: available });
    }
    let values: Vec<f64> = bytes[start..start + expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let data = ArrayD::from_shape_vec(IxDyn(&shape).f(), values).expect("length checked");
    Ok(NiftiVolume { data, voxel_size })
}

pub fn write_nifti(path: &Path, volume: &Grid3, voxel_size: [f64; 3]) -> Result<(), IoError> {
    write_atomic(path, &encode(&volume.clone().into_dyn(), voxel_size)?)
}

/// Writes several same-shaped volumes as one 4D file.
pub fn write_nifti_4d(path: &Path, frames: &[Grid3], voxel_size: [f64; 3]) -> Result<(), IoError> {
    let first = frames.first().ok_or(IoError::InvalidHeader { field: "dim", detail: "no frames".into() })?;
    let (nx, ny, nz) = first.dim();
    let mut data = Array4::zeros((nx, ny, nz, frames.len()));
    for (t, f) in frames.iter().enumerate() {
        if f.dim() != first.dim() {
            return Err(IoError::InvalidHeader { field: "dim", detail: format!("frame {t} has shape {:?}", f.dim()) });
        }
        data.index_axis_mut(ndarray::Axis(3), t).assign(f);
    }
    write_atomic(path, &encode(&data.into_dyn(), voxel_size)?)
}

pub fn read_nifti(path: &Path) -> Result<NiftiVolume, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(&bytes)
}

/// Reads a file that must hold a single 3D volume.
pub fn read_nifti_3d(path: &Path) -> Result<(Grid3, [f64; 3]), IoError> {
    read_nifti(path)?.into_3d()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn ramp(dims: (usize, usize, usize)) -> Grid3 {
        Array3::from_shape_fn(dims, |(x, y, z)| x as f64 + 10.0 * y as f64 + 100.0 * z as f64 + 0.25)
    }

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let v = ramp((5, 4, 3));
        let bytes = encode(&v.clone().into_dyn(), [4.0, 2.0, 2.0]).unwrap();
        let (back, vs) = decode(&bytes).unwrap().into_3d().unwrap();
        assert_eq!(back, v);
        assert_eq!(vs, [4.0, 2.0, 2.0]);
    }

    #[test]
    fn payload_is_x_fastest() {
        let v = ramp((3, 2, 2));
        let bytes = encode(&v.clone().into_dyn(), [1.0; 3]).unwrap();
        let first: Vec<f32> = bytes[VOX_OFFSET..VOX_OFFSET + 16]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(first, vec![0.25, 1.25, 2.25, 10.25]);
    }

    #[test]
    fn file_size_for_default_phantom() {
        let bytes = encode(&Array3::<f64>::zeros((64, 64, 16)).into_dyn(), [2.0; 3]).unwrap();
        assert_eq!(bytes.len(), 352 + 64 * 64 * 16 * 4);
        assert_eq!(&bytes[344..348], b"n+1\0");
        assert_eq!(get_i32(&bytes, 0), 348);
    }

    #[test]
    fn four_d_round_trip() {
        let frames = vec![ramp((3, 3, 2)), ramp((3, 3, 2)).mapv(|v| -v)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.nii");
        write_nifti_4d(&path, &frames, [2.0; 3]).unwrap();
        let back = read_nifti(&path).unwrap();
        assert_eq!(back.data.shape(), &[3, 3, 2, 2]);
        assert_eq!(back.into_frames().unwrap(), frames);
    }

    #[test]
    fn header_errors_name_the_field() {
        let good = encode(&ramp((2, 2, 2)).into_dyn(), [1.0; 3]).unwrap();

        let mut b = good.clone();
        b[344] = b'x';
        assert!(matches!(decode(&b), Err(IoError::BadMagic(_))));

        let mut b = good.clone();
        put_i16(&mut b, OFF_DATATYPE, 4);
        assert!(matches!(decode(&b), Err(IoError::UnsupportedDatatype(4))));

        let b = &good[..good.len() - 3];
        assert!(matches!(decode(b), Err(IoError::TruncatedPayload { expected: 32, actual: 29 })));

        assert!(matches!(decode(&good[..100]), Err(IoError::TruncatedHeader { actual: 100 })));

        let mut b = good.clone();
        b[0..4].copy_from_slice(&540i32.to_le_bytes());
        assert!(matches!(decode(&b), Err(IoError::BadHeaderSize(540))));

        let mut b = good;
        put_i16(&mut b, OFF_DIM + 4, 0);
        let e = decode(&b).unwrap_err();
        assert!(e.to_string().contains("dim"), "{e}");
    }

    #[test]
    fn rejects_non_finite_and_bad_voxel_size() {
        let mut v = ramp((2, 2, 2));
        assert!(encode(&v.clone().into_dyn(), [0.0, 1.0, 1.0]).is_err());
        v[[0, 0, 0]] = f64::NAN;
        assert!(matches!(encode(&v.into_dyn(), [1.0; 3]), Err(IoError::NonFinite(_))));
    }
}
