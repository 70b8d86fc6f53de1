//! File formats: NIfTI-1 float32 volumes, FSL bval/bvec gradient tables,
//! JSON run configs, training-log CSV/JSON and the binary parameter
//! container.
//!
//! Every writer goes through [`write_atomic`], which writes a sibling
//! temporary file and renames it over the target.

mod config;
mod log_files;
mod nifti;
mod scheme_files;

pub use config::{AcquisitionConfig, RunConfig, OUTPUT_DIR_ENV};
pub use log_files::{
    decode_params, encode_params, log_csv, read_params, summary_json, write_json, write_log_csv, write_params,
    LOG_CSV_HEADER, PARAMS_MAGIC, PARAMS_VERSION,
};
pub use nifti::{
    decode as decode_nifti, encode as encode_nifti, read_nifti, read_nifti_3d, write_nifti, write_nifti_4d,
    NiftiVolume, DATATYPE_FLOAT32, HEADER_SIZE, MAGIC as NIFTI_MAGIC, VOX_OFFSET,
};
pub use scheme_files::{
    format_bval, format_bvec, parse_bval, parse_bvec, read_scheme, scheme_from_columns, write_scheme,
    UNIT_TOLERANCE,
};

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diffusion::DiffusionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("header is {actual} bytes, shorter than sizeof_hdr 348")]
    TruncatedHeader { actual: usize },
    #[error("sizeof_hdr is {0}, expected 348")]
    BadHeaderSize(i32),
    #[error("magic is {0:?}, expected \"n+1\\0\"")]
    BadMagic(Vec<u8>),
    #[error("datatype code {0} is not supported (only float32, code 16)")]
    UnsupportedDatatype(i16),
    #[error("payload has {actual} bytes, dim implies {expected}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("header field {field}: {detail}")]
    InvalidHeader { field: &'static str, detail: String },
    #[error("cannot store non-finite value {0}")]
    NonFinite(f64),
    #[error("bval has {bval} columns but bvec has {bvec}")]
    ColumnCountMismatch { bval: usize, bvec: usize },
    #[error("bvec must have 3 rows, found {0}")]
    BvecRowCount(usize),
    #[error("bvec column {column} has norm {norm}, not unit length")]
    NonUnitDirection { column: usize, norm: f64 },
    #[error("{file} line {line}: cannot parse {token:?}")]
    Parse { file: &'static str, line: usize, token: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parameter file: {0}")]
    BadParams(String),
    #[error(transparent)]
    Scheme(#[from] DiffusionError),
}

impl IoError {
    /// The variant name, used to label CLI error messages.
    pub fn kind(&self) -> &'static str {
        match self {
            IoError::Io { .. } => "Io",
            IoError::TruncatedHeader { .. } => "TruncatedHeader",
            IoError::BadHeaderSize(_) => "BadHeaderSize",
            IoError::BadMagic(_) => "BadMagic",
            IoError::UnsupportedDatatype(_) => "UnsupportedDatatype",
            IoError::TruncatedPayload { .. } => "TruncatedPayload",
            IoError::InvalidHeader { .. } => "InvalidHeader",
            IoError::NonFinite(_) => "NonFinite",
            IoError::ColumnCountMismatch { .. } => "ColumnCountMismatch",
            IoError::BvecRowCount(_) => "BvecRowCount",
            IoError::NonUnitDirection { .. } => "NonUnitDirection",
            IoError::Parse { .. } => "Parse",
            IoError::Config(_) => "Config",
            IoError::BadParams(_) => "BadParams",
            IoError::Scheme(_) => "Scheme",
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it into
/// place so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let name = path.file_name().ok_or_else(|| IoError::Io {
        path: path.to_path_buf(),
        message: "path has no file name".into(),
    })?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(IoError::io(path, e));
    }
    Ok(())
}
