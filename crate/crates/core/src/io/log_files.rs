use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::{write_atomic, IoError};
use crate::trainer::{ConvNetParams, TrainingLog};

pub const LOG_CSV_HEADER: &str = "step,epoch,lr,loss_total,loss_mse,loss_fft,loss_ratio_log,val_psnr,val_d_ratio";
pub const PARAMS_MAGIC: &[u8; 8] = b"DWRPARAM";
pub const PARAMS_VERSION: u32 = 1;

/// One row per validation record. Floats use the shortest representation
/// that parses back to the same value.
pub fn log_csv(log: &TrainingLog) -> String {
    let mut out = String::from(LOG_CSV_HEADER);
    out.push('\n');
    for r in &log.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.step, r.epoch, r.lr, r.loss.total, r.loss.mse, r.loss.fft, r.loss.ratio_log, r.val_psnr, r.val_d_ratio
        );
    }
    out
}

pub fn write_log_csv(path: &Path, log: &TrainingLog) -> Result<(), IoError> {
    write_atomic(path, log_csv(log).as_bytes())
}

/// Wraps `report` with a metadata block. The timestamp lives only there, so
/// everything under `report` is reproducible.
pub fn summary_json<T: Serialize>(report: &T) -> Result<String, IoError> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let doc = serde_json::json!({
        "metadata": {
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "created_unix_seconds": created,
        },
        "report": report,
    });
    serde_json::to_string_pretty(&doc).map(|s| s + "\n").map_err(|e| IoError::Config(e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, report: &T) -> Result<(), IoError> {
    write_atomic(path, summary_json(report)?.as_bytes())
}

/// Layout: magic, version (u32), tensor count (u32), then per tensor a
/// u16-length name, a u8 rank and u32 extents, then every tensor's values
/// as little-endian f64 in table order.
pub fn encode_params(params: &ConvNetParams) -> Vec<u8> {
    let shapes = params.shapes();
    let mut out = Vec::with_capacity(64 + 8 * params.param_count());
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for (name, dims) in &shapes {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dims.len() as u8);
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| IoError::BadParams(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Decodes a container whose shape table must match the refiner exactly.
pub fn decode_params(bytes: &[u8]) -> Result<ConvNetParams, IoError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != PARAMS_MAGIC {
        return Err(IoError::BadParams("bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != PARAMS_VERSION {
        return Err(IoError::BadParams(format!("unsupported version {version}")));
    }
    let mut params = ConvNetParams::zeros();
    let expected = params.shapes();
    let count = c.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(IoError::BadParams(format!("{count} tensors, expected {}", expected.len())));
    }
    for (name, dims) in &expected {
        let len = u16::from_le_bytes(c.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
        let got_name = String::from_utf8_lossy(c.take(len, "name")?).into_owned();
        let rank = c.take(1, "rank")?[0] as usize;
        let got_dims = (0..rank).map(|_| c.u32("extent").map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        if &got_name != name || &got_dims != dims {
            return Err(IoError::BadParams(format!("tensor {got_name} {got_dims:?}, expected {name} {dims:?}")));
        }
    }
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = f64::from_le_bytes(c.take(8, "payload")?.try_into().expect("8 bytes"));
        }
    }
    if c.pos != bytes.len() {
        return Err(IoError::BadParams(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    if !params.is_finite() {
        return Err(IoError::BadParams("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn write_params(path: &Path, params: &ConvNetParams) -> Result<(), IoError> {
    write_atomic(path, &encode_params(params))
}

pub fn read_params(path: &Path) -> Result<ConvNetParams, IoError> {
    decode_params(&std::fs::read(path).map_err(|e| IoError::io(path, e))?)
}
