//! Cube files: a JSON header plus a raw payload of little-endian `f64`
//! values stored band-major (all pixels of band 0, then band 1, ...).
//!
//! `X.json` names its payload relative to its own directory, normally
//! `X.bin`. The payload holds exactly `bands · pixels · 8` bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unmix_core::DMatrix;

use crate::error::{CliError, Result};

pub const DTYPE: &str = "f64";
pub const BYTE_ORDER: &str = "little";
pub const LAYOUT: &str = "band-major";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeHeader {
    pub bands: usize,
    pub pixels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub payload: String,
}

impl CubeHeader {
    pub fn new(bands: usize, pixels: usize, grid: Option<(usize, usize)>, payload: String) -> Self {
        CubeHeader {
            bands,
            pixels,
            rows: grid.map(|g| g.0),
            cols: grid.map(|g| g.1),
            dtype: DTYPE.into(),
            byte_order: BYTE_ORDER.into(),
            layout: LAYOUT.into(),
            payload,
        }
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.rows.zip(self.cols)
    }

    pub fn payload_len(&self) -> usize {
        self.bands * self.pixels * 8
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.dtype != DTYPE {
            return Err(format!("unsupported dtype {:?}, expected {DTYPE:?}", self.dtype));
        }
        if self.byte_order != BYTE_ORDER {
            return Err(format!("unsupported byte_order {:?}", self.byte_order));
        }
        if self.layout != LAYOUT {
            return Err(format!("unsupported layout {:?}", self.layout));
        }
        if self.bands == 0 || self.pixels == 0 {
            return Err("bands and pixels must be positive".into());
        }
        match (self.rows, self.cols) {
            (None, None) => {}
            (Some(r), Some(c)) if r.checked_mul(c) == Some(self.pixels) => {}
            (Some(r), Some(c)) => return Err(format!("grid {r}×{c} does not hold {} pixels", self.pixels)),
            _ => return Err("rows and cols must be given together".into()),
        }
        Ok(())
    }
}

/// Band-major little-endian bytes of `m` (row `l` of `m` is band `l`).
pub fn encode_payload(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.len() * 8);
    for row in m.row_iter() {
        for v in row.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_payload(bytes: &[u8], bands: usize, pixels: usize) -> std::result::Result<DMatrix<f64>, String> {
    if bytes.len() != bands * pixels * 8 {
        return Err(format!(
            "payload has {} bytes, expected {} ({bands} bands × {pixels} pixels × 8)",
            bytes.len(),
            bands * pixels * 8
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DMatrix::from_row_slice(bands, pixels, &values))
}

/// Header path for a cube given either its header or its payload path.
pub fn header_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "bin") {
        path.with_extension("json")
    } else {
        path.to_path_buf()
    }
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.bin`. Returns the header path.
pub fn write_cube(dir: &Path, stem: &str, m: &DMatrix<f64>, grid: Option<(usize, usize)>) -> Result<PathBuf> {
    let payload_name = format!("{stem}.bin");
    let header = CubeHeader::new(m.nrows(), m.ncols(), grid, payload_name.clone());
    header.check().map_err(|e| CliError::file(dir.join(stem), e))?;
    let json_path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| CliError::io(&json_path, e))?;
    let bin_path = dir.join(payload_name);
    fs::write(&bin_path, encode_payload(m)).map_err(|e| CliError::io(&bin_path, e))?;
    Ok(json_path)
}

pub fn read_cube(path: &Path) -> Result<(CubeHeader, DMatrix<f64>)> {
    let json_path = header_path(path);
    let text = fs::read_to_string(&json_path).map_err(|e| CliError::io(&json_path, e))?;
    let header: CubeHeader = serde_json::from_str(&text).map_err(|e| CliError::file(&json_path, e))?;
    header.check().map_err(|e| CliError::file(&json_path, e))?;
    let bin_path = json_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.payload);
    let bytes = fs::read(&bin_path).map_err(|e| CliError::io(&bin_path, e))?;
    let m = decode_payload(&bytes, header.bands, header.pixels).map_err(|e| CliError::file(&bin_path, e))?;
    Ok((header, m))
}

/// Payload file of a cube, resolved against the header location.
pub fn payload_path(header_file: &Path) -> Result<PathBuf> {
    let json_path = header_path(header_file);
    let text = fs::read_to_string(&json_path).map_err(|e| CliError::io(&json_path, e))?;
    let header: CubeHeader = serde_json::from_str(&text).map_err(|e| CliError::file(&json_path, e))?;
    Ok(json_path.parent().unwrap_or_else(|| Path::new("")).join(header.payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_is_band_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bytes = encode_payload(&m);
        assert_eq!(bytes.len(), 48);
        assert_eq!(&bytes[8..16], &2.0f64.to_le_bytes());
        assert_eq!(&bytes[24..32], &4.0f64.to_le_bytes());
        assert_eq!(decode_payload(&bytes, 2, 3).unwrap(), m);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = encode_payload(&DMatrix::from_element(2, 2, 1.0));
        assert!(decode_payload(&bytes[..31], 2, 2).is_err());
        assert!(decode_payload(&bytes, 2, 3).is_err());
    }

    #[test]
    fn header_checks() {
        let mut h = CubeHeader::new(3, 4, Some((2, 2)), "x.bin".into());
        assert!(h.check().is_ok());
        h.cols = Some(3);
        assert!(h.check().is_err());
        h = CubeHeader::new(3, 4, None, "x.bin".into());
        h.byte_order = "big".into();
        assert!(h.check().is_err());
    }

    #[test]
    fn header_path_from_payload() {
        assert_eq!(header_path(Path::new("a/X.bin")), PathBuf::from("a/X.json"));
        assert_eq!(header_path(Path::new("a/X.json")), PathBuf::from("a/X.json"));
    }
}
