//! CSV tables and file digests.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use unmix_core::nmf::CostTrace;
use unmix_core::synthgen::{load_library, load_matrix, save_library, SpectralLibrary};
use unmix_core::DMatrix;

use crate::error::{CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// `endmember_01`, `endmember_02`, ...
pub fn column_names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}_{i:02}")).collect()
}

/// Writes a matrix in the spectral-library layout: one named column per
/// matrix column, one row per matrix row.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>, names: Vec<String>, wavelengths: Option<Vec<f64>>) -> Result<()> {
    let lib = SpectralLibrary {
        names,
        wavelengths,
        spectra: m.clone(),
    };
    save_library(&lib, path).map_err(|e| CliError::file(path, e))
}

/// Reads any matrix written by [`write_matrix_csv`]; values need only be finite.
pub fn read_matrix_csv(path: &Path) -> Result<SpectralLibrary> {
    load_matrix(path).map_err(|e| CliError::file(path, e))
}

/// Reads a reflectance library; values must be valid reflectances.
pub fn read_library_csv(path: &Path) -> Result<SpectralLibrary> {
    load_library(path).map_err(|e| CliError::file(path, e))
}

/// One row per recorded cost: `layer,iteration,cost`. Layers count from 1;
/// iteration 0 is the cost at initialization.
pub fn write_traces_csv(path: &Path, traces: &[CostTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::file(path, e))?;
    let wrap = |e: csv::Error| CliError::file(path, e);
    w.write_record(["layer", "iteration", "cost"]).map_err(wrap)?;
    for (l, trace) in traces.iter().enumerate() {
        for (it, v) in trace.values.iter().enumerate() {
            w.write_record([(l + 1).to_string(), it.to_string(), v.to_string()])
                .map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_indices_csv(path: &Path, header: &str, indices: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::file(path, e))?;
    let wrap = |e: csv::Error| CliError::file(path, e);
    w.write_record(["endmember", header]).map_err(wrap)?;
    for (k, idx) in indices.iter().enumerate() {
        w.write_record([(k + 1).to_string(), idx.to_string()]).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
