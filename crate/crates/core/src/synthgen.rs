//! Synthetic scenes: library signatures mixed by block-structured,
//! smoothed abundance maps with the purest pixels removed, plus noise.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::model::{add_noise, mix, AbundanceMatrix, EndmemberMatrix, NoiseSpec, ObservationMatrix};
use crate::rng::{derive_seed, rng_from};

/// Small library of smooth synthetic reflectance curves (188 bands,
/// 400–2500 nm) used by the tests, examples and demo.
pub const FIXTURE_LIBRARY_CSV: &str = include_str!("../data/fixture_library.csv");

/// Loose upper bound on reflectance accepted by the library loader.
pub const MAX_REFLECTANCE: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLibrary {
    pub names: Vec<String>,
    pub wavelengths: Option<Vec<f64>>,
    /// L bands × K materials.
    pub spectra: DMatrix<f64>,
}

impl SpectralLibrary {
    pub fn band_count(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Endmember matrix made of the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<EndmemberMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.index_of(n)
                    .ok_or_else(|| UnmixError::InvalidInput(format!("material {n:?} not in library")))
            })
            .collect::<Result<Vec<_>>>()?;
        EndmemberMatrix::new(self.spectra.select_columns(idx.iter()))?.with_names(names.to_vec())
    }

    pub fn fixture() -> Self {
        parse_library(FIXTURE_LIBRARY_CSV.as_bytes()).expect("bundled library is well formed")
    }
}

/// Parses a library CSV: a header row of material names (optionally led by
/// a `wavelength` column) and one row per band. Reflectances must lie in
/// `[0, MAX_REFLECTANCE]`.
pub fn parse_library<R: Read>(reader: R) -> Result<SpectralLibrary> {
    parse_columns(reader, Some(MAX_REFLECTANCE))
}

/// Same layout as [`parse_library`] but accepts any finite value, for
/// matrices such as estimated endmembers that need not be reflectances.
pub fn parse_matrix<R: Read>(reader: R) -> Result<SpectralLibrary> {
    parse_columns(reader, None)
}

fn parse_columns<R: Read>(reader: R, max_value: Option<f64>) -> Result<SpectralLibrary> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let has_wavelength = headers
        .first()
        .is_some_and(|h| h.eq_ignore_ascii_case("wavelength"));
    let names: Vec<String> = headers[usize::from(has_wavelength)..].to_vec();
    if names.is_empty() {
        return Err(UnmixError::Parse {
            row: 1,
            col: 1,
            msg: "no material columns".into(),
        });
    }
    let mut seen = HashSet::new();
    for (i, n) in names.iter().enumerate() {
        if n.is_empty() || !seen.insert(n.as_str()) {
            return Err(UnmixError::Parse {
                row: 1,
                col: i + 1 + usize::from(has_wavelength),
                msg: format!("duplicate or empty material name {n:?}"),
            });
        }
    }

    let k = names.len();
    let mut wavelengths = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Row numbers are 1-based and count the header.
        let row = r + 2;
        if rec.len() != headers.len() {
            return Err(UnmixError::Parse {
                row,
                col: rec.len(),
                msg: format!("expected {} cells, found {}", headers.len(), rec.len()),
            });
        }
        let mut cells = rec.iter().enumerate().map(|(c, cell)| {
            cell.parse::<f64>().map_err(|_| UnmixError::Parse {
                row,
                col: c + 1,
                msg: format!("not a number: {cell:?}"),
            })
        });
        if has_wavelength {
            wavelengths.push(cells.next().expect("length checked")?);
        }
        let mut band = Vec::with_capacity(k);
        for (c, v) in cells.enumerate() {
            let v = v?;
            let col = c + 1 + usize::from(has_wavelength);
            if !v.is_finite() {
                return Err(UnmixError::Parse {
                    row,
                    col,
                    msg: format!("non-finite value {v}"),
                });
            }
            if let Some(max) = max_value.filter(|&m| v < 0.0 || v > m) {
                return Err(UnmixError::Parse {
                    row,
                    col,
                    msg: format!("reflectance {v} outside [0, {max}]"),
                });
            }
            band.push(v);
        }
        values.push(band);
    }
    if values.is_empty() {
        return Err(UnmixError::Parse {
            row: 2,
            col: 1,
            msg: "library has no bands".into(),
        });
    }
    let spectra = DMatrix::from_fn(values.len(), k, |i, j| values[i][j]);
    Ok(SpectralLibrary {
        names,
        wavelengths: has_wavelength.then_some(wavelengths),
        spectra,
    })
}

pub fn load_library(path: &Path) -> Result<SpectralLibrary> {
    parse_library(std::fs::File::open(path)?)
}

pub fn load_matrix(path: &Path) -> Result<SpectralLibrary> {
    parse_matrix(std::fs::File::open(path)?)
}

/// Writes the library in the format read by [`parse_library`]. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_library<W: Write>(lib: &SpectralLibrary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = Vec::new();
    if lib.wavelengths.is_some() {
        header.push("wavelength".into());
    }
    header.extend(lib.names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..lib.spectra.nrows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some(wl) = &lib.wavelengths {
            rec.push(wl[i].to_string());
        }
        rec.extend(lib.spectra.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_library(lib: &SpectralLibrary, path: &Path) -> Result<()> {
    write_library(lib, std::fs::File::create(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub endmember_names: Vec<String>,
    pub rows: usize,
    pub cols: usize,
    /// Side of the square blocks that receive a single material.
    pub block_size: usize,
    /// Side of the mean filter; 1 disables smoothing.
    pub lowpass_window: usize,
    pub purity_threshold: f64,
    /// `inf` produces a noiseless scene.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            endmember_names: (1..=6).map(|i| format!("material_{i:02}")).collect(),
            rows: 64,
            cols: 64,
            block_size: 8,
            lowpass_window: 9,
            purity_threshold: 0.8,
            snr_db: 30.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn endmember_count(&self) -> usize {
        self.endmember_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(UnmixError::InvalidInput(m));
        let p = self.endmember_count();
        if p == 0 {
            return bad("scene needs at least one endmember".into());
        }
        if self.rows == 0 || self.cols == 0 || self.block_size == 0 {
            return bad("rows, cols and block_size must be positive".into());
        }
        if !self.rows.is_multiple_of(self.block_size) || !self.cols.is_multiple_of(self.block_size) {
            return bad(format!(
                "{}×{} grid is not divisible into {}×{} blocks",
                self.rows, self.cols, self.block_size, self.block_size
            ));
        }
        if self.lowpass_window.is_multiple_of(2) {
            return bad(format!("lowpass_window must be odd, got {}", self.lowpass_window));
        }
        if !(self.purity_threshold > 0.0 && self.purity_threshold <= 1.0) {
            return bad(format!(
                "purity_threshold must be in (0, 1], got {}",
                self.purity_threshold
            ));
        }
        if self.purity_threshold < 1.0 / p as f64 {
            return bad(format!(
                "purity_threshold {} is below the uniform mixture 1/{p}",
                self.purity_threshold
            ));
        }
        NoiseSpec::new(self.snr_db, 0)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub observations: ObservationMatrix,
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
    /// Noiseless `A·S`.
    pub clean: ObservationMatrix,
    pub rows: usize,
    pub cols: usize,
}

/// Abundance maps only (steps a–d of the generator). Pixels are numbered
/// row-major: pixel `r·cols + c`.
pub fn generate_abundances(spec: &SceneSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let p = spec.endmember_count();
    let (rows, cols, z) = (spec.rows, spec.cols, spec.block_size);
    let mut rng = rng_from(derive_seed(spec.seed, 1));

    let (brows, bcols) = (rows / z, cols / z);
    let labels: Vec<usize> = (0..brows * bcols).map(|_| rng.random_range(0..p)).collect();
    let label_at = |r: usize, c: usize| labels[(r / z) * bcols + c / z];

    let half = spec.lowpass_window / 2;
    let mut s = DMatrix::zeros(p, rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let j = r * cols + c;
            // Mean over the window clipped to the image.
            let (r0, r1) = (r.saturating_sub(half), (r + half).min(rows - 1));
            let (c0, c1) = (c.saturating_sub(half), (c + half).min(cols - 1));
            let count = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
            for rr in r0..=r1 {
                for cc in c0..=c1 {
                    s[(label_at(rr, cc), j)] += 1.0;
                }
            }
            for k in 0..p {
                s[(k, j)] /= count;
            }
        }
    }

    let uniform = 1.0 / p as f64;
    for mut col in s.column_iter_mut() {
        let t = col.sum();
        col /= t;
        if col.max() > spec.purity_threshold {
            col.fill(uniform);
        }
        let t = col.sum();
        col /= t;
    }
    Ok(s)
}

pub fn generate_scene(lib: &SpectralLibrary, spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    if spec.endmember_count() > lib.len() {
        return Err(UnmixError::InvalidInput(format!(
            "scene asks for {} endmembers, library has {}",
            spec.endmember_count(),
            lib.len()
        )));
    }
    let endmembers = lib.select(&spec.endmember_names)?;
    let s = generate_abundances(spec)?;
    let abundances = AbundanceMatrix::new(s, true)?;
    let clean = mix(&endmembers, &abundances)?;
    let noise = NoiseSpec::new(spec.snr_db, derive_seed(spec.seed, 2))?;
    let observations = add_noise(&clean, &noise);
    Ok(Scene {
        observations,
        endmembers,
        abundances,
        clean,
        rows: spec.rows,
        cols: spec.cols,
    })
}
