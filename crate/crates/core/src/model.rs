//! Domain types and the linear mixing forward model `X = A·S + N`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::rng::rng_from;

fn check_nonnegative(m: &DMatrix<f64>) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if !v.is_finite() {
                return Err(UnmixError::NonFinite { row: r, col: c });
            }
            if v < 0.0 {
                return Err(UnmixError::NegativeEntry {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Mixed pixel spectra, one column per pixel (L bands × N pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    data: DMatrix<f64>,
}

impl ObservationMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(UnmixError::InvalidInput(
                "observation matrix must have at least one band and one pixel".into(),
            ));
        }
        check_nonnegative(&data)?;
        Ok(ObservationMatrix { data })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn band_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixel_count(&self) -> usize {
        self.data.ncols()
    }
}

/// Endmember signatures, one column per material (L bands × P).
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    data: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl EndmemberMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        check_nonnegative(&data)?;
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(UnmixError::InvalidInput(
                "endmember matrix must be nonempty".into(),
            ));
        }
        for (j, col) in data.column_iter().enumerate() {
            if col.iter().all(|&v| v == 0.0) {
                return Err(UnmixError::InvalidInput(format!(
                    "endmember column {j} is all zero"
                )));
            }
        }
        Ok(EndmemberMatrix { data, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.data.ncols() {
            return Err(UnmixError::InvalidInput(format!(
                "{} names for {} endmembers",
                names.len(),
                self.data.ncols()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn band_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn endmember_count(&self) -> usize {
        self.data.ncols()
    }
}

/// Per-pixel abundance fractions (P × N).
///
/// `asc_enforced` records whether every column was verified to lie on the
/// probability simplex when the matrix was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    data: DMatrix<f64>,
    asc_enforced: bool,
}

impl AbundanceMatrix {
    pub fn new(data: DMatrix<f64>, asc_enforced: bool) -> Result<Self> {
        check_nonnegative(&data)?;
        Ok(AbundanceMatrix { data, asc_enforced })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn asc_enforced(&self) -> bool {
        self.asc_enforced
    }

    pub fn endmember_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixel_count(&self) -> usize {
        self.data.ncols()
    }

    pub fn validate(&self, tol: f64) -> AbundanceReport {
        validate_abundances(&self.data, tol)
    }
}

/// White Gaussian noise at a whole-image SNR. `snr_db = +inf` disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
            return Err(UnmixError::InvalidInput(format!(
                "snr_db must be finite or +inf, got {snr_db}"
            )));
        }
        Ok(NoiseSpec { snr_db, seed })
    }

    pub fn noiseless() -> Self {
        NoiseSpec {
            snr_db: f64::INFINITY,
            seed: 0,
        }
    }
}

/// Noiseless mixing `X = A·S`.
pub fn mix(a: &EndmemberMatrix, s: &AbundanceMatrix) -> Result<ObservationMatrix> {
    if a.data.ncols() != s.data.nrows() {
        return Err(UnmixError::mismatch("mix", a.data.shape(), s.data.shape()));
    }
    let x = &a.data * &s.data;
    // Products of nonnegative factors are nonnegative; an empty pixel set is
    // the only way construction can fail.
    ObservationMatrix::new(x)
}

/// Adds zero-mean i.i.d. Gaussian noise with variance chosen so that
/// `10·log10(mean(X²)/σ²) = snr_db`, then clamps negative entries to zero.
pub fn add_noise(x: &ObservationMatrix, spec: &NoiseSpec) -> ObservationMatrix {
    if spec.snr_db == f64::INFINITY {
        return x.clone();
    }
    let power = mean_square(&x.data);
    let sigma = (power / 10f64.powf(spec.snr_db / 10.0)).sqrt();
    if sigma == 0.0 || !sigma.is_finite() {
        return x.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = rng_from(spec.seed);
    let mut noisy = x.data.clone();
    for v in noisy.iter_mut() {
        *v = (*v + normal.sample(&mut rng)).max(0.0);
    }
    ObservationMatrix { data: noisy }
}

pub fn mean_square(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64
}

/// SNR in dB of `noisy` with respect to `clean`, using the same whole-image
/// definition as [`add_noise`].
pub fn measure_snr_db(clean: &DMatrix<f64>, noisy: &DMatrix<f64>) -> f64 {
    let noise = noisy - clean;
    10.0 * (mean_square(clean) / mean_square(&noise)).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbundanceReport {
    pub negative_count: usize,
    pub max_sum_deviation: f64,
    pub passed: bool,
}

/// Checks nonnegativity and sum-to-one of every column of `s`.
pub fn validate_abundances(s: &DMatrix<f64>, tol: f64) -> AbundanceReport {
    let negative_count = s.iter().filter(|&&v| v < 0.0 || v.is_nan()).count();
    let max_sum_deviation = s
        .column_iter()
        .map(|c| (c.sum() - 1.0).abs())
        .fold(0.0, f64::max);
    AbundanceReport {
        negative_count,
        max_sum_deviation,
        passed: negative_count == 0 && max_sum_deviation <= tol,
    }
}
