//! Fully constrained least squares abundance estimation.
//!
//! Each pixel solves `min ‖E·s − y‖²  s.t. s ≥ 0` with the augmented system
//! `E = [A; δ·1ᵀ]`, `y = [x; δ]`, so a large `δ` enforces `Σ s = 1` while the
//! active-set NNLS solver enforces nonnegativity exactly. Columns whose sum
//! is within [`RENORMALIZE_BELOW`] of one are then rescaled onto the simplex.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::model::{AbundanceMatrix, EndmemberMatrix, ObservationMatrix};

/// Sum deviation under which a solution is snapped onto the simplex.
pub const RENORMALIZE_BELOW: f64 = 1e-4;

/// Default `δ = DEFAULT_DELTA_SCALE · √L · max(A)`.
pub const DEFAULT_DELTA_SCALE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FclsConfig {
    /// Sum-to-one weight. `None` picks a value from the endmember scale.
    pub delta: Option<f64>,
    pub max_active_set_iters: usize,
    /// Dual feasibility tolerance of the NNLS stopping test.
    pub tol: f64,
}

impl Default for FclsConfig {
    fn default() -> Self {
        FclsConfig {
            delta: None,
            max_active_set_iters: 500,
            tol: 1e-9,
        }
    }
}

impl FclsConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(UnmixError::InvalidInput("fcls delta must be > 0".into()));
            }
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(UnmixError::InvalidInput("fcls tol must be ≥ 0".into()));
        }
        if self.max_active_set_iters == 0 {
            return Err(UnmixError::InvalidInput(
                "max_active_set_iters must be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    pub fn resolve_delta(&self, a: &DMatrix<f64>) -> f64 {
        self.delta.unwrap_or_else(|| {
            DEFAULT_DELTA_SCALE * (a.nrows() as f64).sqrt() * a.amax().max(f64::MIN_POSITIVE)
        })
    }
}

/// Numerical rank of `m` with relative singular value cutoff `rtol`.
pub fn numerical_rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.amax();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > rtol * top).count()
}

/// Lawson–Hanson active-set NNLS: `min ‖E·s − y‖²` subject to `s ≥ 0`.
///
/// Sub-problems are solved by Householder QR on the passive columns, which
/// keeps the large augmentation weight from squaring the condition number.
pub fn nnls(e: &DMatrix<f64>, y: &DVector<f64>, max_iters: usize, tol: f64) -> Result<DVector<f64>> {
    let (m, n) = e.shape();
    if y.len() != m {
        return Err(UnmixError::mismatch("nnls", e.shape(), (y.len(), 1)));
    }
    let mut s = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let et = e.transpose();
    let mut w = &et * (y - e * &s);
    let tol = tol.max(10.0 * f64::EPSILON * e.norm() * y.norm());
    let mut iters = 0;

    loop {
        // Entering variable: most positive dual among the zero set, lowest
        // index on ties.
        let mut enter = None;
        let mut best = tol;
        for j in 0..n {
            if !passive[j] && w[j] > best {
                best = w[j];
                enter = Some(j);
            }
        }
        let Some(t) = enter else { break };
        passive[t] = true;
        let mut first = true;

        loop {
            iters += 1;
            if iters > max_iters {
                return Err(UnmixError::NotConverged {
                    iterations: max_iters,
                    iterate: s.iter().copied().collect(),
                });
            }
            let z = solve_passive(e, y, &passive)?;
            if first && z[t] <= 0.0 {
                // The dual said t should enter but the primal disagrees: the
                // remaining violation is rounding noise.
                passive[t] = false;
                return Ok(s);
            }
            first = false;
            if passive.iter().zip(z.iter()).all(|(&p, &v)| !p || v > 0.0) {
                s = z;
                break;
            }
            // Step back toward the feasible region until the first passive
            // variable hits zero.
            let mut step = f64::INFINITY;
            for j in 0..n {
                if passive[j] && z[j] <= 0.0 {
                    let r = s[j] / (s[j] - z[j]);
                    if r < step {
                        step = r;
                    }
                }
            }
            for j in 0..n {
                s[j] += step * (z[j] - s[j]);
            }
            for j in 0..n {
                if passive[j] && s[j] <= f64::EPSILON * 10.0 {
                    passive[j] = false;
                    s[j] = 0.0;
                }
            }
            if passive.iter().all(|&p| !p) {
                break;
            }
        }
        w = &et * (y - e * &s);
    }
    Ok(s)
}

fn solve_passive(e: &DMatrix<f64>, y: &DVector<f64>, passive: &[bool]) -> Result<DVector<f64>> {
    let cols: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let sub = e.select_columns(cols.iter());
    let qr = sub.qr();
    let qty = qr.q().transpose() * y;
    let r = qr.r();
    let z_sub = r
        .solve_upper_triangular(&qty)
        .ok_or(UnmixError::RankDeficient {
            rank: cols.len().saturating_sub(1),
            required: cols.len(),
        })?;
    let mut z = DVector::zeros(passive.len());
    for (k, &j) in cols.iter().enumerate() {
        z[j] = z_sub[k];
    }
    Ok(z)
}

/// Solution of one FCLS problem before and after snapping onto the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct FclsSolution {
    /// Raw active-set solution of the augmented problem.
    pub raw: DVector<f64>,
    /// Reported abundances (renormalized when `renormalized` is true).
    pub abundances: DVector<f64>,
    pub renormalized: bool,
}

/// Reusable solver for a fixed endmember matrix.
#[derive(Debug, Clone)]
pub struct FclsSolver {
    augmented: DMatrix<f64>,
    delta: f64,
    cfg: FclsConfig,
}

impl FclsSolver {
    pub fn new(a: &EndmemberMatrix, cfg: &FclsConfig) -> Result<Self> {
        cfg.validate()?;
        let a = a.data();
        let (l, p) = a.shape();
        if p > l {
            return Err(UnmixError::RankDeficient { rank: l, required: p });
        }
        let rank = numerical_rank(a, 1e-10);
        if rank < p {
            return Err(UnmixError::RankDeficient { rank, required: p });
        }
        let delta = cfg.resolve_delta(a);
        let augmented = a.clone().insert_row(l, delta);
        Ok(FclsSolver {
            augmented,
            delta,
            cfg: cfg.clone(),
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn augmented_matrix(&self) -> &DMatrix<f64> {
        &self.augmented
    }

    pub fn augmented_target(&self, x: &[f64]) -> DVector<f64> {
        let mut y = DVector::zeros(x.len() + 1);
        y.rows_mut(0, x.len()).copy_from_slice(x);
        y[x.len()] = self.delta;
        y
    }

    pub fn solve(&self, x: &[f64]) -> Result<FclsSolution> {
        let l = self.augmented.nrows() - 1;
        if x.len() != l {
            return Err(UnmixError::mismatch("fcls_pixel", (l, 1), (x.len(), 1)));
        }
        let y = self.augmented_target(x);
        let raw = nnls(&self.augmented, &y, self.cfg.max_active_set_iters, self.cfg.tol)?;
        let sum = raw.sum();
        let renormalized = sum > 0.0 && (sum - 1.0).abs() < RENORMALIZE_BELOW;
        let abundances = if renormalized { &raw / sum } else { raw.clone() };
        Ok(FclsSolution {
            raw,
            abundances,
            renormalized,
        })
    }
}

/// Abundances of one pixel spectrum.
pub fn fcls_pixel(a: &EndmemberMatrix, x: &[f64], cfg: &FclsConfig) -> Result<DVector<f64>> {
    Ok(FclsSolver::new(a, cfg)?.solve(x)?.abundances)
}

/// Abundances of every pixel of `x`. The result is flagged `asc_enforced`
/// only if every column was snapped onto the simplex.
pub fn fcls_image(a: &EndmemberMatrix, x: &ObservationMatrix, cfg: &FclsConfig) -> Result<AbundanceMatrix> {
    fcls_matrix(a, x.data(), cfg)
}

pub(crate) fn fcls_matrix(a: &EndmemberMatrix, x: &DMatrix<f64>, cfg: &FclsConfig) -> Result<AbundanceMatrix> {
    if a.band_count() != x.nrows() {
        return Err(UnmixError::mismatch("fcls_image", a.data().shape(), x.shape()));
    }
    let solver = FclsSolver::new(a, cfg)?;
    let p = a.endmember_count();
    let mut s = DMatrix::zeros(p, x.ncols());
    let mut all_snapped = true;
    for (j, col) in x.column_iter().enumerate() {
        let sol = solver
            .solve(col.as_slice())
            .map_err(|e| UnmixError::Pixel {
                pixel: j,
                source: Box::new(e),
            })?;
        all_snapped &= sol.renormalized;
        s.set_column(j, &sol.abundances);
    }
    AbundanceMatrix::new(s, all_snapped)
}

/// KKT residuals of the augmented problem at `s`: the largest violation of
/// `g ≥ 0` on the zero set and of `g = 0` on the positive set, where
/// `g = Eᵀ(E·s − y)` is the half-gradient.
pub fn kkt_residual(e: &DMatrix<f64>, y: &DVector<f64>, s: &DVector<f64>) -> f64 {
    let g = e.transpose() * (e * s - y);
    s.iter()
        .zip(g.iter())
        .map(|(&sv, &gv)| if sv > 0.0 { gv.abs() } else { (-gv).max(0.0) })
        .fold(0.0, f64::max)
}
