//! Spectral and abundance angle distances and their RMS aggregates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};

/// Angle between two vectors, `arccos(uᵀv / (‖u‖‖v‖))`, in radians.
pub fn angle(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(UnmixError::mismatch("angle", (u.len(), 1), (v.len(), 1)));
    }
    // Rescale by the largest magnitude so tiny or huge inputs neither
    // underflow nor overflow.
    let su = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sv = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if su == 0.0 || sv == 0.0 || !su.is_finite() || !sv.is_finite() {
        return Err(UnmixError::InvalidInput(
            "angle needs nonzero finite vectors".into(),
        ));
    }
    let nu = u.iter().map(|a| (a / su).powi(2)).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| (b / sv).powi(2)).sum::<f64>().sqrt();
    // 2·atan2(‖û − v̂‖, ‖û + v̂‖) equals the arccos form but stays exact
    // near 0 and π, where arccos loses half the digits.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (a, b) = (a / su / nu, b / sv / nv);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// Spectral angle distance between a reference and an estimated signature.
pub fn sad(m: &[f64], m_hat: &[f64]) -> Result<f64> {
    angle(m, m_hat)
}

/// Abundance angle distance between two per-pixel abundance vectors.
pub fn aad(a: &[f64], a_hat: &[f64]) -> Result<f64> {
    angle(a, a_hat)
}

fn column(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let r = m.nrows();
    &m.as_slice()[j * r..(j + 1) * r]
}

/// `cost[(i, j)]` = SAD between reference column `i` and estimate column `j`.
pub fn sad_matrix(m_ref: &DMatrix<f64>, m_est: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m_ref.shape() != m_est.shape() {
        return Err(UnmixError::mismatch("sad_matrix", m_ref.shape(), m_est.shape()));
    }
    let p = m_ref.ncols();
    let mut cost = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            cost[(i, j)] = sad(column(m_ref, i), column(m_est, j))?;
        }
    }
    Ok(cost)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, O(n³)). Returns `row_to_col`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square matrix");
    // 1-based internal indexing; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        col_owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
    }
    row_to_col
}

/// Pairs estimated endmembers with references by minimizing total SAD.
///
/// Returns `perm` with `perm[est] = ref`.
pub fn match_endmembers(m_ref: &DMatrix<f64>, m_est: &DMatrix<f64>) -> Result<Vec<usize>> {
    let cost = sad_matrix(m_ref, m_est)?;
    let ref_to_est = min_cost_assignment(&cost);
    let mut perm = vec![0; ref_to_est.len()];
    for (r, &e) in ref_to_est.iter().enumerate() {
        perm[e] = r;
    }
    Ok(perm)
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// SAD of each reference endmember against its matched estimate, indexed by
/// reference column.
pub fn matched_sads(m_ref: &DMatrix<f64>, m_est: &DMatrix<f64>, perm: &[usize]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m_ref.ncols()];
    for (e, &r) in perm.iter().enumerate() {
        out[r] = sad(column(m_ref, r), column(m_est, e))?;
    }
    Ok(out)
}

/// `sqrt(mean(SAD²))` after optimal matching.
pub fn rms_sad(m_ref: &DMatrix<f64>, m_est: &DMatrix<f64>) -> Result<f64> {
    let perm = match_endmembers(m_ref, m_est)?;
    Ok(rms(&matched_sads(m_ref, m_est, &perm)?))
}

/// Reorders the rows of `s_est` so that row `perm[i]` of the result is row
/// `i` of the input.
pub fn align_rows(s_est: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(s_est.nrows(), s_est.ncols());
    for (e, &r) in perm.iter().enumerate() {
        out.set_row(r, &s_est.row(e));
    }
    out
}

fn check_permutation(perm: &[usize], p: usize) -> Result<()> {
    let mut seen = vec![false; p];
    if perm.len() != p {
        return Err(UnmixError::InvalidInput(format!(
            "permutation of length {} for {p} endmembers",
            perm.len()
        )));
    }
    for &r in perm {
        if r >= p || seen[r] {
            return Err(UnmixError::InvalidInput(format!("{perm:?} is not a permutation")));
        }
        seen[r] = true;
    }
    Ok(())
}

/// Per-pixel AADs between `s_ref` and the row-aligned `s_est`.
pub fn pixel_aads(s_ref: &DMatrix<f64>, s_est: &DMatrix<f64>, perm: &[usize]) -> Result<Vec<f64>> {
    if s_ref.shape() != s_est.shape() {
        return Err(UnmixError::mismatch("rms_aad", s_ref.shape(), s_est.shape()));
    }
    check_permutation(perm, s_ref.nrows())?;
    let aligned = align_rows(s_est, perm);
    (0..s_ref.ncols())
        .map(|j| {
            aad(column(s_ref, j), column(&aligned, j)).map_err(|e| UnmixError::Pixel {
                pixel: j,
                source: Box::new(e),
            })
        })
        .collect()
}

/// `sqrt(mean(AAD²))` over pixels after aligning rows with `perm`.
pub fn rms_aad(s_ref: &DMatrix<f64>, s_est: &DMatrix<f64>, perm: &[usize]) -> Result<f64> {
    Ok(rms(&pixel_aads(s_ref, s_est, perm)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSummary {
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `permutation[est] = ref`.
    pub permutation: Vec<usize>,
    /// Indexed by reference endmember.
    pub sad_per_endmember: Vec<f64>,
    pub rms_sad: f64,
    pub aad_per_pixel_summary: Option<AngleSummary>,
    pub rms_aad: Option<f64>,
}

/// Full comparison against references. Abundances are compared only when
/// both are given.
pub fn evaluate(
    m_ref: &DMatrix<f64>,
    m_est: &DMatrix<f64>,
    abundances: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
) -> Result<EvalReport> {
    let permutation = match_endmembers(m_ref, m_est)?;
    let sad_per_endmember = matched_sads(m_ref, m_est, &permutation)?;
    let rms_sad = rms(&sad_per_endmember);
    let (aad_per_pixel_summary, rms_aad) = match abundances {
        Some((s_ref, s_est)) => {
            let aads = pixel_aads(s_ref, s_est, &permutation)?;
            let summary = AngleSummary {
                mean: aads.iter().sum::<f64>() / aads.len() as f64,
                max: aads.iter().copied().fold(0.0, f64::max),
            };
            (Some(summary), Some(rms(&aads)))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        permutation,
        sad_per_endmember,
        rms_sad,
        aad_per_pixel_summary,
        rms_aad,
    })
}
