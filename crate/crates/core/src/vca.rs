//! Vertex component analysis.
//!
//! Projects the data onto a P-dimensional signal subspace and repeatedly
//! picks the pixel with the largest excursion along a random direction
//! orthogonal to the endmembers found so far. The selected endmembers are
//! columns of the input, so the method assumes pure pixels are present.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Result, UnmixError};
use crate::fcls::{fcls_image, FclsConfig};
use crate::model::{AbundanceMatrix, EndmemberMatrix, ObservationMatrix};
use crate::nmf::floor_at;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// Mean-removed subspace of dimension P−1 (low SNR).
    Affine,
    /// Subspace of dimension P through the origin with perspective scaling.
    Projective,
}

#[derive(Debug, Clone)]
pub struct VcaResult {
    pub endmembers: EndmemberMatrix,
    pub pixel_indices: Vec<usize>,
    pub projection_rank: usize,
    pub projection: Projection,
    pub estimated_snr_db: f64,
}

/// Eigenvectors of a symmetric matrix for its `k` largest eigenvalues,
/// ordered by decreasing eigenvalue, plus all eigenvalues sorted descending.
fn top_eigenvectors(m: DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let vecs = eig.eigenvectors.select_columns(order[..k].iter());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (vecs, vals)
}

/// SNR threshold (dB) above which the projective branch is used.
pub fn snr_threshold_db(p: usize) -> f64 {
    15.0 + 10.0 * (p as f64).log10()
}

/// Index of the largest `|v_j|`, lowest index on ties.
fn argmax_abs<'a>(v: impl IntoIterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, &x) in v.into_iter().enumerate() {
        if x.abs() > best_val {
            best_val = x.abs();
            best = j;
        }
    }
    best
}

pub fn vca(x: &ObservationMatrix, p: usize, seed: u64) -> Result<VcaResult> {
    let data = x.data();
    let (l, n) = data.shape();
    if p == 0 || p > l.min(n) {
        return Err(UnmixError::InvalidInput(format!(
            "endmember count {p} must be in 1..={}",
            l.min(n)
        )));
    }
    let nf = n as f64;
    let mean = data.column_mean();
    let mut centered = data.clone();
    for mut c in centered.column_iter_mut() {
        c -= &mean;
    }
    let cov = &centered * centered.transpose() / nf;
    let corr = data * data.transpose() / nf;
    if cov.amax() <= 1e-24 * corr.amax() {
        return Err(UnmixError::InvalidInput("observation matrix is constant".into()));
    }

    let (u_corr, corr_vals) = top_eigenvectors(corr, p);
    let top = corr_vals[0].max(0.0);
    let rank = corr_vals.iter().filter(|&&v| v > 1e-10 * top).count();
    if rank < p {
        return Err(UnmixError::RankDeficient { rank, required: p });
    }

    if p == 1 {
        let (u, _) = top_eigenvectors(cov, 1);
        let scores = u.transpose() * &centered;
        let idx = argmax_abs(scores.iter());
        return finish(data, vec![idx], 1, Projection::Affine, f64::NAN);
    }

    let (u_affine, _) = top_eigenvectors(cov, p);
    let x_p = u_affine.transpose() * &centered;
    let p_y = data.norm_squared() / nf;
    let p_x = x_p.norm_squared() / nf + mean.norm_squared();
    let signal = p_x - (p as f64 / l as f64) * p_y;
    let snr = if p_y - p_x <= 0.0 {
        f64::INFINITY
    } else if signal <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * (signal / (p_y - p_x)).log10()
    };

    let (y, projection, d) = if snr < snr_threshold_db(p) {
        let d = p - 1;
        let xs = x_p.rows(0, d).into_owned();
        let c = xs
            .column_iter()
            .map(|col| col.norm())
            .fold(0.0, f64::max);
        let mut y = DMatrix::from_element(p, n, c);
        y.rows_mut(0, d).copy_from(&xs);
        (y, Projection::Affine, d)
    } else {
        let xp = u_corr.transpose() * data;
        let u_mean = xp.column_mean();
        let mut y = xp.clone();
        for (j, mut col) in y.column_iter_mut().enumerate() {
            let denom = xp.column(j).dot(&u_mean);
            if denom.abs() > f64::MIN_POSITIVE {
                col /= denom;
            } else {
                col.fill(0.0);
            }
        }
        (y, Projection::Projective, p)
    };

    let mut rng = rng_from(seed);
    let mut basis = DMatrix::<f64>::zeros(p, p);
    basis[(p - 1, 0)] = 1.0;
    let mut indices = Vec::with_capacity(p);
    for i in 0..p {
        let w = DVector::from_fn(p, |_, _| rng.random::<f64>());
        let pinv = basis
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| UnmixError::InvalidInput(e.to_string()))?;
        let mut f = &w - &basis * (pinv * &w);
        let fn_ = f.norm();
        if fn_ > 0.0 {
            f /= fn_;
        }
        let v = f.transpose() * &y;
        let idx = argmax_abs(v.iter());
        basis.set_column(i, &y.column(idx));
        indices.push(idx);
    }
    finish(data, indices, d, projection, snr)
}

fn finish(
    data: &DMatrix<f64>,
    pixel_indices: Vec<usize>,
    projection_rank: usize,
    projection: Projection,
    estimated_snr_db: f64,
) -> Result<VcaResult> {
    let mut seen = pixel_indices.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != pixel_indices.len() {
        return Err(UnmixError::RankDeficient {
            rank: seen.len(),
            required: pixel_indices.len(),
        });
    }
    let endmembers = EndmemberMatrix::new(data.select_columns(pixel_indices.iter()))?;
    Ok(VcaResult {
        endmembers,
        pixel_indices,
        projection_rank,
        projection,
        estimated_snr_db,
    })
}

/// Strictly positive starting factors for the NMF cascade: VCA endmembers
/// and their FCLS abundances, both floored at `epsilon_floor`.
pub fn init_from_vca(
    x: &ObservationMatrix,
    p: usize,
    seed: u64,
    epsilon_floor: f64,
    fcls: &FclsConfig,
) -> Result<(EndmemberMatrix, AbundanceMatrix)> {
    let res = vca(x, p, seed)?;
    let a0 = EndmemberMatrix::new(floor_at(res.endmembers.data(), epsilon_floor))?;
    let s = fcls_image(&a0, x, fcls)?;
    let asc = s.asc_enforced();
    let s0 = AbundanceMatrix::new(floor_at(s.data(), epsilon_floor), asc)?;
    Ok((a0, s0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmf::{cost, SparsityWeights};
    use crate::rng::rng_from;

    fn simplex_scene(l: usize, p: usize, interior: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = rng_from(seed);
        let a = DMatrix::from_fn(l, p, |_, _| rng.random::<f64>() * 0.9 + 0.05);
        let mut s = DMatrix::zeros(p, p + interior);
        for k in 0..p {
            s[(k, k)] = 1.0;
        }
        for j in p..p + interior {
            let mut col: Vec<f64> = (0..p).map(|_| rng.random::<f64>() + 0.1).collect();
            let t: f64 = col.iter().sum();
            col.iter_mut().for_each(|v| *v /= t);
            for k in 0..p {
                s[(k, j)] = col[k];
            }
        }
        (a, s)
    }

    #[test]
    fn recovers_simplex_vertices() {
        let (a, s) = simplex_scene(30, 4, 60, 1);
        let x = ObservationMatrix::new(&a * &s).unwrap();
        let res = vca(&x, 4, 7).unwrap();
        let mut idx = res.pixel_indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        for (k, &j) in res.pixel_indices.iter().enumerate() {
            assert_eq!(res.endmembers.data().column(k), x.data().column(j));
        }
    }

    #[test]
    fn single_endmember_is_largest_centered_projection() {
        let (a, s) = simplex_scene(10, 3, 30, 2);
        let data = &a * &s;
        let x = ObservationMatrix::new(data.clone()).unwrap();
        let res = vca(&x, 1, 0).unwrap();
        // Oracle: power iteration on the centered covariance.
        let mean = data.column_mean();
        let mut c = data.clone();
        for mut col in c.column_iter_mut() {
            col -= &mean;
        }
        let cov = &c * c.transpose();
        let mut v = DVector::from_element(10, 1.0);
        for _ in 0..2000 {
            v = &cov * &v;
            v /= v.norm();
        }
        let scores = v.transpose() * &c;
        let want = scores.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
        assert_eq!(res.pixel_indices, vec![want]);
    }

    #[test]
    fn rejects_excess_endmembers() {
        let (a, s) = simplex_scene(20, 2, 30, 3);
        let x = ObservationMatrix::new(&a * &s).unwrap();
        assert!(matches!(vca(&x, 3, 0), Err(UnmixError::RankDeficient { .. })));
        assert!(vca(&x, 0, 0).is_err());
        assert!(vca(&x, 21, 0).is_err());
    }

    #[test]
    fn rejects_constant_data() {
        let x = ObservationMatrix::new(DMatrix::from_element(5, 10, 0.3)).unwrap();
        assert!(vca(&x, 1, 0).is_err());
    }

    #[test]
    fn pixel_permutation_relabels_indices() {
        let (a, s) = simplex_scene(25, 3, 40, 4);
        let data = &a * &s;
        let n = data.ncols();
        let perm: Vec<usize> = (0..n).map(|j| (j * 7 + 3) % n).collect();
        let permuted = data.select_columns(perm.iter());
        let r1 = vca(&ObservationMatrix::new(data).unwrap(), 3, 11).unwrap();
        let r2 = vca(&ObservationMatrix::new(permuted).unwrap(), 3, 11).unwrap();
        let mapped: Vec<usize> = r2.pixel_indices.iter().map(|&j| perm[j]).collect();
        let mut a1 = r1.pixel_indices.clone();
        let mut a2 = mapped;
        a1.sort_unstable();
        a2.sort_unstable();
        assert_eq!(a1, a2);
    }

    #[test]
    fn vca_init_is_positive_and_exact_on_noiseless_data() {
        let (a, s) = simplex_scene(30, 3, 50, 5);
        let x = ObservationMatrix::new(&a * &s).unwrap();
        let (a0, s0) = init_from_vca(&x, 3, 1, 1e-9, &FclsConfig::default()).unwrap();
        assert!(a0.data().iter().chain(s0.data().iter()).all(|&v| v > 0.0));
        let c = cost(x.data(), a0.data(), s0.data(), &SparsityWeights::zero()).unwrap();
        assert!(c < 1e-6 * x.data().norm_squared(), "cost {c}");
        let (a1, _) = init_from_vca(&x, 3, 1, 1e-9, &FclsConfig::default()).unwrap();
        assert_eq!(a0, a1);
    }
}
