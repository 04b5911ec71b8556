//! Sparse NMF objective and the multiplicative update engine used inside
//! every layer of the cascade.
//!
//! The per-layer objective is
//!
//! ```text
//! ‖X − A·S‖²_F + α·‖A‖_{1/2} + λ·‖S‖_{1/2}        (‖M‖_{1/2} = Σ √M_ij)
//! ```
//!
//! optionally augmented with `δ²·‖1ᵀS − 1ᵀ‖²` when sum-to-one pressure is
//! enabled. Each update is the exact minimizer of the usual separable
//! majorizer (Lee–Seung quadratic bound plus the tangent line of the concave
//! square root), so the objective never increases.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsityWeights {
    /// Weight on the endmember half-norm.
    pub alpha: f64,
    /// Weight on the abundance half-norm.
    pub lambda: f64,
}

impl SparsityWeights {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        let w = SparsityWeights { alpha, lambda };
        w.validate()?;
        Ok(w)
    }

    pub fn zero() -> Self {
        SparsityWeights {
            alpha: 0.0,
            lambda: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(UnmixError::InvalidInput(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerFitConfig {
    pub max_iters: usize,
    /// Relative cost decrease over [`CONVERGENCE_WINDOW`] iterations below
    /// which the fit stops.
    pub rel_tol: f64,
    pub epsilon_floor: f64,
    /// Weight of the constant row appended to `X` and `A` during the `S`
    /// update. `None` disables sum-to-one pressure; serialized as `0`.
    #[serde(with = "zero_is_off")]
    pub asc_delta: Option<f64>,
    pub seed: u64,
}

/// Config formats without a null (TOML) cannot express `None` for a field
/// whose default is `Some`, so "off" is written as `0`.
mod zero_is_off {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(v.unwrap_or(0.0))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v = f64::deserialize(d)?;
        Ok((v != 0.0).then_some(v))
    }
}

impl Default for LayerFitConfig {
    fn default() -> Self {
        LayerFitConfig {
            max_iters: 300,
            rel_tol: 1e-6,
            epsilon_floor: 1e-9,
            asc_delta: Some(15.0),
            seed: 0,
        }
    }
}

impl LayerFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(UnmixError::InvalidInput("max_iters must be ≥ 1".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return Err(UnmixError::InvalidInput("rel_tol must be ≥ 0".into()));
        }
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor.is_finite()) {
            return Err(UnmixError::InvalidInput("epsilon_floor must be > 0".into()));
        }
        if let Some(d) = self.asc_delta {
            if !(d > 0.0 && d.is_finite()) {
                return Err(UnmixError::InvalidInput("asc_delta must be > 0".into()));
            }
        }
        Ok(())
    }
}

pub const CONVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostTrace {
    /// `values[0]` is the cost at the (floored) initial point, `values[k]`
    /// the cost after the k-th A/S sweep.
    pub values: Vec<f64>,
    pub converged_at: Option<usize>,
}

impl CostTrace {
    pub fn last(&self) -> f64 {
        *self.values.last().unwrap_or(&f64::NAN)
    }

    /// Largest increase between consecutive entries (≤ 0 for a monotone trace).
    pub fn max_increase(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct LayerFit {
    pub a: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub trace: CostTrace,
}

/// `Σ √M_ij`.
pub fn half_norm(m: &DMatrix<f64>) -> Result<f64> {
    let mut acc = 0.0;
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if v < 0.0 || v.is_nan() {
                return Err(UnmixError::NegativeEntry {
                    row: r,
                    col: c,
                    value: v,
                });
            }
            acc += v.sqrt();
        }
    }
    Ok(acc)
}

fn check_shapes(op: &'static str, x: &DMatrix<f64>, a: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<()> {
    if a.ncols() != s.nrows() {
        return Err(UnmixError::mismatch(op, a.shape(), s.shape()));
    }
    if x.nrows() != a.nrows() || x.ncols() != s.ncols() {
        return Err(UnmixError::mismatch(op, x.shape(), (a.nrows(), s.ncols())));
    }
    Ok(())
}

fn residual_sq(x: &DMatrix<f64>, a: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    let recon = a * s;
    x.iter()
        .zip(recon.iter())
        .map(|(xv, rv)| (xv - rv) * (xv - rv))
        .sum()
}

/// `‖X − A·S‖²_F + α·‖A‖_{1/2} + λ·‖S‖_{1/2}`.
pub fn cost(x: &DMatrix<f64>, a: &DMatrix<f64>, s: &DMatrix<f64>, w: &SparsityWeights) -> Result<f64> {
    check_shapes("cost", x, a, s)?;
    let mut c = residual_sq(x, a, s);
    // Skip the half-norms when unweighted so α = λ = 0 is bit-identical to
    // the plain Frobenius objective.
    if w.alpha != 0.0 {
        c += w.alpha * half_norm(a)?;
    }
    if w.lambda != 0.0 {
        c += w.lambda * half_norm(s)?;
    }
    Ok(c)
}

/// The objective minimized by [`fit_layer`]: [`cost`] plus the sum-to-one
/// penalty `δ²·Σ_j (1 − Σ_i S_ij)²` when `asc_delta` is set.
pub fn layer_objective(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    w: &SparsityWeights,
    asc_delta: Option<f64>,
) -> Result<f64> {
    let base = cost(x, a, s, w)?;
    Ok(match asc_delta {
        Some(d) => {
            let pen: f64 = s.column_iter().map(|c| (1.0 - c.sum()).powi(2)).sum();
            base + d * d * pen
        }
        None => base,
    })
}

pub fn floor_at(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
    m.map(|v| if v > eps { v } else { eps })
}

/// One multiplicative step on the endmember factor:
/// `A ∘ (X Sᵀ) ⊘ (A S Sᵀ + (α/4)·A^{-1/2})`.
pub fn update_a(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    alpha: f64,
    cfg: &LayerFitConfig,
) -> Result<DMatrix<f64>> {
    check_shapes("update_a", x, a, s)?;
    let eps = cfg.epsilon_floor;
    let a = floor_at(a, eps);
    let st = s.transpose();
    let numer = x * &st;
    let denom = &a * (s * &st);
    let coef = alpha / 4.0;
    Ok(DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
        let aij = a[(i, j)];
        let mut d = denom[(i, j)];
        if coef != 0.0 {
            d += coef / aij.sqrt();
        }
        (aij * numer[(i, j)] / d.max(eps)).max(eps)
    }))
}

/// One multiplicative step on the abundance factor:
/// `S ∘ (Aᵀ X) ⊘ (Aᵀ A S + (λ/4)·S^{-1/2})`, with `X` and `A` augmented by a
/// constant row `δ` when `cfg.asc_delta` is set.
pub fn update_s(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    s: &DMatrix<f64>,
    lambda: f64,
    cfg: &LayerFitConfig,
) -> Result<DMatrix<f64>> {
    check_shapes("update_s", x, a, s)?;
    let eps = cfg.epsilon_floor;
    let s = floor_at(s, eps);
    let at = a.transpose();
    let mut numer = &at * x;
    let mut gram = &at * a;
    if let Some(delta) = cfg.asc_delta {
        let d2 = delta * delta;
        numer.add_scalar_mut(d2);
        gram.add_scalar_mut(d2);
    }
    let denom = gram * &s;
    let coef = lambda / 4.0;
    Ok(DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| {
        let sij = s[(i, j)];
        let mut d = denom[(i, j)];
        if coef != 0.0 {
            d += coef / sij.sqrt();
        }
        (sij * numer[(i, j)] / d.max(eps)).max(eps)
    }))
}

/// Alternates [`update_a`] and [`update_s`] until `max_iters` sweeps or the
/// relative decrease over the last [`CONVERGENCE_WINDOW`] sweeps drops below
/// `rel_tol`. A fit that reaches (numerically) zero cost stops immediately.
pub fn fit_layer(
    x: &DMatrix<f64>,
    a0: &DMatrix<f64>,
    s0: &DMatrix<f64>,
    w: &SparsityWeights,
    cfg: &LayerFitConfig,
) -> Result<LayerFit> {
    w.validate()?;
    cfg.validate()?;
    check_shapes("fit_layer", x, a0, s0)?;
    let mut a = floor_at(a0, cfg.epsilon_floor);
    let mut s = floor_at(s0, cfg.epsilon_floor);

    let scale = x.norm_squared();
    let zero_cost = 1e-24 * scale.max(f64::MIN_POSITIVE);

    let mut trace = CostTrace::default();
    let c0 = layer_objective(x, &a, &s, w, cfg.asc_delta)?;
    if !c0.is_finite() {
        return Err(UnmixError::NonFiniteCost { iteration: 0 });
    }
    trace.values.push(c0);

    for k in 1..=cfg.max_iters {
        a = update_a(x, &a, &s, w.alpha, cfg)?;
        s = update_s(x, &a, &s, w.lambda, cfg)?;
        let c = layer_objective(x, &a, &s, w, cfg.asc_delta)?;
        if !c.is_finite() {
            return Err(UnmixError::NonFiniteCost { iteration: k });
        }
        trace.values.push(c);
        if c <= zero_cost {
            trace.converged_at = Some(k);
            break;
        }
        if k >= CONVERGENCE_WINDOW {
            let prev = trace.values[k - CONVERGENCE_WINDOW];
            if (prev - c) / prev < cfg.rel_tol {
                trace.converged_at = Some(k);
                break;
            }
        }
    }
    Ok(LayerFit { a, s, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    fn rand_pos(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() + 0.05)
    }

    fn no_asc() -> LayerFitConfig {
        LayerFitConfig {
            asc_delta: None,
            ..LayerFitConfig::default()
        }
    }

    // Textbook Euclidean multiplicative rules, written with explicit loops.
    fn lee_seung_a(x: &DMatrix<f64>, a: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
        let (l, p, n) = (a.nrows(), a.ncols(), s.ncols());
        let mut out = a.clone();
        for i in 0..l {
            for k in 0..p {
                let mut num = 0.0;
                let mut den = 0.0;
                for j in 0..n {
                    num += x[(i, j)] * s[(k, j)];
                    let mut as_ij = 0.0;
                    for q in 0..p {
                        as_ij += a[(i, q)] * s[(q, j)];
                    }
                    den += as_ij * s[(k, j)];
                }
                out[(i, k)] = a[(i, k)] * num / den;
            }
        }
        out
    }

    fn lee_seung_s(x: &DMatrix<f64>, a: &DMatrix<f64>, s: &DMatrix<f64>) -> DMatrix<f64> {
        let (l, p, n) = (a.nrows(), a.ncols(), s.ncols());
        let mut out = s.clone();
        for k in 0..p {
            for j in 0..n {
                let mut num = 0.0;
                let mut den = 0.0;
                for i in 0..l {
                    num += a[(i, k)] * x[(i, j)];
                    let mut as_ij = 0.0;
                    for q in 0..p {
                        as_ij += a[(i, q)] * s[(q, j)];
                    }
                    den += a[(i, k)] * as_ij;
                }
                out[(k, j)] = s[(k, j)] * num / den;
            }
        }
        out
    }

    #[test]
    fn half_norm_small_cases() {
        assert_eq!(half_norm(&DMatrix::zeros(3, 2)).unwrap(), 0.0);
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 9.0, 0.0, 1.0]);
        assert_eq!(half_norm(&m).unwrap(), 6.0);
        assert!(half_norm(&DMatrix::from_element(1, 1, -0.5)).is_err());
    }

    #[test]
    fn half_norm_matches_loop() {
        let mut rng = rng_from(5);
        let m = DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>());
        let mut oracle = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                oracle += m[(i, j)].sqrt();
            }
        }
        assert!((half_norm(&m).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn cost_scalar_case() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let x = DMatrix::from_element(1, 1, 2.0);
        let c = cost(&x, &one, &one, &SparsityWeights::new(1.0, 4.0).unwrap()).unwrap();
        assert_eq!(c, 6.0);
    }

    #[test]
    fn cost_zero_at_exact_factorization() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let s = DMatrix::from_row_slice(2, 3, &[0.2, 0.5, 1.0, 0.8, 0.5, 0.0]);
        let x = &a * &s;
        assert_eq!(cost(&x, &a, &s, &SparsityWeights::zero()).unwrap(), 0.0);
    }

    #[test]
    fn cost_matches_compositional_oracle() {
        let a = rand_pos(4, 3, 1);
        let s = rand_pos(3, 6, 2);
        let x = rand_pos(4, 6, 3);
        let w = SparsityWeights::new(0.3, 0.7).unwrap();
        let mut fro = 0.0;
        for i in 0..4 {
            for j in 0..6 {
                let mut r = x[(i, j)];
                for k in 0..3 {
                    r -= a[(i, k)] * s[(k, j)];
                }
                fro += r * r;
            }
        }
        let hn = |m: &DMatrix<f64>| m.iter().map(|v| v.sqrt()).sum::<f64>();
        let oracle = fro + 0.3 * hn(&a) + 0.7 * hn(&s);
        assert!((cost(&x, &a, &s, &w).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn cost_special_cases_and_scaling() {
        let a = rand_pos(5, 2, 11);
        let s = rand_pos(2, 8, 12);
        let x = rand_pos(5, 8, 13);
        let plain = cost(&x, &a, &s, &SparsityWeights::zero()).unwrap();
        let fro = (&x - &a * &s).norm_squared();
        assert!((plain - fro).abs() < 1e-12);
        let sparse_s = cost(&x, &a, &s, &SparsityWeights::new(0.0, 0.5).unwrap()).unwrap();
        assert!((sparse_s - (fro + 0.5 * half_norm(&s).unwrap())).abs() < 1e-12);
        let scaled = cost(&(&x * 3.0), &(&a * 3.0), &s, &SparsityWeights::zero()).unwrap();
        assert!((scaled - 9.0 * plain).abs() < 1e-10 * scaled);
    }

    #[test]
    fn cost_rejects_bad_shapes() {
        let a = rand_pos(4, 3, 1);
        let s = rand_pos(2, 6, 2);
        let x = rand_pos(4, 6, 3);
        assert!(matches!(
            cost(&x, &a, &s, &SparsityWeights::zero()),
            Err(UnmixError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn exact_factorization_is_fixed_point() {
        let a = rand_pos(6, 2, 21);
        let s = rand_pos(2, 9, 22);
        let x = &a * &s;
        let cfg = no_asc();
        let a1 = update_a(&x, &a, &s, 0.0, &cfg).unwrap();
        assert!((&a1 - &a).amax() < 1e-10);
        let s1 = update_s(&x, &a, &s, 0.0, &cfg).unwrap();
        assert!((&s1 - &s).amax() < 1e-10);
    }

    #[test]
    fn unregularized_updates_match_lee_seung() {
        let a = rand_pos(7, 3, 31);
        let s = rand_pos(3, 11, 32);
        let x = rand_pos(7, 11, 33);
        let cfg = no_asc();
        let got_a = update_a(&x, &a, &s, 0.0, &cfg).unwrap();
        assert!((&got_a - lee_seung_a(&x, &a, &s)).amax() < 1e-10);
        let got_s = update_s(&x, &a, &s, 0.0, &cfg).unwrap();
        assert!((&got_s - lee_seung_s(&x, &a, &s)).amax() < 1e-10);
    }

    #[test]
    fn sparse_updates_do_not_increase_cost() {
        let a = rand_pos(3, 2, 41);
        let s = rand_pos(2, 5, 42);
        let x = rand_pos(3, 5, 43);
        let cfg = no_asc();
        let w = SparsityWeights::new(0.1, 0.1).unwrap();
        let before = cost(&x, &a, &s, &w).unwrap();
        let a1 = update_a(&x, &a, &s, 0.1, &cfg).unwrap();
        let mid = cost(&x, &a1, &s, &w).unwrap();
        assert!(mid <= before + 1e-9);
        let s1 = update_s(&x, &a1, &s, 0.1, &cfg).unwrap();
        assert!(cost(&x, &a1, &s1, &w).unwrap() <= mid + 1e-9);
    }

    #[test]
    fn updates_stay_nonnegative_with_zero_inputs() {
        let mut a = rand_pos(4, 3, 51);
        a[(0, 0)] = 0.0;
        let mut x = rand_pos(4, 6, 52);
        x.row_mut(1).fill(0.0);
        let s = rand_pos(3, 6, 53);
        let cfg = LayerFitConfig::default();
        let a1 = update_a(&x, &a, &s, 1.0, &cfg).unwrap();
        let s1 = update_s(&x, &a1, &s, 1.0, &cfg).unwrap();
        assert!(a1.iter().chain(s1.iter()).all(|&v| v >= cfg.epsilon_floor && v.is_finite()));
    }

    #[test]
    fn fit_from_optimum_converges_immediately() {
        let a = rand_pos(5, 2, 61);
        let s = rand_pos(2, 7, 62);
        let x = &a * &s;
        let fit = fit_layer(&x, &a, &s, &SparsityWeights::zero(), &no_asc()).unwrap();
        assert_eq!(fit.trace.converged_at, Some(1));
        assert!(fit.trace.last() < 1e-10);
    }

    #[test]
    fn fit_recovers_rank_two_matrix() {
        let x = &rand_pos(20, 2, 71) * &rand_pos(2, 50, 72);
        let cfg = LayerFitConfig {
            max_iters: 500,
            rel_tol: 1e-12,
            ..no_asc()
        };
        let fit = fit_layer(&x, &rand_pos(20, 2, 73), &rand_pos(2, 50, 74), &SparsityWeights::zero(), &cfg)
            .unwrap();
        let rel = (&x - &fit.a * &fit.s).norm() / x.norm();
        assert!(rel < 1e-3, "relative error {rel}");
        assert!(fit.trace.max_increase() <= 1e-9);
    }

    #[test]
    fn fit_is_deterministic() {
        let x = rand_pos(8, 30, 81);
        let a0 = rand_pos(8, 3, 82);
        let s0 = rand_pos(3, 30, 83);
        let w = SparsityWeights::new(0.1, 0.2).unwrap();
        let cfg = LayerFitConfig::default();
        let f1 = fit_layer(&x, &a0, &s0, &w, &cfg).unwrap();
        let f2 = fit_layer(&x, &a0, &s0, &w, &cfg).unwrap();
        let bits = |t: &CostTrace| t.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&f1.trace), bits(&f2.trace));
        assert_eq!(f1.a, f2.a);
    }

    #[test]
    fn fit_rejects_invalid_config() {
        let x = rand_pos(3, 3, 1);
        let bad = LayerFitConfig {
            max_iters: 0,
            ..LayerFitConfig::default()
        };
        assert!(fit_layer(&x, &x, &x, &SparsityWeights::zero(), &bad).is_err());
        assert!(SparsityWeights::new(-1.0, 0.0).is_err());
    }
}
