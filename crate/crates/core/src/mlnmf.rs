//! Multilayer sparse NMF.
//!
//! Layer 1 factorizes `X ≈ A₁S₁`; layer `l` factorizes `S_{l−1} ≈ A_l S_l`
//! with the same sparse objective. The endmembers are the product
//! `A₁A₂⋯A_L` and the abundances come from FCLS against that product.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UnmixError};
use crate::fcls::{fcls_image, FclsConfig};
use crate::model::{AbundanceMatrix, EndmemberMatrix, ObservationMatrix};
use crate::nmf::{fit_layer, floor_at, CostTrace, LayerFitConfig, SparsityWeights};
use crate::rng::{derive_seed, rng_from};
use crate::vca::init_from_vca;

/// Amplitude of the uniform perturbation added to the identity when
/// initializing layers after the first.
pub const LAYER_INIT_NOISE: f64 = 0.01;

/// Ratio of α to λ when both are estimated from the data.
pub const ALPHA_TO_LAMBDA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Vca,
    Random,
}

/// How the sparsity weights carry over to layers after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSchedule {
    /// The same (α, λ) at every layer.
    Constant,
    /// Layer `l` uses `(α, λ)·‖S_{l−1}‖²/‖X‖²`, keeping the penalty in
    /// proportion to the energy of the data that layer fits.
    EnergyScaled,
}

impl WeightSchedule {
    pub fn layer_weights(self, base: &SparsityWeights, layer_input: &DMatrix<f64>, x_energy: f64) -> SparsityWeights {
        match self {
            WeightSchedule::Constant => *base,
            WeightSchedule::EnergyScaled => {
                let r = if x_energy > 0.0 {
                    layer_input.norm_squared() / x_energy
                } else {
                    1.0
                };
                SparsityWeights {
                    alpha: base.alpha * r,
                    lambda: base.lambda * r,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlnmfConfig {
    pub layer_count: usize,
    /// `None` estimates λ from the data and sets α = 0.1·λ.
    pub weights: Option<SparsityWeights>,
    pub weight_schedule: WeightSchedule,
    pub layer_fit: LayerFitConfig,
    pub init_mode: InitMode,
    pub final_fcls: bool,
    pub fcls: FclsConfig,
}

impl Default for MlnmfConfig {
    fn default() -> Self {
        MlnmfConfig {
            layer_count: 3,
            weights: None,
            weight_schedule: WeightSchedule::EnergyScaled,
            layer_fit: LayerFitConfig::default(),
            init_mode: InitMode::Vca,
            final_fcls: true,
            fcls: FclsConfig::default(),
        }
    }
}

impl MlnmfConfig {
    /// Single-layer L1/2-NMF: one layer and no endmember sparsity.
    pub fn single_layer(&self, x: &ObservationMatrix) -> MlnmfConfig {
        let lambda = self
            .weights
            .map(|w| w.lambda)
            .unwrap_or_else(|| estimate_lambda(x.data()));
        MlnmfConfig {
            layer_count: 1,
            weights: Some(SparsityWeights { alpha: 0.0, lambda }),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 {
            return Err(UnmixError::InvalidInput("layer_count must be ≥ 1".into()));
        }
        if let Some(w) = &self.weights {
            w.validate()?;
        }
        self.layer_fit.validate()?;
        self.fcls.validate()
    }

    pub fn resolve_weights(&self, x: &DMatrix<f64>) -> SparsityWeights {
        self.weights.unwrap_or_else(|| {
            let lambda = estimate_lambda(x);
            SparsityWeights {
                alpha: ALPHA_TO_LAMBDA * lambda,
                lambda,
            }
        })
    }
}

/// Sparsity-based estimate of λ:
/// `(1/√L)·Σ_l (√N − ‖x_l‖₁/‖x_l‖₂)/(√N − 1)` over bands `x_l`.
pub fn estimate_lambda(x: &DMatrix<f64>) -> f64 {
    let (l, n) = x.shape();
    if n < 2 {
        return 0.0;
    }
    let sqrt_n = (n as f64).sqrt();
    let mut acc = 0.0;
    for row in x.row_iter() {
        let l2 = row.norm();
        if l2 == 0.0 {
            continue;
        }
        let l1: f64 = row.iter().map(|v| v.abs()).sum();
        acc += (sqrt_n - l1 / l2) / (sqrt_n - 1.0);
    }
    acc / (l as f64).sqrt()
}

#[derive(Debug, Clone)]
pub struct UnmixResult {
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
    pub layer_factors: Vec<DMatrix<f64>>,
    pub traces: Vec<CostTrace>,
    /// Weights actually used (after data-driven resolution).
    pub weights: SparsityWeights,
    /// Weights applied at each layer after the schedule.
    pub layer_weights: Vec<SparsityWeights>,
}

/// Left-to-right product of the layer bases.
pub fn collapse_layers(layer_factors: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let (first, rest) = layer_factors
        .split_first()
        .ok_or_else(|| UnmixError::InvalidInput("no layer factors to collapse".into()))?;
    let mut acc = first.clone();
    for f in rest {
        if acc.ncols() != f.nrows() {
            return Err(UnmixError::mismatch("collapse_layers", acc.shape(), f.shape()));
        }
        acc = &acc * f;
    }
    Ok(acc)
}

/// Uniform random positive factors, used when `init_mode = random`.
pub fn random_init(x: &DMatrix<f64>, p: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = rng_from(derive_seed(seed, 0));
    let scale = x.mean().max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(x.nrows(), p, |_, _| scale * (rng.random::<f64>() + 0.01));
    let mut s = DMatrix::from_fn(p, x.ncols(), |_, _| rng.random::<f64>() + 0.01);
    for mut c in s.column_iter_mut() {
        let t = c.sum();
        c /= t;
    }
    (a, s)
}

fn near_identity(p: usize, seed: u64, layer: usize) -> DMatrix<f64> {
    let mut rng = rng_from(derive_seed(seed, layer as u64));
    let mut m = DMatrix::from_fn(p, p, |_, _| LAYER_INIT_NOISE * rng.random::<f64>());
    for k in 0..p {
        m[(k, k)] += 1.0;
    }
    m
}

pub fn unmix(x: &ObservationMatrix, p: usize, cfg: &MlnmfConfig) -> Result<UnmixResult> {
    cfg.validate()?;
    let (l, n) = (x.band_count(), x.pixel_count());
    if p == 0 || p > l.min(n) {
        return Err(UnmixError::InvalidInput(format!(
            "endmember count {p} must be in 1..={}",
            l.min(n)
        )));
    }
    let weights = cfg.resolve_weights(x.data());
    let fit_cfg = &cfg.layer_fit;
    let seed = fit_cfg.seed;

    let (a0, s0) = match cfg.init_mode {
        InitMode::Vca => {
            let (a0, s0) = init_from_vca(x, p, seed, fit_cfg.epsilon_floor, &cfg.fcls)?;
            (a0.into_inner(), s0.into_inner())
        }
        InitMode::Random => random_init(x.data(), p, seed),
    };

    let mut layer_factors = Vec::with_capacity(cfg.layer_count);
    let mut traces = Vec::with_capacity(cfg.layer_count);
    let wrap = |layer: usize| move |e: UnmixError| UnmixError::Layer {
        layer,
        source: Box::new(e),
    };

    let x_energy = x.data().norm_squared();
    let mut layer_weights = vec![weights];
    let first = fit_layer(x.data(), &a0, &s0, &weights, fit_cfg).map_err(wrap(1))?;
    layer_factors.push(first.a);
    traces.push(first.trace);
    let mut s_prev = first.s;

    for layer in 2..=cfg.layer_count {
        let a_init = near_identity(p, seed, layer);
        let s_init = floor_at(&s_prev, fit_cfg.epsilon_floor);
        let lw = cfg.weight_schedule.layer_weights(&weights, &s_prev, x_energy);
        let fit = fit_layer(&s_prev, &a_init, &s_init, &lw, fit_cfg).map_err(wrap(layer))?;
        layer_weights.push(lw);
        layer_factors.push(fit.a);
        traces.push(fit.trace);
        s_prev = fit.s;
    }

    let endmembers = EndmemberMatrix::new(collapse_layers(&layer_factors)?)?;
    let abundances = if cfg.final_fcls {
        fcls_image(&endmembers, x, &cfg.fcls)?
    } else {
        AbundanceMatrix::new(s_prev, false)?
    };
    Ok(UnmixResult {
        endmembers,
        abundances,
        layer_factors,
        traces,
        weights,
        layer_weights,
    })
}
