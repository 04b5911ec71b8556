//! Hyperspectral unmixing under the linear mixing model.
//!
//! The crate decomposes an observation matrix `X` (bands × pixels) into
//! endmember signatures `A` and abundance fractions `S` with `X ≈ A·S`.
//! The main solver is a multilayer sparse NMF ([`mlnmf::unmix`]): each
//! layer factorizes the previous coefficient matrix with an L1/2-penalized
//! multiplicative update scheme, the layer bases are multiplied together,
//! and fully constrained least squares produces the final abundances.
//!
//! Baselines ([`vca`]), evaluation metrics ([`metrics`]) and a synthetic
//! scene generator ([`synthgen`]) are included so the whole pipeline can be
//! evaluated end to end.

pub mod error;
pub mod fcls;
pub mod metrics;
pub mod mlnmf;
pub mod model;
pub mod nmf;
pub mod rng;
pub mod synthgen;
pub mod vca;

pub use error::{Result, UnmixError};
pub use model::{AbundanceMatrix, EndmemberMatrix, NoiseSpec, ObservationMatrix};

/// Re-exported so downstream crates use the same matrix type.
pub use nalgebra::{DMatrix, DVector};
