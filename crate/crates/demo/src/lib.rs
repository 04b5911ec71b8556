//! Browser demo of the unmixing pipeline.
//!
//! [`Session`] holds all the logic and is ordinary Rust, so it is tested
//! natively. On `wasm32` a thin `Demo` wrapper exposes it to JavaScript and
//! exchanges JSON strings; the page lives in `www/`.

mod session;

pub use session::{LayerSummary, Method, SceneParams, SceneView, Score, Session, UnmixView, SIZES};

#[cfg(target_arch = "wasm32")]
mod wasm;
