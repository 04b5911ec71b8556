use wasm_bindgen::prelude::*;

use crate::session::{Method, SceneParams, Session};

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, JsError> {
    serde_json::to_string(value).map_err(|e| JsError::new(&e.to_string()))
}

/// JavaScript handle on a [`Session`]. Every method returns a JSON string.
#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo {
            session: Session::new(),
        }
    }

    /// Pass `Infinity` as `snr_db` for a noiseless scene.
    pub fn synthesize(&mut self, size: usize, endmembers: usize, snr_db: f64, seed: u32) -> Result<String, JsError> {
        let params = SceneParams {
            size,
            endmembers,
            snr_db,
            seed: u64::from(seed),
        };
        let view = self.session.synthesize(&params).map_err(|e| JsError::new(&e))?;
        to_json(&view)
    }

    pub fn unmix(&self, method: &str, layers: usize) -> Result<String, JsError> {
        let method = Method::parse(method).map_err(|e| JsError::new(&e))?;
        let view = self.session.unmix(method, layers).map_err(|e| JsError::new(&e))?;
        to_json(&view)
    }

    pub fn compare(&self, layers: usize) -> Result<String, JsError> {
        let scores = self.session.compare(layers).map_err(|e| JsError::new(&e))?;
        to_json(&scores)
    }
}

impl Default for Demo {
    fn default() -> Self {
        Demo::new()
    }
}
