use serde::Serialize;
use unmix_core::fcls::fcls_image;
use unmix_core::metrics::{align_rows, evaluate};
use unmix_core::mlnmf::{unmix, MlnmfConfig};
use unmix_core::model::measure_snr_db;
use unmix_core::synthgen::{generate_scene, Scene, SceneSpec, SpectralLibrary};
use unmix_core::vca::vca;
use unmix_core::{AbundanceMatrix, DMatrix, EndmemberMatrix};

/// Image sides offered by the page. Each is a multiple of the 8-pixel block.
pub const SIZES: [usize; 4] = [16, 24, 32, 48];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vca,
    L12nmf,
    Mlnmf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Vca, Method::L12nmf, Method::Mlnmf];

    pub fn parse(s: &str) -> Result<Method, String> {
        match s {
            "vca" => Ok(Method::Vca),
            "l12nmf" => Ok(Method::L12nmf),
            "mlnmf" => Ok(Method::Mlnmf),
            _ => Err(format!("unknown method {s:?}")),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Vca => "VCA",
            Method::L12nmf => "L1/2-NMF",
            Method::Mlnmf => "MLNMF",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    /// Side of the square image.
    pub size: usize,
    pub endmembers: usize,
    /// `f64::INFINITY` for a noiseless scene.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            size: 32,
            endmembers: 4,
            snr_db: 30.0,
            seed: 0,
        }
    }
}

/// Per-endmember vectors are indexed `[endmember][band]` and maps
/// `[endmember][pixel]`, pixels row-major.
#[derive(Debug, Clone, Serialize)]
pub struct SceneView {
    pub rows: usize,
    pub cols: usize,
    pub wavelengths: Vec<f64>,
    pub names: Vec<String>,
    pub spectra: Vec<Vec<f64>>,
    pub maps: Vec<Vec<f64>>,
    /// Realized SNR; `None` when noiseless.
    pub measured_snr_db: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerSummary {
    pub iterations: usize,
    pub final_cost: f64,
}

/// Estimates reordered to match the true endmembers, so index `k` of every
/// vector refers to true endmember `k`.
#[derive(Debug, Clone, Serialize)]
pub struct UnmixView {
    pub method: Method,
    pub label: &'static str,
    pub spectra: Vec<Vec<f64>>,
    pub maps: Vec<Vec<f64>>,
    pub sad: Vec<f64>,
    pub rms_sad: f64,
    pub rms_aad: f64,
    pub layers: Vec<LayerSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Score {
    pub method: Method,
    pub label: &'static str,
    pub rms_sad: f64,
    pub rms_aad: f64,
}

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Holds the current scene between calls.
#[derive(Debug)]
pub struct Session {
    library: SpectralLibrary,
    scene: Option<(SceneParams, Scene)>,
}

impl Default for Session {
    fn default() -> Self {
        Session::new()
    }
}

impl Session {
    pub fn new() -> Self {
        Session {
            library: SpectralLibrary::fixture(),
            scene: None,
        }
    }

    pub fn scene(&self) -> Option<&Scene> {
        self.scene.as_ref().map(|(_, s)| s)
    }

    pub fn synthesize(&mut self, params: &SceneParams) -> Result<SceneView, String> {
        if !SIZES.contains(&params.size) {
            return Err(format!("image side must be one of {SIZES:?}"));
        }
        if params.endmembers < 2 || params.endmembers > self.library.len() {
            return Err(format!("endmember count must be in 2..={}", self.library.len()));
        }
        let spec = SceneSpec {
            endmember_names: self.library.names[..params.endmembers].to_vec(),
            rows: params.size,
            cols: params.size,
            snr_db: params.snr_db,
            seed: params.seed,
            ..SceneSpec::default()
        };
        let scene = generate_scene(&self.library, &spec).map_err(|e| e.to_string())?;
        let view = SceneView {
            rows: scene.rows,
            cols: scene.cols,
            wavelengths: self.library.wavelengths.clone().unwrap_or_else(|| {
                (0..self.library.band_count()).map(|b| b as f64).collect()
            }),
            names: spec.endmember_names.clone(),
            spectra: columns(scene.endmembers.data()),
            maps: rows(scene.abundances.data()),
            measured_snr_db: params
                .snr_db
                .is_finite()
                .then(|| measure_snr_db(scene.clean.data(), scene.observations.data())),
        };
        self.scene = Some((params.clone(), scene));
        Ok(view)
    }

    fn current(&self) -> Result<&(SceneParams, Scene), String> {
        self.scene.as_ref().ok_or_else(|| "synthesize a scene first".to_string())
    }

    /// Runs `method` on the current scene. `layers` applies to MLNMF only.
    pub fn unmix(&self, method: Method, layers: usize) -> Result<UnmixView, String> {
        let (params, scene) = self.current()?;
        let x = &scene.observations;
        let p = params.endmembers;
        let mut cfg = MlnmfConfig {
            layer_count: layers,
            ..MlnmfConfig::default()
        };
        cfg.layer_fit.seed = params.seed;
        cfg.validate().map_err(|e| e.to_string())?;
        let (a, s, traces): (EndmemberMatrix, AbundanceMatrix, _) = match method {
            Method::Vca => {
                let v = vca(x, p, params.seed).map_err(|e| e.to_string())?;
                let s = fcls_image(&v.endmembers, x, &cfg.fcls).map_err(|e| e.to_string())?;
                (v.endmembers, s, Vec::new())
            }
            Method::L12nmf | Method::Mlnmf => {
                let cfg = if method == Method::L12nmf { cfg.single_layer(x) } else { cfg };
                let res = unmix(x, p, &cfg).map_err(|e| e.to_string())?;
                (res.endmembers, res.abundances, res.traces)
            }
        };
        let report = evaluate(
            scene.endmembers.data(),
            a.data(),
            Some((scene.abundances.data(), s.data())),
        )
        .map_err(|e| e.to_string())?;
        // permutation[est] = ref; move estimate column e to slot ref.
        let perm = &report.permutation;
        let mut aligned = a.data().clone();
        for (e, &r) in perm.iter().enumerate() {
            aligned.set_column(r, &a.data().column(e));
        }
        Ok(UnmixView {
            method,
            label: method.label(),
            spectra: columns(&aligned),
            maps: rows(&align_rows(s.data(), perm)),
            sad: report.sad_per_endmember,
            rms_sad: report.rms_sad,
            rms_aad: report.rms_aad.unwrap_or(f64::NAN),
            layers: traces
                .iter()
                .map(|t| LayerSummary {
                    iterations: t.values.len().saturating_sub(1),
                    final_cost: t.last(),
                })
                .collect(),
        })
    }

    /// Scores every method on the current scene.
    pub fn compare(&self, layers: usize) -> Result<Vec<Score>, String> {
        Method::ALL
            .iter()
            .map(|&m| {
                self.unmix(m, layers).map(|v| Score {
                    method: m,
                    label: v.label,
                    rms_sad: v.rms_sad,
                    rms_aad: v.rms_aad,
                })
            })
            .collect()
    }
}
