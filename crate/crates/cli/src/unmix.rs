use std::path::Path;

use log::info;
use unmix_core::fcls::fcls_image;
use unmix_core::mlnmf::{unmix, MlnmfConfig};
use unmix_core::nmf::{CostTrace, SparsityWeights};
use unmix_core::vca::vca;
use unmix_core::{AbundanceMatrix, DMatrix, EndmemberMatrix, ObservationMatrix};

use crate::cube::{read_cube, write_cube};
use crate::error::{CliError, Result};
use crate::io::{column_names, create_dir, write_indices_csv, write_matrix_csv, write_traces_csv};
use crate::manifest::{read_toml, InputRecord, Manifest, UnmixRecord};
use crate::Method;

pub const ENDMEMBERS: &str = "endmembers.csv";
pub const ABUNDANCES: &str = "abundances";
pub const TRACES: &str = "traces.csv";
pub const PIXEL_INDICES: &str = "pixel_indices.csv";

/// Abundances below this are exported as exactly zero.
pub const EXPORT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub endmembers: EndmemberMatrix,
    pub abundances: AbundanceMatrix,
    /// Empty for VCA.
    pub layer_factors: Vec<DMatrix<f64>>,
    pub traces: Vec<CostTrace>,
    /// Input columns chosen as endmembers (VCA only).
    pub pixel_indices: Option<Vec<usize>>,
    pub weights: Option<SparsityWeights>,
}

/// Runs one method. The seed is `cfg.layer_fit.seed` for every method; VCA
/// abundances always come from FCLS.
pub fn solve(x: &ObservationMatrix, p: usize, method: Method, cfg: &MlnmfConfig) -> Result<MethodOutput> {
    let out = match method {
        Method::Vca => {
            cfg.fcls.validate()?;
            let res = vca(x, p, cfg.layer_fit.seed)?;
            let abundances = fcls_image(&res.endmembers, x, &cfg.fcls)?;
            MethodOutput {
                endmembers: res.endmembers,
                abundances,
                layer_factors: Vec::new(),
                traces: Vec::new(),
                pixel_indices: Some(res.pixel_indices),
                weights: None,
            }
        }
        Method::L12nmf | Method::Mlnmf => {
            let cfg = if method == Method::L12nmf {
                cfg.single_layer(x)
            } else {
                cfg.clone()
            };
            let res = unmix(x, p, &cfg)?;
            MethodOutput {
                endmembers: res.endmembers,
                abundances: res.abundances,
                layer_factors: res.layer_factors,
                traces: res.traces,
                pixel_indices: None,
                weights: Some(res.weights),
            }
        }
    };
    Ok(out)
}

pub fn load_config(path: Option<&Path>) -> Result<MlnmfConfig> {
    let cfg = match path {
        Some(p) => {
            let cfg: MlnmfConfig = read_toml(p)?;
            cfg.validate().map_err(|e| CliError::file(p, e))?;
            cfg
        }
        None => MlnmfConfig::default(),
    };
    Ok(cfg)
}

pub fn floor_for_export(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| if v < EXPORT_FLOOR { 0.0 } else { v })
}

pub fn layer_file(layer: usize) -> String {
    format!("layer_{layer:02}.csv")
}

pub fn run_unmix(cube: &Path, p: usize, method: Method, cfg: &MlnmfConfig, out: &Path) -> Result<Manifest> {
    let (header, data) = read_cube(cube)?;
    let x = ObservationMatrix::new(data).map_err(|e| CliError::file(cube, e))?;
    info!("unmixing {} bands × {} pixels with {method}, P = {p}", header.bands, header.pixels);
    let res = solve(&x, p, method, cfg)?;

    create_dir(out)?;
    let names = column_names("endmember", p);
    write_matrix_csv(&out.join(ENDMEMBERS), res.endmembers.data(), names.clone(), None)?;
    write_cube(out, ABUNDANCES, &floor_for_export(res.abundances.data()), header.grid())?;
    for (l, a) in res.layer_factors.iter().enumerate() {
        write_matrix_csv(&out.join(layer_file(l + 1)), a, names.clone(), None)?;
    }
    write_traces_csv(&out.join(TRACES), &res.traces)?;
    if let Some(idx) = &res.pixel_indices {
        write_indices_csv(&out.join(PIXEL_INDICES), "pixel", idx)?;
    }

    let mut manifest = Manifest::new("unmix");
    manifest.seeds.insert("solver".into(), cfg.layer_fit.seed);
    let header_file = crate::cube::header_path(cube);
    manifest
        .inputs
        .insert("cube".into(), InputRecord::of_file(&header_file)?);
    manifest.inputs.insert(
        "cube_payload".into(),
        InputRecord::of_file(&crate::cube::payload_path(&header_file)?)?,
    );
    manifest.unmix = Some(UnmixRecord {
        method,
        endmembers: p,
        config: cfg.clone(),
        resolved_weights: res.weights,
    });
    manifest.write(out)?;
    Ok(manifest)
}
