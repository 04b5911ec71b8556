use std::path::Path;

use unmix_core::synthgen::{generate_scene, Scene, SceneSpec, SpectralLibrary};

use crate::cube::write_cube;
use crate::error::{CliError, Result};
use crate::io::{create_dir, read_library_csv, write_matrix_csv};
use crate::manifest::{read_toml, InputRecord, Manifest, SynthRecord};

pub const OBSERVATIONS: &str = "X";
pub const TRUE_ABUNDANCES: &str = "S_true";
pub const TRUE_ENDMEMBERS: &str = "A_true.csv";

pub fn load_scene_spec(path: &Path) -> Result<SceneSpec> {
    let spec: SceneSpec = read_toml(path)?;
    spec.validate().map_err(|e| CliError::file(path, e))?;
    Ok(spec)
}

pub fn library(path: Option<&Path>) -> Result<SpectralLibrary> {
    match path {
        Some(p) => read_library_csv(p),
        None => Ok(SpectralLibrary::fixture()),
    }
}

/// Generates a scene and writes `X`, `A_true.csv`, `S_true` and the manifest.
pub fn run_synth(spec: &SceneSpec, library_path: Option<&Path>, out: &Path) -> Result<Manifest> {
    spec.validate()?;
    let lib = library(library_path)?;
    let scene = generate_scene(&lib, spec)?;
    create_dir(out)?;
    write_scene(&scene, &lib, spec, out)?;

    let mut manifest = Manifest::new("synth");
    manifest.seeds.insert("scene".into(), spec.seed);
    manifest
        .inputs
        .insert("library".into(), InputRecord::of_library(library_path)?);
    manifest.synth = Some(SynthRecord { scene: spec.clone() });
    manifest.write(out)?;
    Ok(manifest)
}

fn write_scene(scene: &Scene, lib: &SpectralLibrary, spec: &SceneSpec, out: &Path) -> Result<()> {
    let grid = Some((scene.rows, scene.cols));
    write_cube(out, OBSERVATIONS, scene.observations.data(), grid)?;
    write_cube(out, TRUE_ABUNDANCES, scene.abundances.data(), grid)?;
    write_matrix_csv(
        &out.join(TRUE_ENDMEMBERS),
        scene.endmembers.data(),
        spec.endmember_names.clone(),
        lib.wavelengths.clone(),
    )
}
