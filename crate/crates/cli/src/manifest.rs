//! Run manifests: the resolved configuration, seeds and input digests of a
//! command, written as `manifest.toml` next to its outputs. A manifest can
//! be replayed to regenerate the same outputs byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unmix_core::mlnmf::MlnmfConfig;
use unmix_core::nmf::SparsityWeights;
use unmix_core::synthgen::{SceneSpec, FIXTURE_LIBRARY_CSV};

use crate::error::{CliError, Result};
use crate::io::{sha256_file, sha256_hex};
use crate::Method;

pub const FILE_NAME: &str = "manifest.toml";
pub const TOOL: &str = "unmix";
/// Stands in for a library path when the bundled fixture is used.
pub const FIXTURE_LIBRARY: &str = "builtin:fixture";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

impl InputRecord {
    pub fn of_file(path: &Path) -> Result<Self> {
        Ok(InputRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        })
    }

    pub fn of_library(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::of_file(p),
            None => Ok(InputRecord {
                path: FIXTURE_LIBRARY.into(),
                sha256: sha256_hex(FIXTURE_LIBRARY_CSV.as_bytes()),
            }),
        }
    }

    pub fn verify(&self) -> Result<()> {
        let actual = if self.path == FIXTURE_LIBRARY {
            sha256_hex(FIXTURE_LIBRARY_CSV.as_bytes())
        } else {
            sha256_file(Path::new(&self.path))?
        };
        if actual != self.sha256 {
            return Err(CliError::DigestMismatch {
                path: PathBuf::from(&self.path),
                expected: self.sha256.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// `None` for the bundled fixture library.
    pub fn library_path(&self) -> Option<PathBuf> {
        (self.path != FIXTURE_LIBRARY).then(|| PathBuf::from(&self.path))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRecord {
    pub scene: SceneSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnmixRecord {
    pub method: Method,
    pub endmembers: usize,
    pub config: MlnmfConfig,
    /// Weights after data-driven resolution; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_weights: Option<SparsityWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub estimates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRecord {
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub master_seed: u64,
    pub timing: bool,
    /// Scene template; `snr_db` and `seed` are replaced per cell.
    pub scene: SceneSpec,
    pub config: MlnmfConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default)]
    pub inputs: BTreeMap<String, InputRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unmix: Option<UnmixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepRecord>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            synth: None,
            unmix: None,
            eval: None,
            sweep: None,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::file(FILE_NAME, e))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(FILE_NAME);
        fs::write(&path, self.to_toml()?).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(FILE_NAME) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| CliError::file(&path, e))?;
        if m.tool != TOOL {
            return Err(CliError::file(&path, format!("not an {TOOL} manifest (tool = {:?})", m.tool)));
        }
        Ok(m)
    }

    /// Checks every recorded input against its digest.
    pub fn verify_inputs(&self) -> Result<()> {
        self.inputs.values().try_for_each(InputRecord::verify)
    }

    pub fn input(&self, role: &str) -> Result<&InputRecord> {
        self.inputs
            .get(role)
            .ok_or_else(|| CliError::Usage(format!("manifest has no input {role:?}")))
    }
}

/// Parses a TOML file into `T`, reporting the file and position on error.
pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::file(path, e))
}
