//! File formats and subcommands of the `unmix` tool.
//!
//! Every subcommand writes its artifacts into an output directory together
//! with a `manifest.toml` that can be replayed with [`replay`].

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub mod cube;
pub mod error;
pub mod eval;
pub mod io;
pub mod manifest;
pub mod sweep;
pub mod synth;
pub mod unmix;

pub use error::{CliError, Result};

/// Environment variable holding the log filter (`error`, `info`, `debug`...).
pub const LOG_ENV: &str = "UNMIX_LOG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vca,
    L12nmf,
    Mlnmf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Vca, Method::L12nmf, Method::Mlnmf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vca => "vca",
            Method::L12nmf => "l12nmf",
            Method::Mlnmf => "mlnmf",
        }
    }

    /// Label used in summary tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Method::Vca => "VCA",
            Method::L12nmf => "L1/2-NMF",
            Method::Mlnmf => "MLNMF",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CliError::Usage(format!("unknown method {s:?} (expected vca, l12nmf or mlnmf)")))
    }
}

/// Reruns the command recorded in a manifest, writing into `out`. Inputs
/// must still match their recorded digests.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<manifest::Manifest> {
    let m = manifest::Manifest::read(manifest_path)?;
    m.verify_inputs()?;
    let missing = |what: &str| CliError::Usage(format!("{} manifest lacks its [{what}] table", m.command));
    match m.command.as_str() {
        "synth" => {
            let rec = m.synth.as_ref().ok_or_else(|| missing("synth"))?;
            let library = m.input("library")?.library_path();
            synth::run_synth(&rec.scene, library.as_deref(), out)
        }
        "unmix" => {
            let rec = m.unmix.as_ref().ok_or_else(|| missing("unmix"))?;
            let cube = Path::new(&m.input("cube")?.path).to_path_buf();
            unmix::run_unmix(&cube, rec.endmembers, rec.method, &rec.config, out)
        }
        "eval" => {
            let rec = m.eval.as_ref().ok_or_else(|| missing("eval"))?;
            eval::run_eval(&eval::EvalRequest::from_record(rec), out).map(|(manifest, _)| manifest)
        }
        "sweep" => {
            let rec = m.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
            let library = m.input("library")?.library_path();
            let plan = sweep::SweepPlan::from_record(rec, library);
            sweep::run_sweep_command(&plan, out).map(|(manifest, _)| manifest)
        }
        other => Err(CliError::Usage(format!("unknown command {other:?} in manifest"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("sisal".parse::<Method>().is_err());
    }
}
