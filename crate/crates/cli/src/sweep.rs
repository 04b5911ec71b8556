//! SNR sweeps: for every (SNR, repeat) a fresh scene is generated and each
//! method is run on it and scored against the ground truth.
//!
//! All methods in a cell see the same scene. Seeds are derived from the
//! master seed so any row can be reproduced on its own from the CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unmix_core::metrics::evaluate;
use unmix_core::mlnmf::MlnmfConfig;
use unmix_core::rng::derive_seed;
use unmix_core::synthgen::{generate_scene, Scene, SceneSpec, SpectralLibrary};

use crate::error::{CliError, Result};
use crate::io::create_dir;
use crate::manifest::{InputRecord, Manifest, SweepRecord};
use crate::synth::library;
use crate::unmix::solve;
use crate::Method;

pub const RESULTS: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub scene: SceneSpec,
    pub library: Option<PathBuf>,
    pub snr_db: Vec<f64>,
    pub methods: Vec<Method>,
    pub repeats: usize,
    pub master_seed: u64,
    pub config: MlnmfConfig,
    /// When false the `seconds` column is written as 0.
    pub timing: bool,
}

impl SweepPlan {
    pub fn from_record(rec: &SweepRecord, library: Option<PathBuf>) -> Self {
        SweepPlan {
            scene: rec.scene.clone(),
            library,
            snr_db: rec.snr_db.clone(),
            methods: rec.methods.clone(),
            repeats: rec.repeats,
            master_seed: rec.master_seed,
            config: rec.config.clone(),
            timing: rec.timing,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(CliError::Usage("SNR list is empty".into()));
        }
        if self.methods.is_empty() {
            return Err(CliError::Usage("method list is empty".into()));
        }
        if self.repeats == 0 {
            return Err(CliError::Usage("repeats must be ≥ 1".into()));
        }
        if self.master_seed > MAX_SEED {
            return Err(CliError::Usage(format!("master seed must be ≤ {MAX_SEED}")));
        }
        for &snr in &self.snr_db {
            let spec = SceneSpec {
                snr_db: snr,
                ..self.scene.clone()
            };
            spec.validate()?;
        }
        self.config.validate()?;
        Ok(())
    }
}

/// Seeds stay below 2⁶³ so they fit signed 64-bit config integers.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Seed for one sweep cell. `method = None` gives the scene seed.
pub fn cell_seed(master: u64, snr_db: f64, method: Option<Method>, repeat: usize) -> u64 {
    let tag = method.map_or(0, |m| 1 + m as u64);
    let s = derive_seed(master, snr_db.to_bits());
    let s = derive_seed(s, tag);
    derive_seed(s, repeat as u64) >> 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub method: Method,
    pub repeat: usize,
    pub rms_sad: Option<f64>,
    pub rms_aad: Option<f64>,
    pub seconds: f64,
    pub scene_seed: u64,
    pub solver_seed: u64,
    /// Empty on success.
    pub error: String,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }
}

fn run_method(scene: &Scene, method: Method, cfg: &MlnmfConfig) -> Result<(f64, f64)> {
    let p = scene.endmembers.endmember_count();
    let res = solve(&scene.observations, p, method, cfg)?;
    let report = evaluate(
        scene.endmembers.data(),
        res.endmembers.data(),
        Some((scene.abundances.data(), res.abundances.data())),
    )?;
    Ok((report.rms_sad, report.rms_aad.unwrap_or(f64::NAN)))
}

fn run_cell(plan: &SweepPlan, lib: &SpectralLibrary, snr_db: f64, repeat: usize) -> Vec<SweepRow> {
    let scene_seed = cell_seed(plan.master_seed, snr_db, None, repeat);
    let spec = SceneSpec {
        snr_db,
        seed: scene_seed,
        ..plan.scene.clone()
    };
    let scene = generate_scene(lib, &spec).map_err(|e| format!("scene generation: {e}"));
    plan.methods
        .iter()
        .map(|&method| {
            let solver_seed = cell_seed(plan.master_seed, snr_db, Some(method), repeat);
            let mut cfg = plan.config.clone();
            cfg.layer_fit.seed = solver_seed;
            let start = Instant::now();
            let outcome = match &scene {
                Ok(scene) => run_method(scene, method, &cfg).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            let seconds = if plan.timing { start.elapsed().as_secs_f64() } else { 0.0 };
            let mut row = SweepRow {
                snr_db,
                method,
                repeat,
                rms_sad: None,
                rms_aad: None,
                seconds,
                scene_seed,
                solver_seed,
                error: String::new(),
            };
            match outcome {
                Ok((sad, aad)) => {
                    info!("snr {snr_db} {method} repeat {repeat}: rmsSAD {sad:.4}");
                    row.rms_sad = Some(sad);
                    row.rms_aad = Some(aad);
                }
                Err(e) => {
                    warn!("snr {snr_db} {method} repeat {repeat} failed: {e}");
                    row.error = e.to_string();
                }
            }
            row
        })
        .collect()
}

/// Runs every cell. Rows come back sorted by SNR, then method order in the
/// plan, then repeat, whatever order the cells finish in.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let lib = library(plan.library.as_deref())?;
    let cells: Vec<(f64, usize)> = plan
        .snr_db
        .iter()
        .flat_map(|&snr| (0..plan.repeats).map(move |r| (snr, r)))
        .collect();
    let mut rows: Vec<SweepRow> = cells
        .par_iter()
        .flat_map_iter(|&(snr, r)| run_cell(plan, &lib, snr, r))
        .collect();
    let method_pos = |m: Method| plan.methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    rows.sort_by(|a, b| {
        a.snr_db
            .total_cmp(&b.snr_db)
            .then(method_pos(a.method).cmp(&method_pos(b.method)))
            .then(a.repeat.cmp(&b.repeat))
    });
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::file(path, e))?;
    let wrap = |e: csv::Error| CliError::file(path, e);
    w.write_record([
        "snr_db",
        "method",
        "repeat",
        "rms_sad",
        "rms_aad",
        "seconds",
        "scene_seed",
        "solver_seed",
        "error",
    ])
    .map_err(wrap)?;
    for r in rows {
        w.write_record([
            r.snr_db.to_string(),
            r.method.to_string(),
            r.repeat.to_string(),
            opt(r.rms_sad),
            opt(r.rms_aad),
            r.seconds.to_string(),
            r.scene_seed.to_string(),
            r.solver_seed.to_string(),
            r.error.clone(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_rows(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::file(path, e))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::file(path, e))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<Option<f64>> {
            let s = field(i);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|e| CliError::file(path, format!("line {}: {e}", rec.position().map_or(0, |p| p.line()))))
        };
        let int = |i: usize| -> Result<u64> {
            field(i)
                .parse()
                .map_err(|e| CliError::file(path, format!("line {}: {e}", rec.position().map_or(0, |p| p.line()))))
        };
        rows.push(SweepRow {
            snr_db: num(0)?.unwrap_or(f64::NAN),
            method: field(1).parse()?,
            repeat: int(2)? as usize,
            rms_sad: num(3)?,
            rms_aad: num(4)?,
            seconds: num(5)?.unwrap_or(0.0),
            scene_seed: int(6)?,
            solver_seed: int(7)?,
            error: field(8).to_string(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub rms_sad: f64,
    pub rms_aad: f64,
    pub count: usize,
}

/// Mean metrics per (method, SNR) over successful rows.
pub fn means(rows: &[SweepRow]) -> BTreeMap<(Method, u64), CellMean> {
    let mut acc: BTreeMap<(Method, u64), (f64, f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.failed()) {
        let e = acc.entry((r.method, r.snr_db.to_bits())).or_default();
        e.0 += r.rms_sad.unwrap_or(f64::NAN);
        e.1 += r.rms_aad.unwrap_or(f64::NAN);
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(k, (s, a, n))| {
            let n_f = n as f64;
            (
                k,
                CellMean {
                    rms_sad: s / n_f,
                    rms_aad: a / n_f,
                    count: n,
                },
            )
        })
        .collect()
}

/// Writes `sweep.csv` and the manifest. Returns an error after writing
/// when any cell failed.
pub fn run_sweep_command(plan: &SweepPlan, out: &Path) -> Result<(Manifest, Vec<SweepRow>)> {
    let rows = run_sweep(plan)?;
    create_dir(out)?;
    write_rows(&out.join(RESULTS), &rows)?;

    let mut manifest = Manifest::new("sweep");
    manifest.seeds.insert("master".into(), plan.master_seed);
    manifest
        .inputs
        .insert("library".into(), InputRecord::of_library(plan.library.as_deref())?);
    manifest.sweep = Some(SweepRecord {
        snr_db: plan.snr_db.clone(),
        methods: plan.methods.clone(),
        repeats: plan.repeats,
        master_seed: plan.master_seed,
        timing: plan.timing,
        scene: plan.scene.clone(),
        config: plan.config.clone(),
    });
    manifest.write(out)?;

    let failed = rows.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        return Err(CliError::SweepFailures {
            failed,
            total: rows.len(),
        });
    }
    Ok((manifest, rows))
}
