//! Scores unmixing results against ground truth or a reference library.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unmix_core::metrics::{evaluate, EvalReport};
use unmix_core::DMatrix;

use crate::cube::{header_path, payload_path, read_cube};
use crate::error::{CliError, Result};
use crate::io::{create_dir, read_matrix_csv, write_text};
use crate::manifest::{EvalRecord, InputRecord, Manifest};
use crate::synth::{TRUE_ABUNDANCES, TRUE_ENDMEMBERS};
use crate::unmix::{ABUNDANCES, ENDMEMBERS};

pub const REPORT_JSON: &str = "eval.json";
pub const REPORT_TEXT: &str = "eval.txt";
pub const SUMMARY: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub estimates: Vec<PathBuf>,
    pub truth: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// Reference library columns to compare against, in order.
    pub select: Option<Vec<String>>,
}

impl EvalRequest {
    pub fn from_record(rec: &EvalRecord) -> Self {
        EvalRequest {
            estimates: rec.estimates.iter().map(PathBuf::from).collect(),
            truth: rec.truth.as_ref().map(PathBuf::from),
            reference: rec.reference.as_ref().map(PathBuf::from),
            select: rec.select.clone(),
        }
    }

    fn record(&self) -> EvalRecord {
        let s = |p: &PathBuf| p.display().to_string();
        EvalRecord {
            estimates: self.estimates.iter().map(s).collect(),
            truth: self.truth.as_ref().map(s),
            reference: self.reference.as_ref().map(s),
            select: self.select.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub label: String,
    pub estimate: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub results: Vec<MethodReport>,
}

struct Reference {
    endmembers: DMatrix<f64>,
    abundances: Option<DMatrix<f64>>,
}

fn load_reference(req: &EvalRequest, inputs: &mut Vec<(String, PathBuf)>) -> Result<Reference> {
    match (&req.truth, &req.reference) {
        (Some(dir), None) => {
            let a_path = dir.join(TRUE_ENDMEMBERS);
            let s_path = dir.join(format!("{TRUE_ABUNDANCES}.json"));
            let endmembers = read_matrix_csv(&a_path)?.spectra;
            let (_, abundances) = read_cube(&s_path)?;
            inputs.push(("truth.endmembers".into(), a_path));
            inputs.push(("truth.abundances".into(), s_path.clone()));
            inputs.push(("truth.abundances_payload".into(), payload_path(&s_path)?));
            Ok(Reference {
                endmembers,
                abundances: Some(abundances),
            })
        }
        (None, Some(path)) => {
            let lib = read_matrix_csv(path)?;
            let endmembers = match &req.select {
                Some(names) => lib.select(names).map_err(|e| CliError::file(path, e))?.into_inner(),
                None => lib.spectra,
            };
            inputs.push(("reference".into(), path.clone()));
            Ok(Reference {
                endmembers,
                abundances: None,
            })
        }
        _ => Err(CliError::Usage("give exactly one of a truth directory or a reference library".into())),
    }
}

fn label_for(dir: &Path) -> String {
    Manifest::read(dir)
        .ok()
        .and_then(|m| m.unmix.map(|u| u.method.display_name().to_string()))
        .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| dir.display().to_string())
}

/// Evaluates every estimate directory against the reference.
pub fn evaluate_request(req: &EvalRequest) -> Result<(EvalOutput, Vec<(String, PathBuf)>)> {
    if req.estimates.is_empty() {
        return Err(CliError::Usage("no estimate directories given".into()));
    }
    let mut inputs = Vec::new();
    let reference = load_reference(req, &mut inputs)?;
    let mut results = Vec::with_capacity(req.estimates.len());
    for (i, dir) in req.estimates.iter().enumerate() {
        let role = format!("estimate_{}", i + 1);
        let m_path = dir.join(ENDMEMBERS);
        let m_est = read_matrix_csv(&m_path)?.spectra;
        inputs.push((format!("{role}.endmembers"), m_path.clone()));
        let s_path = header_path(&dir.join(format!("{ABUNDANCES}.json")));
        let s_est = match &reference.abundances {
            Some(_) if s_path.exists() => {
                inputs.push((format!("{role}.abundances"), s_path.clone()));
                inputs.push((format!("{role}.abundances_payload"), payload_path(&s_path)?));
                Some(read_cube(&s_path)?.1)
            }
            _ => None,
        };
        let pair = reference.abundances.as_ref().zip(s_est.as_ref());
        let report = evaluate(&reference.endmembers, &m_est, pair).map_err(|e| CliError::file(&m_path, e))?;
        results.push(MethodReport {
            label: label_for(dir),
            estimate: dir.display().to_string(),
            report,
        });
    }
    Ok((EvalOutput { results }, inputs))
}

/// Flat `label.key = value` lines.
pub fn key_value_text(out: &EvalOutput) -> String {
    let mut s = String::new();
    for r in &out.results {
        let l = &r.label;
        let rep = &r.report;
        let _ = writeln!(s, "{l}.estimate = {}", r.estimate);
        let perm: Vec<String> = rep.permutation.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(s, "{l}.permutation = {}", perm.join(" "));
        for (k, v) in rep.sad_per_endmember.iter().enumerate() {
            let _ = writeln!(s, "{l}.sad.{} = {v}", k + 1);
        }
        let _ = writeln!(s, "{l}.rms_sad = {}", rep.rms_sad);
        if let Some(a) = rep.rms_aad {
            let _ = writeln!(s, "{l}.rms_aad = {a}");
        }
        if let Some(sum) = &rep.aad_per_pixel_summary {
            let _ = writeln!(s, "{l}.aad.mean = {}", sum.mean);
            let _ = writeln!(s, "{l}.aad.max = {}", sum.max);
        }
    }
    s
}

/// Method → rmsSAD table, with rmsAAD when abundances were compared.
pub fn summary_table(out: &EvalOutput) -> String {
    let width = out
        .results
        .iter()
        .map(|r| r.label.chars().count())
        .max()
        .unwrap_or(0)
        .max("Method".len());
    let with_aad = out.results.iter().any(|r| r.report.rms_aad.is_some());
    let mut s = format!("{:<width$}  {:>8}", "Method", "rmsSAD");
    if with_aad {
        s.push_str(&format!("  {:>8}", "rmsAAD"));
    }
    s.push('\n');
    for r in &out.results {
        let _ = write!(s, "{:<width$}  {:>8.4}", r.label, r.report.rms_sad);
        if with_aad {
            match r.report.rms_aad {
                Some(a) => {
                    let _ = write!(s, "  {a:>8.4}");
                }
                None => s.push_str(&format!("  {:>8}", "-")),
            }
        }
        s.push('\n');
    }
    s
}

pub fn run_eval(req: &EvalRequest, out: &Path) -> Result<(Manifest, EvalOutput)> {
    let (result, inputs) = evaluate_request(req)?;
    create_dir(out)?;
    let mut json = serde_json::to_string_pretty(&result).map_err(|e| CliError::file(REPORT_JSON, e))?;
    json.push('\n');
    write_text(&out.join(REPORT_JSON), &json)?;
    write_text(&out.join(REPORT_TEXT), &key_value_text(&result))?;
    write_text(&out.join(SUMMARY), &summary_table(&result))?;

    let mut manifest = Manifest::new("eval");
    for (role, path) in inputs {
        manifest.inputs.insert(role, InputRecord::of_file(&path)?);
    }
    manifest.eval = Some(req.record());
    manifest.write(out)?;
    Ok((manifest, result))
}
