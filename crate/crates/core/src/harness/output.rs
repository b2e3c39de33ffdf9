//! Result files.
//!
//! * `curve_run{r}.csv`: `iteration,loss,y0_estimate,elapsed_s`, one row per iteration of run `r`.
//! * `summary.csv`: `run,final_estimate,iterations,elapsed_s`, one row per run.
//! * `report.json`: aggregate statistics and reference values.
//! * `params_run{r}.txt`: trained parameters of run `r` (see [`write_checkpoint`]).
//! * `config.toml`: the complete configuration that produced the run.
//!
//! Numbers are written in shortest round-trip form, so identical data gives
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::HarnessError;
use crate::net::Parameters;
use crate::solver::{RunReport, RunRow, TrainState};

/// A named array: name, shape and row-major values.
pub type NamedArray = (String, Vec<usize>, Vec<f64>);

/// Per-run rows plus the aggregate and the attached references.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub experiment: String,
    pub method: String,
    pub rows: Vec<RunRow>,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub reference: Option<(String, f64)>,
    pub extra_references: Vec<(String, f64)>,
}

impl ResultsTable {
    pub fn rel_error(&self) -> Option<f64> {
        self.reference
            .as_ref()
            .map(|(_, r)| ((self.mean - r) / r).abs())
    }
}

#[derive(Serialize)]
struct ReferenceEntry<'a> {
    name: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    experiment: &'a str,
    method: &'a str,
    runs: usize,
    mean: f64,
    ci_low: f64,
    ci_high: f64,
    reference: Option<f64>,
    reference_name: Option<&'a str>,
    rel_error: Option<f64>,
    references: Vec<ReferenceEntry<'a>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(io_err(path))
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn curve_path(dir: &Path, run: usize) -> PathBuf {
    dir.join(format!("curve_run{run}.csv"))
}

pub fn curve_csv(report: &RunReport) -> String {
    let mut s = String::from("iteration,loss,y0_estimate,elapsed_s\n");
    for (i, ((loss, est), t)) in report
        .losses
        .iter()
        .zip(&report.estimates)
        .zip(&report.elapsed)
        .enumerate()
    {
        let _ = writeln!(s, "{i},{loss},{est},{t}");
    }
    s
}

pub fn summary_csv(rows: &[RunRow]) -> String {
    let mut s = String::from("run,final_estimate,iterations,elapsed_s\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.run, r.final_estimate, r.iterations, r.elapsed_s
        );
    }
    s
}

pub fn report_json(table: &ResultsTable) -> String {
    let mut references: Vec<ReferenceEntry<'_>> = Vec::new();
    if let Some((name, value)) = &table.reference {
        references.push(ReferenceEntry {
            name,
            value: *value,
        });
    }
    references.extend(
        table
            .extra_references
            .iter()
            .map(|(name, value)| ReferenceEntry {
                name,
                value: *value,
            }),
    );
    let json = ReportJson {
        experiment: &table.experiment,
        method: &table.method,
        runs: table.rows.len(),
        mean: table.mean,
        ci_low: table.ci_low,
        ci_high: table.ci_high,
        reference: table.reference.as_ref().map(|r| r.1),
        reference_name: table.reference.as_ref().map(|r| r.0.as_str()),
        rel_error: table.rel_error(),
        references,
    };
    let mut s = serde_json::to_string_pretty(&json).expect("plain data serialises");
    s.push('\n');
    s
}

pub fn write_curve(dir: &Path, report: &RunReport) -> Result<(), HarnessError> {
    write_file(&curve_path(dir, report.run), &curve_csv(report))
}

/// Writes every curve, the summary table and the structured report.
pub fn emit_outputs(
    table: &ResultsTable,
    curves: &[RunReport],
    dir: &Path,
) -> Result<(), HarnessError> {
    ensure_dir(dir)?;
    for c in curves {
        write_curve(dir, c)?;
    }
    write_file(&dir.join("summary.csv"), &summary_csv(&table.rows))?;
    write_file(&dir.join("report.json"), &report_json(table))
}

/// Named arrays of a training state, in a fixed order.
pub fn named_arrays(state: &TrainState) -> Vec<NamedArray> {
    let mut out = Vec::new();
    for (n, net) in state.nets.iter().enumerate() {
        for (l, layer) in net.layers.iter().enumerate() {
            let w = layer.weight.shape().to_vec();
            out.push((
                format!("net{n}.layer{l}.weight"),
                w,
                layer.weight.iter().copied().collect(),
            ));
            out.push((
                format!("net{n}.layer{l}.bias"),
                vec![layer.bias.len()],
                layer.bias.to_vec(),
            ));
        }
    }
    if let Some(e) = &state.embedding {
        out.push((
            "embedding.weight".into(),
            e.weight.shape().to_vec(),
            e.weight.iter().copied().collect(),
        ));
        out.push(("embedding.bias".into(), vec![e.bias.len()], e.bias.to_vec()));
    }
    if let Some(y0) = state.y0 {
        out.push(("y0".into(), vec![1], y0.tensors()[0].to_vec()));
    }
    out
}

/// Text checkpoint: a header line, then for every array a line
/// `array <name> <dim_1> ... <dim_k>` followed by one line of
/// whitespace-separated values in row-major order.
pub fn checkpoint_text(arrays: &[NamedArray]) -> String {
    let mut s = String::from("sig-fbsde-params 1\n");
    for (name, shape, values) in arrays {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "array {name} {}", dims.join(" "));
        let vals: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{}", vals.join(" "));
    }
    s
}

pub fn write_checkpoint(dir: &Path, run: usize, state: &TrainState) -> Result<(), HarnessError> {
    write_file(
        &dir.join(format!("params_run{run}.txt")),
        &checkpoint_text(&named_arrays(state)),
    )
}

/// Parses a text checkpoint back into named arrays.
pub fn read_checkpoint(text: &str) -> Result<Vec<NamedArray>, HarnessError> {
    let bad = |msg: String| HarnessError::validation(Vec::new(), format!("checkpoint: {msg}"));
    let mut lines = text.lines();
    if lines.next() != Some("sig-fbsde-params 1") {
        return Err(bad("missing header".into()));
    }
    let mut out = Vec::new();
    while let Some(head) = lines.next() {
        let mut parts = head.split_whitespace();
        if parts.next() != Some("array") {
            return Err(bad(format!("expected an array line, got '{head}'")));
        }
        let name = parts
            .next()
            .ok_or_else(|| bad("array without a name".into()))?
            .to_string();
        let shape: Vec<usize> = parts
            .map(|p| {
                p.parse()
                    .map_err(|_| bad(format!("bad dimension '{p}' for {name}")))
            })
            .collect::<Result<_, _>>()?;
        let body = lines
            .next()
            .ok_or_else(|| bad(format!("missing values for {name}")))?;
        let values: Vec<f64> = body
            .split_whitespace()
            .map(|p| {
                p.parse()
                    .map_err(|_| bad(format!("bad value '{p}' in {name}")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != shape.iter().product::<usize>() {
            return Err(bad(format!(
                "{name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        out.push((name, shape, values));
    }
    Ok(out)
}
