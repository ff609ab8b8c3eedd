//! The `report` subcommand: merge simulation reports from one scenario into
//! a single power table, one row per (delta, k, method, comparison).

use serde::Serialize;
use std::path::Path;
use varsep_core::harness::SimulationReport;
use varsep_core::selective::Method;

use crate::manifest::{sha256_file, RunManifest};
use crate::{CliError, ReportArgs};

#[derive(Debug, Serialize)]
struct PowerRow {
    delta: f64,
    k: usize,
    method: &'static str,
    comparison: String,
    n: usize,
    rejection_rate: f64,
    ks_to_uniform: f64,
}

fn load_report(path: &Path) -> Result<SimulationReport, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("parsing {}: {e}", path.display())))
}

fn method_rank(tag: &str) -> usize {
    Method::ALL
        .iter()
        .position(|m| m.tag() == tag)
        .unwrap_or(Method::ALL.len())
}

pub fn run(args: &ReportArgs) -> Result<(), CliError> {
    if args.inputs.is_empty() {
        return Err(CliError::Usage("no report files given".into()));
    }
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        reports.push(load_report(path)?);
    }
    let scenario = reports[0].config.scenario;
    if reports.iter().any(|r| r.config.scenario != scenario) {
        return Err(CliError::Data("incompatible scenarios".into()));
    }

    let mut rows: Vec<PowerRow> = reports
        .iter()
        .flat_map(|r| {
            r.summary.iter().map(|s| PowerRow {
                delta: r.config.delta,
                k: r.config.k,
                method: s.method.tag(),
                comparison: s.comparison.clone(),
                n: s.n,
                rejection_rate: s.rejection_rate,
                ks_to_uniform: s.ks_to_uniform,
            })
        })
        .collect();
    rows.sort_by(|x, y| {
        x.delta
            .total_cmp(&y.delta)
            .then(x.k.cmp(&y.k))
            .then(method_rank(x.method).cmp(&method_rank(y.method)))
            .then(x.comparison.cmp(&y.comparison))
    });

    let text = match args.format.as_str() {
        "json" => render_json(scenario.tag(), &rows)?,
        _ => render_tsv(scenario.tag(), &rows),
    };
    crate::write_or_print(&text, args.out.as_deref())?;
    if let Some(out) = &args.out {
        let mut inputs = Vec::with_capacity(args.inputs.len());
        for path in &args.inputs {
            inputs.push(serde_json::json!({
                "path": path.display().to_string(),
                "sha256": sha256_file(path)?,
            }));
        }
        let config = serde_json::json!({ "inputs": inputs, "format": args.format });
        RunManifest::new("report", config, None, None).write_next_to(out)?;
    }
    Ok(())
}

fn render_tsv(scenario: &str, rows: &[PowerRow]) -> String {
    let mut out =
        String::from("scenario\tdelta\tk\tmethod\tcomparison\tn\trejection_rate\tks_to_uniform\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.4}\n",
            scenario, r.delta, r.k, r.method, r.comparison, r.n, r.rejection_rate, r.ks_to_uniform
        ));
    }
    out
}

fn render_json(scenario: &str, rows: &[PowerRow]) -> Result<String, CliError> {
    #[derive(Serialize)]
    struct Envelope<'a> {
        command: &'static str,
        scenario: &'a str,
        rows: &'a [PowerRow],
    }
    serde_json::to_string_pretty(&Envelope {
        command: "report",
        scenario,
        rows,
    })
    .map(|s| s + "\n")
    .map_err(|e| CliError::Internal(format!("serializing table: {e}")))
}
