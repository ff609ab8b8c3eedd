//! The `test` subcommand: load a CSV, drop incomplete rows, optionally
//! filter and scale, cluster with Ward, then run the requested tests on
//! cluster pairs and variables.

use serde::Serialize;
use varsep_core::clustering::{Clusterer, Partition, WardClusterer};
use varsep_core::dataset::{drop_incomplete_rows, load_csv, zscale, CsvOptions, DataMatrix};
use varsep_core::dip::dip_test_between;
use varsep_core::merging::merged_selective_p_value;
use varsep_core::seeding::derive_seed;
use varsep_core::selective::{selective_p_value, t_test_p_value, Method, VarianceRule};

use crate::manifest::{sha256_file, RunManifest};
use crate::{CliError, TestArgs};

/// One (pair, variable, method) entry of the output table.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub pair: [usize; 2],
    pub variable: String,
    pub method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Outcome {
    p: f64,
    statistic: f64,
    warning: Option<String>,
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub fn run(args: &TestArgs) -> Result<(), CliError> {
    if args.k < 2 {
        return Err(CliError::Usage("need at least two clusters".into()));
    }
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "alpha {} is outside (0, 1)",
            args.alpha
        )));
    }
    if args.mc_samples == 0 || args.dip_reps == 0 {
        return Err(CliError::Usage(
            "mc-samples and dip-reps must be positive".into(),
        ));
    }
    let methods = crate::parse_methods(&args.method)?;
    let pair_filter = args.pair.as_deref().map(|s| parse_pair(s, args.k)).transpose()?;

    let options = CsvOptions {
        columns: args.columns.clone(),
        ..CsvOptions::default()
    };
    let loaded = load_csv(&args.input, &options).map_err(data_err)?;
    let complete = drop_incomplete_rows(&loaded).map_err(data_err)?;
    let filtered = apply_filters(&complete, &args.filters)?;
    let data = if args.scale {
        zscale(&filtered).map_err(data_err)?
    } else {
        filtered
    };
    let variables: Vec<usize> = match &args.variable {
        Some(name) => vec![data.column_index(name).map_err(data_err)?],
        None => (0..data.p()).collect(),
    };

    let clusterer = WardClusterer { k: args.k };
    let part = clusterer.partition(&data).map_err(data_err)?;
    let pairs: Vec<(usize, usize)> = match pair_filter {
        Some(p) => vec![p],
        None => (1..=args.k)
            .flat_map(|a| (a + 1..=args.k).map(move |b| (a, b)))
            .collect(),
    };

    let mut cells = Vec::with_capacity(pairs.len() * variables.len() * methods.len());
    for &(a, b) in &pairs {
        // The seed is derived from the cell's content, not its position, so
        // a --pair or --variable subset reproduces the full table's values.
        for &g in &variables {
            let cell_seed =
                derive_seed(derive_seed(derive_seed(args.seed, a as u64), b as u64), g as u64);
            for &method in &methods {
                let outcome = run_cell(&data, g, &part, a, b, &clusterer, method, args, cell_seed);
                cells.push(to_cell(
                    a,
                    b,
                    data.column_names()[g].clone(),
                    method,
                    outcome,
                    args.alpha,
                ));
            }
        }
    }

    let text = match args.format.as_str() {
        "json" => render_json(args, &data, &part, &cells)?,
        _ => render_tsv(&cells),
    };
    crate::write_or_print(&text, args.out.as_deref())?;
    if let Some(out) = &args.out {
        let manifest = RunManifest::new(
            "test",
            config_echo(args),
            Some(args.seed),
            Some(sha256_file(&args.input)?),
        );
        manifest.write_next_to(out)?;
    }

    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    if failed == cells.len() {
        let first = cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        return Err(CliError::Data(format!(
            "all {} cells failed; first error: {first}",
            cells.len()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    data: &DataMatrix,
    g: usize,
    part: &Partition,
    a: usize,
    b: usize,
    clusterer: &WardClusterer,
    method: Method,
    args: &TestArgs,
    cell_seed: u64,
) -> Result<Outcome, String> {
    // Direct and merged share a stream so that on adjacent pairs, where the
    // merged test reduces to the direct one, the two cells agree exactly.
    match method {
        Method::Direct => selective_p_value(
            data,
            g,
            part,
            a,
            b,
            clusterer,
            VarianceRule::PairPooled,
            args.mc_samples,
            derive_seed(cell_seed, 1),
        )
        .map(|r| Outcome {
            p: r.p,
            statistic: r.statistic,
            warning: r.warning,
        })
        .map_err(|e| e.to_string()),
        Method::Merged => merged_selective_p_value(
            data,
            g,
            part,
            a,
            b,
            clusterer,
            VarianceRule::PairPooled,
            args.mc_samples,
            derive_seed(cell_seed, 1),
        )
        .map(|r| Outcome {
            p: r.p,
            statistic: r.statistic,
            warning: r.warning,
        })
        .map_err(|e| e.to_string()),
        Method::Dip => dip_test_between(data, g, part, a, b, args.dip_reps, derive_seed(cell_seed, 2))
            .map(|r| Outcome {
                p: r.p,
                statistic: r.dip,
                warning: None,
            })
            .map_err(|e| e.to_string()),
        Method::TTest => t_test_p_value(data.column(g), part, a, b)
            .map(|r| Outcome {
                p: r.p,
                statistic: r.statistic,
                warning: r.warning,
            })
            .map_err(|e| e.to_string()),
    }
}

fn to_cell(
    a: usize,
    b: usize,
    variable: String,
    method: Method,
    outcome: Result<Outcome, String>,
    alpha: f64,
) -> Cell {
    match outcome {
        Ok(o) => Cell {
            pair: [a, b],
            variable,
            method: method.tag(),
            p: Some(o.p),
            statistic: Some(o.statistic),
            significant: Some(o.p <= alpha),
            warning: o.warning,
            error: None,
        },
        Err(e) => Cell {
            pair: [a, b],
            variable,
            method: method.tag(),
            p: None,
            statistic: None,
            significant: None,
            warning: None,
            error: Some(e),
        },
    }
}

fn parse_pair(s: &str, k: usize) -> Result<(usize, usize), CliError> {
    let usage = || CliError::Usage(format!("pair {s:?} is not two cluster ids like 1,3"));
    let (x, y) = s.split_once(',').ok_or_else(usage)?;
    let a: usize = x.trim().parse().map_err(|_| usage())?;
    let b: usize = y.trim().parse().map_err(|_| usage())?;
    if a == 0 || b == 0 || a > k || b > k {
        return Err(CliError::Usage(format!("pair ids must be in 1..={k}")));
    }
    if a == b {
        return Err(CliError::Usage("pair ids must differ".into()));
    }
    Ok((a.min(b), a.max(b)))
}

/// Applies `label=value` filters, keeping rows matching all of them.
fn apply_filters(m: &DataMatrix, filters: &[String]) -> Result<DataMatrix, CliError> {
    if filters.is_empty() {
        return Ok(m.clone());
    }
    let mut keep = vec![true; m.n()];
    for f in filters {
        let (name, want) = f
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("filter {f:?} is not label=value")))?;
        let lab = m.labels().iter().find(|l| l.name == name).ok_or_else(|| {
            let have: Vec<&str> = m.labels().iter().map(|l| l.name.as_str()).collect();
            CliError::Data(format!(
                "no label column {name:?}; label columns: {}",
                have.join(", ")
            ))
        })?;
        for (i, v) in lab.values.iter().enumerate() {
            keep[i] &= v.as_deref() == Some(want);
        }
    }
    m.filter_rows(&keep)
        .map_err(|_| CliError::Data("no rows match the filters".into()))
}

fn render_tsv(cells: &[Cell]) -> String {
    let mut out = String::from("pair\tvariable\tmethod\tp\tsignificant\tnote\n");
    for c in cells {
        let p = c.p.map_or_else(|| "NA".to_string(), |p| format!("{p:.4}"));
        let sig = if c.significant == Some(true) { "*" } else { "" };
        let note = c.error.as_deref().or(c.warning.as_deref()).unwrap_or("");
        out.push_str(&format!(
            "{}-{}\t{}\t{}\t{}\t{}\t{}\n",
            c.pair[0], c.pair[1], c.variable, c.method, p, sig, note
        ));
    }
    out
}

#[derive(Serialize)]
struct TestReport<'a> {
    command: &'static str,
    input: String,
    n_rows: usize,
    columns: &'a [String],
    k: usize,
    scale: bool,
    alpha: f64,
    seed: u64,
    mc_samples: usize,
    dip_reps: usize,
    cluster_sizes: Vec<usize>,
    cells: &'a [Cell],
}

fn render_json(
    args: &TestArgs,
    data: &DataMatrix,
    part: &Partition,
    cells: &[Cell],
) -> Result<String, CliError> {
    let report = TestReport {
        command: "test",
        input: args.input.display().to_string(),
        n_rows: data.n(),
        columns: data.column_names(),
        k: part.k,
        scale: args.scale,
        alpha: args.alpha,
        seed: args.seed,
        mc_samples: args.mc_samples,
        dip_reps: args.dip_reps,
        cluster_sizes: part.members.iter().map(Vec::len).collect(),
        cells,
    };
    serde_json::to_string_pretty(&report)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Internal(format!("serializing report: {e}")))
}

fn config_echo(args: &TestArgs) -> serde_json::Value {
    serde_json::json!({
        "input": args.input.display().to_string(),
        "columns": args.columns,
        "where": args.filters,
        "scale": args.scale,
        "k": args.k,
        "pair": args.pair,
        "variable": args.variable,
        "method": args.method,
        "mc_samples": args.mc_samples,
        "dip_reps": args.dip_reps,
        "alpha": args.alpha,
        "seed": args.seed,
        "format": args.format,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use varsep_core::dataset::LabelColumn;

    #[test]
    fn pair_parsing() {
        assert_eq!(parse_pair("1,3", 3).unwrap(), (1, 3));
        assert_eq!(parse_pair("3 , 1", 3).unwrap(), (1, 3));
        assert!(matches!(parse_pair("1", 3), Err(CliError::Usage(_))));
        assert!(matches!(parse_pair("0,2", 3), Err(CliError::Usage(_))));
        assert!(matches!(parse_pair("1,4", 3), Err(CliError::Usage(_))));
        assert!(matches!(parse_pair("2,2", 3), Err(CliError::Usage(_))));
    }

    fn labelled() -> DataMatrix {
        DataMatrix::from_columns(vec!["x".into()], vec![vec![1.0, 2.0, 3.0, 4.0]])
            .unwrap()
            .with_labels(vec![LabelColumn {
                name: "species".into(),
                values: vec![
                    Some("A".into()),
                    Some("B".into()),
                    Some("A".into()),
                    Some("B".into()),
                ],
            }])
            .unwrap()
    }

    #[test]
    fn filters_select_matching_rows() {
        let m = labelled();
        let kept = apply_filters(&m, &["species=A".to_string()]).unwrap();
        assert_eq!(kept.column(0), &[1.0, 3.0]);
        assert!(matches!(
            apply_filters(&m, &["species=C".to_string()]),
            Err(CliError::Data(_))
        ));
        assert!(matches!(
            apply_filters(&m, &["island=X".to_string()]),
            Err(CliError::Data(_))
        ));
        assert!(matches!(
            apply_filters(&m, &["species".to_string()]),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn tsv_rows_render_values_and_errors() {
        let ok = Cell {
            pair: [1, 2],
            variable: "x".into(),
            method: "direct",
            p: Some(0.01234),
            statistic: Some(-1.0),
            significant: Some(true),
            warning: None,
            error: None,
        };
        let bad = Cell {
            pair: [1, 3],
            variable: "x".into(),
            method: "dip",
            p: None,
            statistic: None,
            significant: None,
            warning: None,
            error: Some("too few values".into()),
        };
        let text = render_tsv(&[ok, bad]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "pair\tvariable\tmethod\tp\tsignificant\tnote");
        assert_eq!(lines[1], "1-2\tx\tdirect\t0.0123\t*\t");
        assert_eq!(lines[2], "1-3\tx\tdip\tNA\t\ttoo few values");
    }
}
