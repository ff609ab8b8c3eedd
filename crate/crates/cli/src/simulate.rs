//! The `simulate` subcommand: run one scenario and write its report files.

use std::path::{Path, PathBuf};
use varsep_core::harness::{run_scenario, HarnessError, Scenario, ScenarioConfig, UnimodalKind};

use crate::manifest::RunManifest;
use crate::{CliError, SimulateArgs};

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let scenario: Scenario = args.scenario.parse().map_err(CliError::Usage)?;
    let mut cfg = ScenarioConfig::defaults(scenario);
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
    }
    if let Some(k) = args.k {
        cfg.k = k;
    }
    if let Some(r) = args.reps {
        cfg.n_reps = r;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(m) = args.mc_samples {
        cfg.mc_samples = m;
    }
    if let Some(b) = args.dip_reps {
        cfg.dip_reps = b;
    }
    cfg.seed = args.seed;
    if let Some(d) = &args.distribution {
        cfg.distribution = d.parse::<UnimodalKind>().map_err(CliError::Usage)?;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let methods = crate::parse_methods(&args.method)?;

    let report = run_scenario(&cfg, &methods).map_err(|e| match e {
        HarnessError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
        other => CliError::Internal(other.to_string()),
    })?;

    let json_path = with_suffix(&args.out, ".json");
    let tsv_path = with_suffix(&args.out, ".tsv");
    crate::write_or_print(&(report.to_json() + "\n"), Some(&json_path))?;
    crate::write_or_print(&report.to_tsv(), Some(&tsv_path))?;
    let config = serde_json::to_value(cfg)
        .map_err(|e| CliError::Internal(format!("serializing config: {e}")))?;
    RunManifest::new("simulate", config, Some(cfg.seed), None).write_next_to(&args.out)?;

    println!(
        "wrote {}, {} and {}",
        json_path.display(),
        tsv_path.display(),
        with_suffix(&args.out, ".manifest.json").display()
    );
    for row in &report.summary {
        println!(
            "{}\t{}\tn={}\trejection={:.4}\tks={:.4}",
            row.method.tag(),
            row.comparison,
            row.n,
            row.rejection_rate,
            row.ks_to_uniform
        );
    }
    if !report.failures.is_empty() {
        eprintln!(
            "{} of the cells failed; details are in the JSON report",
            report.failures.len()
        );
    }
    Ok(())
}
